#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "fsncsr/metrics.hpp"
#include "fsncsr/resample.hpp"
#include "fsncsr/rng.hpp"

using namespace fsncsr;
namespace fs = std::filesystem;

namespace {

Image const_image(std::int64_t n, double v, std::int64_t c = 1) {
    Image img(n, n, c, PixelDomain::hr);
    for (auto& p : img.pixels) p = v;
    return img;
}

Image random_image(std::int64_t n, Rng& rng, std::int64_t c = 1) {
    Image img(n, n, c, PixelDomain::hr);
    for (auto& p : img.pixels) p = rng.uniform01();
    return img;
}

// gt plus a constant offset per patch: per-patch MSE is exactly offset^2
Image offset_patches(const Image& gt, int patch, const std::vector<double>& offsets) {
    Image out = gt;
    const std::int64_t cols = gt.width / patch;
    for (std::int64_t pi = 0; pi < gt.height / patch; ++pi) {
        for (std::int64_t pj = 0; pj < cols; ++pj) {
            const double off = offsets[static_cast<std::size_t>(pi * cols + pj)];
            for (std::int64_t i = 0; i < patch; ++i) {
                for (std::int64_t j = 0; j < patch; ++j) {
                    for (std::int64_t c = 0; c < gt.channels; ++c) {
                        out.at(pi * patch + i, pj * patch + j, c) += off;
                    }
                }
            }
        }
    }
    return out;
}

fs::path temp_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "fsncsr_metrics_tests" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("global min distance: hand case and order invariance") {
    metrics::DiversityConfig cfg;
    cfg.patch = 2;
    // 2x4 image with 2x2 patches: a 1x2 grid, two patches
    Image gt2(2, 4, 1, PixelDomain::hr);
    const std::vector<double> d1 = {std::sqrt(0.2), std::sqrt(0.4)};
    const std::vector<double> d2 = {std::sqrt(0.5), std::sqrt(0.1)};
    Image s1 = offset_patches(gt2, 2, d1);
    Image s2 = offset_patches(gt2, 2, d2);

    const double dbar = metrics::global_min_distance(gt2, {s1, s2}, cfg);
    CHECK(dbar == doctest::Approx(0.3).epsilon(1e-12));
    const double dbar_swapped = metrics::global_min_distance(gt2, {s2, s1}, cfg);
    CHECK(dbar == dbar_swapped);

    SUBCASE("one sample equal to gt gives zero") {
        CHECK(metrics::global_min_distance(gt2, {gt2, s1}, cfg) == 0.0);
    }
}

TEST_CASE("diversity score: the hand-built two-sample case is exactly one half") {
    metrics::DiversityConfig cfg;
    cfg.patch = 2;
    Image gt(2, 4, 1, PixelDomain::hr);
    Image s1 = offset_patches(gt, 2, {std::sqrt(0.2), std::sqrt(0.4)});
    Image s2 = offset_patches(gt, 2, {std::sqrt(0.5), std::sqrt(0.1)});
    const metrics::DiversityResult r = metrics::diversity_score(gt, {s1, s2}, cfg);
    CHECK(r.dbar == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(r.score == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(100.0 * r.score == doctest::Approx(50.0).epsilon(1e-10));
}

TEST_CASE("diversity degenerate and trivial cases") {
    metrics::DiversityConfig cfg;
    cfg.patch = 2;
    Rng rng(1);
    const Image gt = random_image(4, rng);

    SUBCASE("all samples identical gives zero") {
        Image s = offset_patches(gt, 2, {0.1, 0.1, 0.1, 0.1});
        const auto r = metrics::diversity_score(gt, {s, s, s}, cfg);
        CHECK(r.score == 0.0);
        CHECK_FALSE(r.degenerate);
    }
    SUBCASE("M=1 gives zero") {
        Image s = offset_patches(gt, 2, {0.1, 0.2, 0.3, 0.4});
        const auto r = metrics::diversity_score(gt, {s}, cfg);
        CHECK(r.score == 0.0);
    }
    SUBCASE("a sample equal to gt marks the degenerate flag") {
        Image s = offset_patches(gt, 2, {0.1, 0.2, 0.3, 0.4});
        const auto r = metrics::diversity_score(gt, {gt, s}, cfg);
        CHECK(r.score == 0.0);
        CHECK(r.degenerate);
    }
    SUBCASE("adding a duplicate of an existing sample changes nothing") {
        Image s1 = offset_patches(gt, 2, {0.1, 0.2, 0.3, 0.4});
        Image s2 = offset_patches(gt, 2, {0.4, 0.1, 0.2, 0.3});
        const auto base = metrics::diversity_score(gt, {s1, s2}, cfg);
        const auto dup = metrics::diversity_score(gt, {s1, s2, s2}, cfg);
        CHECK(base.score == doctest::Approx(dup.score).epsilon(1e-14));
        CHECK(base.dbar == doctest::Approx(dup.dbar).epsilon(1e-14));
    }
}

TEST_CASE("diversity properties over random distance matrices") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 2 + rng.below(8);
        const std::size_t k = 1 + rng.below(12);
        std::vector<std::vector<double>> dist(m, std::vector<double>(k));
        for (auto& row : dist) {
            for (auto& v : row) v = rng.uniform(1e-6, 2.0);
        }
        const auto r = metrics::diversity_from_distances(dist);
        CHECK(r.score >= 0.0);
        CHECK(r.score <= 1.0);
        for (double c : {0.1, 10.0}) {
            auto scaled = dist;
            for (auto& row : scaled) {
                for (auto& v : row) v *= c;
            }
            const auto rs = metrics::diversity_from_distances(scaled);
            CHECK(rs.score == doctest::Approx(r.score).epsilon(1e-9));
        }
    }
}

TEST_CASE("lr psnr") {
    SUBCASE("closed form: uniform error 0.1 gives 20 dB") {
        const Image sr = const_image(16, 0.4);
        const Image lr = const_image(4, 0.3);
        CHECK(metrics::lr_psnr(sr, lr, 4) == doctest::Approx(20.0).epsilon(1e-6));
    }
    SUBCASE("exact match gives the INF sentinel") {
        Rng rng(3);
        const Image gt = random_image(16, rng);
        const Image lr = downsample(gt, 4);
        CHECK(std::isinf(metrics::lr_psnr(gt, lr, 4)));
    }
    SUBCASE("matches a direct reference computation") {
        Rng rng(4);
        const Image sr = random_image(16, rng);
        const Image lr = random_image(4, rng);
        const Image down = downsample(sr, 4);
        double mse = 0.0;
        for (std::size_t i = 0; i < lr.pixels.size(); ++i) {
            const double d = down.pixels[i] - lr.pixels[i];
            mse += d * d;
        }
        mse /= static_cast<double>(lr.pixels.size());
        const double want = 10.0 * std::log10(1.0 / mse);
        CHECK(metrics::lr_psnr(sr, lr, 4) == doctest::Approx(want).epsilon(1e-9));
    }
    SUBCASE("strictly decreasing in the uniform error") {
        const Image lr = const_image(4, 0.3);
        double prev = std::numeric_limits<double>::infinity();
        for (double err : {0.02, 0.05, 0.1, 0.2}) {
            const Image sr = const_image(16, 0.3 + err);
            const double db = metrics::lr_psnr(sr, lr, 4);
            CHECK(db < prev);
            prev = db;
        }
    }
    SUBCASE("shape mismatch is an error") {
        const Image sr = const_image(16, 0.4);
        const Image lr = const_image(8, 0.3);
        CHECK_THROWS_AS(metrics::lr_psnr(sr, lr, 4), std::invalid_argument);
    }
}

TEST_CASE("sparsity") {
    SUBCASE("all-zero high frequency is fully sparse") {
        Image hf(4, 4, 1, PixelDomain::high_freq);
        CHECK(metrics::sparsity(hf) == 1.0);
    }
    SUBCASE("every |value| >= 1/255 gives zero sparsity") {
        Image hf(4, 4, 1, PixelDomain::high_freq);
        for (std::size_t i = 0; i < hf.pixels.size(); ++i) {
            hf.pixels[i] = (i % 2 ? 1.0 : -1.0) / 255.0 * (1.0 + static_cast<double>(i));
        }
        CHECK(metrics::sparsity(hf) == 0.0);
    }
    SUBCASE("half at 0.5 and half at 0.001 gives exactly one half") {
        Image hf(2, 4, 1, PixelDomain::high_freq);
        for (std::size_t i = 0; i < 4; ++i) hf.pixels[i] = 0.5;
        for (std::size_t i = 4; i < 8; ++i) hf.pixels[i] = 0.001;  // quantizes to zero
        CHECK(metrics::sparsity(hf) == 0.5);
    }
    SUBCASE("monotone non-increasing as magnitudes grow") {
        Rng rng(5);
        for (int trial = 0; trial < 20; ++trial) {
            Image a(4, 4, 1, PixelDomain::high_freq);
            for (auto& p : a.pixels) p = rng.uniform(-0.02, 0.02);
            Image b = a;
            for (auto& p : b.pixels) p *= rng.uniform(1.0, 30.0);
            // grow each |value| pointwise
            for (std::size_t i = 0; i < b.pixels.size(); ++i) {
                if (std::fabs(b.pixels[i]) < std::fabs(a.pixels[i])) b.pixels[i] = a.pixels[i];
            }
            CHECK(metrics::sparsity(b) <= metrics::sparsity(a));
        }
    }
    SUBCASE("HR-domain input is rejected") {
        Image hr(4, 4, 1, PixelDomain::hr);
        CHECK_THROWS_AS(metrics::sparsity(hr), std::invalid_argument);
    }
}

TEST_CASE("relative sparsity") {
    Image gt(2, 2, 1, PixelDomain::high_freq);
    Image h(2, 2, 1, PixelDomain::high_freq);

    SUBCASE("equal nonzero counts give zero") {
        gt.pixels = {0.5, 0.5, 0.0, 0.0};
        h.pixels = {0.0, 0.0, -0.5, 0.7};
        CHECK(metrics::relative_sparsity(h, gt) == 0.0);
    }
    SUBCASE("sparser than gt is positive") {
        gt.pixels = {0.5, 0.5, 0.5, 0.5};
        h.pixels = {0.5, 0.0, 0.0, 0.0};
        CHECK(metrics::relative_sparsity(h, gt) == doctest::Approx(0.75));
    }
    SUBCASE("degenerate all-zero gt") {
        gt.pixels = {0.0, 0.0, 0.0, 0.0};
        h.pixels = {0.0, 0.0, 0.0, 0.0};
        CHECK(metrics::relative_sparsity(h, gt) == 1.0);
        h.pixels[0] = 0.5;
        CHECK(std::isinf(metrics::relative_sparsity(h, gt)));
        CHECK(metrics::relative_sparsity(h, gt) < 0);
    }
}

TEST_CASE("evaluate end to end on a toy corpus") {
    const fs::path dir = temp_dir("toy");
    Rng rng(6);

    // two GT images; samples are GT itself (image A) and offset copies (image B)
    const Image gt_a = random_image(8, rng, 3);
    const Image gt_b = random_image(8, rng, 3);
    save_png(gt_a, dir / "a.png");
    save_png(gt_b, dir / "b.png");
    // reload so everything lives on the PNG quantization grid
    const Image a = load_png(dir / "a.png");
    const Image b = load_png(dir / "b.png");
    save_png(a, dir / "a_s0.png");
    save_png(a, dir / "a_s1.png");
    Image b0 = b, b1 = b;
    for (auto& p : b0.pixels) p = std::min(1.0, p + 0.1);
    for (auto& p : b1.pixels) p = std::max(0.0, p - 0.1);
    save_png(b0, dir / "b_s0.png");
    save_png(b1, dir / "b_s1.png");

    std::vector<metrics::ManifestEntry> entries = {
        {"b.png", {"b_s0.png", "b_s1.png"}},
        {"a.png", {"a_s0.png", "a_s1.png"}},
    };
    metrics::DiversityConfig cfg;
    cfg.patch = 4;
    const metrics::MetricsReport report = metrics::evaluate(dir, entries, 4, cfg, dir);

    REQUIRE(report.rows.size() == 2);
    CHECK(report.rows[0].image == "a.png");  // sorted by name
    CHECK(report.rows[1].image == "b.png");

    // image a: samples equal GT -> degenerate diversity 0, LR-PSNR inf, RS 0
    CHECK(report.rows[0].diversity_x100 == 0.0);
    CHECK(report.rows[0].degenerate_diversity);
    CHECK(std::isinf(report.rows[0].lr_psnr_db));
    CHECK(report.rows[0].rs == doctest::Approx(0.0));
    CHECK(report.rows[0].sparsity == doctest::Approx(report.rows[0].gt_sparsity));

    // aggregate mean with an inf member propagates inf
    CHECK(std::isinf(report.aggregate.lr_psnr_db));

    SUBCASE("report files") {
        metrics::write_report_tsv(report, dir / "report.tsv");
        metrics::write_report_json(report, dir / "report.json");
        std::ifstream tsv(dir / "report.tsv");
        std::string all((std::istreambuf_iterator<char>(tsv)), std::istreambuf_iterator<char>());
        CHECK(all.find("inf") != std::string::npos);
        CHECK(all.find("a.png") != std::string::npos);
        CHECK(all.find("MEAN") != std::string::npos);
    }
    SUBCASE("missing samples raise") {
        std::vector<metrics::ManifestEntry> bad = {{"a.png", {}}};
        CHECK_THROWS(metrics::evaluate(dir, bad, 4, cfg, dir));
    }
}

TEST_CASE("manifest parsing") {
    const fs::path dir = temp_dir("manifest");
    {
        std::ofstream out(dir / "m.json");
        out << R"([{"gt":"x.png","samples":["a.png","b.png"]}])";
    }
    const auto entries = metrics::load_manifest(dir / "m.json");
    REQUIRE(entries.size() == 1);
    CHECK(entries[0].gt == "x.png");
    CHECK(entries[0].samples.size() == 2);
    {
        std::ofstream out(dir / "bad.json");
        out << R"({"gt":"x.png"})";
    }
    CHECK_THROWS(metrics::load_manifest(dir / "bad.json"));
}

TEST_SUITE_END();
