#include "fsncsr/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "fsncsr/resample.hpp"

namespace fsncsr::metrics {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

PatchDistance make_distance(const std::string& name) {
    if (name == "mse") {
        return [](const double* a, const double* b, std::size_t n) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = a[i] - b[i];
                acc += d * d;
            }
            return acc / static_cast<double>(n);
        };
    }
    if (name == "mae") {
        return [](const double* a, const double* b, std::size_t n) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += std::fabs(a[i] - b[i]);
            return acc / static_cast<double>(n);
        };
    }
    throw std::invalid_argument("unknown patch distance: " + name);
}

namespace {

std::vector<double> extract_patch(const Image& img, std::int64_t pi, std::int64_t pj,
                                  std::int64_t p) {
    std::vector<double> out(static_cast<std::size_t>(p * p * img.channels));
    std::size_t k = 0;
    for (std::int64_t i = 0; i < p; ++i) {
        for (std::int64_t j = 0; j < p; ++j) {
            for (std::int64_t c = 0; c < img.channels; ++c) {
                out[k++] = img.at(pi * p + i, pj * p + j, c);
            }
        }
    }
    return out;
}

}  // namespace

std::vector<std::vector<double>> patch_distances(const Image& gt, const std::vector<Image>& samples,
                                                 const DiversityConfig& cfg) {
    if (samples.empty()) throw std::invalid_argument("patch_distances: empty sample set");
    for (const Image& s : samples) {
        if (s.height != gt.height || s.width != gt.width || s.channels != gt.channels) {
            throw std::invalid_argument("patch_distances: sample shape differs from GT");
        }
    }
    if (cfg.patch < 1) throw std::invalid_argument("patch_distances: patch size must be >= 1");
    const std::int64_t p = cfg.patch;
    const std::int64_t rows = gt.height / p;
    const std::int64_t cols = gt.width / p;
    if (rows * cols == 0) {
        throw std::invalid_argument("patch_distances: image smaller than one patch");
    }
    const PatchDistance d = make_distance(cfg.distance);

    std::vector<std::vector<double>> dist(samples.size());
    std::vector<std::vector<double>> gt_patches;
    gt_patches.reserve(static_cast<std::size_t>(rows * cols));
    for (std::int64_t pi = 0; pi < rows; ++pi) {
        for (std::int64_t pj = 0; pj < cols; ++pj) {
            gt_patches.push_back(extract_patch(gt, pi, pj, p));
        }
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
        dist[i].reserve(gt_patches.size());
        std::size_t k = 0;
        for (std::int64_t pi = 0; pi < rows; ++pi) {
            for (std::int64_t pj = 0; pj < cols; ++pj) {
                const std::vector<double> sp = extract_patch(samples[i], pi, pj, p);
                dist[i].push_back(d(gt_patches[k].data(), sp.data(), sp.size()));
                ++k;
            }
        }
    }
    return dist;
}

double global_min_distance(const Image& gt, const std::vector<Image>& samples,
                           const DiversityConfig& cfg) {
    const auto dist = patch_distances(gt, samples, cfg);
    double best = kInf;
    for (const auto& row : dist) {
        double avg = 0.0;
        for (double v : row) avg += v;
        avg /= static_cast<double>(row.size());
        best = std::min(best, avg);
    }
    return best;
}

DiversityResult diversity_from_distances(const std::vector<std::vector<double>>& dist) {
    if (dist.empty() || dist[0].empty()) {
        throw std::invalid_argument("diversity: empty distance matrix");
    }
    const std::size_t k_patches = dist[0].size();

    DiversityResult r;
    r.dbar = kInf;
    for (const auto& row : dist) {
        double avg = 0.0;
        for (double v : row) avg += v;
        avg /= static_cast<double>(k_patches);
        r.dbar = std::min(r.dbar, avg);
    }
    double permin_avg = 0.0;
    for (std::size_t k = 0; k < k_patches; ++k) {
        double best = kInf;
        for (const auto& row : dist) best = std::min(best, row[k]);
        permin_avg += best;
    }
    permin_avg /= static_cast<double>(k_patches);

    if (r.dbar <= 0.0) {
        // a sample matched GT exactly on every patch: Eq. collapses to 0/0
        r.score = 0.0;
        r.degenerate = true;
        return r;
    }
    r.score = (r.dbar - permin_avg) / r.dbar;
    return r;
}

DiversityResult diversity_score(const Image& gt, const std::vector<Image>& samples,
                                const DiversityConfig& cfg) {
    return diversity_from_distances(patch_distances(gt, samples, cfg));
}

double lr_psnr(const Image& sr, const Image& lr, int scale) {
    const Image down = downsample(sr, scale);
    if (down.height != lr.height || down.width != lr.width || down.channels != lr.channels) {
        throw std::invalid_argument("lr_psnr: downsampled SR shape does not match the LR image");
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < down.pixels.size(); ++i) {
        const double d = down.pixels[i] - lr.pixels[i];
        mse += d * d;
    }
    mse /= static_cast<double>(down.pixels.size());
    if (mse == 0.0) return kInf;
    return 10.0 * std::log10(1.0 / mse);
}

namespace {

std::int64_t nonzero_count(const Image& hf) {
    if (hf.domain != PixelDomain::high_freq) {
        throw std::invalid_argument("sparsity: high-frequency-domain image required");
    }
    const std::vector<int> q = quantize_u8(hf);
    std::int64_t nnz = 0;
    for (int v : q) nnz += v != 0;
    return nnz;
}

}  // namespace

double sparsity(const Image& hf) {
    const double nnz = static_cast<double>(nonzero_count(hf));
    return 1.0 - nnz / static_cast<double>(hf.numel());
}

double relative_sparsity(const Image& hf, const Image& hf_gt) {
    if (hf.height != hf_gt.height || hf.width != hf_gt.width || hf.channels != hf_gt.channels) {
        throw std::invalid_argument("relative_sparsity: shape mismatch");
    }
    const std::int64_t nnz = nonzero_count(hf);
    const std::int64_t nnz_gt = nonzero_count(hf_gt);
    if (nnz_gt == 0) return nnz == 0 ? 1.0 : -kInf;
    return 1.0 - static_cast<double>(nnz) / static_cast<double>(nnz_gt);
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    json j;
    in >> j;
    if (!j.is_array()) throw std::runtime_error("manifest must be a JSON array of {gt, samples}");
    std::vector<ManifestEntry> out;
    for (const auto& e : j) {
        ManifestEntry m;
        m.gt = e.at("gt").get<std::string>();
        m.samples = e.at("samples").get<std::vector<std::string>>();
        out.push_back(std::move(m));
    }
    return out;
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    if (path.is_absolute() || base.empty()) return path;
    return base / path;
}

Image subtract_lowpass(const Image& img, const Image& low) {
    Image out(img.height, img.width, img.channels, PixelDomain::high_freq);
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        out.pixels[i] = img.pixels[i] - low.pixels[i];
    }
    return out;
}

}  // namespace

MetricsReport evaluate(const std::filesystem::path& gt_dir,
                       const std::vector<ManifestEntry>& entries, int scale,
                       const DiversityConfig& cfg, const std::filesystem::path& sample_base) {
    MetricsReport report;
    report.config = cfg;
    report.scale = scale;

    std::vector<ManifestEntry> sorted = entries;
    std::sort(sorted.begin(), sorted.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.gt < b.gt; });

    for (const auto& entry : sorted) {
        if (entry.samples.empty()) {
            throw std::runtime_error("evaluate: no samples listed for " + entry.gt);
        }
        const Image gt = load_png(resolve(gt_dir, entry.gt));
        if (gt.height % scale != 0 || gt.width % scale != 0) {
            throw std::invalid_argument("evaluate: GT dims of " + entry.gt +
                                        " not divisible by scale");
        }
        std::vector<Image> samples;
        samples.reserve(entry.samples.size());
        for (const auto& sp : entry.samples) {
            samples.push_back(load_png(resolve(sample_base, sp)));
        }

        const Image lr = downsample(gt, scale);
        const Image low = lowpass(gt, scale);
        const Image gt_hf = highpass(gt, scale);

        ImageMetrics row;
        row.image = entry.gt;
        const DiversityResult div = diversity_score(gt, samples, cfg);
        row.diversity_x100 = 100.0 * div.score;
        row.dbar = div.dbar;
        row.degenerate_diversity = div.degenerate;

        double mse_sum = 0.0;
        double sp_sum = 0.0;
        double rs_sum = 0.0;
        for (const Image& s : samples) {
            const Image down = downsample(s, scale);
            if (down.height != lr.height || down.width != lr.width) {
                throw std::invalid_argument("evaluate: sample shape inconsistent with GT for " +
                                            entry.gt);
            }
            double mse = 0.0;
            for (std::size_t i = 0; i < down.pixels.size(); ++i) {
                const double d = down.pixels[i] - lr.pixels[i];
                mse += d * d;
            }
            mse_sum += mse / static_cast<double>(down.pixels.size());
            const Image hf = subtract_lowpass(s, low);
            sp_sum += sparsity(hf);
            rs_sum += relative_sparsity(hf, gt_hf);
        }
        const double m = static_cast<double>(samples.size());
        const double mean_mse = mse_sum / m;
        row.lr_psnr_db = mean_mse == 0.0 ? kInf : 10.0 * std::log10(1.0 / mean_mse);
        row.sparsity = sp_sum / m;
        row.rs = rs_sum / m;
        row.gt_sparsity = sparsity(gt_hf);
        report.rows.push_back(std::move(row));
    }

    ImageMetrics& agg = report.aggregate;
    agg.image = "MEAN";
    const double n = static_cast<double>(report.rows.size());
    for (const auto& row : report.rows) {
        agg.diversity_x100 += row.diversity_x100 / n;
        agg.dbar += row.dbar / n;
        agg.lr_psnr_db += row.lr_psnr_db / n;
        agg.sparsity += row.sparsity / n;
        agg.rs += row.rs / n;
        agg.gt_sparsity += row.gt_sparsity / n;
    }
    return report;
}

double mean_gt_sparsity(const std::filesystem::path& dir, int scale, std::size_t max_images) {
    std::vector<std::filesystem::path> paths;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            paths.push_back(entry.path());
        }
    }
    std::sort(paths.begin(), paths.end());
    if (max_images > 0 && paths.size() > max_images) paths.resize(max_images);
    if (paths.empty()) throw std::runtime_error("mean_gt_sparsity: no PNGs in " + dir.string());

    double acc = 0.0;
    for (const auto& p : paths) {
        Image img = load_png(p);
        const std::int64_t h = (img.height / scale) * scale;
        const std::int64_t w = (img.width / scale) * scale;
        if (h < scale || w < scale) {
            throw std::runtime_error("mean_gt_sparsity: image too small: " + p.string());
        }
        if (h != img.height || w != img.width) {
            Image cropped(h, w, img.channels, PixelDomain::hr);
            for (std::int64_t i = 0; i < h; ++i) {
                for (std::int64_t j = 0; j < w; ++j) {
                    for (std::int64_t c = 0; c < img.channels; ++c) {
                        cropped.at(i, j, c) = img.at(i, j, c);
                    }
                }
            }
            img = std::move(cropped);
        }
        acc += sparsity(highpass(img, scale));
    }
    return acc / static_cast<double>(paths.size());
}

void write_report_tsv(const MetricsReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "image\tdiversity_x100\tdbar\tlr_psnr_db\tsparsity\trs\n";
    auto write_row = [&](const ImageMetrics& r) {
        out << r.image << '\t' << fmt(r.diversity_x100) << '\t' << fmt(r.dbar) << '\t'
            << fmt(r.lr_psnr_db) << '\t' << fmt(r.sparsity) << '\t' << fmt(r.rs) << '\n';
    };
    for (const auto& r : report.rows) write_row(r);
    write_row(report.aggregate);
}

namespace {

json metrics_to_json(const ImageMetrics& r) {
    auto num = [](double v) -> json {
        if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
        return v;
    };
    return json{{"image", r.image},
                {"diversity_x100", num(r.diversity_x100)},
                {"dbar", num(r.dbar)},
                {"lr_psnr_db", num(r.lr_psnr_db)},
                {"sparsity", num(r.sparsity)},
                {"rs", num(r.rs)},
                {"gt_sparsity", num(r.gt_sparsity)},
                {"degenerate_diversity", r.degenerate_diversity}};
}

}  // namespace

void write_report_json(const MetricsReport& report, const std::filesystem::path& path) {
    json j;
    j["config"] = {{"num_samples", report.config.num_samples},
                   {"patch", report.config.patch},
                   {"distance", report.config.distance},
                   {"scale", report.scale}};
    j["images"] = json::array();
    for (const auto& r : report.rows) j["images"].push_back(metrics_to_json(r));
    j["aggregate"] = metrics_to_json(report.aggregate);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
}

}  // namespace fsncsr::metrics
