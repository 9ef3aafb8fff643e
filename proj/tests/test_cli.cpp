#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "fsncsr/image.hpp"
#include "fsncsr/rng.hpp"

using namespace fsncsr;
namespace fs = std::filesystem;
using nlohmann::json;

#ifndef FSNCSR_BIN
#error "FSNCSR_BIN must point at the CLI binary"
#endif

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run(const std::string& args) {
    const std::string cmd = std::string(FSNCSR_BIN) + " " + args + " 2>&1";
    std::FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult r;
    std::array<char, 512> buf;
    while (std::fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path work_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "fsncsr_cli_tests" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

// config small enough that the CLI train path finishes in a couple seconds
json tiny_config(const fs::path& out_dir) {
    json j;
    j["profile"] = "desk";
    j["scale"] = 4;
    j["seed"] = 31337;
    j["arch"] = {{"levels", 2}, {"steps_per_level", 1}, {"hidden", 4},
                 {"encoder_width", 3}, {"encoder_layers", 2}, {"img_channels", 1}};
    j["dataset"] = {{"crop", 8}, {"synthetic", {{"count", 3}, {"size", 24}}}};
    j["train"] = {{"batch_size", 2}, {"total_steps", 10}, {"checkpoint_every", 100}};
    j["gradcheck"] = {{"input_size", 8},   {"img_channels", 1}, {"levels", 2},
                      {"steps_per_level", 1}, {"hidden", 3},       {"encoder_width", 2},
                      {"train_steps", 5}};
    j["paths"] = {{"out_dir", out_dir.string()}};
    return j;
}

fs::path write_config(const fs::path& dir, const json& j) {
    const fs::path p = dir / "config.json";
    std::ofstream out(p);
    out << j.dump(2);
    return p;
}

std::string file_text(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint64_t file_hash(const fs::path& p) {
    const std::string bytes = file_text(p);
    return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("train runs, writes artifacts, and is seed-deterministic") {
    const fs::path dir = work_dir("train");
    const fs::path out1 = dir / "run1";
    const fs::path out2 = dir / "run2";

    json cfg = tiny_config(out1);
    const fs::path cfg_path = write_config(dir, cfg);
    const RunResult r1 = run("train " + cfg_path.string());
    CHECK(r1.exit_code == 0);
    CHECK(fs::exists(out1 / "ckpt_final.fsnc"));
    CHECK(fs::exists(out1 / "train_log.tsv"));
    CHECK(fs::exists(out1 / "run_manifest.json"));

    cfg["paths"]["out_dir"] = out2.string();
    const fs::path cfg_path2 = write_config(work_dir("train_b"), cfg);
    const RunResult r2 = run("train " + cfg_path2.string());
    CHECK(r2.exit_code == 0);
    CHECK(file_hash(out1 / "ckpt_final.fsnc") == file_hash(out2 / "ckpt_final.fsnc"));
}

TEST_CASE("invalid config exits 2 naming the field") {
    const fs::path dir = work_dir("badcfg");
    json cfg = tiny_config(dir / "out");
    cfg["dataset"]["synthetic"] = nullptr;  // no hr_dir either
    const fs::path cfg_path = write_config(dir, cfg);
    const RunResult r = run("train " + cfg_path.string());
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("dataset.hr_dir") != std::string::npos);
}

TEST_CASE("sample writes M PNGs plus manifests and is deterministic at tau 0") {
    const fs::path dir = work_dir("sample");
    const fs::path train_out = dir / "train_out";
    const fs::path cfg_path = write_config(dir, tiny_config(train_out));
    REQUIRE(run("train " + cfg_path.string()).exit_code == 0);
    const fs::path ckpt = train_out / "ckpt_final.fsnc";

    Image lr(4, 4, 1, PixelDomain::hr);
    Rng rng(5);
    for (auto& p : lr.pixels) p = rng.uniform01();
    save_png(lr, dir / "input.png");

    SUBCASE("default flags echo tau=0.9 into the manifest") {
        const fs::path out = dir / "s_default";
        const RunResult r = run("sample " + ckpt.string() + " " + (dir / "input.png").string() +
                                " --num 10 --out " + out.string());
        CHECK(r.exit_code == 0);
        int pngs = 0;
        for (const auto& e : fs::directory_iterator(out)) {
            if (e.path().extension() == ".png") ++pngs;
        }
        CHECK(pngs == 10);
        const json manifest = json::parse(file_text(out / "manifest.json"));
        CHECK(manifest["temperature"].get<double>() == 0.9);
        CHECK(manifest["entries"].size() == 1);
        CHECK(manifest["entries"][0]["samples"].size() == 10);
        CHECK(fs::exists(out / "eval_manifest.json"));
    }
    SUBCASE("tau 0 sigma 0 twice gives byte-identical PNGs") {
        const fs::path o1 = dir / "s_det1";
        const fs::path o2 = dir / "s_det2";
        const std::string flags = " --num 2 --temperature 0 --sigma-inf 0 --seed 7 --out ";
        CHECK(run("sample " + ckpt.string() + " " + (dir / "input.png").string() + flags + o1.string()).exit_code == 0);
        CHECK(run("sample " + ckpt.string() + " " + (dir / "input.png").string() + flags + o2.string()).exit_code == 0);
        CHECK(file_hash(o1 / "input_s0.png") == file_hash(o2 / "input_s0.png"));
        CHECK(file_hash(o1 / "input_s0.png") == file_hash(o1 / "input_s1.png"));
    }
    SUBCASE("incompatible shape exits 4") {
        Image bad(3, 3, 1, PixelDomain::hr);
        save_png(bad, dir / "bad.png");
        // 12x12 HR is divisible by 4; use a 3-channel image against the 1-channel model
        Image bad3(4, 4, 3, PixelDomain::hr);
        save_png(bad3, dir / "bad3.png");
        const RunResult r = run("sample " + ckpt.string() + " " + (dir / "bad3.png").string() +
                                " --out " + (dir / "s_bad").string());
        CHECK(r.exit_code == 4);
    }
}

TEST_CASE("eval: GT-vs-GT reports zero diversity and inf LR-PSNR") {
    const fs::path dir = work_dir("eval");
    Rng rng(9);
    Image gt(8, 8, 3, PixelDomain::hr);
    for (auto& p : gt.pixels) p = rng.uniform01();
    save_png(gt, dir / "img.png");
    fs::copy_file(dir / "img.png", dir / "img_s0.png");
    fs::copy_file(dir / "img.png", dir / "img_s1.png");
    {
        std::ofstream out(dir / "manifest.json");
        out << R"([{"gt":"img.png","samples":["img_s0.png","img_s1.png"]}])";
    }
    const fs::path out = dir / "report";
    const RunResult r = run("eval " + dir.string() + " " + (dir / "manifest.json").string() +
                            " --scale 4 --patch 4 --out " + out.string());
    CHECK(r.exit_code == 0);
    const std::string tsv = file_text(out / "report_p4_mse.tsv");
    CHECK(tsv.find("inf") != std::string::npos);
    CHECK(tsv.find("0.000000") != std::string::npos);

    SUBCASE("patch size is recorded in the report name") {
        const fs::path out32 = dir / "report32";
        CHECK(run("eval " + dir.string() + " " + (dir / "manifest.json").string() +
                  " --scale 4 --patch 8 --out " + out32.string())
                  .exit_code == 0);
        CHECK(fs::exists(out32 / "report_p8_mse.tsv"));
    }
    SUBCASE("missing sample files exit 5") {
        std::ofstream bad(dir / "bad_manifest.json");
        bad << R"([{"gt":"img.png","samples":["nope.png"]}])";
        bad.close();
        const RunResult miss = run("eval " + dir.string() + " " +
                                   (dir / "bad_manifest.json").string() + " --out " + out.string());
        CHECK(miss.exit_code == 5);
    }
}

TEST_CASE("freqsplit decomposes and recombines within PNG quantization") {
    const fs::path dir = work_dir("freqsplit");
    Rng rng(11);
    Image img(16, 16, 3, PixelDomain::hr);
    for (auto& p : img.pixels) p = rng.uniform01();
    save_png(img, dir / "x.png");

    const RunResult r = run("freqsplit " + (dir / "x.png").string() + " --scale 4 --out " +
                            (dir / "out").string());
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(dir / "out" / "x_low.png"));
    CHECK(fs::exists(dir / "out" / "x_high.fshf"));
    CHECK(fs::exists(dir / "out" / "x_recombined.png"));

    const Image original = load_png(dir / "x.png");
    const Image recombined = load_png(dir / "out" / "x_recombined.png");
    for (std::size_t i = 0; i < original.pixels.size(); ++i) {
        CHECK(std::fabs(original.pixels[i] - recombined.pixels[i]) <= 1.0 / 510.0 + 1e-12);
    }

    SUBCASE("constant image produces an all-zero high-frequency file") {
        Image c(8, 8, 1, PixelDomain::hr);
        for (auto& p : c.pixels) p = 0.5;
        save_png(c, dir / "const.png");
        CHECK(run("freqsplit " + (dir / "const.png").string() + " --scale 4 --out " +
                  (dir / "cout").string())
                  .exit_code == 0);
        const Image hf = load_fshf(dir / "cout" / "const_high.fshf");
        for (double p : hf.pixels) CHECK(std::fabs(p) < 1e-6);
    }
    SUBCASE("larger scale keeps more energy in the high band") {
        // one image, two scales: mean |H_s| grows with s
        Image big(64, 64, 1, PixelDomain::hr);
        Rng r2(13);
        for (auto& p : big.pixels) p = r2.uniform01();
        save_png(big, dir / "big.png");
        const RunResult r4 = run("freqsplit " + (dir / "big.png").string() + " --scale 4 --out " +
                                 (dir / "s4").string());
        const RunResult r32 = run("freqsplit " + (dir / "big.png").string() + " --scale 32 --out " +
                                  (dir / "s32").string());
        REQUIRE(r4.exit_code == 0);
        REQUIRE(r32.exit_code == 0);
        auto mean_abs = [](const fs::path& p) {
            const Image hf = load_fshf(p);
            double acc = 0.0;
            for (double v : hf.pixels) acc += std::fabs(v);
            return acc / static_cast<double>(hf.numel());
        };
        CHECK(mean_abs(dir / "s32" / "big_high.fshf") > mean_abs(dir / "s4" / "big_high.fshf"));
    }
    SUBCASE("indivisible dims exit 6") {
        Image odd(9, 9, 1, PixelDomain::hr);
        save_png(odd, dir / "odd.png");
        CHECK(run("freqsplit " + (dir / "odd.png").string() + " --scale 4 --out " +
                  (dir / "oout").string())
                  .exit_code == 6);
    }
}

TEST_CASE("gradcheck passes fresh and after training, fails with the injected logdet bug") {
    const fs::path dir = work_dir("gradcheck");
    const fs::path cfg_path = write_config(dir, tiny_config(dir / "out"));

    SUBCASE("fresh identity-initialized model passes") {
        const RunResult r = run("gradcheck " + cfg_path.string() + " --steps 0");
        CHECK(r.exit_code == 0);
        CHECK(r.output.find("PASS") != std::string::npos);
    }
    SUBCASE("model after a few training steps passes") {
        const RunResult r = run("gradcheck " + cfg_path.string() + " --steps 5");
        CHECK(r.exit_code == 0);
    }
    SUBCASE("negative control: injected wrong logdet sign fails") {
        const RunResult r = run("gradcheck " + cfg_path.string() + " --steps 5 --inject-logdet-bug");
        CHECK(r.exit_code != 0);
        CHECK(r.output.find("FAIL") != std::string::npos);
    }
}

TEST_SUITE_END();
