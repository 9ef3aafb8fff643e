// fsncsr: train / sample / eval / freqsplit / gradcheck command line.
//
// Exit codes: 0 success, 2 invalid config, 3 non-finite training loss,
// 4 incompatible shapes, 5 missing sample files, 6 indivisible dims,
// 1 any other failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "fsncsr/config.hpp"
#include "fsncsr/kernels.hpp"
#include "fsncsr/linalg.hpp"
#include "fsncsr/metrics.hpp"
#include "fsncsr/resample.hpp"
#include "fsncsr/sampler.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fsncsr;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNonFinite = 3;
constexpr int kExitShapes = 4;
constexpr int kExitMissingSamples = 5;
constexpr int kExitIndivisible = 6;

void atomic_save_png(const Image& img, const fs::path& path) {
    const fs::path tmp = path.string() + ".tmp";
    save_png(img, tmp);
    fs::rename(tmp, path);
}

void atomic_save_fshf(const Image& img, const fs::path& path) {
    const fs::path tmp = path.string() + ".tmp";
    save_fshf(img, tmp);
    fs::rename(tmp, path);
}

RunManifest begin_manifest(const std::string& command, std::uint64_t config_hash,
                           std::uint64_t seed) {
    RunManifest m;
    m.command = command;
    m.config_hash = config_hash;
    m.seed = seed;
    m.started_at = iso8601_now();
    m.version = project_version();
    return m;
}

void finish_manifest(RunManifest& m, const fs::path& out_dir) {
    m.finished_at = iso8601_now();
    m.write(out_dir / "run_manifest.json");
}

int cmd_train(const std::string& config_path, const std::string& resume, bool echo) {
    ExperimentConfig cfg;
    try {
        cfg = ExperimentConfig::from_file(config_path);
        cfg.validate();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
    RunManifest manifest = begin_manifest("train", cfg.hash(), cfg.seed);

    flow::FlowModel model(cfg.arch);
    const Dataset data = Dataset::load(cfg.dataset, cfg.seed);
    TrainLoopOptions opt;
    opt.out_dir = cfg.paths.out_dir;
    opt.echo = echo;
    if (!resume.empty()) opt.resume_from = resume;

    fs::create_directories(opt.out_dir);
    atomic_write_text(fs::path(cfg.paths.out_dir) / "config_echo.json",
                      cfg.to_json_string(2) + "\n");

    TrainResult result;
    try {
        result = train_loop(model, data, cfg.train, opt);
    } catch (const TrainDivergence& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNonFinite;
    }
    manifest.artifacts.push_back(result.final_checkpoint.string());
    manifest.artifacts.push_back((opt.out_dir / opt.log_name).string());
    finish_manifest(manifest, opt.out_dir);
    std::printf("trained %lld steps, final bits/dim %.6f, checkpoint %s\n",
                static_cast<long long>(result.steps_run),
                result.bits_history.empty() ? 0.0 : result.bits_history.back(),
                result.final_checkpoint.string().c_str());
    return 0;
}

int cmd_sample(const std::string& ckpt_path, const std::string& input, const std::string& out_dir,
               double temperature, int num, std::uint64_t seed, double sigma_inf) {
    flow::Checkpoint ckpt = flow::load_checkpoint(ckpt_path);
    flow::FlowModel model = flow::model_from_checkpoint(ckpt);

    SamplerConfig scfg;
    scfg.temperature = temperature;
    scfg.num_samples = num;
    scfg.seed = seed;
    scfg.inference_sigma = sigma_inf;
    scfg.validate();

    std::vector<fs::path> inputs;
    if (fs::is_directory(input)) {
        for (const auto& e : fs::directory_iterator(input)) {
            if (e.is_regular_file() && e.path().extension() == ".png") inputs.push_back(e.path());
        }
        std::sort(inputs.begin(), inputs.end());
    } else {
        inputs.push_back(input);
    }
    if (inputs.empty()) {
        std::fprintf(stderr, "error: no PNG inputs under %s\n", input.c_str());
        return 1;
    }

    fs::create_directories(out_dir);
    RunManifest manifest = begin_manifest("sample", model.config().hash(), seed);

    json sample_manifest;
    sample_manifest["checkpoint"] = ckpt_path;
    sample_manifest["temperature"] = scfg.temperature;
    sample_manifest["num_samples"] = scfg.num_samples;
    sample_manifest["seed"] = scfg.seed;
    sample_manifest["sigma_inf"] = scfg.inference_sigma;
    sample_manifest["entries"] = json::array();
    json eval_manifest = json::array();

    const int s = model.config().scale;
    const std::int64_t factor = std::int64_t{1} << model.config().levels;
    for (const fs::path& in_path : inputs) {
        const Image y = load_png(in_path);
        if ((y.height * s) % factor != 0 || (y.width * s) % factor != 0 ||
            y.channels != model.config().img_channels) {
            std::fprintf(stderr, "error: %s has incompatible shape %lldx%lldx%lld for this model\n",
                         in_path.string().c_str(), static_cast<long long>(y.height),
                         static_cast<long long>(y.width), static_cast<long long>(y.channels));
            return kExitShapes;
        }
        const std::string stem = in_path.stem().string();
        const std::uint64_t image_id = fnv1a64(stem);
        json entry;
        entry["lr"] = in_path.string();
        entry["image_id"] = image_id;
        entry["samples"] = json::array();
        std::vector<std::string> sample_files;
        for (int i = 0; i < scfg.num_samples; ++i) {
            const Image sr = sample_sr(model, y, scfg, image_id, i);
            const std::string name = stem + "_s" + std::to_string(i) + ".png";
            atomic_save_png(sr, fs::path(out_dir) / name);
            entry["samples"].push_back({{"path", name},
                                        {"index", i},
                                        {"seed", scfg.seed},
                                        {"temperature", scfg.temperature},
                                        {"sigma_inf", scfg.inference_sigma}});
            sample_files.push_back(name);
            manifest.artifacts.push_back((fs::path(out_dir) / name).string());
        }
        sample_manifest["entries"].push_back(entry);
        eval_manifest.push_back({{"gt", stem + ".png"}, {"samples", sample_files}});
    }
    atomic_write_text(fs::path(out_dir) / "manifest.json", sample_manifest.dump(2) + "\n");
    atomic_write_text(fs::path(out_dir) / "eval_manifest.json", eval_manifest.dump(2) + "\n");
    manifest.artifacts.push_back((fs::path(out_dir) / "manifest.json").string());
    finish_manifest(manifest, out_dir);
    std::printf("wrote %d samples per input for %zu input(s) into %s\n", scfg.num_samples,
                inputs.size(), out_dir.c_str());
    return 0;
}

int cmd_eval(const std::string& gt_dir, const std::string& manifest_path,
             const std::string& out_dir, int scale, int patch, const std::string& distance) {
    const auto entries = metrics::load_manifest(manifest_path);
    const fs::path sample_base = fs::path(manifest_path).parent_path();

    std::vector<std::string> missing;
    for (const auto& e : entries) {
        const fs::path gt =
            fs::path(e.gt).is_absolute() ? fs::path(e.gt) : fs::path(gt_dir) / e.gt;
        if (!fs::exists(gt)) missing.push_back(gt.string());
        for (const auto& sp : e.samples) {
            const fs::path p = fs::path(sp).is_absolute() ? fs::path(sp) : sample_base / sp;
            if (!fs::exists(p)) missing.push_back(p.string());
        }
    }
    if (!missing.empty()) {
        for (const auto& m : missing) std::fprintf(stderr, "error: missing file %s\n", m.c_str());
        return kExitMissingSamples;
    }

    metrics::DiversityConfig cfg;
    cfg.patch = patch;
    cfg.distance = distance;
    const metrics::MetricsReport report = metrics::evaluate(gt_dir, entries, scale, cfg, sample_base);

    fs::create_directories(out_dir);
    const std::string stem = "report_p" + std::to_string(patch) + "_" + distance;
    metrics::write_report_tsv(report, fs::path(out_dir) / (stem + ".tsv"));
    metrics::write_report_json(report, fs::path(out_dir) / (stem + ".json"));

    RunManifest manifest = begin_manifest("eval", fnv1a64(manifest_path), 0);
    manifest.artifacts.push_back((fs::path(out_dir) / (stem + ".tsv")).string());
    manifest.artifacts.push_back((fs::path(out_dir) / (stem + ".json")).string());
    finish_manifest(manifest, out_dir);

    std::printf("images=%zu diversity_x100=%.4f lr_psnr_db=%g sparsity=%.4f rs=%.4f (P=%d, d=%s)\n",
                report.rows.size(), report.aggregate.diversity_x100, report.aggregate.lr_psnr_db,
                report.aggregate.sparsity, report.aggregate.rs, patch, distance.c_str());
    return 0;
}

int cmd_freqsplit(const std::string& image_path, int scale, const std::string& out_dir) {
    const Image x = load_png(image_path);
    if (x.height % scale != 0 || x.width % scale != 0) {
        std::fprintf(stderr, "error: image dims %lldx%lld not divisible by scale %d\n",
                     static_cast<long long>(x.height), static_cast<long long>(x.width), scale);
        return kExitIndivisible;
    }
    fs::create_directories(out_dir);
    const std::string stem = fs::path(image_path).stem().string();

    const Image low = lowpass(x, scale);
    const Image high = highpass(x, scale);
    Image low_clamped = low;
    low_clamped.clamp01();
    Image recombined(x.height, x.width, x.channels, PixelDomain::hr);
    for (std::size_t i = 0; i < recombined.pixels.size(); ++i) {
        recombined.pixels[i] = low.pixels[i] + high.pixels[i];
    }

    const fs::path low_path = fs::path(out_dir) / (stem + "_low.png");
    const fs::path high_path = fs::path(out_dir) / (stem + "_high.fshf");
    const fs::path rec_path = fs::path(out_dir) / (stem + "_recombined.png");
    atomic_save_png(low_clamped, low_path);
    atomic_save_fshf(high, high_path);
    atomic_save_png(recombined, rec_path);

    const Image reread = load_png(rec_path);
    double max_err = 0.0;
    for (std::size_t i = 0; i < x.pixels.size(); ++i) {
        max_err = std::max(max_err, std::fabs(reread.pixels[i] - x.pixels[i]));
    }
    double mean_abs_high = 0.0;
    for (double p : high.pixels) mean_abs_high += std::fabs(p);
    mean_abs_high /= static_cast<double>(high.numel());

    RunManifest manifest = begin_manifest("freqsplit", fnv1a64(image_path), 0);
    manifest.artifacts = {low_path.string(), high_path.string(), rec_path.string()};
    finish_manifest(manifest, out_dir);

    std::printf("scale=%d mean|H_s|=%.6f recombination max err=%.3e (budget %.3e)\n", scale,
                mean_abs_high, max_err, 1.0 / 510.0);
    if (max_err > 1.0 / 510.0 + 1e-12) {
        std::fprintf(stderr, "error: recombined image exceeds PNG quantization budget\n");
        return 1;
    }
    return 0;
}

int cmd_gradcheck(const std::string& config_path, int steps_override, bool inject_logdet_bug) {
    ExperimentConfig cfg;
    try {
        cfg = ExperimentConfig::from_file(config_path);
        cfg.validate();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
    const GradcheckConfig& gc = cfg.gradcheck;
    const int train_steps = steps_override >= 0 ? steps_override : gc.train_steps;

    flow::FlowConfig arch;
    arch.levels = gc.levels;
    arch.steps_per_level = gc.steps_per_level;
    arch.hidden = gc.hidden;
    arch.encoder_width = gc.encoder_width;
    arch.encoder_layers = 3;
    arch.img_channels = gc.img_channels;
    arch.scale = cfg.scale;
    arch.init_seed = cfg.seed;
    flow::FlowModel model(arch);

    const std::int64_t n = gc.input_size;
    if (n % cfg.scale != 0) {
        std::fprintf(stderr, "error: gradcheck.input_size must be divisible by scale\n");
        return kExitConfig;
    }

    if (train_steps > 0) {
        DatasetSpec dspec;
        dspec.crop = static_cast<int>(n);
        dspec.scale = cfg.scale;
        dspec.img_channels = gc.img_channels;
        SyntheticSpec syn;
        syn.count = 4;
        syn.size = std::max<int>(static_cast<int>(n) * 2, 16);
        dspec.synthetic = syn;
        const Dataset data = Dataset::load(dspec, cfg.seed);
        TrainConfig tcfg;
        tcfg.batch_size = 2;
        tcfg.total_steps = train_steps;
        tcfg.seed = cfg.seed;
        tcfg.noise = cfg.train.noise;
        tcfg.optimizer.total_steps = train_steps;
        Rng rng(tcfg.seed);
        for (std::int64_t step = 1; step <= train_steps; ++step) {
            train_step(model, sample_batch(data, tcfg.batch_size, rng), tcfg, step, rng);
        }
        std::printf("trained the gradcheck model for %d steps\n", train_steps);
    }
    if (inject_logdet_bug) model.set_debug_negate_logdet(true);

    // fixed probe example
    Rng rng = Rng::stream(cfg.seed, {0x9Cull});
    Tensor x({n, n, gc.img_channels});
    for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = rng.normal(0.0, 0.1);
    flow::Condition cond;
    cond.y_plus = Tensor({n / cfg.scale, n / cfg.scale, gc.img_channels});
    for (std::int64_t i = 0; i < cond.y_plus.numel(); ++i) cond.y_plus[i] = rng.uniform01();
    cond.sigma = 0.05;
    cond.noise_hr = Tensor({n, n, gc.img_channels});
    for (std::int64_t i = 0; i < cond.noise_hr.numel(); ++i) {
        cond.noise_hr[i] = rng.normal(0.0, cond.sigma);
    }

    bool ok = true;

    // finite-difference check over every parameter
    const ad::Program program = [&](ad::Graph& g) { return model.nll_bits_value(g, x, cond); };
    const ad::GradCheckReport report = ad::check_gradients(program, model.params(), gc.eps, gc.tol);
    double worst = 0.0;
    for (const auto& e : report.entries) worst = std::max(worst, e.max_rel_err);
    std::printf("[%s] gradients: %zu parameters, %lld elements, max rel err %.3e (tol %.1e)\n",
                report.pass ? "PASS" : "FAIL", report.entries.size(),
                static_cast<long long>(model.params().total_elements()), worst, gc.tol);
    if (!report.pass) {
        for (const auto& e : report.entries) {
            if (!e.pass) {
                std::printf("  FAIL %s rel_err=%.3e analytic=%.6e numeric=%.6e\n", e.name.c_str(),
                            e.max_rel_err, e.analytic, e.numeric);
            }
        }
        ok = false;
    }

    // brute-force Jacobian log-determinant oracle on the composite map
    double logdet_model = 0.0;
    model.forward_t(x, cond, &logdet_model);
    const Tensor jac = numeric_jacobian(
        [&](const Tensor& probe) { return model.forward_t(probe, cond); }, x, 1e-6);
    const double logdet_bruteforce = log_abs_det(jac);
    const double denom = std::max(1.0, std::fabs(logdet_bruteforce));
    const double rel = std::fabs(logdet_model - logdet_bruteforce) / denom;
    const bool ld_ok = rel <= 1e-4;
    std::printf("[%s] logdet: accumulated %.8f vs brute-force %.8f (rel err %.3e, dims %lld)\n",
                ld_ok ? "PASS" : "FAIL", logdet_model, logdet_bruteforce, rel,
                static_cast<long long>(x.numel()));
    ok = ok && ld_ok;

    std::printf("gradcheck: %s\n", ok ? "PASS" : "FAIL");
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"frequency-separated noise-conditioned flow super-resolution"};
    app.require_subcommand(1);

    std::string config_path, resume, ckpt_path, input, out_dir = "runs/out", gt_dir, manifest_path,
                                                 image_path;
    bool echo = false;
    double temperature = 0.9, sigma_inf = 0.1;
    int num = 10, patch = 64, scale = 4, gradcheck_steps = -1;
    std::uint64_t seed = 0;
    std::string distance = "mse";
    bool inject_logdet_bug = false;

    auto* train_cmd = app.add_subcommand("train", "run the NLL training loop");
    train_cmd->add_option("config", config_path, "experiment config JSON")->required();
    train_cmd->add_option("--resume", resume, "checkpoint to resume from");
    train_cmd->add_flag("--echo", echo, "mirror log lines to stdout");

    auto* sample_cmd = app.add_subcommand("sample", "super-resolve LR images");
    sample_cmd->add_option("checkpoint", ckpt_path, "model checkpoint")->required();
    sample_cmd->add_option("input", input, "LR PNG file or directory")->required();
    sample_cmd->add_option("--out", out_dir, "output directory");
    sample_cmd->add_option("--temperature", temperature, "latent temperature");
    sample_cmd->add_option("--num", num, "samples per input");
    sample_cmd->add_option("--seed", seed, "sampling seed");
    sample_cmd->add_option("--sigma-inf", sigma_inf, "inference noise sigma");

    auto* eval_cmd = app.add_subcommand("eval", "compute the metrics report");
    eval_cmd->add_option("gt_dir", gt_dir, "ground-truth image directory")->required();
    eval_cmd->add_option("manifest", manifest_path, "JSON list of {gt, samples}")->required();
    eval_cmd->add_option("--out", out_dir, "output directory");
    eval_cmd->add_option("--scale", scale, "super-resolution scale factor");
    eval_cmd->add_option("--patch", patch, "diversity patch size");
    eval_cmd->add_option("--distance", distance, "patch distance plugin (mse|mae)");

    auto* freq_cmd = app.add_subcommand("freqsplit", "frequency-separate one image");
    freq_cmd->add_option("image", image_path, "input PNG")->required();
    freq_cmd->add_option("--scale", scale, "scale factor s");
    freq_cmd->add_option("--out", out_dir, "output directory");

    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference and Jacobian checks");
    grad_cmd->add_option("config", config_path, "experiment config JSON")->required();
    grad_cmd->add_option("--steps", gradcheck_steps, "training steps before the check");
    grad_cmd->add_flag("--inject-logdet-bug", inject_logdet_bug,
                       "negative control: flip the accumulated logdet sign");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(config_path, resume, echo);
        if (sample_cmd->parsed())
            return cmd_sample(ckpt_path, input, out_dir, temperature, num, seed, sigma_inf);
        if (eval_cmd->parsed())
            return cmd_eval(gt_dir, manifest_path, out_dir, scale, patch, distance);
        if (freq_cmd->parsed()) return cmd_freqsplit(image_path, scale, out_dir);
        if (grad_cmd->parsed())
            return cmd_gradcheck(config_path, gradcheck_steps, inject_logdet_bug);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
