#include "fsncsr/config.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>

namespace fsncsr {

using nlohmann::json;

std::string project_version() { return "0.1.0"; }

ExperimentConfig ExperimentConfig::defaults(const std::string& profile, int scale) {
    if (profile != "desk" && profile != "paper") {
        throw ConfigError("profile: must be \"desk\" or \"paper\"");
    }
    ExperimentConfig c;
    c.profile = profile;
    c.scale = scale;

    c.arch.levels = scale >= 8 ? 3 : 2;
    c.arch.steps_per_level = 4;
    c.arch.hidden = 32;
    c.arch.encoder_width = 32;
    c.arch.encoder_layers = 3;
    c.arch.img_channels = 3;
    c.arch.scale = scale;

    c.dataset.scale = scale;
    c.dataset.img_channels = 3;
    c.dataset.synthetic = SyntheticSpec{};
    c.sampler.temperature = scale >= 8 ? 0.85 : 0.9;
    c.sampler.num_samples = 10;
    c.sampler.inference_sigma = 0.1;

    if (profile == "paper") {
        c.dataset.crop = 160;
        c.train.batch_size = 16;
        c.train.total_steps = scale >= 8 ? 220000 : 180000;
        c.train.checkpoint_every = 10000;
    } else {
        c.dataset.crop = scale >= 8 ? 64 : 32;
        c.train.batch_size = 4;
        c.train.total_steps = 500;
        c.train.checkpoint_every = 100;
    }
    c.train.seed = c.seed;
    c.train.optimizer.total_steps = c.train.total_steps;
    return c;
}

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_into(ExperimentConfig& c, const json& j) {
    maybe(j, "seed", c.seed);
    if (j.contains("arch")) {
        const json& a = j.at("arch");
        maybe(a, "levels", c.arch.levels);
        maybe(a, "steps_per_level", c.arch.steps_per_level);
        maybe(a, "hidden", c.arch.hidden);
        maybe(a, "encoder_width", c.arch.encoder_width);
        maybe(a, "encoder_layers", c.arch.encoder_layers);
        maybe(a, "img_channels", c.arch.img_channels);
        maybe(a, "scale_clamp", c.arch.scale_clamp);
    }
    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        maybe(d, "hr_dir", c.dataset.hr_dir);
        maybe(d, "crop", c.dataset.crop);
        maybe(d, "flip", c.dataset.flip);
        maybe(d, "rot90", c.dataset.rot90);
        maybe(d, "img_channels", c.dataset.img_channels);
        if (d.contains("synthetic")) {
            if (d.at("synthetic").is_null()) {
                c.dataset.synthetic.reset();
            } else {
                SyntheticSpec s = c.dataset.synthetic ? *c.dataset.synthetic : SyntheticSpec{};
                const json& sj = d.at("synthetic");
                maybe(sj, "count", s.count);
                maybe(sj, "size", s.size);
                maybe(sj, "components", s.components);
                maybe(sj, "noise_amp", s.noise_amp);
                c.dataset.synthetic = s;
            }
        }
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        maybe(t, "batch_size", c.train.batch_size);
        maybe(t, "total_steps", c.train.total_steps);
        maybe(t, "checkpoint_every", c.train.checkpoint_every);
        if (t.contains("optimizer")) {
            const json& o = t.at("optimizer");
            maybe(o, "base_lr", c.train.optimizer.base_lr);
            maybe(o, "beta1", c.train.optimizer.beta1);
            maybe(o, "beta2", c.train.optimizer.beta2);
            maybe(o, "epsilon", c.train.optimizer.epsilon);
        }
    }
    if (j.contains("noise")) {
        const json& n = j.at("noise");
        maybe(n, "sigma_min", c.train.noise.sigma_min);
        maybe(n, "sigma_max", c.train.noise.sigma_max);
        maybe(n, "inference_sigma", c.train.noise.inference_sigma);
    }
    if (j.contains("sampler")) {
        const json& s = j.at("sampler");
        maybe(s, "temperature", c.sampler.temperature);
        maybe(s, "num_samples", c.sampler.num_samples);
        maybe(s, "seed", c.sampler.seed);
    }
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        maybe(e, "num_samples", c.eval.num_samples);
        maybe(e, "patch", c.eval.patch);
        maybe(e, "distance", c.eval.distance);
    }
    if (j.contains("gradcheck")) {
        const json& gc = j.at("gradcheck");
        maybe(gc, "input_size", c.gradcheck.input_size);
        maybe(gc, "img_channels", c.gradcheck.img_channels);
        maybe(gc, "levels", c.gradcheck.levels);
        maybe(gc, "steps_per_level", c.gradcheck.steps_per_level);
        maybe(gc, "hidden", c.gradcheck.hidden);
        maybe(gc, "encoder_width", c.gradcheck.encoder_width);
        maybe(gc, "train_steps", c.gradcheck.train_steps);
        maybe(gc, "eps", c.gradcheck.eps);
        maybe(gc, "tol", c.gradcheck.tol);
    }
    if (j.contains("paths")) {
        const json& p = j.at("paths");
        maybe(p, "out_dir", c.paths.out_dir);
        maybe(p, "checkpoint", c.paths.checkpoint);
    }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    std::string profile = "desk";
    int scale = 4;
    if (j.contains("profile")) profile = j.at("profile").get<std::string>();
    if (j.contains("scale")) scale = j.at("scale").get<int>();
    ExperimentConfig c = defaults(profile, scale);
    try {
        parse_into(c, j);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (const char* env_seed = std::getenv("FSNCSR_SEED")) {
        c.seed = std::strtoull(env_seed, nullptr, 10);
    }
    c.train.seed = c.seed;
    c.arch.scale = c.scale;
    c.arch.init_seed = c.seed;
    c.dataset.scale = c.scale;
    c.dataset.img_channels = c.arch.img_channels;
    c.train.optimizer.total_steps = c.train.total_steps;
    c.sampler.inference_sigma = c.train.noise.inference_sigma;
    if (c.sampler.seed == 0) c.sampler.seed = c.seed;
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_string(text);
}

std::string ExperimentConfig::to_json_string(int indent) const {
    json j;
    j["profile"] = profile;
    j["scale"] = scale;
    j["seed"] = seed;
    j["arch"] = json::parse(arch.to_json_string());
    j["dataset"] = {{"hr_dir", dataset.hr_dir},
                    {"crop", dataset.crop},
                    {"flip", dataset.flip},
                    {"rot90", dataset.rot90},
                    {"img_channels", dataset.img_channels}};
    if (dataset.synthetic) {
        j["dataset"]["synthetic"] = {{"count", dataset.synthetic->count},
                                     {"size", dataset.synthetic->size},
                                     {"components", dataset.synthetic->components},
                                     {"noise_amp", dataset.synthetic->noise_amp}};
    } else {
        j["dataset"]["synthetic"] = nullptr;
    }
    j["train"] = {{"batch_size", train.batch_size},
                  {"total_steps", train.total_steps},
                  {"checkpoint_every", train.checkpoint_every},
                  {"optimizer",
                   {{"base_lr", train.optimizer.base_lr},
                    {"beta1", train.optimizer.beta1},
                    {"beta2", train.optimizer.beta2},
                    {"epsilon", train.optimizer.epsilon}}}};
    j["noise"] = {{"sigma_min", train.noise.sigma_min},
                  {"sigma_max", train.noise.sigma_max},
                  {"inference_sigma", train.noise.inference_sigma}};
    j["sampler"] = {{"temperature", sampler.temperature},
                    {"num_samples", sampler.num_samples},
                    {"seed", sampler.seed}};
    j["eval"] = {{"num_samples", eval.num_samples},
                 {"patch", eval.patch},
                 {"distance", eval.distance}};
    j["gradcheck"] = {{"input_size", gradcheck.input_size},
                      {"img_channels", gradcheck.img_channels},
                      {"levels", gradcheck.levels},
                      {"steps_per_level", gradcheck.steps_per_level},
                      {"hidden", gradcheck.hidden},
                      {"encoder_width", gradcheck.encoder_width},
                      {"train_steps", gradcheck.train_steps},
                      {"eps", gradcheck.eps},
                      {"tol", gradcheck.tol}};
    j["paths"] = {{"out_dir", paths.out_dir}, {"checkpoint", paths.checkpoint}};
    return indent >= 0 ? j.dump(indent) : j.dump();
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a64(to_json_string()); }

void ExperimentConfig::validate() const {
    try {
        arch.validate();
        train.validate();
        sampler.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (scale < 2) throw ConfigError("scale: must be an integer >= 2");
    if (dataset.crop < 1) throw ConfigError("dataset.crop: must be >= 1");
    if (dataset.crop % scale != 0) throw ConfigError("dataset.crop: must be divisible by scale");
    const int factor = 1 << arch.levels;
    if (dataset.crop % factor != 0) {
        throw ConfigError("dataset.crop: must be divisible by 2^arch.levels");
    }
    if (dataset.hr_dir.empty() && !dataset.synthetic) {
        throw ConfigError("dataset.hr_dir: missing, and no dataset.synthetic spec given");
    }
    if (!dataset.hr_dir.empty() && !std::filesystem::is_directory(dataset.hr_dir)) {
        throw ConfigError("dataset.hr_dir: not a directory: " + dataset.hr_dir);
    }
    if (dataset.synthetic) {
        if (dataset.synthetic->size < dataset.crop) {
            throw ConfigError("dataset.synthetic.size: smaller than dataset.crop");
        }
        if (dataset.synthetic->count < 1) throw ConfigError("dataset.synthetic.count: must be >= 1");
    }
    if (eval.patch < 1) throw ConfigError("eval.patch: must be >= 1");
    if (eval.num_samples < 1) throw ConfigError("eval.num_samples: must be >= 1");
    if (gradcheck.input_size < (1 << gradcheck.levels)) {
        throw ConfigError("gradcheck.input_size: must be >= 2^gradcheck.levels");
    }
}

std::string iso8601_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

void RunManifest::write(const std::filesystem::path& path) const {
    json j;
    j["command"] = command;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["artifacts"] = artifacts;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["version"] = version.empty() ? project_version() : version;
    atomic_write_text(path, j.dump(2) + "\n");
}

}  // namespace fsncsr
