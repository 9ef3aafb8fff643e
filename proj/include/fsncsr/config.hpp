#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsncsr/dataset.hpp"
#include "fsncsr/flow.hpp"
#include "fsncsr/metrics.hpp"
#include "fsncsr/sampler.hpp"
#include "fsncsr/train.hpp"

namespace fsncsr {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PathsConfig {
    std::string out_dir = "runs/out";
    std::string checkpoint;
};

// gradient-check workflow: a deliberately small architecture so central
// finite differences over every parameter stay fast, and the total input
// dimension stays within brute-force-Jacobian range
struct GradcheckConfig {
    int input_size = 8;
    int img_channels = 1;
    int levels = 2;
    int steps_per_level = 2;
    int hidden = 6;
    int encoder_width = 4;
    int train_steps = 50;
    double eps = 1e-5;
    double tol = 1e-3;
};

// One JSON document drives every command. A "profile" field expands defaults
// (desk or paper); explicitly given fields override them. The environment
// variable FSNCSR_SEED overrides the seed for CI sweeps.
struct ExperimentConfig {
    std::string profile = "desk";
    int scale = 4;
    std::uint64_t seed = 1;
    flow::FlowConfig arch;
    DatasetSpec dataset;
    TrainConfig train;
    SamplerConfig sampler;
    metrics::DiversityConfig eval;
    GradcheckConfig gradcheck;
    PathsConfig paths;

    static ExperimentConfig defaults(const std::string& profile, int scale);
    static ExperimentConfig from_json_string(const std::string& text);
    static ExperimentConfig from_file(const std::filesystem::path& path);

    std::string to_json_string(int indent = -1) const;
    std::uint64_t hash() const;

    // throws ConfigError naming the offending field; runs before any output
    void validate() const;
};

struct RunManifest {
    std::string command;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> artifacts;
    std::string started_at;
    std::string finished_at;
    std::string version;

    void write(const std::filesystem::path& path) const;  // atomic
};

std::string iso8601_now();
std::string project_version();

// write-temp-rename so partially written artifacts never appear
void atomic_write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace fsncsr
