#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsncsr/dataset.hpp"
#include "fsncsr/flow.hpp"
#include "fsncsr/noise.hpp"
#include "fsncsr/optim.hpp"
#include "fsncsr/rng.hpp"

namespace fsncsr {

struct TrainConfig {
    int batch_size = 4;
    std::int64_t total_steps = 500;
    std::int64_t checkpoint_every = 100;
    std::uint64_t seed = 1;
    optim::OptimizerConfig optimizer;
    NoiseSchedule noise;

    void validate() const;
};

// training aborted because the loss went non-finite
struct TrainDivergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StepResult {
    double bits_per_dim = 0.0;
    double lr = 0.0;
};

// One NLL step over a batch of HR crops: build the noisy pairs, average the
// per-crop bits/dim, backprop, one Adam update at lr_schedule(step). The
// first call performs the ActNorm data-dependent initialization.
StepResult train_step(flow::FlowModel& model, const std::vector<Image>& batch,
                      const TrainConfig& cfg, std::int64_t step, Rng& rng);

struct TrainLoopOptions {
    std::filesystem::path out_dir;
    std::string ckpt_prefix = "ckpt";
    std::string log_name = "train_log.tsv";
    std::filesystem::path resume_from;  // empty = fresh run
    bool echo = false;                  // mirror log lines to stdout
};

struct TrainResult {
    std::filesystem::path final_checkpoint;
    std::vector<double> bits_history;  // one entry per executed step
    std::int64_t steps_run = 0;
};

TrainResult train_loop(flow::FlowModel& model, const Dataset& data, const TrainConfig& cfg,
                       const TrainLoopOptions& opt);

}  // namespace fsncsr
