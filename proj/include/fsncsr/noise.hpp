#pragma once

#include "fsncsr/flow.hpp"
#include "fsncsr/image.hpp"
#include "fsncsr/rng.hpp"
#include "fsncsr/tensor.hpp"

// SoftFlow-style noise conditioning: per training example a sigma is drawn
// uniformly, the HR-shaped noise v ~ N(0, sigma^2 I) is added to the
// high-frequency target, and its bicubic downsampling w perturbs the LR
// image. The flow is conditioned on (y+, v, sigma).

namespace fsncsr {

struct NoiseSchedule {
    double sigma_min = 0.0;
    double sigma_max = 0.2;
    double inference_sigma = 0.1;

    void validate() const;
};

struct TrainingNoise {
    Tensor v;  // (H, W, C)
    Tensor w;  // (H/s, W/s, C), deterministically the resized v
    double sigma = 0.0;
};

TrainingNoise sample_training_noise(const NoiseSchedule& schedule, std::int64_t hr_h,
                                    std::int64_t hr_w, std::int64_t channels, int scale, Rng& rng);

struct TrainingPair {
    Tensor x_hf_plus;  // H_s(x) + v
    Tensor y_plus;     // (x)_{s down} + w
    flow::Condition cond;
};

TrainingPair make_training_pair(const Image& x, int scale, const NoiseSchedule& schedule, Rng& rng);

// Inference conditioning: fresh v ~ N(0, inference_sigma^2 I) at the HR
// shape; y itself is never perturbed.
flow::Condition make_inference_condition(const Image& y, int scale, const NoiseSchedule& schedule,
                                         Rng& rng);

}  // namespace fsncsr
