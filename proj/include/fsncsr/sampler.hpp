#pragma once

#include <cstdint>
#include <vector>

#include "fsncsr/flow.hpp"
#include "fsncsr/image.hpp"
#include "fsncsr/noise.hpp"

namespace fsncsr {

struct SamplerConfig {
    double temperature = 0.9;  // 0.85 for the x8 profile
    int num_samples = 10;
    std::uint64_t seed = 0;
    double inference_sigma = 0.1;

    void validate() const;
};

// One super-resolved draw: z ~ N(0, tau^2 I), fresh inference condition,
// inverse flow, low-frequency add-back, final clamp to [0,1]. The RNG stream
// is derived from (seed, image_id, sample_index), so each sample is
// reproducible independently of evaluation order.
Image sample_sr(const flow::FlowModel& model, const Image& y, const SamplerConfig& cfg,
                std::uint64_t image_id, int sample_index);

std::vector<Image> sample_set(const flow::FlowModel& model, const Image& y,
                              const SamplerConfig& cfg, std::uint64_t image_id);

}  // namespace fsncsr
