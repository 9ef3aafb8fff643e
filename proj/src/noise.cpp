#include "fsncsr/noise.hpp"

#include <cmath>
#include <stdexcept>

#include "fsncsr/kernels.hpp"
#include "fsncsr/resample.hpp"

namespace fsncsr {

void NoiseSchedule::validate() const {
    if (!(sigma_min >= 0.0) || !std::isfinite(sigma_min)) {
        throw std::invalid_argument("noise.sigma_min must be finite and >= 0");
    }
    if (!(sigma_max >= sigma_min) || !std::isfinite(sigma_max)) {
        throw std::invalid_argument("noise.sigma_max must be finite and >= sigma_min");
    }
    if (!(inference_sigma >= 0.0) || !std::isfinite(inference_sigma)) {
        throw std::invalid_argument("noise.inference_sigma must be finite and >= 0");
    }
}

TrainingNoise sample_training_noise(const NoiseSchedule& schedule, std::int64_t hr_h,
                                    std::int64_t hr_w, std::int64_t channels, int scale, Rng& rng) {
    if (hr_h % scale != 0 || hr_w % scale != 0) {
        throw std::invalid_argument("sample_training_noise: HR shape not divisible by scale");
    }
    TrainingNoise out;
    out.sigma = rng.uniform(schedule.sigma_min, schedule.sigma_max);
    out.v = Tensor({hr_h, hr_w, channels});
    if (out.sigma > 0.0) {
        for (std::int64_t i = 0; i < out.v.numel(); ++i) out.v[i] = rng.normal(0.0, out.sigma);
    }
    out.w = resize_bicubic(out.v, hr_h / scale, hr_w / scale);
    return out;
}

TrainingPair make_training_pair(const Image& x, int scale, const NoiseSchedule& schedule, Rng& rng) {
    if (x.domain != PixelDomain::hr) {
        throw std::invalid_argument("make_training_pair: HR-domain image required");
    }
    const Tensor x_hf = highpass(x, scale).to_tensor();
    const Tensor y = downsample(x, scale).to_tensor();
    TrainingNoise noise =
        sample_training_noise(schedule, x.height, x.width, x.channels, scale, rng);

    TrainingPair pair;
    pair.x_hf_plus = Tensor(x_hf.shape());
    kern::active().add(x_hf.data(), noise.v.data(), pair.x_hf_plus.data(),
                       static_cast<std::size_t>(x_hf.numel()));
    pair.y_plus = Tensor(y.shape());
    kern::active().add(y.data(), noise.w.data(), pair.y_plus.data(),
                       static_cast<std::size_t>(y.numel()));
    pair.cond.y_plus = pair.y_plus;
    pair.cond.noise_hr = std::move(noise.v);
    pair.cond.sigma = noise.sigma;
    return pair;
}

flow::Condition make_inference_condition(const Image& y, int scale, const NoiseSchedule& schedule,
                                         Rng& rng) {
    if (y.domain != PixelDomain::hr) {
        throw std::invalid_argument("make_inference_condition: LR image must be in the HR pixel domain");
    }
    flow::Condition cond;
    cond.y_plus = y.to_tensor();
    cond.sigma = schedule.inference_sigma;
    cond.noise_hr = Tensor({y.height * scale, y.width * scale, y.channels});
    if (cond.sigma > 0.0) {
        for (std::int64_t i = 0; i < cond.noise_hr.numel(); ++i) {
            cond.noise_hr[i] = rng.normal(0.0, cond.sigma);
        }
    }
    return cond;
}

}  // namespace fsncsr
