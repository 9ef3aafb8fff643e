#include "fsncsr/sampler.hpp"

#include <stdexcept>

#include "fsncsr/kernels.hpp"
#include "fsncsr/resample.hpp"

namespace fsncsr {

void SamplerConfig::validate() const {
    if (!(temperature >= 0.0)) throw std::invalid_argument("sampler.temperature must be >= 0");
    if (num_samples < 1) throw std::invalid_argument("sampler.num_samples must be >= 1");
    if (!(inference_sigma >= 0.0)) throw std::invalid_argument("sampler.inference_sigma must be >= 0");
}

Image sample_sr(const flow::FlowModel& model, const Image& y, const SamplerConfig& cfg,
                std::uint64_t image_id, int sample_index) {
    const int s = model.config().scale;
    const std::int64_t hr_h = y.height * s;
    const std::int64_t hr_w = y.width * s;
    const std::int64_t f = std::int64_t{1} << model.config().levels;
    if (hr_h % f != 0 || hr_w % f != 0) {
        throw std::invalid_argument("sample_sr: HR dims not divisible by 2^levels");
    }
    if (y.channels != model.config().img_channels) {
        throw std::invalid_argument("sample_sr: LR channel count does not match the model");
    }

    Rng rng = Rng::stream(cfg.seed, {image_id, static_cast<std::uint64_t>(sample_index)});

    NoiseSchedule sched;
    sched.inference_sigma = cfg.inference_sigma;
    const flow::Condition cond = make_inference_condition(y, s, sched, rng);

    const auto zshape = model.latent_shape(hr_h, hr_w);
    Tensor z({zshape[0], zshape[1], zshape[2]});
    if (cfg.temperature > 0.0) {
        for (std::int64_t i = 0; i < z.numel(); ++i) z[i] = rng.normal(0.0, cfg.temperature);
    }

    const Tensor x_hf = model.inverse(z, cond);
    const Image up = upsample(y, s);
    Image out(hr_h, hr_w, y.channels, PixelDomain::hr);
    kern::active().add(x_hf.data(), up.pixels.data(), out.pixels.data(),
                       static_cast<std::size_t>(out.numel()));
    out.clamp01();
    return out;
}

std::vector<Image> sample_set(const flow::FlowModel& model, const Image& y,
                              const SamplerConfig& cfg, std::uint64_t image_id) {
    cfg.validate();
    std::vector<Image> out;
    out.reserve(static_cast<std::size_t>(cfg.num_samples));
    for (int i = 0; i < cfg.num_samples; ++i) {
        out.push_back(sample_sr(model, y, cfg, image_id, i));
    }
    return out;
}

}  // namespace fsncsr
