#include "fsncsr/flow.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

#include "fsncsr/kernels.hpp"
#include "fsncsr/linalg.hpp"
#include "fsncsr/resample.hpp"

namespace fsncsr::flow {

using nlohmann::json;

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2*pi)
constexpr double kLn2 = 0.6931471805599453094172321214581766;

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

// ---- FlowConfig ------------------------------------------------------------

void FlowConfig::validate() const {
    if (levels < 1) throw std::invalid_argument("arch.levels must be >= 1");
    if (steps_per_level < 1) throw std::invalid_argument("arch.steps_per_level must be >= 1");
    if (hidden < 1) throw std::invalid_argument("arch.hidden must be >= 1");
    if (encoder_width < 1) throw std::invalid_argument("arch.encoder_width must be >= 1");
    if (encoder_layers < 1) throw std::invalid_argument("arch.encoder_layers must be >= 1");
    if (img_channels != 1 && img_channels != 3) {
        throw std::invalid_argument("arch.img_channels must be 1 or 3");
    }
    if (scale < 2) throw std::invalid_argument("scale must be an integer >= 2");
    if (!(scale_clamp > 0.0)) throw std::invalid_argument("arch.scale_clamp must be > 0");
}

namespace {

json config_to_json(const FlowConfig& c) {
    return json{{"levels", c.levels},
                {"steps_per_level", c.steps_per_level},
                {"hidden", c.hidden},
                {"encoder_width", c.encoder_width},
                {"encoder_layers", c.encoder_layers},
                {"img_channels", c.img_channels},
                {"scale", c.scale},
                {"scale_clamp", c.scale_clamp},
                {"init_seed", c.init_seed}};
}

FlowConfig config_from_json(const json& j) {
    FlowConfig c;
    c.levels = j.at("levels").get<int>();
    c.steps_per_level = j.at("steps_per_level").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.encoder_width = j.at("encoder_width").get<int>();
    c.encoder_layers = j.at("encoder_layers").get<int>();
    c.img_channels = j.at("img_channels").get<int>();
    c.scale = j.at("scale").get<int>();
    c.scale_clamp = j.at("scale_clamp").get<double>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    return c;
}

}  // namespace

std::string FlowConfig::to_json_string() const { return config_to_json(*this).dump(); }

FlowConfig FlowConfig::from_json_string(const std::string& s) {
    return config_from_json(json::parse(s));
}

std::uint64_t FlowConfig::hash() const { return fnv1a64(to_json_string()); }

// ---- ConvStack -------------------------------------------------------------

ConvStack::ConvStack(std::string prefix, std::vector<std::int64_t> channels, bool zero_final)
    : prefix_(std::move(prefix)), channels_(std::move(channels)), zero_final_(zero_final) {
    if (channels_.size() < 2) throw std::invalid_argument("ConvStack needs at least one layer");
}

void ConvStack::register_params(optim::ParamStore& store, Rng& rng) const {
    const std::size_t layers = channels_.size() - 1;
    for (std::size_t i = 0; i < layers; ++i) {
        const std::int64_t cin = channels_[i];
        const std::int64_t cout = channels_[i + 1];
        Tensor w({3, 3, cin, cout});
        const bool zero = zero_final_ && i + 1 == layers;
        if (!zero) {
            const double std_dev = 1.0 / std::sqrt(9.0 * static_cast<double>(cin));
            for (std::int64_t k = 0; k < w.numel(); ++k) w[k] = rng.normal(0.0, std_dev);
        }
        store.add(prefix_ + ".c" + std::to_string(i) + ".w", std::move(w));
        store.add(prefix_ + ".c" + std::to_string(i) + ".b", Tensor({cout}));
    }
}

ad::Value ConvStack::apply(ad::Graph& g, const optim::ParamStore& store, ad::Value x) const {
    const std::size_t layers = channels_.size() - 1;
    ad::Value h = x;
    for (std::size_t i = 0; i < layers; ++i) {
        const std::string base = prefix_ + ".c" + std::to_string(i);
        ad::Value w = g.param(base + ".w", store);
        ad::Value b = g.param(base + ".b", store);
        h = ad::conv2d(h, w, b, ad::Padding::same);
        if (i + 1 < layers) h = ad::tanh_(h);
    }
    return h;
}

// ---- ActNorm ---------------------------------------------------------------

ActNorm::ActNorm(std::string prefix, std::int64_t channels)
    : prefix_(std::move(prefix)), channels_(channels) {}

void ActNorm::register_params(optim::ParamStore& store, Rng& /*rng*/) const {
    store.add(prefix_ + ".s", Tensor::full({channels_}, 1.0));
    store.add(prefix_ + ".b", Tensor({channels_}));
}

std::pair<ad::Value, ad::Value> ActNorm::forward(ad::Graph& g, const optim::ParamStore& store,
                                                 ad::Value x, ad::Value /*cond*/) const {
    const Tensor& s_t = store.value(prefix_ + ".s");
    for (std::int64_t c = 0; c < channels_; ++c) {
        if (s_t[c] == 0.0) throw std::runtime_error(prefix_ + ": zero scale channel");
    }
    ad::Value s = g.param(prefix_ + ".s", store);
    ad::Value b = g.param(prefix_ + ".b", store);
    ad::Value y = ad::mul_cvec(ad::add_cvec(x, b), s);
    const double hw = static_cast<double>(x.t().dim(0) * x.t().dim(1));
    ad::Value logdet = ad::mul_scalar(ad::sum(ad::log_abs(s)), hw);
    return {y, logdet};
}

ad::Value ActNorm::inverse(ad::Graph& g, const optim::ParamStore& store, ad::Value y,
                           ad::Value /*cond*/) const {
    require(!g.grad_enabled(), "layer inverse is a no-grad path");
    const Tensor& s_t = store.value(prefix_ + ".s");
    const Tensor& b_t = store.value(prefix_ + ".b");
    Tensor recip({channels_});
    Tensor negb({channels_});
    for (std::int64_t c = 0; c < channels_; ++c) {
        if (s_t[c] == 0.0) throw std::runtime_error(prefix_ + ": zero scale channel");
        recip[c] = 1.0 / s_t[c];
        negb[c] = -b_t[c];
    }
    return ad::add_cvec(ad::mul_cvec(y, g.constant(recip)), g.constant(negb));
}

void ActNorm::init_from_batch(optim::ParamStore& store, const std::vector<Tensor>& acts) const {
    if (acts.empty()) throw std::invalid_argument("actnorm init needs at least one activation");
    Tensor mean({channels_});
    Tensor var({channels_});
    std::int64_t count = 0;
    for (const Tensor& a : acts) {
        const std::int64_t pixels = a.dim(0) * a.dim(1);
        count += pixels;
        for (std::int64_t p = 0; p < pixels; ++p) {
            const double* row = a.data() + p * channels_;
            for (std::int64_t c = 0; c < channels_; ++c) mean[c] += row[c];
        }
    }
    for (std::int64_t c = 0; c < channels_; ++c) mean[c] /= static_cast<double>(count);
    for (const Tensor& a : acts) {
        const std::int64_t pixels = a.dim(0) * a.dim(1);
        for (std::int64_t p = 0; p < pixels; ++p) {
            const double* row = a.data() + p * channels_;
            for (std::int64_t c = 0; c < channels_; ++c) {
                const double d = row[c] - mean[c];
                var[c] += d * d;
            }
        }
    }
    Tensor& s = store.value(prefix_ + ".s");
    Tensor& b = store.value(prefix_ + ".b");
    for (std::int64_t c = 0; c < channels_; ++c) {
        const double sd = std::sqrt(var[c] / static_cast<double>(count));
        // constant channels cannot be normalized; keep the identity there
        s[c] = sd > 1e-8 ? 1.0 / sd : 1.0;
        b[c] = -mean[c];
    }
}

// ---- InvMix1x1 -------------------------------------------------------------

InvMix1x1::InvMix1x1(std::string prefix, std::int64_t channels)
    : prefix_(std::move(prefix)), channels_(channels) {}

void InvMix1x1::register_params(optim::ParamStore& store, Rng& /*rng*/) const {
    store.add(prefix_ + ".w", identity_matrix(channels_));
}

std::pair<ad::Value, ad::Value> InvMix1x1::forward(ad::Graph& g, const optim::ParamStore& store,
                                                   ad::Value x, ad::Value /*cond*/) const {
    ad::Value w = g.param(prefix_ + ".w", store);
    ad::Value y = ad::mix_channels(x, w);
    const double hw = static_cast<double>(x.t().dim(0) * x.t().dim(1));
    ad::Value logdet = ad::mul_scalar(ad::logabsdet(w), hw);
    return {y, logdet};
}

ad::Value InvMix1x1::inverse(ad::Graph& g, const optim::ParamStore& store, ad::Value y,
                             ad::Value /*cond*/) const {
    require(!g.grad_enabled(), "layer inverse is a no-grad path");
    Tensor winv = invert(store.value(prefix_ + ".w"));
    return ad::mix_channels(y, g.constant(std::move(winv)));
}

// ---- NoiseInjector -----------------------------------------------------------

NoiseInjector::NoiseInjector(std::string prefix, std::int64_t channels, const FlowConfig& cfg)
    : prefix_(std::move(prefix)),
      channels_(channels),
      clamp_(cfg.scale_clamp),
      net_(prefix_ + ".net", {cfg.cond_channels(), cfg.hidden, 2 * channels}, true) {}

void NoiseInjector::register_params(optim::ParamStore& store, Rng& rng) const {
    net_.register_params(store, rng);
}

std::pair<ad::Value, ad::Value> NoiseInjector::forward(ad::Graph& g,
                                                       const optim::ParamStore& store, ad::Value x,
                                                       ad::Value cond) const {
    ad::Value raw = net_.apply(g, store, cond);
    ad::Value logs = ad::clamp_(ad::slice_c(raw, 0, channels_), -clamp_, clamp_);
    ad::Value shift = ad::slice_c(raw, channels_, 2 * channels_);
    ad::Value y = ad::add(ad::mul(x, ad::exp_(logs)), shift);
    return {y, ad::sum(logs)};
}

ad::Value NoiseInjector::inverse(ad::Graph& g, const optim::ParamStore& store, ad::Value y,
                                 ad::Value cond) const {
    require(!g.grad_enabled(), "layer inverse is a no-grad path");
    ad::Value raw = net_.apply(g, store, cond);
    ad::Value logs = ad::clamp_(ad::slice_c(raw, 0, channels_), -clamp_, clamp_);
    ad::Value shift = ad::slice_c(raw, channels_, 2 * channels_);
    return ad::divide(ad::sub(y, shift), ad::exp_(logs));
}

// ---- AffineCoupling ----------------------------------------------------------

AffineCoupling::AffineCoupling(std::string prefix, std::int64_t channels, const FlowConfig& cfg)
    : prefix_(std::move(prefix)),
      channels_(channels),
      split_(channels / 2),
      clamp_(cfg.scale_clamp),
      net_(prefix_ + ".net", {channels / 2 + cfg.cond_channels(), cfg.hidden, 2 * (channels - channels / 2)},
           true) {
    if (channels < 2) throw std::invalid_argument(prefix_ + ": coupling needs >= 2 channels");
}

void AffineCoupling::register_params(optim::ParamStore& store, Rng& rng) const {
    net_.register_params(store, rng);
}

std::pair<ad::Value, ad::Value> AffineCoupling::forward(ad::Graph& g,
                                                        const optim::ParamStore& store, ad::Value x,
                                                        ad::Value cond) const {
    const std::int64_t cb = channels_ - split_;
    ad::Value xa = ad::slice_c(x, 0, split_);
    ad::Value xb = ad::slice_c(x, split_, channels_);
    ad::Value raw = net_.apply(g, store, ad::concat_c(xa, cond));
    ad::Value logs = ad::clamp_(ad::slice_c(raw, 0, cb), -clamp_, clamp_);
    ad::Value shift = ad::slice_c(raw, cb, 2 * cb);
    ad::Value yb = ad::add(ad::mul(xb, ad::exp_(logs)), shift);
    return {ad::concat_c(xa, yb), ad::sum(logs)};
}

ad::Value AffineCoupling::inverse(ad::Graph& g, const optim::ParamStore& store, ad::Value y,
                                  ad::Value cond) const {
    require(!g.grad_enabled(), "layer inverse is a no-grad path");
    const std::int64_t cb = channels_ - split_;
    ad::Value ya = ad::slice_c(y, 0, split_);
    ad::Value yb = ad::slice_c(y, split_, channels_);
    ad::Value raw = net_.apply(g, store, ad::concat_c(ya, cond));
    ad::Value logs = ad::clamp_(ad::slice_c(raw, 0, cb), -clamp_, clamp_);
    ad::Value shift = ad::slice_c(raw, cb, 2 * cb);
    ad::Value xb = ad::divide(ad::sub(yb, shift), ad::exp_(logs));
    return ad::concat_c(ya, xb);
}

// ---- FlowModel ----------------------------------------------------------------

FlowModel::FlowModel(FlowConfig cfg)
    : cfg_(std::move(cfg)),
      encoder_("enc", [&] {
          std::vector<std::int64_t> ch{cfg_.img_channels};
          for (int i = 0; i < cfg_.encoder_layers; ++i) ch.push_back(cfg_.encoder_width);
          return ch;
      }(), false) {
    cfg_.validate();
    Rng rng(cfg_.init_seed);
    encoder_.register_params(params_, rng);
    std::int64_t channels = cfg_.img_channels;
    for (int l = 0; l < cfg_.levels; ++l) {
        channels *= 4;
        std::vector<std::unique_ptr<Layer>> step_layers;
        for (int s = 0; s < cfg_.steps_per_level; ++s) {
            const std::string base = "l" + std::to_string(l) + ".s" + std::to_string(s);
            step_layers.push_back(std::make_unique<ActNorm>(base + ".an", channels));
            step_layers.push_back(std::make_unique<InvMix1x1>(base + ".mix", channels));
            step_layers.push_back(std::make_unique<NoiseInjector>(base + ".inj", channels, cfg_));
            step_layers.push_back(std::make_unique<AffineCoupling>(base + ".cpl", channels, cfg_));
        }
        for (const auto& layer : step_layers) layer->register_params(params_, rng);
        levels_.push_back(std::move(step_layers));
    }
}

std::vector<std::array<std::int64_t, 3>> FlowModel::level_shapes(std::int64_t hr_h,
                                                                 std::int64_t hr_w) const {
    std::vector<std::array<std::int64_t, 3>> shapes;
    std::int64_t h = hr_h, w = hr_w, c = cfg_.img_channels;
    for (int l = 0; l < cfg_.levels; ++l) {
        if (h % 2 != 0 || w % 2 != 0) {
            throw std::invalid_argument("input dims must be divisible by 2^levels");
        }
        h /= 2;
        w /= 2;
        c *= 4;
        shapes.push_back({h, w, c});
    }
    return shapes;
}

std::array<std::int64_t, 3> FlowModel::latent_shape(std::int64_t hr_h, std::int64_t hr_w) const {
    return level_shapes(hr_h, hr_w).back();
}

std::vector<ad::Value> FlowModel::build_cond(ad::Graph& g, const optim::ParamStore& store,
                                             const Condition& cond, std::int64_t hr_h,
                                             std::int64_t hr_w) const {
    require(cond.y_plus.rank() == 3 && cond.y_plus.dim(2) == cfg_.img_channels,
            "condition: y_plus must be (h,w,img_channels)");
    require(cond.noise_hr.rank() == 3 && cond.noise_hr.dim(0) == hr_h &&
                cond.noise_hr.dim(1) == hr_w && cond.noise_hr.dim(2) == cfg_.img_channels,
            "condition: noise map must have the HR shape");
    ad::Value enc = encoder_.apply(g, store, g.constant(cond.y_plus));
    std::vector<ad::Value> out;
    for (const auto& shape : level_shapes(hr_h, hr_w)) {
        const std::int64_t lh = shape[0], lw = shape[1];
        ad::Value enc_l = (enc.t().dim(0) == lh && enc.t().dim(1) == lw)
                              ? enc
                              : ad::resize_bicubic(enc, lh, lw);
        ad::Value v_l = g.constant(resize_bicubic(cond.noise_hr, lh, lw));
        ad::Value sig = g.constant(Tensor::full({lh, lw, 1}, cond.sigma));
        out.push_back(ad::concat_c(ad::concat_c(enc_l, v_l), sig));
    }
    return out;
}

std::pair<ad::Value, ad::Value> FlowModel::forward(ad::Graph& g, ad::Value x_hf_plus,
                                                   const Condition& cond) const {
    require(x_hf_plus.t().rank() == 3, "flow forward: rank-3 input required");
    const std::int64_t h = x_hf_plus.t().dim(0), w = x_hf_plus.t().dim(1);
    require(x_hf_plus.t().dim(2) == cfg_.img_channels, "flow forward: channel mismatch");
    std::vector<ad::Value> conds = build_cond(g, params_, cond, h, w);
    ad::Value act = x_hf_plus;
    ad::Value logdet = g.constant(Tensor::scalar(0.0));
    for (int l = 0; l < cfg_.levels; ++l) {
        act = ad::squeeze2(act);
        for (const auto& layer : levels_[static_cast<std::size_t>(l)]) {
            auto [y, ld] = layer->forward(g, params_, act, conds[static_cast<std::size_t>(l)]);
            act = y;
            logdet = ad::add(logdet, ld);
        }
    }
    if (debug_negate_logdet_) logdet = ad::neg(logdet);
    return {act, logdet};
}

Tensor FlowModel::forward_t(const Tensor& x_hf_plus, const Condition& cond, double* logdet) const {
    ad::Graph g(false);
    auto [z, ld] = forward(g, g.constant(x_hf_plus), cond);
    if (logdet) *logdet = ld.scalar();
    return z.t();
}

Tensor FlowModel::inverse(const Tensor& z, const Condition& cond) const {
    require(z.rank() == 3, "flow inverse: rank-3 latent required");
    const std::int64_t f = std::int64_t{1} << cfg_.levels;
    const std::int64_t hr_h = z.dim(0) * f;
    const std::int64_t hr_w = z.dim(1) * f;
    const auto expect = latent_shape(hr_h, hr_w);
    require(z.dim(2) == expect[2], "flow inverse: latent channel count mismatch");
    ad::Graph g(false);
    std::vector<ad::Value> conds = build_cond(g, params_, cond, hr_h, hr_w);
    ad::Value act = g.constant(z);
    for (int l = cfg_.levels - 1; l >= 0; --l) {
        const auto& layers = levels_[static_cast<std::size_t>(l)];
        for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
            act = (*it)->inverse(g, params_, act, conds[static_cast<std::size_t>(l)]);
        }
        act = ad::unsqueeze2(act);
    }
    return act.t();
}

ad::Value FlowModel::nll_bits_value(ad::Graph& g, const Tensor& x_hf_plus,
                                    const Condition& cond) const {
    auto [z, logdet] = forward(g, g.constant(x_hf_plus), cond);
    const double dims = static_cast<double>(x_hf_plus.numel());
    ad::Value quad = ad::mul_scalar(ad::sum(ad::mul(z, z)), 0.5);
    ad::Value nats = ad::sub(ad::add_scalar(quad, 0.5 * dims * kLog2Pi), logdet);
    return ad::mul_scalar(nats, 1.0 / (dims * kLn2));
}

NllResult FlowModel::nll(const Tensor& x_hf_plus, const Condition& cond) const {
    ad::Graph g(false);
    const double bits = nll_bits_value(g, x_hf_plus, cond).scalar();
    NllResult r;
    r.bits_per_dim = bits;
    r.nats = bits * static_cast<double>(x_hf_plus.numel()) * kLn2;
    if (!std::isfinite(r.nats)) {
        const std::string layer = diagnose_non_finite(x_hf_plus, cond);
        throw std::runtime_error("nll is non-finite" +
                                 (layer.empty() ? std::string() : " (first bad layer: " + layer + ")"));
    }
    return r;
}

void FlowModel::init_actnorm_from_batch(const std::vector<Tensor>& xs,
                                        const std::vector<Condition>& conds) {
    require(!xs.empty() && xs.size() == conds.size(), "actnorm init: batch and condition sizes differ");
    ad::Graph g(false);
    const std::int64_t h = xs[0].dim(0), w = xs[0].dim(1);
    std::vector<std::vector<ad::Value>> cond_maps;
    std::vector<ad::Value> acts;
    for (std::size_t e = 0; e < xs.size(); ++e) {
        require(xs[e].dim(0) == h && xs[e].dim(1) == w, "actnorm init: mixed batch shapes");
        cond_maps.push_back(build_cond(g, params_, conds[e], h, w));
        acts.push_back(g.constant(xs[e]));
    }
    for (int l = 0; l < cfg_.levels; ++l) {
        for (auto& act : acts) act = ad::squeeze2(act);
        for (const auto& layer : levels_[static_cast<std::size_t>(l)]) {
            if (const auto* an = dynamic_cast<const ActNorm*>(layer.get())) {
                std::vector<Tensor> current;
                current.reserve(acts.size());
                for (const auto& act : acts) current.push_back(act.t());
                an->init_from_batch(params_, current);
            }
            for (std::size_t e = 0; e < acts.size(); ++e) {
                acts[e] = layer->forward(g, params_, acts[e],
                                         cond_maps[e][static_cast<std::size_t>(l)])
                              .first;
            }
        }
    }
    actnorm_initialized_ = true;
}

std::string FlowModel::diagnose_non_finite(const Tensor& x_hf_plus, const Condition& cond) const {
    ad::Graph g(false);
    std::vector<ad::Value> conds = build_cond(g, params_, cond, x_hf_plus.dim(0), x_hf_plus.dim(1));
    for (const auto& c : conds) {
        if (!c.t().all_finite()) return "encoder";
    }
    ad::Value act = g.constant(x_hf_plus);
    if (!act.t().all_finite()) return "input";
    for (int l = 0; l < cfg_.levels; ++l) {
        act = ad::squeeze2(act);
        for (const auto& layer : levels_[static_cast<std::size_t>(l)]) {
            auto [y, ld] = layer->forward(g, params_, act, conds[static_cast<std::size_t>(l)]);
            act = y;
            if (!act.t().all_finite() || !std::isfinite(ld.scalar())) return layer->name();
        }
    }
    return "";
}

// ---- checkpoint I/O -----------------------------------------------------------

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put_u32(std::FILE* f, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    if (std::fwrite(b, 1, 4, f) != 4) throw std::runtime_error("checkpoint: short write");
}

void put_u64(std::FILE* f, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    if (std::fwrite(b, 1, 8, f) != 8) throw std::runtime_error("checkpoint: short write");
}

std::uint32_t get_u32(std::FILE* f) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) throw std::runtime_error("checkpoint: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::FILE* f) {
    unsigned char b[8];
    if (std::fread(b, 1, 8, f) != 8) throw std::runtime_error("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void put_f64(std::FILE* f, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(f, bits);
}

double get_f64(std::FILE* f) {
    const std::uint64_t bits = get_u64(f);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void put_tensor(std::FILE* f, const std::string& name, const Tensor& t) {
    put_u32(f, static_cast<std::uint32_t>(name.size()));
    if (std::fwrite(name.data(), 1, name.size(), f) != name.size()) {
        throw std::runtime_error("checkpoint: short write");
    }
    put_u32(f, static_cast<std::uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) put_u32(f, static_cast<std::uint32_t>(t.dim(i)));
    for (std::int64_t i = 0; i < t.numel(); ++i) put_f64(f, t[i]);
}

std::pair<std::string, Tensor> get_tensor(std::FILE* f) {
    const std::uint32_t name_len = get_u32(f);
    std::string name(name_len, '\0');
    if (std::fread(name.data(), 1, name_len, f) != name_len) {
        throw std::runtime_error("checkpoint: truncated file");
    }
    const std::uint32_t rank = get_u32(f);
    std::vector<std::int64_t> shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<std::int64_t>(get_u32(f)));
    Tensor t(shape);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = get_f64(f);
    return {std::move(name), std::move(t)};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const FlowModel& model, std::int64_t step,
                     const std::string& extra_state_json) {
    json meta;
    meta["config"] = json::parse(model.config().to_json_string());
    meta["config_hash"] = model.config().hash();
    meta["actnorm_initialized"] = model.actnorm_initialized();
    meta["step"] = step;
    meta["extra"] = json::parse(extra_state_json);
    const std::string meta_str = meta.dump();

    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open " + path.string() + " for writing");
    if (std::fwrite("FSNC", 1, 4, fp.get()) != 4) throw std::runtime_error("checkpoint: short write");
    put_u32(fp.get(), kCheckpointVersion);
    put_u64(fp.get(), meta_str.size());
    if (std::fwrite(meta_str.data(), 1, meta_str.size(), fp.get()) != meta_str.size()) {
        throw std::runtime_error("checkpoint: short write");
    }
    const auto& store = model.params();
    const auto names = store.names();
    put_u32(fp.get(), static_cast<std::uint32_t>(3 * names.size()));
    for (const auto& name : names) {
        const auto& e = store.entry(name);
        put_tensor(fp.get(), "p:" + name, e.value);
        put_tensor(fp.get(), "m:" + name, e.m);
        put_tensor(fp.get(), "v:" + name, e.v);
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open checkpoint " + path.string());
    char magic[4];
    if (std::fread(magic, 1, 4, fp.get()) != 4 || std::memcmp(magic, "FSNC", 4) != 0) {
        throw std::runtime_error("checkpoint: bad magic in " + path.string());
    }
    const std::uint32_t version = get_u32(fp.get());
    if (version != kCheckpointVersion) {
        throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
    }
    const std::uint64_t meta_len = get_u64(fp.get());
    std::string meta_str(meta_len, '\0');
    if (std::fread(meta_str.data(), 1, meta_len, fp.get()) != meta_len) {
        throw std::runtime_error("checkpoint: truncated file");
    }
    const json meta = json::parse(meta_str);

    Checkpoint ckpt;
    ckpt.config = FlowConfig::from_json_string(meta.at("config").dump());
    if (meta.at("config_hash").get<std::uint64_t>() != ckpt.config.hash()) {
        throw std::runtime_error("checkpoint: config hash mismatch");
    }
    ckpt.actnorm_initialized = meta.at("actnorm_initialized").get<bool>();
    ckpt.step = meta.at("step").get<std::int64_t>();
    ckpt.extra_state_json = meta.at("extra").dump();

    const std::uint32_t count = get_u32(fp.get());
    std::map<std::string, Tensor> values, ms, vs;
    for (std::uint32_t i = 0; i < count; ++i) {
        auto [name, t] = get_tensor(fp.get());
        if (name.size() < 3 || name[1] != ':') throw std::runtime_error("checkpoint: bad tensor name");
        const std::string key = name.substr(2);
        switch (name[0]) {
            case 'p': values.emplace(key, std::move(t)); break;
            case 'm': ms.emplace(key, std::move(t)); break;
            case 'v': vs.emplace(key, std::move(t)); break;
            default: throw std::runtime_error("checkpoint: bad tensor name prefix");
        }
    }
    for (auto& [name, t] : values) {
        ckpt.params.add(name, std::move(t));
        auto mit = ms.find(name);
        auto vit = vs.find(name);
        if (mit == ms.end() || vit == vs.end()) {
            throw std::runtime_error("checkpoint: missing moments for " + name);
        }
        ckpt.params.entry(name).m = std::move(mit->second);
        ckpt.params.entry(name).v = std::move(vit->second);
    }
    ckpt.params.set_step(ckpt.step);
    return ckpt;
}

void restore_params(FlowModel& model, const Checkpoint& ckpt) {
    auto& store = model.params();
    const auto expected = store.names();
    const auto loaded = ckpt.params.names();
    if (expected != loaded) {
        throw std::runtime_error("checkpoint: parameter set does not match the model architecture");
    }
    for (const auto& name : expected) {
        const auto& src = ckpt.params.entry(name);
        auto& dst = store.entry(name);
        if (!src.value.same_shape(dst.value)) {
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
        }
        dst.value = src.value;
        dst.m = src.m;
        dst.v = src.v;
    }
    store.set_step(ckpt.step);
    model.set_actnorm_initialized(ckpt.actnorm_initialized);
}

FlowModel model_from_checkpoint(const Checkpoint& ckpt) {
    FlowModel model(ckpt.config);
    restore_params(model, ckpt);
    return model;
}

}  // namespace fsncsr::flow
