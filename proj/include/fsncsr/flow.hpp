#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fsncsr/autodiff.hpp"
#include "fsncsr/optim.hpp"
#include "fsncsr/rng.hpp"
#include "fsncsr/tensor.hpp"

// The invertible conditional model: per level a squeeze followed by K flow
// steps of (ActNorm, invertible 1x1 mixing, noise-conditioned injector,
// conditional affine coupling), conditioned on encoder features of the noisy
// LR image, the resized noise map and its sigma. All latent dimensions are
// kept to the end (no early factor-out), so the full Jacobian stays small
// enough for brute-force verification at test sizes.

namespace fsncsr::flow {

struct FlowConfig {
    int levels = 2;
    int steps_per_level = 4;
    int hidden = 32;
    int encoder_width = 32;
    int encoder_layers = 3;
    int img_channels = 3;
    int scale = 4;
    double scale_clamp = 8.0;  // pre-activation clamp bound for affine scales
    std::uint64_t init_seed = 1;

    void validate() const;
    std::string to_json_string() const;
    static FlowConfig from_json_string(const std::string& s);
    // hash over the architecture-relevant fields; checkpoints refuse to load
    // into a model with a different hash
    std::uint64_t hash() const;

    int cond_channels() const { return encoder_width + img_channels + 1; }
};

// Raw conditioning ingredients for one (x_hf, y) pair: the (possibly noisy)
// LR image, the HR-shaped noise map v and its sigma.
struct Condition {
    Tensor y_plus;    // (h, w, C)
    Tensor noise_hr;  // (H, W, C)
    double sigma = 0.0;
};

// conditioner network: same-padded 3x3 convolution stack with tanh between
// layers; optionally zero-initialized final layer so the owning flow step
// starts as the identity
class ConvStack {
public:
    ConvStack() = default;
    ConvStack(std::string prefix, std::vector<std::int64_t> channels, bool zero_final);

    void register_params(optim::ParamStore& store, Rng& rng) const;
    ad::Value apply(ad::Graph& g, const optim::ParamStore& store, ad::Value x) const;

private:
    std::string prefix_;
    std::vector<std::int64_t> channels_;  // [in, hidden..., out]
    bool zero_final_ = true;
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual std::string name() const = 0;
    virtual void register_params(optim::ParamStore& store, Rng& rng) const = 0;
    // returns (y, logdet contribution)
    virtual std::pair<ad::Value, ad::Value> forward(ad::Graph& g, const optim::ParamStore& store,
                                                    ad::Value x, ad::Value cond) const = 0;
    virtual ad::Value inverse(ad::Graph& g, const optim::ParamStore& store, ad::Value y,
                              ad::Value cond) const = 0;
};

class ActNorm final : public Layer {
public:
    ActNorm(std::string prefix, std::int64_t channels);
    std::string name() const override { return prefix_; }
    void register_params(optim::ParamStore& store, Rng& rng) const override;
    std::pair<ad::Value, ad::Value> forward(ad::Graph& g, const optim::ParamStore& store,
                                            ad::Value x, ad::Value cond) const override;
    ad::Value inverse(ad::Graph& g, const optim::ParamStore& store, ad::Value y,
                      ad::Value cond) const override;
    // data-dependent init: per-channel zero mean / unit variance over the batch
    void init_from_batch(optim::ParamStore& store, const std::vector<Tensor>& acts) const;

private:
    std::string prefix_;
    std::int64_t channels_;
};

class InvMix1x1 final : public Layer {
public:
    InvMix1x1(std::string prefix, std::int64_t channels);
    std::string name() const override { return prefix_; }
    void register_params(optim::ParamStore& store, Rng& rng) const override;
    std::pair<ad::Value, ad::Value> forward(ad::Graph& g, const optim::ParamStore& store,
                                            ad::Value x, ad::Value cond) const override;
    ad::Value inverse(ad::Graph& g, const optim::ParamStore& store, ad::Value y,
                      ad::Value cond) const override;

private:
    std::string prefix_;
    std::int64_t channels_;
};

// condition-only elementwise affine; invertible for any input because scale
// and shift never depend on x
class NoiseInjector final : public Layer {
public:
    NoiseInjector(std::string prefix, std::int64_t channels, const FlowConfig& cfg);
    std::string name() const override { return prefix_; }
    void register_params(optim::ParamStore& store, Rng& rng) const override;
    std::pair<ad::Value, ad::Value> forward(ad::Graph& g, const optim::ParamStore& store,
                                            ad::Value x, ad::Value cond) const override;
    ad::Value inverse(ad::Graph& g, const optim::ParamStore& store, ad::Value y,
                      ad::Value cond) const override;

private:
    std::string prefix_;
    std::int64_t channels_;
    double clamp_;
    ConvStack net_;
};

class AffineCoupling final : public Layer {
public:
    AffineCoupling(std::string prefix, std::int64_t channels, const FlowConfig& cfg);
    std::string name() const override { return prefix_; }
    void register_params(optim::ParamStore& store, Rng& rng) const override;
    std::pair<ad::Value, ad::Value> forward(ad::Graph& g, const optim::ParamStore& store,
                                            ad::Value x, ad::Value cond) const override;
    ad::Value inverse(ad::Graph& g, const optim::ParamStore& store, ad::Value y,
                      ad::Value cond) const override;

private:
    std::string prefix_;
    std::int64_t channels_;
    std::int64_t split_;  // size of the untouched half
    double clamp_;
    ConvStack net_;
};

struct NllResult {
    double nats = 0.0;
    double bits_per_dim = 0.0;
};

class FlowModel {
public:
    explicit FlowModel(FlowConfig cfg);

    const FlowConfig& config() const { return cfg_; }
    optim::ParamStore& params() { return params_; }
    const optim::ParamStore& params() const { return params_; }

    bool actnorm_initialized() const { return actnorm_initialized_; }
    void set_actnorm_initialized(bool v) { actnorm_initialized_ = v; }

    // shapes of the per-level activations (after each squeeze) for an HR
    // input of the given size, and the final latent shape
    std::vector<std::array<std::int64_t, 3>> level_shapes(std::int64_t hr_h, std::int64_t hr_w) const;
    std::array<std::int64_t, 3> latent_shape(std::int64_t hr_h, std::int64_t hr_w) const;

    // per-level conditioning feature maps (encoder output + noise map + sigma)
    std::vector<ad::Value> build_cond(ad::Graph& g, const optim::ParamStore& store,
                                      const Condition& cond, std::int64_t hr_h,
                                      std::int64_t hr_w) const;

    // differentiable forward pass: (z, accumulated logdet)
    std::pair<ad::Value, ad::Value> forward(ad::Graph& g, ad::Value x_hf_plus,
                                            const Condition& cond) const;

    // plain-tensor conveniences (no-grad graphs)
    Tensor forward_t(const Tensor& x_hf_plus, const Condition& cond, double* logdet = nullptr) const;
    Tensor inverse(const Tensor& z, const Condition& cond) const;

    // scalar bits/dim of one example as a graph Value (the training loss term)
    ad::Value nll_bits_value(ad::Graph& g, const Tensor& x_hf_plus, const Condition& cond) const;
    NllResult nll(const Tensor& x_hf_plus, const Condition& cond) const;

    // ActNorm data-dependent initialization from the first training batch.
    void init_actnorm_from_batch(const std::vector<Tensor>& xs, const std::vector<Condition>& conds);

    // name of the first layer producing a non-finite output, or empty
    std::string diagnose_non_finite(const Tensor& x_hf_plus, const Condition& cond) const;

    // test hook: negate the accumulated log-determinant (deliberately wrong)
    void set_debug_negate_logdet(bool v) { debug_negate_logdet_ = v; }

    const std::vector<std::vector<std::unique_ptr<Layer>>>& levels() const { return levels_; }

private:
    FlowConfig cfg_;
    optim::ParamStore params_;
    ConvStack encoder_;
    std::vector<std::vector<std::unique_ptr<Layer>>> levels_;  // [level][layer]
    bool actnorm_initialized_ = false;
    bool debug_negate_logdet_ = false;
};

// ---- checkpoint format -------------------------------------------------------
// magic "FSNC", u32 format version, length-prefixed JSON block carrying the
// config echo and run state, then named tensors (parameter values and Adam
// moments) as little-endian 64-bit reals.

struct Checkpoint {
    FlowConfig config;
    optim::ParamStore params;
    bool actnorm_initialized = false;
    std::int64_t step = 0;
    std::string extra_state_json;  // opaque to the format; "{}" when unused
};

void save_checkpoint(const std::filesystem::path& path, const FlowModel& model, std::int64_t step,
                     const std::string& extra_state_json = "{}");
Checkpoint load_checkpoint(const std::filesystem::path& path);

// copies checkpoint parameters, moments and state into an existing model of
// the same architecture
void restore_params(FlowModel& model, const Checkpoint& ckpt);

// restores params and state into a model built from the checkpoint config
FlowModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace fsncsr::flow
