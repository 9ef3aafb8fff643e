#include "fsncsr/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "fsncsr/kernels.hpp"

namespace fsncsr::optim {

void OptimizerConfig::validate() const {
    if (!(base_lr > 0.0)) throw std::invalid_argument("optimizer.base_lr must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw std::invalid_argument("optimizer.beta1 must be in (0,1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw std::invalid_argument("optimizer.beta2 must be in (0,1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("optimizer.epsilon must be > 0");
    if (total_steps < 1) throw std::invalid_argument("optimizer.total_steps must be >= 1");
}

void ParamStore::add(const std::string& name, Tensor value) {
    if (has(name)) throw std::invalid_argument("duplicate parameter: " + name);
    Entry e;
    e.m = Tensor(value.shape());
    e.v = Tensor(value.shape());
    e.value = std::move(value);
    entries_.emplace(name, std::move(e));
}

Tensor& ParamStore::value(const std::string& name) { return entry(name).value; }
const Tensor& ParamStore::value(const std::string& name) const { return entry(name).value; }

ParamStore::Entry& ParamStore::entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, e] : entries_) out.push_back(name);
    return out;
}

std::int64_t ParamStore::total_elements() const {
    std::int64_t n = 0;
    for (const auto& [name, e] : entries_) n += e.value.numel();
    return n;
}

void ParamStore::set_step(std::int64_t s) {
    if (s < step_) throw std::invalid_argument("ParamStore step counter must not decrease");
    step_ = s;
}

double lr_schedule(std::int64_t step, const OptimizerConfig& cfg) {
    if (step < 0 || step > cfg.total_steps) {
        throw std::invalid_argument("lr_schedule: step outside [0, total_steps]");
    }
    static constexpr double kBoundaries[] = {0.50, 0.75, 0.90, 0.95};
    int halvings = 0;
    for (double frac : kBoundaries) {
        if (static_cast<double>(step) >= frac * static_cast<double>(cfg.total_steps)) ++halvings;
    }
    return std::ldexp(cfg.base_lr, -halvings);
}

void adam_step(ParamStore& params, const std::map<std::string, Tensor>& grads,
               const OptimizerConfig& cfg, std::int64_t step) {
    if (step < 1) throw std::invalid_argument("adam_step: step must be >= 1");
    const double lr = lr_schedule(step, cfg);
    const double corr1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double corr2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    const auto& k = kern::active();
    for (auto& [name, e] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) throw std::invalid_argument("adam_step: missing gradient for " + name);
        const Tensor& g = git->second;
        if (!g.same_shape(e.value)) {
            throw std::invalid_argument("adam_step: gradient shape " + g.shape_str() + " does not match " +
                                        name + " " + e.value.shape_str());
        }
        if (!g.all_finite()) throw std::runtime_error("adam_step: non-finite gradient for " + name);
        k.adam(e.value.data(), g.data(), e.m.data(), e.v.data(),
               static_cast<std::size_t>(g.numel()), lr, cfg.beta1, cfg.beta2, corr1, corr2,
               cfg.epsilon);
    }
    params.set_step(step);
}

}  // namespace fsncsr::optim
