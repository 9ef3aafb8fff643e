#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fsncsr/tensor.hpp"

namespace fsncsr::optim {

struct OptimizerConfig {
    double base_lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double epsilon = 1e-8;
    std::int64_t total_steps = 1;

    void validate() const;
};

// Named parameter tensors plus their Adam moments. Iteration order is the
// sorted name order, which fixes the reduction order everywhere the store is
// walked.
class ParamStore {
public:
    struct Entry {
        Tensor value;
        Tensor m;
        Tensor v;
    };

    void add(const std::string& name, Tensor value);
    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;
    Entry& entry(const std::string& name);
    const Entry& entry(const std::string& name) const;

    std::vector<std::string> names() const;
    std::size_t size() const { return entries_.size(); }
    std::int64_t total_elements() const;

    std::int64_t step() const { return step_; }
    void set_step(std::int64_t s);

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    std::map<std::string, Entry> entries_;
    std::int64_t step_ = 0;
};

// Learning rate after the paper's halving schedule: base_lr * 2^-k with k the
// number of the {50%, 75%, 90%, 95%} boundaries already reached (inclusive).
double lr_schedule(std::int64_t step, const OptimizerConfig& cfg);

// One bias-corrected Adam update over every parameter, at lr_schedule(step).
// Moments live in the store; the store's step counter advances to `step`.
void adam_step(ParamStore& params, const std::map<std::string, Tensor>& grads,
               const OptimizerConfig& cfg, std::int64_t step);

}  // namespace fsncsr::optim
