#pragma once

#include <functional>

#include "fsncsr/tensor.hpp"

namespace fsncsr {

// Small dense helpers for the 1x1 channel-mixing layers and the Jacobian
// oracles. Matrices are square, row-major rank-2 tensors.

// log|det(m)| via LU with partial pivoting; throws if a pivot falls below
// the singularity threshold.
double log_abs_det(const Tensor& m, double singular_eps = 1e-12);

Tensor invert(const Tensor& m, double singular_eps = 1e-12);

Tensor identity_matrix(std::int64_t n);

// Numerically assembled Jacobian of a flattened map via central differences;
// rows index outputs, columns inputs. The shapes of f's output must not
// depend on the probe.
Tensor numeric_jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                        double eps = 1e-6);

}  // namespace fsncsr
