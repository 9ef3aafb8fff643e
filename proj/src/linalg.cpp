#include "fsncsr/linalg.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace fsncsr {

namespace {

void check_square(const Tensor& m) {
    if (m.rank() != 2 || m.dim(0) != m.dim(1)) {
        throw std::invalid_argument("expected a square matrix, got " + m.shape_str());
    }
}

// In-place LU with partial pivoting on a copy. Returns false on a singular
// pivot. `a` is n*n row-major, `piv` records row swaps.
bool lu_decompose(std::vector<double>& a, std::int64_t n, std::vector<std::int64_t>& piv,
                  int& swap_count, double eps) {
    piv.resize(static_cast<std::size_t>(n));
    swap_count = 0;
    for (std::int64_t i = 0; i < n; ++i) piv[static_cast<std::size_t>(i)] = i;
    for (std::int64_t k = 0; k < n; ++k) {
        std::int64_t best = k;
        double best_abs = std::fabs(a[static_cast<std::size_t>(k * n + k)]);
        for (std::int64_t i = k + 1; i < n; ++i) {
            const double v = std::fabs(a[static_cast<std::size_t>(i * n + k)]);
            if (v > best_abs) {
                best_abs = v;
                best = i;
            }
        }
        if (best_abs < eps) return false;
        if (best != k) {
            for (std::int64_t j = 0; j < n; ++j) {
                std::swap(a[static_cast<std::size_t>(k * n + j)], a[static_cast<std::size_t>(best * n + j)]);
            }
            std::swap(piv[static_cast<std::size_t>(k)], piv[static_cast<std::size_t>(best)]);
            ++swap_count;
        }
        const double pivot = a[static_cast<std::size_t>(k * n + k)];
        for (std::int64_t i = k + 1; i < n; ++i) {
            const double f = a[static_cast<std::size_t>(i * n + k)] / pivot;
            a[static_cast<std::size_t>(i * n + k)] = f;
            for (std::int64_t j = k + 1; j < n; ++j) {
                a[static_cast<std::size_t>(i * n + j)] -= f * a[static_cast<std::size_t>(k * n + j)];
            }
        }
    }
    return true;
}

}  // namespace

double log_abs_det(const Tensor& m, double singular_eps) {
    check_square(m);
    const std::int64_t n = m.dim(0);
    std::vector<double> a = m.vec();
    std::vector<std::int64_t> piv;
    int swaps = 0;
    if (!lu_decompose(a, n, piv, swaps, singular_eps)) {
        throw std::runtime_error("log_abs_det: matrix is singular");
    }
    double acc = 0.0;
    for (std::int64_t k = 0; k < n; ++k) {
        acc += std::log(std::fabs(a[static_cast<std::size_t>(k * n + k)]));
    }
    return acc;
}

Tensor invert(const Tensor& m, double singular_eps) {
    check_square(m);
    const std::int64_t n = m.dim(0);
    std::vector<double> a = m.vec();
    std::vector<std::int64_t> piv;
    int swaps = 0;
    if (!lu_decompose(a, n, piv, swaps, singular_eps)) {
        throw std::runtime_error("invert: matrix is singular");
    }
    Tensor inv({n, n});
    std::vector<double> col(static_cast<std::size_t>(n));
    for (std::int64_t c = 0; c < n; ++c) {
        // solve A x = e_c using the P, L, U factors
        for (std::int64_t i = 0; i < n; ++i) {
            col[static_cast<std::size_t>(i)] = piv[static_cast<std::size_t>(i)] == c ? 1.0 : 0.0;
        }
        for (std::int64_t i = 1; i < n; ++i) {
            double s = col[static_cast<std::size_t>(i)];
            for (std::int64_t j = 0; j < i; ++j) {
                s -= a[static_cast<std::size_t>(i * n + j)] * col[static_cast<std::size_t>(j)];
            }
            col[static_cast<std::size_t>(i)] = s;
        }
        for (std::int64_t i = n - 1; i >= 0; --i) {
            double s = col[static_cast<std::size_t>(i)];
            for (std::int64_t j = i + 1; j < n; ++j) {
                s -= a[static_cast<std::size_t>(i * n + j)] * col[static_cast<std::size_t>(j)];
            }
            col[static_cast<std::size_t>(i)] = s / a[static_cast<std::size_t>(i * n + i)];
        }
        for (std::int64_t i = 0; i < n; ++i) inv[i * n + c] = col[static_cast<std::size_t>(i)];
    }
    return inv;
}

Tensor identity_matrix(std::int64_t n) {
    Tensor m({n, n});
    for (std::int64_t i = 0; i < n; ++i) m[i * n + i] = 1.0;
    return m;
}

Tensor numeric_jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                        double eps) {
    const std::int64_t in_dim = x.numel();
    Tensor probe = x;
    Tensor j;
    std::int64_t out_dim = 0;
    for (std::int64_t c = 0; c < in_dim; ++c) {
        const double saved = probe[c];
        probe[c] = saved + eps;
        const Tensor fp = f(probe);
        probe[c] = saved - eps;
        const Tensor fm = f(probe);
        probe[c] = saved;
        if (c == 0) {
            out_dim = fp.numel();
            j = Tensor({out_dim, in_dim});
        }
        if (fp.numel() != out_dim || fm.numel() != out_dim) {
            throw std::runtime_error("numeric_jacobian: output dimension changed between probes");
        }
        for (std::int64_t r = 0; r < out_dim; ++r) {
            j[r * in_dim + c] = (fp[r] - fm[r]) / (2.0 * eps);
        }
    }
    return j;
}

}  // namespace fsncsr
