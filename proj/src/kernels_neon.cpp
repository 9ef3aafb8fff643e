// AArch64 NEON kernel table (float64x2). NEON is baseline on aarch64, so no
// runtime feature probe is needed beyond the compile guard.

#include "fsncsr/kernels.hpp"

#include <arm_neon.h>

#include <cmath>

namespace fsncsr::kern {

namespace {

constexpr std::size_t kLanes = 2;

void n_add(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void n_sub(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void n_mul(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void n_div(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        vst1q_f64(out + i, vdivq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] / b[i];
}

void n_scale(double s, const double* x, double* out, std::size_t n) {
    const float64x2_t vs = vdupq_n_f64(s);
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        vst1q_f64(out + i, vmulq_f64(vs, vld1q_f64(x + i)));
    }
    for (; i < n; ++i) out[i] = s * x[i];
}

void n_axpy(double s, const double* x, double* y, std::size_t n) {
    const float64x2_t vs = vdupq_n_f64(s);
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), vs, vld1q_f64(x + i)));
    }
    for (; i < n; ++i) y[i] = std::fma(s, x[i], y[i]);
}

double n_dot(const double* a, const double* b, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    }
    double acc = vaddvq_f64(acc0);
    for (; i < n; ++i) acc = std::fma(a[i], b[i], acc);
    return acc;
}

double n_sum(const double* a, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        acc0 = vaddq_f64(acc0, vld1q_f64(a + i));
    }
    double acc = vaddvq_f64(acc0);
    for (; i < n; ++i) acc += a[i];
    return acc;
}

double n_sumsq(const double* a, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        const float64x2_t v = vld1q_f64(a + i);
        acc0 = vfmaq_f64(acc0, v, v);
    }
    double acc = vaddvq_f64(acc0);
    for (; i < n; ++i) acc = std::fma(a[i], a[i], acc);
    return acc;
}

void n_clamp(const double* x, double lo, double hi, double* out, std::size_t n) {
    const float64x2_t vlo = vdupq_n_f64(lo);
    const float64x2_t vhi = vdupq_n_f64(hi);
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        float64x2_t v = vld1q_f64(x + i);
        v = vmaxq_f64(v, vlo);
        v = vminq_f64(v, vhi);
        vst1q_f64(out + i, v);
    }
    for (; i < n; ++i) {
        double v = x[i];
        v = v < lo ? lo : v;
        v = v > hi ? hi : v;
        out[i] = v;
    }
}

void n_adam(double* p, const double* g, double* m, double* v, std::size_t n,
            double lr, double beta1, double beta2, double corr1, double corr2,
            double eps) {
    const double omb1 = 1.0 - beta1;
    const double omb2 = 1.0 - beta2;
    const float64x2_t vb1 = vdupq_n_f64(beta1);
    const float64x2_t vb2 = vdupq_n_f64(beta2);
    const float64x2_t vomb1 = vdupq_n_f64(omb1);
    const float64x2_t vomb2 = vdupq_n_f64(omb2);
    const float64x2_t vc1 = vdupq_n_f64(corr1);
    const float64x2_t vc2 = vdupq_n_f64(corr2);
    const float64x2_t vlr = vdupq_n_f64(lr);
    const float64x2_t veps = vdupq_n_f64(eps);
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        const float64x2_t gi = vld1q_f64(g + i);
        float64x2_t mi = vld1q_f64(m + i);
        float64x2_t vi = vld1q_f64(v + i);
        mi = vfmaq_f64(vmulq_f64(vomb1, gi), vb1, mi);
        vi = vfmaq_f64(vmulq_f64(vomb2, vmulq_f64(gi, gi)), vb2, vi);
        vst1q_f64(m + i, mi);
        vst1q_f64(v + i, vi);
        const float64x2_t mhat = vdivq_f64(mi, vc1);
        const float64x2_t vhat = vdivq_f64(vi, vc2);
        const float64x2_t denom = vaddq_f64(vsqrtq_f64(vhat), veps);
        const float64x2_t step = vdivq_f64(vmulq_f64(vlr, mhat), denom);
        vst1q_f64(p + i, vsubq_f64(vld1q_f64(p + i), step));
    }
    for (; i < n; ++i) {
        const double gi = g[i];
        m[i] = std::fma(beta1, m[i], omb1 * gi);
        v[i] = std::fma(beta2, v[i], omb2 * (gi * gi));
        const double mhat = m[i] / corr1;
        const double vhat = v[i] / corr2;
        p[i] = p[i] - lr * mhat / (std::sqrt(vhat) + eps);
    }
}

void n_matvec_acc(const double* x, const double* K, double* acc, std::size_t ci, std::size_t co) {
    for (std::size_t i = 0; i < ci; ++i) {
        const float64x2_t xi = vdupq_n_f64(x[i]);
        const double* row = K + i * co;
        std::size_t c = 0;
        for (; c + kLanes <= co; c += kLanes) {
            vst1q_f64(acc + c, vfmaq_f64(vld1q_f64(acc + c), xi, vld1q_f64(row + c)));
        }
        const double xs = x[i];
        for (; c < co; ++c) acc[c] = std::fma(xs, row[c], acc[c]);
    }
}

void n_matvec_t_acc(const double* v, const double* K, double* out, std::size_t ci, std::size_t co) {
    for (std::size_t i = 0; i < ci; ++i) {
        out[i] += n_dot(K + i * co, v, co);
    }
}

void n_outer_acc(const double* x, const double* y, double* K, std::size_t ci, std::size_t co) {
    for (std::size_t i = 0; i < ci; ++i) {
        n_axpy(x[i], y, K + i * co, co);
    }
}

constexpr Kernels kNeon = {
    n_add, n_sub, n_mul, n_div, n_scale, n_axpy,
    n_dot, n_sum, n_sumsq, n_clamp, n_adam,
    n_matvec_acc, n_matvec_t_acc, n_outer_acc,
};

}  // namespace

const Kernels& neon_kernels() { return kNeon; }

}  // namespace fsncsr::kern
