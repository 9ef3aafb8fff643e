#include "fsncsr/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace fsncsr::kern {

namespace {

void s_add(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void s_sub(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void s_mul(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void s_div(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
}

void s_scale(double s, const double* x, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = s * x[i];
}

void s_axpy(double s, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(s, x[i], y[i]);
}

double s_dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc = std::fma(a[i], b[i], acc);
    return acc;
}

double s_sum(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

double s_sumsq(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc = std::fma(a[i], a[i], acc);
    return acc;
}

void s_clamp(const double* x, double lo, double hi, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        double v = x[i];
        v = v < lo ? lo : v;
        v = v > hi ? hi : v;
        out[i] = v;
    }
}

void s_adam(double* p, const double* g, double* m, double* v, std::size_t n,
            double lr, double beta1, double beta2, double corr1, double corr2,
            double eps) {
    const double omb1 = 1.0 - beta1;
    const double omb2 = 1.0 - beta2;
    for (std::size_t i = 0; i < n; ++i) {
        const double gi = g[i];
        m[i] = std::fma(beta1, m[i], omb1 * gi);
        v[i] = std::fma(beta2, v[i], omb2 * (gi * gi));
        const double mhat = m[i] / corr1;
        const double vhat = v[i] / corr2;
        p[i] = p[i] - lr * mhat / (std::sqrt(vhat) + eps);
    }
}

void s_matvec_acc(const double* x, const double* K, double* acc, std::size_t ci, std::size_t co) {
    for (std::size_t i = 0; i < ci; ++i) {
        const double xi = x[i];
        const double* row = K + i * co;
        for (std::size_t c = 0; c < co; ++c) acc[c] = std::fma(xi, row[c], acc[c]);
    }
}

void s_matvec_t_acc(const double* v, const double* K, double* out, std::size_t ci, std::size_t co) {
    for (std::size_t i = 0; i < ci; ++i) {
        out[i] += s_dot(K + i * co, v, co);
    }
}

void s_outer_acc(const double* x, const double* y, double* K, std::size_t ci, std::size_t co) {
    for (std::size_t i = 0; i < ci; ++i) {
        s_axpy(x[i], y, K + i * co, co);
    }
}

constexpr Kernels kScalar = {
    s_add, s_sub, s_mul, s_div, s_scale, s_axpy,
    s_dot, s_sum, s_sumsq, s_clamp, s_adam,
    s_matvec_acc, s_matvec_t_acc, s_outer_acc,
};

Isa g_forced = Isa::scalar;
bool g_has_forced = false;

}  // namespace

const char* isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
        case Isa::neon: return "neon";
    }
    return "?";
}

#if defined(FSNCSR_HAVE_AVX2)
const Kernels& avx2_kernels();  // kernels_avx2.cpp
#endif
#if defined(FSNCSR_HAVE_NEON)
const Kernels& neon_kernels();  // kernels_neon.cpp
#endif

bool isa_available(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return true;
        case Isa::avx2:
#if defined(FSNCSR_HAVE_AVX2)
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Isa::neon:
#if defined(FSNCSR_HAVE_NEON)
            return true;
#else
            return false;
#endif
    }
    return false;
}

Isa detect_isa() {
    if (isa_available(Isa::avx2)) return Isa::avx2;
    if (isa_available(Isa::neon)) return Isa::neon;
    return Isa::scalar;
}

const Kernels& kernels_for(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return kScalar;
        case Isa::avx2:
#if defined(FSNCSR_HAVE_AVX2)
            if (isa_available(Isa::avx2)) return avx2_kernels();
#endif
            break;
        case Isa::neon:
#if defined(FSNCSR_HAVE_NEON)
            return neon_kernels();
#endif
            break;
    }
    throw std::runtime_error(std::string("kernel table unavailable: ") + isa_name(isa));
}

Isa active_isa() {
    if (g_has_forced) return g_forced;
    static const Isa detected = detect_isa();
    return detected;
}

const Kernels& active() { return kernels_for(active_isa()); }

void force_isa(Isa isa) {
    kernels_for(isa);  // throws if unavailable
    g_forced = isa;
    g_has_forced = true;
}

void clear_forced_isa() { g_has_forced = false; }

}  // namespace fsncsr::kern
