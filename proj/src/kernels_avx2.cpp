// AVX2/FMA kernel table. Compiled with -mavx2 -mfma; only dispatched to when
// the running CPU reports both features.

#include "fsncsr/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace fsncsr::kern {

namespace {

constexpr std::size_t kLanes = 4;

void a_add(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void a_sub(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void a_mul(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void a_div(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        _mm256_storeu_pd(out + i, _mm256_div_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] / b[i];
}

void a_scale(double s, const double* x, double* out, std::size_t n) {
    const __m256d vs = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(vs, _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) out[i] = s * x[i];
}

void a_axpy(double s, const double* x, double* y, std::size_t n) {
    const __m256d vs = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 2 * kLanes <= n; i += 2 * kLanes) {
        __m256d y0 = _mm256_loadu_pd(y + i);
        __m256d y1 = _mm256_loadu_pd(y + i + kLanes);
        y0 = _mm256_fmadd_pd(vs, _mm256_loadu_pd(x + i), y0);
        y1 = _mm256_fmadd_pd(vs, _mm256_loadu_pd(x + i + kLanes), y1);
        _mm256_storeu_pd(y + i, y0);
        _mm256_storeu_pd(y + i + kLanes, y1);
    }
    for (; i + kLanes <= n; i += kLanes) {
        __m256d y0 = _mm256_loadu_pd(y + i);
        y0 = _mm256_fmadd_pd(vs, _mm256_loadu_pd(x + i), y0);
        _mm256_storeu_pd(y + i, y0);
    }
    for (; i < n; ++i) y[i] = std::fma(s, x[i], y[i]);
}

double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double a_dot(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 2 * kLanes <= n; i += 2 * kLanes) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + kLanes), _mm256_loadu_pd(b + i + kLanes), acc1);
    }
    for (; i + kLanes <= n; i += kLanes) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc = std::fma(a[i], b[i], acc);
    return acc;
}

double a_sum(const double* a, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
    }
    double acc = hsum(acc0);
    for (; i < n; ++i) acc += a[i];
    return acc;
}

double a_sumsq(const double* a, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        const __m256d v = _mm256_loadu_pd(a + i);
        acc0 = _mm256_fmadd_pd(v, v, acc0);
    }
    double acc = hsum(acc0);
    for (; i < n; ++i) acc = std::fma(a[i], a[i], acc);
    return acc;
}

void a_clamp(const double* x, double lo, double hi, double* out, std::size_t n) {
    const __m256d vlo = _mm256_set1_pd(lo);
    const __m256d vhi = _mm256_set1_pd(hi);
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        __m256d v = _mm256_loadu_pd(x + i);
        v = _mm256_max_pd(v, vlo);
        v = _mm256_min_pd(v, vhi);
        _mm256_storeu_pd(out + i, v);
    }
    for (; i < n; ++i) {
        double v = x[i];
        v = v < lo ? lo : v;
        v = v > hi ? hi : v;
        out[i] = v;
    }
}

void a_adam(double* p, const double* g, double* m, double* v, std::size_t n,
            double lr, double beta1, double beta2, double corr1, double corr2,
            double eps) {
    const double omb1 = 1.0 - beta1;
    const double omb2 = 1.0 - beta2;
    const __m256d vb1 = _mm256_set1_pd(beta1);
    const __m256d vb2 = _mm256_set1_pd(beta2);
    const __m256d vomb1 = _mm256_set1_pd(omb1);
    const __m256d vomb2 = _mm256_set1_pd(omb2);
    const __m256d vc1 = _mm256_set1_pd(corr1);
    const __m256d vc2 = _mm256_set1_pd(corr2);
    const __m256d vlr = _mm256_set1_pd(lr);
    const __m256d veps = _mm256_set1_pd(eps);
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        const __m256d gi = _mm256_loadu_pd(g + i);
        __m256d mi = _mm256_loadu_pd(m + i);
        __m256d vi = _mm256_loadu_pd(v + i);
        mi = _mm256_fmadd_pd(vb1, mi, _mm256_mul_pd(vomb1, gi));
        vi = _mm256_fmadd_pd(vb2, vi, _mm256_mul_pd(vomb2, _mm256_mul_pd(gi, gi)));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        const __m256d mhat = _mm256_div_pd(mi, vc1);
        const __m256d vhat = _mm256_div_pd(vi, vc2);
        const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
        const __m256d step = _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom);
        _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
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

void a_matvec_acc(const double* x, const double* K, double* acc, std::size_t ci, std::size_t co) {
    for (std::size_t i = 0; i < ci; ++i) {
        const __m256d xi = _mm256_set1_pd(x[i]);
        const double* row = K + i * co;
        std::size_t c = 0;
        for (; c + kLanes <= co; c += kLanes) {
            __m256d acc_v = _mm256_loadu_pd(acc + c);
            acc_v = _mm256_fmadd_pd(xi, _mm256_loadu_pd(row + c), acc_v);
            _mm256_storeu_pd(acc + c, acc_v);
        }
        const double xs = x[i];
        for (; c < co; ++c) acc[c] = std::fma(xs, row[c], acc[c]);
    }
}

void a_matvec_t_acc(const double* v, const double* K, double* out, std::size_t ci, std::size_t co) {
    for (std::size_t i = 0; i < ci; ++i) {
        out[i] += a_dot(K + i * co, v, co);
    }
}

void a_outer_acc(const double* x, const double* y, double* K, std::size_t ci, std::size_t co) {
    for (std::size_t i = 0; i < ci; ++i) {
        a_axpy(x[i], y, K + i * co, co);
    }
}

constexpr Kernels kAvx2 = {
    a_add, a_sub, a_mul, a_div, a_scale, a_axpy,
    a_dot, a_sum, a_sumsq, a_clamp, a_adam,
    a_matvec_acc, a_matvec_t_acc, a_outer_acc,
};

}  // namespace

const Kernels& avx2_kernels() { return kAvx2; }

}  // namespace fsncsr::kern
