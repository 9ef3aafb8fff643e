#pragma once

#include <cstddef>

// Flat double-precision kernels for the arithmetic inner loops (elementwise
// ops, conv/resample accumulations, optimizer updates). A scalar table is the
// reference implementation; AVX2 and NEON tables are selected at runtime and
// equivalence-tested against it. Non-reduction kernels are built from the
// same elementary operation sequence in every lane width, so scalar and
// vector paths agree bitwise; reductions differ only in summation order.

namespace fsncsr::kern {

enum class Isa { scalar, avx2, neon };

struct Kernels {
    void (*add)(const double* a, const double* b, double* out, std::size_t n);
    void (*sub)(const double* a, const double* b, double* out, std::size_t n);
    void (*mul)(const double* a, const double* b, double* out, std::size_t n);
    void (*div)(const double* a, const double* b, double* out, std::size_t n);
    // out = s * x
    void (*scale)(double s, const double* x, double* out, std::size_t n);
    // y += s * x, fused (single rounding per element)
    void (*axpy)(double s, const double* x, double* y, std::size_t n);
    double (*dot)(const double* a, const double* b, std::size_t n);
    double (*sum)(const double* a, std::size_t n);
    double (*sumsq)(const double* a, std::size_t n);
    void (*clamp)(const double* x, double lo, double hi, double* out, std::size_t n);
    // bias-corrected Adam update on a flat parameter block
    void (*adam)(double* p, const double* g, double* m, double* v, std::size_t n,
                 double lr, double beta1, double beta2, double corr1, double corr2,
                 double eps);
    // acc[c] += sum_i x[i] * K[i*co + c]   (K row-major ci x co)
    void (*matvec_acc)(const double* x, const double* K, double* acc, std::size_t ci,
                       std::size_t co);
    // out[i] += dot(K[i*co .. ], v, co)
    void (*matvec_t_acc)(const double* v, const double* K, double* out, std::size_t ci,
                         std::size_t co);
    // K[i*co + c] += x[i] * y[c]
    void (*outer_acc)(const double* x, const double* y, double* K, std::size_t ci,
                      std::size_t co);
};

const char* isa_name(Isa isa);

// ISA compiled into this binary and supported by the running CPU.
bool isa_available(Isa isa);

// Best available ISA (vector when possible, scalar otherwise).
Isa detect_isa();

const Kernels& kernels_for(Isa isa);

// Table used by the rest of the library. Honors force_isa().
const Kernels& active();
Isa active_isa();

// Test hooks: pin the dispatch to one table.
void force_isa(Isa isa);
void clear_forced_isa();

}  // namespace fsncsr::kern
