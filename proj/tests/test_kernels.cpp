#include <doctest.h>

#include <cmath>
#include <vector>

#include "fsncsr/kernels.hpp"
#include "fsncsr/rng.hpp"

using namespace fsncsr;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng, double lo = -2.0, double hi = 2.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

// sizes chosen to exercise full vectors plus every remainder-tail length
const std::size_t kSizes[] = {1, 2, 3, 4, 5, 7, 8, 13, 16, 31, 64, 257};

}  // namespace

TEST_SUITE_BEGIN("kernels");

TEST_CASE("scalar table always available, detection is sane") {
    CHECK(kern::isa_available(kern::Isa::scalar));
    const kern::Isa best = kern::detect_isa();
    CHECK(kern::isa_available(best));
    CHECK(kern::isa_name(best) != nullptr);
}

TEST_CASE("vector tables match scalar bitwise on non-reduction kernels") {
    if (kern::detect_isa() == kern::Isa::scalar) {
        MESSAGE("no vector ISA on this machine; skipping");
        return;
    }
    const auto& s = kern::kernels_for(kern::Isa::scalar);
    const auto& v = kern::kernels_for(kern::detect_isa());
    Rng rng(7);
    for (std::size_t n : kSizes) {
        const auto a = random_vec(n, rng);
        const auto b = random_vec(n, rng, 0.5, 2.0);  // bounded away from 0 for div
        std::vector<double> out_s(n), out_v(n);

        s.add(a.data(), b.data(), out_s.data(), n);
        v.add(a.data(), b.data(), out_v.data(), n);
        CHECK(out_s == out_v);
        s.sub(a.data(), b.data(), out_s.data(), n);
        v.sub(a.data(), b.data(), out_v.data(), n);
        CHECK(out_s == out_v);
        s.mul(a.data(), b.data(), out_s.data(), n);
        v.mul(a.data(), b.data(), out_v.data(), n);
        CHECK(out_s == out_v);
        s.div(a.data(), b.data(), out_s.data(), n);
        v.div(a.data(), b.data(), out_v.data(), n);
        CHECK(out_s == out_v);
        s.scale(1.7, a.data(), out_s.data(), n);
        v.scale(1.7, a.data(), out_v.data(), n);
        CHECK(out_s == out_v);
        s.clamp(a.data(), -0.5, 0.5, out_s.data(), n);
        v.clamp(a.data(), -0.5, 0.5, out_v.data(), n);
        CHECK(out_s == out_v);

        auto ys = b;
        auto yv = b;
        s.axpy(-0.37, a.data(), ys.data(), n);
        v.axpy(-0.37, a.data(), yv.data(), n);
        CHECK(ys == yv);
    }
}

TEST_CASE("adam kernel matches scalar bitwise") {
    if (kern::detect_isa() == kern::Isa::scalar) return;
    const auto& s = kern::kernels_for(kern::Isa::scalar);
    const auto& v = kern::kernels_for(kern::detect_isa());
    Rng rng(11);
    for (std::size_t n : kSizes) {
        auto p1 = random_vec(n, rng);
        auto p2 = p1;
        const auto g = random_vec(n, rng);
        auto m1 = random_vec(n, rng, -0.1, 0.1);
        auto m2 = m1;
        auto v1 = random_vec(n, rng, 0.0, 0.1);
        auto v2 = v1;
        s.adam(p1.data(), g.data(), m1.data(), v1.data(), n, 2e-4, 0.9, 0.99, 0.1, 0.01, 1e-8);
        v.adam(p2.data(), g.data(), m2.data(), v2.data(), n, 2e-4, 0.9, 0.99, 0.1, 0.01, 1e-8);
        CHECK(p1 == p2);
        CHECK(m1 == m2);
        CHECK(v1 == v2);
    }
}

TEST_CASE("matvec/outer kernels match scalar bitwise") {
    if (kern::detect_isa() == kern::Isa::scalar) return;
    const auto& s = kern::kernels_for(kern::Isa::scalar);
    const auto& v = kern::kernels_for(kern::detect_isa());
    Rng rng(13);
    const std::size_t dims[][2] = {{1, 1}, {3, 5}, {4, 8}, {7, 12}, {9, 32}, {12, 33}};
    for (auto [ci, co] : dims) {
        const auto x = random_vec(ci, rng);
        const auto k = random_vec(ci * co, rng);
        auto acc_s = random_vec(co, rng);
        auto acc_v = acc_s;
        s.matvec_acc(x.data(), k.data(), acc_s.data(), ci, co);
        v.matvec_acc(x.data(), k.data(), acc_v.data(), ci, co);
        CHECK(acc_s == acc_v);

        const auto y = random_vec(co, rng);
        auto k_s = k;
        auto k_v = k;
        s.outer_acc(x.data(), y.data(), k_s.data(), ci, co);
        v.outer_acc(x.data(), y.data(), k_v.data(), ci, co);
        CHECK(k_s == k_v);
    }
}

TEST_CASE("reduction kernels agree within accumulation-order tolerance") {
    const auto& s = kern::kernels_for(kern::Isa::scalar);
    const auto& v = kern::kernels_for(kern::detect_isa());
    Rng rng(17);
    for (std::size_t n : kSizes) {
        const auto a = random_vec(n, rng);
        const auto b = random_vec(n, rng);
        const double tol = 1e-13 * static_cast<double>(n) + 1e-15;
        CHECK(std::fabs(s.dot(a.data(), b.data(), n) - v.dot(a.data(), b.data(), n)) <= tol);
        CHECK(std::fabs(s.sum(a.data(), n) - v.sum(a.data(), n)) <= tol);
        CHECK(std::fabs(s.sumsq(a.data(), n) - v.sumsq(a.data(), n)) <= tol);

        const std::size_t ci = 5, co = n;
        const auto k = random_vec(ci * co, rng);
        const auto vec = random_vec(co, rng);
        std::vector<double> out_s(ci, 0.0), out_v(ci, 0.0);
        s.matvec_t_acc(vec.data(), k.data(), out_s.data(), ci, co);
        v.matvec_t_acc(vec.data(), k.data(), out_v.data(), ci, co);
        for (std::size_t i = 0; i < ci; ++i) {
            CHECK(out_s[i] == doctest::Approx(out_v[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("force_isa pins the active table") {
    kern::force_isa(kern::Isa::scalar);
    CHECK(kern::active_isa() == kern::Isa::scalar);
    kern::clear_forced_isa();
    CHECK(kern::active_isa() == kern::detect_isa());
}

TEST_SUITE_END();
