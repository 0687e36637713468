// Scalar/AVX2 kernel equivalence and GEMM correctness against a naive
// reference. The two backends may differ in summation order, so comparisons
// use a relative tolerance; sizes cover full lanes plus ragged remainders.

#include <doctest.h>

#include <cmath>
#include <array>
#include <vector>

#include "omoq/kernels.hpp"
#include "omoq/rng.hpp"

using namespace omoq;

namespace {

std::vector<float> random_vec(Rng& rng, size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
    return v;
}

bool close_rel(float a, float b, float tol) {
    const float scale = std::max({1.0f, std::fabs(a), std::fabs(b)});
    return std::fabs(a - b) <= tol * scale;
}

void naive_gemm(bool ta, bool tb, size_t m, size_t n, size_t k, const float* a, const float* b,
                float* c) {
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (size_t kk = 0; kk < k; ++kk) {
                const float av = ta ? a[kk * m + i] : a[i * k + kk];
                const float bv = tb ? b[j * k + kk] : b[kk * n + j];
                acc += static_cast<double>(av) * bv;
            }
            c[i * n + j] = static_cast<float>(acc);
        }
}

struct BackendGuard {
    kernels::Backend saved;
    BackendGuard() : saved(kernels::active_backend()) {}
    ~BackendGuard() { kernels::set_backend(saved); }
};

} // namespace

TEST_CASE("gemm matches naive triple loop in every transpose mode") {
    Rng rng(42);
    for (bool ta : {false, true})
        for (bool tb : {false, true})
            for (auto [m, n, k] : {std::array<size_t, 3>{3, 5, 7}, {8, 16, 32}, {13, 9, 21}, {1, 1, 1}}) {
                auto a = random_vec(rng, m * k);
                auto b = random_vec(rng, k * n);
                std::vector<float> c(m * n), ref(m * n);
                kernels::gemm(ta, tb, m, n, k, a.data(), b.data(), c.data(), false);
                naive_gemm(ta, tb, m, n, k, a.data(), b.data(), ref.data());
                for (size_t i = 0; i < c.size(); ++i)
                    CHECK(close_rel(c[i], ref[i], 1e-5f));
            }
}

TEST_CASE("gemm accumulate adds on top of existing values") {
    Rng rng(7);
    const size_t m = 4, n = 6, k = 5;
    auto a = random_vec(rng, m * k);
    auto b = random_vec(rng, k * n);
    std::vector<float> c(m * n, 1.0f), ref(m * n);
    naive_gemm(false, false, m, n, k, a.data(), b.data(), ref.data());
    kernels::gemm(false, false, m, n, k, a.data(), b.data(), c.data(), true);
    for (size_t i = 0; i < c.size(); ++i) CHECK(close_rel(c[i], ref[i] + 1.0f, 1e-5f));
}

TEST_CASE("scalar and avx2 backends agree" *
          doctest::skip(!kernels::avx2_available())) {
    BackendGuard guard;
    Rng rng(123);
    // Sizes straddle vector width boundaries.
    for (size_t n : {1u, 7u, 8u, 9u, 31u, 64u, 1000u, 1027u}) {
        auto a = random_vec(rng, n);
        auto b = random_vec(rng, n);

        auto run_all = [&](kernels::Backend be) {
            kernels::set_backend(be);
            struct Out {
                std::vector<float> add, sub, mul, scaled, axpy_out, relu, relu_grad, col;
                float dot, sum, sumsq;
                std::vector<float> adam_p, adam_m, adam_v;
            } o;
            o.add.resize(n);
            o.sub.resize(n);
            o.mul.resize(n);
            o.scaled.resize(n);
            o.relu.resize(n);
            kernels::vadd(n, a.data(), b.data(), o.add.data());
            kernels::vsub(n, a.data(), b.data(), o.sub.data());
            kernels::vmul(n, a.data(), b.data(), o.mul.data());
            kernels::vscale(n, 1.7f, a.data(), o.scaled.data());
            o.axpy_out = b;
            kernels::axpy(n, -0.6f, a.data(), o.axpy_out.data());
            o.dot = kernels::vdot(n, a.data(), b.data());
            o.sum = kernels::vsum(n, a.data());
            o.sumsq = kernels::vsumsq(n, a.data());
            kernels::relu_fwd(n, a.data(), o.relu.data());
            o.relu_grad.assign(n, 0.25f);
            kernels::relu_bwd(n, o.relu.data(), b.data(), o.relu_grad.data());
            const size_t rows = 5;
            std::vector<float> mat = random_vec(rng, 0); // placeholder
            mat.resize(rows * n);
            for (size_t i = 0; i < rows * n; ++i)
                mat[i] = static_cast<float>(std::sin(0.1 * static_cast<double>(i)));
            o.col.resize(n);
            kernels::colsum(rows, n, mat.data(), o.col.data(), false);
            o.adam_p = a;
            o.adam_m.assign(n, 0.1f);
            o.adam_v.assign(n, 0.2f);
            kernels::adamw_update(n, o.adam_p.data(), b.data(), o.adam_m.data(), o.adam_v.data(),
                                  1e-3f, 0.9f, 0.999f, 1e-8f, 0.01f, 0.1f, 0.001999f);
            return o;
        };

        auto s = run_all(kernels::Backend::scalar);
        auto v = run_all(kernels::Backend::avx2);

        for (size_t i = 0; i < n; ++i) {
            CHECK(s.add[i] == v.add[i]);
            CHECK(s.sub[i] == v.sub[i]);
            CHECK(s.mul[i] == v.mul[i]);
            CHECK(close_rel(s.scaled[i], v.scaled[i], 1e-6f));
            CHECK(close_rel(s.axpy_out[i], v.axpy_out[i], 1e-6f));
            CHECK(s.relu[i] == v.relu[i]);
            CHECK(close_rel(s.relu_grad[i], v.relu_grad[i], 1e-6f));
            CHECK(close_rel(s.col[i], v.col[i], 1e-5f));
            CHECK(close_rel(s.adam_p[i], v.adam_p[i], 1e-5f));
            CHECK(close_rel(s.adam_m[i], v.adam_m[i], 1e-5f));
            CHECK(close_rel(s.adam_v[i], v.adam_v[i], 1e-5f));
        }
        CHECK(close_rel(s.dot, v.dot, 1e-4f));
        CHECK(close_rel(s.sum, v.sum, 1e-4f));
        CHECK(close_rel(s.sumsq, v.sumsq, 1e-4f));
    }

    // GEMM equivalence across backends.
    for (auto [m, n, k] : {std::array<size_t, 3>{5, 9, 17}, {16, 24, 8}, {3, 3, 3}}) {
        auto a = random_vec(rng, m * k);
        auto b = random_vec(rng, k * n);
        for (bool ta : {false, true})
            for (bool tb : {false, true}) {
                std::vector<float> cs(m * n), cv(m * n);
                kernels::set_backend(kernels::Backend::scalar);
                kernels::gemm(ta, tb, m, n, k, a.data(), b.data(), cs.data(), false);
                kernels::set_backend(kernels::Backend::avx2);
                kernels::gemm(ta, tb, m, n, k, a.data(), b.data(), cv.data(), false);
                for (size_t i = 0; i < cs.size(); ++i) CHECK(close_rel(cs[i], cv[i], 1e-5f));
            }
    }
}

TEST_CASE("backend selection rejects unsupported requests gracefully") {
    BackendGuard guard;
    if (!kernels::avx2_available()) {
        CHECK_THROWS(kernels::set_backend(kernels::Backend::avx2));
    } else {
        kernels::set_backend(kernels::Backend::avx2);
        CHECK(kernels::active_backend() == kernels::Backend::avx2);
    }
    kernels::set_backend(kernels::Backend::scalar);
    CHECK(std::string(kernels::backend_name()) == "scalar");
}
