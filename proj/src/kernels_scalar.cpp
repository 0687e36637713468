// Scalar reference kernels. These define the semantics the AVX2 variants are
// tested against, and they are the only implementation used for float64.

#include <cmath>
#include <cstring>

#include "kernel_table.hpp"
#include "omoq/kernels.hpp"

namespace omoq::kernels {

namespace {

template <typename T>
void vadd_impl(std::size_t n, const T* a, const T* b, T* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void vsub_impl(std::size_t n, const T* a, const T* b, T* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void vmul_impl(std::size_t n, const T* a, const T* b, T* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void vscale_impl(std::size_t n, T alpha, const T* x, T* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

template <typename T>
void axpy_impl(std::size_t n, T alpha, const T* x, T* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T vdot_impl(std::size_t n, const T* a, const T* b) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
T vsum_impl(std::size_t n, const T* x) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

template <typename T>
T vsumsq_impl(std::size_t n, const T* x) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

template <typename T>
void relu_fwd_impl(std::size_t n, const T* x, T* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_bwd_impl(std::size_t n, const T* out, const T* dout, T* dx) {
    for (std::size_t i = 0; i < n; ++i)
        if (out[i] > T(0)) dx[i] += dout[i];
}

template <typename T>
void colsum_impl(std::size_t rows, std::size_t cols, const T* a, T* out, bool accumulate) {
    if (!accumulate) std::memset(out, 0, cols * sizeof(T));
    for (std::size_t i = 0; i < rows; ++i) {
        const T* row = a + i * cols;
        for (std::size_t j = 0; j < cols; ++j) out[j] += row[j];
    }
}

// Accumulation order: nn and tn stream rows of B with a broadcast A element
// (k-major per output row); nt is a dot product over k. The AVX2 kernels keep
// the same loop nests so the two backends differ only by lane-level reorder.
template <typename T>
void gemm_impl(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
               const T* a, const T* b, T* c, bool accumulate) {
    if (!accumulate) std::memset(c, 0, m * n * sizeof(T));
    if (!trans_a && !trans_b) {
        for (std::size_t i = 0; i < m; ++i) {
            T* crow = c + i * n;
            const T* arow = a + i * k;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const T av = arow[kk];
                const T* brow = b + kk * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    } else if (!trans_a && trans_b) {
        for (std::size_t i = 0; i < m; ++i) {
            T* crow = c + i * n;
            const T* arow = a + i * k;
            for (std::size_t j = 0; j < n; ++j) {
                const T* brow = b + j * k;
                T acc = T(0);
                for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
                crow[j] += acc;
            }
        }
    } else if (trans_a && !trans_b) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T* arow = a + kk * m;
            const T* brow = b + kk * n;
            for (std::size_t i = 0; i < m; ++i) {
                const T av = arow[i];
                T* crow = c + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            T* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                T acc = T(0);
                for (std::size_t kk = 0; kk < k; ++kk) acc += a[kk * m + i] * b[j * k + kk];
                crow[j] += acc;
            }
        }
    }
}

template <typename T>
void adamw_impl(std::size_t n, T* param, const T* grad, T* m, T* v,
                T lr, T beta1, T beta2, T eps, T weight_decay,
                T bias_c1, T bias_c2) {
    for (std::size_t i = 0; i < n; ++i) {
        const T g = grad[i];
        m[i] = beta1 * m[i] + (T(1) - beta1) * g;
        v[i] = beta2 * v[i] + (T(1) - beta2) * g * g;
        const T mhat = m[i] / bias_c1;
        const T vhat = v[i] / bias_c2;
        param[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * param[i]);
    }
}

} // namespace

const Table& scalar_table() {
    static const Table t = {
        &vadd_impl<float>,   &vsub_impl<float>,   &vmul_impl<float>,
        &vscale_impl<float>, &axpy_impl<float>,   &vdot_impl<float>,
        &vsum_impl<float>,   &vsumsq_impl<float>, &relu_fwd_impl<float>,
        &relu_bwd_impl<float>, &colsum_impl<float>, &gemm_impl<float>,
        &adamw_impl<float>,
    };
    return t;
}

// float64 path: direct calls, no dispatch.
void vadd(std::size_t n, const double* a, const double* b, double* out) { vadd_impl(n, a, b, out); }
void vsub(std::size_t n, const double* a, const double* b, double* out) { vsub_impl(n, a, b, out); }
void vmul(std::size_t n, const double* a, const double* b, double* out) { vmul_impl(n, a, b, out); }
void vscale(std::size_t n, double alpha, const double* x, double* out) { vscale_impl(n, alpha, x, out); }
void axpy(std::size_t n, double alpha, const double* x, double* y) { axpy_impl(n, alpha, x, y); }
double vdot(std::size_t n, const double* a, const double* b) { return vdot_impl(n, a, b); }
double vsum(std::size_t n, const double* x) { return vsum_impl(n, x); }
double vsumsq(std::size_t n, const double* x) { return vsumsq_impl(n, x); }
void relu_fwd(std::size_t n, const double* x, double* out) { relu_fwd_impl(n, x, out); }
void relu_bwd(std::size_t n, const double* out, const double* dout, double* dx) { relu_bwd_impl(n, out, dout, dx); }
void colsum(std::size_t rows, std::size_t cols, const double* a, double* out, bool accumulate) { colsum_impl(rows, cols, a, out, accumulate); }
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate) {
    gemm_impl(ta, tb, m, n, k, a, b, c, accumulate);
}
void adamw_update(std::size_t n, double* param, const double* grad, double* m, double* v,
                  double lr, double beta1, double beta2, double eps, double weight_decay,
                  double bias_c1, double bias_c2) {
    adamw_impl(n, param, grad, m, v, lr, beta1, beta2, eps, weight_decay, bias_c1, bias_c2);
}

} // namespace omoq::kernels
