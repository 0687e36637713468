#pragma once

#include <cstddef>

namespace omoq::kernels {

// Flat arithmetic kernels behind every hot loop (GEMM, elementwise math,
// reductions, the fused optimizer update). Two implementations exist: a
// scalar reference and an AVX2+FMA variant. The backend is chosen once at
// runtime from CPU capabilities and can be forced with the OMOQ_KERNELS
// environment variable ("scalar", "avx2", "auto") or set_backend().
//
// Reruns on the same machine pick the same backend, so numeric results are
// bit-reproducible per host. Scalar and AVX2 differ only in floating-point
// summation order; equivalence between them is tolerance-tested.
enum class Backend { scalar, avx2 };

bool avx2_available();
Backend active_backend();
const char* backend_name();
void set_backend(Backend b); // throws omoq::Error if unsupported on this CPU
void reset_backend();        // re-run detection, honoring OMOQ_KERNELS

// ---- float32: dispatched hot path ----
void vadd(std::size_t n, const float* a, const float* b, float* out);
void vsub(std::size_t n, const float* a, const float* b, float* out);
void vmul(std::size_t n, const float* a, const float* b, float* out);
void vscale(std::size_t n, float alpha, const float* x, float* out);
void axpy(std::size_t n, float alpha, const float* x, float* y); // y += alpha*x
float vdot(std::size_t n, const float* a, const float* b);
float vsum(std::size_t n, const float* x);
float vsumsq(std::size_t n, const float* x);
void relu_fwd(std::size_t n, const float* x, float* out);
// dx += dout where out > 0
void relu_bwd(std::size_t n, const float* out, const float* dout, float* dx);
// out[j] (+)= sum_i a[i*cols + j]
void colsum(std::size_t rows, std::size_t cols, const float* a, float* out, bool accumulate);

// C[m x n] (+)= op(A) * op(B), row-major, contiguous leading dimensions.
// trans_a: A stored [k x m], trans_b: B stored [n x k].
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const float* a, const float* b, float* c, bool accumulate);

// Fused AdamW step with decoupled weight decay:
//   m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g^2
//   p -= lr * (m/bias_c1) / (sqrt(v/bias_c2) + eps) + lr * wd * p
void adamw_update(std::size_t n, float* param, const float* grad, float* m, float* v,
                  float lr, float beta1, float beta2, float eps, float weight_decay,
                  float bias_c1, float bias_c2);

// ---- float64: scalar reference path, used by the verification build of the
// autodiff core (gradient checks run in double precision). Never dispatched.
void vadd(std::size_t n, const double* a, const double* b, double* out);
void vsub(std::size_t n, const double* a, const double* b, double* out);
void vmul(std::size_t n, const double* a, const double* b, double* out);
void vscale(std::size_t n, double alpha, const double* x, double* out);
void axpy(std::size_t n, double alpha, const double* x, double* y);
double vdot(std::size_t n, const double* a, const double* b);
double vsum(std::size_t n, const double* x);
double vsumsq(std::size_t n, const double* x);
void relu_fwd(std::size_t n, const double* x, double* out);
void relu_bwd(std::size_t n, const double* out, const double* dout, double* dx);
void colsum(std::size_t rows, std::size_t cols, const double* a, double* out, bool accumulate);
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate);
void adamw_update(std::size_t n, double* param, const double* grad, double* m, double* v,
                  double lr, double beta1, double beta2, double eps, double weight_decay,
                  double bias_c1, double bias_c2);

} // namespace omoq::kernels
