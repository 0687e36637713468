// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma and is only entered after a runtime CPU check, so the rest of
// the binary stays runnable on plain SSE2 hardware.

#if OMOQ_HAVE_AVX2_BACKEND

#include <immintrin.h>

#include <cmath>
#include <cstring>

#include "kernel_table.hpp"

namespace omoq::kernels {

namespace {

inline float hsum8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    return _mm_cvtss_f32(lo);
}

void vadd_avx(std::size_t n, const float* a, const float* b, float* out) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void vsub_avx(std::size_t n, const float* a, const float* b, float* out) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void vmul_avx(std::size_t n, const float* a, const float* b, float* out) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void vscale_avx(std::size_t n, float alpha, const float* x, float* out) {
    const __m256 va = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) out[i] = alpha * x[i];
}

void axpy_avx(std::size_t n, float alpha, const float* x, float* y) {
    const __m256 va = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

float vdot_avx(std::size_t n, const float* a, const float* b) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
    float s = hsum8(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

float vsum_avx(std::size_t n, const float* x) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float s = hsum8(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

float vsumsq_avx(std::size_t n, const float* x) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 v = _mm256_loadu_ps(x + i);
        acc = _mm256_fmadd_ps(v, v, acc);
    }
    float s = hsum8(acc);
    for (; i < n; ++i) s += x[i] * x[i];
    return s;
}

void relu_fwd_avx(std::size_t n, const float* x, float* out) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_max_ps(zero, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_avx(std::size_t n, const float* out, const float* dout, float* dx) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 o = _mm256_loadu_ps(out + i);
        __m256 mask = _mm256_cmp_ps(o, zero, _CMP_GT_OQ);
        __m256 g = _mm256_and_ps(mask, _mm256_loadu_ps(dout + i));
        _mm256_storeu_ps(dx + i, _mm256_add_ps(_mm256_loadu_ps(dx + i), g));
    }
    for (; i < n; ++i)
        if (out[i] > 0.0f) dx[i] += dout[i];
}

void colsum_avx(std::size_t rows, std::size_t cols, const float* a, float* out, bool accumulate) {
    if (!accumulate) std::memset(out, 0, cols * sizeof(float));
    for (std::size_t i = 0; i < rows; ++i) {
        const float* row = a + i * cols;
        std::size_t j = 0;
        for (; j + 8 <= cols; j += 8)
            _mm256_storeu_ps(out + j, _mm256_add_ps(_mm256_loadu_ps(out + j), _mm256_loadu_ps(row + j)));
        for (; j < cols; ++j) out[j] += row[j];
    }
}

// Row-streaming FMA kernel, same loop nest as the scalar reference.
inline void gemm_rowstream(std::size_t n, float av, const float* brow, float* crow) {
    const __m256 va = _mm256_set1_ps(av);
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8)
        _mm256_storeu_ps(crow + j, _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j), _mm256_loadu_ps(crow + j)));
    for (; j < n; ++j) crow[j] += av * brow[j];
}

void gemm_avx(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
              const float* a, const float* b, float* c, bool accumulate) {
    if (!accumulate) std::memset(c, 0, m * n * sizeof(float));
    if (!trans_a && !trans_b) {
        for (std::size_t i = 0; i < m; ++i) {
            float* crow = c + i * n;
            const float* arow = a + i * k;
            for (std::size_t kk = 0; kk < k; ++kk)
                gemm_rowstream(n, arow[kk], b + kk * n, crow);
        }
    } else if (!trans_a && trans_b) {
        for (std::size_t i = 0; i < m; ++i) {
            float* crow = c + i * n;
            const float* arow = a + i * k;
            for (std::size_t j = 0; j < n; ++j)
                crow[j] += vdot_avx(k, arow, b + j * k);
        }
    } else if (trans_a && !trans_b) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const float* arow = a + kk * m;
            const float* brow = b + kk * n;
            for (std::size_t i = 0; i < m; ++i)
                gemm_rowstream(n, arow[i], brow, c + i * n);
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            float* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                float acc = 0.0f;
                for (std::size_t kk = 0; kk < k; ++kk) acc += a[kk * m + i] * b[j * k + kk];
                crow[j] += acc;
            }
        }
    }
}

void adamw_avx(std::size_t n, float* param, const float* grad, float* m, float* v,
               float lr, float beta1, float beta2, float eps, float weight_decay,
               float bias_c1, float bias_c2) {
    const __m256 vb1 = _mm256_set1_ps(beta1);
    const __m256 vb2 = _mm256_set1_ps(beta2);
    const __m256 v1mb1 = _mm256_set1_ps(1.0f - beta1);
    const __m256 v1mb2 = _mm256_set1_ps(1.0f - beta2);
    const __m256 vc1 = _mm256_set1_ps(1.0f / bias_c1);
    const __m256 vc2 = _mm256_set1_ps(1.0f / bias_c2);
    const __m256 veps = _mm256_set1_ps(eps);
    const __m256 vlr = _mm256_set1_ps(lr);
    const __m256 vwd = _mm256_set1_ps(weight_decay);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 g = _mm256_loadu_ps(grad + i);
        __m256 mi = _mm256_loadu_ps(m + i);
        __m256 vi = _mm256_loadu_ps(v + i);
        mi = _mm256_fmadd_ps(vb1, mi, _mm256_mul_ps(v1mb1, g));
        vi = _mm256_fmadd_ps(vb2, vi, _mm256_mul_ps(v1mb2, _mm256_mul_ps(g, g)));
        _mm256_storeu_ps(m + i, mi);
        _mm256_storeu_ps(v + i, vi);
        const __m256 mhat = _mm256_mul_ps(mi, vc1);
        const __m256 vhat = _mm256_mul_ps(vi, vc2);
        const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
        __m256 p = _mm256_loadu_ps(param + i);
        const __m256 step = _mm256_add_ps(_mm256_div_ps(mhat, denom), _mm256_mul_ps(vwd, p));
        p = _mm256_fnmadd_ps(vlr, step, p);
        _mm256_storeu_ps(param + i, p);
    }
    for (; i < n; ++i) {
        const float g = grad[i];
        m[i] = beta1 * m[i] + (1.0f - beta1) * g;
        v[i] = beta2 * v[i] + (1.0f - beta2) * g * g;
        const float mhat = m[i] / bias_c1;
        const float vhat = v[i] / bias_c2;
        param[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * param[i]);
    }
}

} // namespace

const Table& avx2_table() {
    static const Table t = {
        &vadd_avx, &vsub_avx, &vmul_avx, &vscale_avx, &axpy_avx,
        &vdot_avx, &vsum_avx, &vsumsq_avx, &relu_fwd_avx, &relu_bwd_avx,
        &colsum_avx, &gemm_avx, &adamw_avx,
    };
    return t;
}

} // namespace omoq::kernels

#endif // OMOQ_HAVE_AVX2_BACKEND
