#include "omoq/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <mutex>
#include <string>

#include "kernel_table.hpp"
#include "omoq/errors.hpp"

namespace omoq::kernels {

namespace {

const Table* g_active = nullptr;
Backend g_backend = Backend::scalar;
std::once_flag g_init_flag;

void select(Backend b) {
    if (b == Backend::avx2) {
#if OMOQ_HAVE_AVX2_BACKEND
        if (!avx2_available()) fail("kernels: avx2 backend requested but CPU lacks AVX2/FMA");
        g_active = &avx2_table();
#else
        fail("kernels: avx2 backend not built on this architecture");
#endif
    } else {
        g_active = &scalar_table();
    }
    g_backend = b;
}

void detect() {
    const char* env = std::getenv("OMOQ_KERNELS");
    std::string want = env ? env : "auto";
    if (want == "scalar") {
        select(Backend::scalar);
    } else if (want == "avx2") {
        select(Backend::avx2);
    } else if (want == "auto" || want.empty()) {
        select(avx2_available() ? Backend::avx2 : Backend::scalar);
    } else {
        fail("kernels: unknown OMOQ_KERNELS value '" + want + "' (use scalar|avx2|auto)");
    }
}

inline const Table& active() {
    std::call_once(g_init_flag, detect);
    return *g_active;
}

} // namespace

bool avx2_available() {
#if OMOQ_HAVE_AVX2_BACKEND
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend active_backend() {
    active();
    return g_backend;
}

const char* backend_name() {
    return active_backend() == Backend::avx2 ? "avx2" : "scalar";
}

void set_backend(Backend b) {
    active(); // ensure initialized so detection never overwrites this later
    select(b);
}

void reset_backend() {
    active();
    detect();
}

void vadd(std::size_t n, const float* a, const float* b, float* out) { active().vadd(n, a, b, out); }
void vsub(std::size_t n, const float* a, const float* b, float* out) { active().vsub(n, a, b, out); }
void vmul(std::size_t n, const float* a, const float* b, float* out) { active().vmul(n, a, b, out); }
void vscale(std::size_t n, float alpha, const float* x, float* out) { active().vscale(n, alpha, x, out); }
void axpy(std::size_t n, float alpha, const float* x, float* y) { active().axpy(n, alpha, x, y); }
float vdot(std::size_t n, const float* a, const float* b) { return active().vdot(n, a, b); }
float vsum(std::size_t n, const float* x) { return active().vsum(n, x); }
float vsumsq(std::size_t n, const float* x) { return active().vsumsq(n, x); }
void relu_fwd(std::size_t n, const float* x, float* out) { active().relu_fwd(n, x, out); }
void relu_bwd(std::size_t n, const float* out, const float* dout, float* dx) { active().relu_bwd(n, out, dout, dx); }
void colsum(std::size_t rows, std::size_t cols, const float* a, float* out, bool accumulate) {
    active().colsum(rows, cols, a, out, accumulate);
}
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
          const float* a, const float* b, float* c, bool accumulate) {
    active().gemm(ta, tb, m, n, k, a, b, c, accumulate);
}
void adamw_update(std::size_t n, float* param, const float* grad, float* m, float* v,
                  float lr, float beta1, float beta2, float eps, float weight_decay,
                  float bias_c1, float bias_c2) {
    active().adamw_update(n, param, grad, m, v, lr, beta1, beta2, eps, weight_decay, bias_c1, bias_c2);
}

} // namespace omoq::kernels
