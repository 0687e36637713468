#pragma once

#include <cstddef>

namespace omoq::kernels {

// Function-pointer table for the dispatched float32 kernels.
struct Table {
    void (*vadd)(std::size_t, const float*, const float*, float*);
    void (*vsub)(std::size_t, const float*, const float*, float*);
    void (*vmul)(std::size_t, const float*, const float*, float*);
    void (*vscale)(std::size_t, float, const float*, float*);
    void (*axpy)(std::size_t, float, const float*, float*);
    float (*vdot)(std::size_t, const float*, const float*);
    float (*vsum)(std::size_t, const float*);
    float (*vsumsq)(std::size_t, const float*);
    void (*relu_fwd)(std::size_t, const float*, float*);
    void (*relu_bwd)(std::size_t, const float*, const float*, float*);
    void (*colsum)(std::size_t, std::size_t, const float*, float*, bool);
    void (*gemm)(bool, bool, std::size_t, std::size_t, std::size_t,
                 const float*, const float*, float*, bool);
    void (*adamw_update)(std::size_t, float*, const float*, float*, float*,
                         float, float, float, float, float, float, float);
};

const Table& scalar_table();
#if OMOQ_HAVE_AVX2_BACKEND
const Table& avx2_table();
#endif

} // namespace omoq::kernels
