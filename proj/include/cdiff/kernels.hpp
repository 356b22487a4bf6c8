#pragma once

#include <cstddef>

namespace cdiff::kernels {

// Arithmetic primitives over contiguous f32 buffers. Every entry has a scalar
// reference implementation; on x86-64 an AVX2+FMA variant is selected at
// runtime when the CPU supports it. Reductions accumulate in f64.
//
// Aliasing: `out` may alias an input for the elementwise entries; matmul
// buffers must not overlap.
struct Ops {
    const char* name;

    void (*add)(const float* a, const float* b, float* out, std::size_t n);
    void (*sub)(const float* a, const float* b, float* out, std::size_t n);
    void (*mul)(const float* a, const float* b, float* out, std::size_t n);
    void (*div)(const float* a, const float* b, float* out, std::size_t n);

    void (*add_scalar)(const float* a, float s, float* out, std::size_t n);
    void (*mul_scalar)(const float* a, float s, float* out, std::size_t n);
    void (*div_scalar)(const float* a, float s, float* out, std::size_t n);

    // out = alpha*x + beta*y
    void (*axpby)(float alpha, const float* x, float beta, const float* y, float* out,
                  std::size_t n);
    // acc += s*(x - y)
    void (*accum_scaled_diff)(float* acc, const float* x, const float* y, float s,
                              std::size_t n);
    // acc += s*x
    void (*axpy)(float s, const float* x, float* acc, std::size_t n);

    void (*relu)(const float* x, float* out, std::size_t n);
    // dx += dy where x > 0
    void (*relu_grad)(const float* x, const float* dy, float* dx, std::size_t n);
    void (*silu)(const float* x, float* out, std::size_t n);
    // dx += dy * d silu(x)/dx
    void (*silu_grad)(const float* x, const float* dy, float* dx, std::size_t n);

    double (*sum)(const float* x, std::size_t n);
    double (*dot)(const float* a, const float* b, std::size_t n);

    // C[m,n] += A[m,k] * B[k,n], all row-major.
    void (*matmul)(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                   std::size_t n);
    // C[m,n] += A[m,k] * B[n,k]^T, i.e. C[i][j] += dot(A row i, B row j).
    void (*matmul_bt)(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                      std::size_t n);
};

enum class Backend { scalar, avx2 };

// Reference table; always available.
const Ops& scalar_ops();

// Active table, chosen once at first use: the CDIFF_KERNELS environment
// variable ("scalar"/"avx2") if set, else the widest supported variant.
const Ops& ops();

Backend active_backend();

// True when AVX2 kernels are compiled in and the CPU supports AVX2+FMA.
bool avx2_available();

// Override the active table (tests, CLI). Throws numeric_error if the
// requested backend is unavailable. Not safe to call while workers run.
void force_backend(Backend backend);

} // namespace cdiff::kernels
