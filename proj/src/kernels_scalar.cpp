#include "cdiff/kernels.hpp"

#include <cmath>

// Scalar reference kernels. axpby/accum_scaled_diff/axpy use fused
// multiply-add so results match the FMA-based SIMD variants bit for bit.

namespace cdiff::kernels {
namespace {

void add_k(const float* a, const float* b, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_k(const float* a, const float* b, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_k(const float* a, const float* b, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void div_k(const float* a, const float* b, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
}

void add_scalar_k(const float* a, float s, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + s;
}

void mul_scalar_k(const float* a, float s, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void div_scalar_k(const float* a, float s, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / s;
}

void axpby_k(float alpha, const float* x, float beta, const float* y, float* out,
             std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::fma(alpha, x[i], beta * y[i]);
}

void accum_scaled_diff_k(float* acc, const float* x, const float* y, float s, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) acc[i] = std::fma(s, x[i] - y[i], acc[i]);
}

void axpy_k(float s, const float* x, float* acc, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) acc[i] = std::fma(s, x[i], acc[i]);
}

void relu_k(const float* x, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_grad_k(const float* x, const float* dy, float* dx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dx[i] += x[i] > 0.0f ? dy[i] : 0.0f;
}

void silu_k(const float* x, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const float sig = 1.0f / (1.0f + std::exp(-x[i]));
        out[i] = x[i] * sig;
    }
}

void silu_grad_k(const float* x, const float* dy, float* dx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const float sig = 1.0f / (1.0f + std::exp(-x[i]));
        dx[i] += dy[i] * sig * (1.0f + x[i] * (1.0f - sig));
    }
}

double sum_k(const float* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]);
    return acc;
}

double dot_k(const float* a, const float* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

void matmul_k(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
              std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const float av = arow[kk];
            const float* brow = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_bt_k(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                 std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const float* brow = b + j * k;
            float acc = 0.0f;
            for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            crow[j] += acc;
        }
    }
}

} // namespace

const Ops& scalar_ops() {
    static const Ops table = {
        .name = "scalar",
        .add = add_k,
        .sub = sub_k,
        .mul = mul_k,
        .div = div_k,
        .add_scalar = add_scalar_k,
        .mul_scalar = mul_scalar_k,
        .div_scalar = div_scalar_k,
        .axpby = axpby_k,
        .accum_scaled_diff = accum_scaled_diff_k,
        .axpy = axpy_k,
        .relu = relu_k,
        .relu_grad = relu_grad_k,
        .silu = silu_k,
        .silu_grad = silu_grad_k,
        .sum = sum_k,
        .dot = dot_k,
        .matmul = matmul_k,
        .matmul_bt = matmul_bt_k,
    };
    return table;
}

} // namespace cdiff::kernels
