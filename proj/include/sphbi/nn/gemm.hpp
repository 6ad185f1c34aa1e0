#pragma once

#include <cstddef>
#include <cstring>
#include <vector>

namespace sphbi::nn {

namespace detail {

// 32-byte SIMD vector of T (GCC/Clang vector extension).
template <class T>
using Vec [[gnu::vector_size(32)]] = T;

template <class T>
inline Vec<T> vload(const T* p) {
    Vec<T> v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

template <class T, class V>
inline void vstore(T* p, V v) {
    std::memcpy(p, &v, sizeof v);
}

}  // namespace detail

/// C[M x N] += A[M x K] * B[K x N], all row-major and dense. Register-blocked
/// 4 rows by two vectors; summation order is fixed, so results are
/// reproducible run to run.
template <class T>
void gemm_acc(std::size_t M, std::size_t N, std::size_t K, const T* __restrict A, const T* __restrict B,
              T* __restrict C) {
    using V = detail::Vec<T>;
    constexpr std::size_t L = sizeof(V) / sizeof(T);
    constexpr std::size_t IB = 4, JB = 2 * L;
    std::size_t i = 0;
    for (; i + IB <= M; i += IB) {
        const T* a0 = A + (i + 0) * K;
        const T* a1 = A + (i + 1) * K;
        const T* a2 = A + (i + 2) * K;
        const T* a3 = A + (i + 3) * K;
        T* c0 = C + (i + 0) * N;
        T* c1 = C + (i + 1) * N;
        T* c2 = C + (i + 2) * N;
        T* c3 = C + (i + 3) * N;
        std::size_t j = 0;
        for (; j + JB <= N; j += JB) {
            V x00 = detail::vload(c0 + j), x01 = detail::vload(c0 + j + L);
            V x10 = detail::vload(c1 + j), x11 = detail::vload(c1 + j + L);
            V x20 = detail::vload(c2 + j), x21 = detail::vload(c2 + j + L);
            V x30 = detail::vload(c3 + j), x31 = detail::vload(c3 + j + L);
            for (std::size_t k = 0; k < K; ++k) {
                const T* b = B + k * N + j;
                const V b0 = detail::vload(b), b1 = detail::vload(b + L);
                const V w0 = V{} + a0[k], w1 = V{} + a1[k], w2 = V{} + a2[k], w3 = V{} + a3[k];
                x00 += w0 * b0;
                x01 += w0 * b1;
                x10 += w1 * b0;
                x11 += w1 * b1;
                x20 += w2 * b0;
                x21 += w2 * b1;
                x30 += w3 * b0;
                x31 += w3 * b1;
            }
            detail::vstore(c0 + j, x00);
            detail::vstore(c0 + j + L, x01);
            detail::vstore(c1 + j, x10);
            detail::vstore(c1 + j + L, x11);
            detail::vstore(c2 + j, x20);
            detail::vstore(c2 + j + L, x21);
            detail::vstore(c3 + j, x30);
            detail::vstore(c3 + j + L, x31);
        }
        for (; j < N; ++j) {
            T s0 = c0[j], s1 = c1[j], s2 = c2[j], s3 = c3[j];
            for (std::size_t k = 0; k < K; ++k) {
                const T b = B[k * N + j];
                s0 += a0[k] * b;
                s1 += a1[k] * b;
                s2 += a2[k] * b;
                s3 += a3[k] * b;
            }
            c0[j] = s0;
            c1[j] = s1;
            c2[j] = s2;
            c3[j] = s3;
        }
    }
    for (; i < M; ++i) {
        T* c = C + i * N;
        for (std::size_t k = 0; k < K; ++k) {
            const T a = A[i * K + k];
            const T* b = B + k * N;
            for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
        }
    }
}

/// dst[cols x rows] = src[rows x cols]^T
template <class T>
void transpose(std::size_t rows, std::size_t cols, const T* src, std::vector<T>& dst) {
    dst.resize(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
    }
}

}  // namespace sphbi::nn
