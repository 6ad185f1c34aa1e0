#pragma once

// Elementwise sigmoid/tanh over buffers. The float path uses a polynomial exp
// written on 8-lane vectors (glibc's expf is only vectorised under
// -ffast-math); it is accurate to a few ulp and gives the same value for an
// element whether it lands in a vector lane or in the scalar tail. Double
// precision goes straight to <cmath>.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <type_traits>

namespace sphbi::nn {

namespace detail {

using f32x8 [[gnu::vector_size(32)]] = float;
using i32x8 [[gnu::vector_size(32)]] = std::int32_t;

template <class F, class I>
inline F exp_poly(F x) {
    const F lo = F{} - 87.3f, hi = F{} + 88.7f;
    x = x < lo ? lo : x;
    x = x > hi ? hi : x;
    // round-to-nearest via the 1.5 * 2^23 trick; |x * log2 e| < 128 here
    const F magic = F{} + 12582912.0f;
    const F fx = (x * 1.44269504088896341f + magic) - magic;
    x -= fx * 0.693359375f;
    x -= fx * -2.12194440e-4f;
    const F z = x * x;
    F y = F{} + 1.9875691500e-4f;
    y = y * x + 1.3981999507e-3f;
    y = y * x + 8.3334519073e-3f;
    y = y * x + 4.1665795894e-2f;
    y = y * x + 1.6666665459e-1f;
    y = y * x + 5.0000001201e-1f;
    y = y * z + x + 1.0f;
    I e;
    if constexpr (std::is_same_v<F, float>) {
        e = (static_cast<std::int32_t>(fx) + 127) << 23;
    } else {
        e = (__builtin_convertvector(fx, I) + 127) << 23;
    }
    F scale;
    std::memcpy(&scale, &e, sizeof scale);
    return y * scale;
}

template <class F, class I>
inline F tanh_poly(F x) {
    const F ax = x < 0.0f ? -x : x;
    const F z = x * x;
    F p = F{} - 5.70498872745e-3f;
    p = p * z + 2.06390887954e-2f;
    p = p * z - 5.37397155531e-2f;
    p = p * z + 1.33314422036e-1f;
    p = p * z - 3.33332819422e-1f;
    const F small = p * z * x + x;
    const F mag = 1.0f - 2.0f / (exp_poly<F, I>(2.0f * ax) + 1.0f);
    const F big = x < 0.0f ? -mag : mag;
    return ax < 0.625f ? small : big;
}

template <class F, class I>
inline F sigmoid_poly(F x) {
    return 1.0f / (1.0f + exp_poly<F, I>(-x));
}

template <auto Fv, auto Fs>
inline void map_f32(const float* in, float* out, std::size_t n) {
    std::size_t k = 0;
    for (; k + 8 <= n; k += 8) {
        f32x8 v;
        std::memcpy(&v, in + k, sizeof v);
        v = Fv(v);
        std::memcpy(out + k, &v, sizeof v);
    }
    for (; k < n; ++k) out[k] = Fs(in[k]);
}

}  // namespace detail

inline float fast_exp(float x) { return detail::exp_poly<float, std::int32_t>(x); }
inline float fast_tanh(float x) { return detail::tanh_poly<float, std::int32_t>(x); }
inline float sigmoid(float x) { return detail::sigmoid_poly<float, std::int32_t>(x); }
inline double fast_exp(double x) { return std::exp(x); }
inline double fast_tanh(double x) { return std::tanh(x); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline void sigmoid_n(const float* in, float* out, std::size_t n) {
    detail::map_f32<detail::sigmoid_poly<detail::f32x8, detail::i32x8>, detail::sigmoid_poly<float, std::int32_t>>(in, out, n);
}
inline void tanh_n(const float* in, float* out, std::size_t n) {
    detail::map_f32<detail::tanh_poly<detail::f32x8, detail::i32x8>, detail::tanh_poly<float, std::int32_t>>(in, out, n);
}
inline void sigmoid_n(const double* in, double* out, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) out[k] = sigmoid(in[k]);
}
inline void tanh_n(const double* in, double* out, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) out[k] = std::tanh(in[k]);
}

}  // namespace sphbi::nn
