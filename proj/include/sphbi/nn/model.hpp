#pragma once

// Sequential CNN with explicit per-layer forward and backward passes.
// Parameters live in one flat buffer; each layer owns a [weights | bias]
// slice. A Model is immutable during forward/backward, so concurrent
// inference only needs one Workspace per thread.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sphbi/core.hpp"
#include "sphbi/nn/gemm.hpp"
#include "sphbi/nn/mathfn.hpp"

namespace sphbi::nn {

enum class LayerKind : std::uint8_t { Conv2d, MaxPool, Activation, Flatten, Dense, ChannelNorm };
enum class Activation : std::uint8_t { Tanh, Sigmoid };

inline std::string_view layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::Activation: return "activation";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Dense: return "dense";
        case LayerKind::ChannelNorm: return "channelnorm";
    }
    return "?";
}

inline std::string_view activation_name(Activation a) { return a == Activation::Tanh ? "tanh" : "sigmoid"; }

struct LayerSpec {
    LayerKind kind = LayerKind::Flatten;
    std::size_t out_channels = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t pad = 0;
    std::size_t pool = 0;
    std::size_t stride = 0;
    Activation act = Activation::Sigmoid;
    std::size_t units = 0;

    static LayerSpec conv(std::size_t out, std::size_t kh, std::size_t kw, std::size_t pad = 0) {
        LayerSpec s;
        s.kind = LayerKind::Conv2d;
        s.out_channels = out;
        s.kernel_h = kh;
        s.kernel_w = kw;
        s.pad = pad;
        return s;
    }
    static LayerSpec maxpool(std::size_t k, std::size_t stride) {
        LayerSpec s;
        s.kind = LayerKind::MaxPool;
        s.pool = k;
        s.stride = stride;
        return s;
    }
    static LayerSpec activation(Activation a) {
        LayerSpec s;
        s.kind = LayerKind::Activation;
        s.act = a;
        return s;
    }
    static LayerSpec flatten() { return LayerSpec{}; }
    static LayerSpec dense(std::size_t units) {
        LayerSpec s;
        s.kind = LayerKind::Dense;
        s.units = units;
        return s;
    }
    static LayerSpec channel_norm() {
        LayerSpec s;
        s.kind = LayerKind::ChannelNorm;
        return s;
    }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Shape3 {
    std::size_t c = 1, h = 1, w = 1;
    std::size_t size() const { return c * h * w; }
    friend bool operator==(const Shape3&, const Shape3&) = default;
};

struct LayerInfo {
    LayerSpec spec;
    Shape3 in, out;
    std::size_t w_offset = 0, w_count = 0;
    std::size_t b_offset = 0, b_count = 0;
};

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline constexpr double kNormEps = 1e-5;

template <class T>
class Model {
public:
    /// Per-sample activations and caches. One per thread.
    struct Workspace {
        std::vector<std::vector<T>> acts;  // acts[i] is the input of layer i; acts.back() the output
        std::vector<std::vector<T>> cols;  // im2col buffers (conv) / normalized values (norm)
        std::vector<std::vector<std::uint32_t>> argmax;
        std::vector<std::vector<T>> inv_std;
        std::vector<T> grad_a, grad_b, grad_col, trans;
    };

    Model() = default;

    Model(Shape3 input, std::vector<LayerSpec> specs) : input_(input) {
        Shape3 cur = input;
        std::size_t offset = 0;
        for (const auto& s : specs) {
            LayerInfo li;
            li.spec = s;
            li.in = cur;
            switch (s.kind) {
                case LayerKind::Conv2d: {
                    if (s.out_channels == 0 || s.kernel_h == 0 || s.kernel_w == 0) throw ShapeError("conv2d: zero size");
                    const std::size_t hp = cur.h + 2 * s.pad, wp = cur.w + 2 * s.pad;
                    if (s.kernel_h > hp || s.kernel_w > wp) {
                        throw ShapeError("conv2d: kernel " + std::to_string(s.kernel_h) + "x" + std::to_string(s.kernel_w) +
                                         " larger than padded input " + std::to_string(hp) + "x" + std::to_string(wp));
                    }
                    li.out = {s.out_channels, hp - s.kernel_h + 1, wp - s.kernel_w + 1};
                    li.w_count = s.out_channels * cur.c * s.kernel_h * s.kernel_w;
                    li.b_count = s.out_channels;
                    break;
                }
                case LayerKind::MaxPool: {
                    if (s.pool == 0 || s.stride == 0) throw ShapeError("maxpool: zero size");
                    if (s.pool > cur.h || s.pool > cur.w) {
                        throw ShapeError("maxpool: window " + std::to_string(s.pool) + " larger than input " +
                                         std::to_string(cur.h) + "x" + std::to_string(cur.w));
                    }
                    li.out = {cur.c, (cur.h - s.pool) / s.stride + 1, (cur.w - s.pool) / s.stride + 1};
                    break;
                }
                case LayerKind::Activation:
                case LayerKind::ChannelNorm:
                    li.out = cur;
                    if (s.kind == LayerKind::ChannelNorm) {
                        li.w_count = cur.c;
                        li.b_count = cur.c;
                    }
                    break;
                case LayerKind::Flatten:
                    li.out = {cur.size(), 1, 1};
                    break;
                case LayerKind::Dense:
                    if (s.units == 0) throw ShapeError("dense: zero units");
                    li.out = {s.units, 1, 1};
                    li.w_count = s.units * cur.size();
                    li.b_count = s.units;
                    break;
            }
            li.w_offset = offset;
            li.b_offset = offset + li.w_count;
            offset += li.w_count + li.b_count;
            layers_.push_back(li);
            cur = li.out;
        }
        params_.assign(offset, T{0});
        for (const auto& li : layers_) {
            if (li.spec.kind == LayerKind::ChannelNorm) {
                std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(li.w_offset), li.w_count, T{1});
            }
        }
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for conv and dense weights and biases.
    void init(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        for (const auto& li : layers_) {
            std::size_t fan_in = 0;
            if (li.spec.kind == LayerKind::Conv2d) fan_in = li.in.c * li.spec.kernel_h * li.spec.kernel_w;
            if (li.spec.kind == LayerKind::Dense) fan_in = li.in.size();
            if (fan_in == 0) continue;
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (std::size_t i = 0; i < li.w_count + li.b_count; ++i) {
                params_[li.w_offset + i] = static_cast<T>((2.0 * uniform01(rng) - 1.0) * bound);
            }
        }
    }

    Shape3 input_shape() const { return input_; }
    Shape3 output_shape() const { return layers_.empty() ? input_ : layers_.back().out; }
    std::size_t output_size() const { return output_shape().size(); }
    const std::vector<LayerInfo>& layers() const { return layers_; }
    std::vector<LayerSpec> specs() const {
        std::vector<LayerSpec> v;
        for (const auto& l : layers_) v.push_back(l.spec);
        return v;
    }
    std::size_t param_count() const { return params_.size(); }
    std::span<T> params() { return params_; }
    std::span<const T> params() const { return params_; }

    template <class U>
    Model<U> cast() const {
        Model<U> m(input_, specs());
        auto dst = m.params();
        for (std::size_t i = 0; i < params_.size(); ++i) dst[i] = static_cast<U>(params_[i]);
        return m;
    }

    Workspace make_workspace() const {
        Workspace ws;
        ws.acts.resize(layers_.size() + 1);
        ws.acts[0].resize(input_.size());
        ws.cols.resize(layers_.size());
        ws.argmax.resize(layers_.size());
        ws.inv_std.resize(layers_.size());
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const auto& li = layers_[i];
            ws.acts[i + 1].resize(li.out.size());
            if (li.spec.kind == LayerKind::Conv2d) {
                ws.cols[i].resize(li.in.c * li.spec.kernel_h * li.spec.kernel_w * li.out.h * li.out.w);
            } else if (li.spec.kind == LayerKind::MaxPool) {
                ws.argmax[i].resize(li.out.size());
            } else if (li.spec.kind == LayerKind::ChannelNorm) {
                ws.cols[i].resize(li.in.size());
                ws.inv_std[i].resize(li.in.c);
            }
        }
        return ws;
    }

    std::span<const T> forward(std::span<const T> input, Workspace& ws) const {
        if (input.size() != input_.size()) throw ShapeError("forward: input size mismatch");
        std::copy(input.begin(), input.end(), ws.acts[0].begin());
        for (std::size_t i = 0; i < layers_.size(); ++i) forward_layer(i, ws);
        return ws.acts.back();
    }

    /// Accumulates parameter gradients for the sample last passed to
    /// forward(). If grad_input is non-empty the input gradient is written to it.
    void backward(std::span<const T> grad_out, Workspace& ws, std::span<T> grad_params,
                  std::span<T> grad_input = {}) const {
        if (grad_params.size() != params_.size()) throw ShapeError("backward: gradient buffer size mismatch");
        if (grad_out.size() != output_size()) throw ShapeError("backward: output gradient size mismatch");
        ws.grad_a.assign(grad_out.begin(), grad_out.end());
        for (std::size_t i = layers_.size(); i-- > 0;) {
            const bool need_in = i > 0 || !grad_input.empty();
            ws.grad_b.assign(layers_[i].in.size(), T{0});
            backward_layer(i, ws, grad_params, need_in);
            std::swap(ws.grad_a, ws.grad_b);
        }
        if (!grad_input.empty()) {
            if (grad_input.size() != input_.size()) throw ShapeError("backward: input gradient size mismatch");
            std::copy(ws.grad_a.begin(), ws.grad_a.end(), grad_input.begin());
        }
    }

private:
    void forward_layer(std::size_t i, Workspace& ws) const {
        const auto& li = layers_[i];
        const T* in = ws.acts[i].data();
        T* out = ws.acts[i + 1].data();
        switch (li.spec.kind) {
            case LayerKind::Conv2d: conv_forward(li, in, out, ws.cols[i].data()); break;
            case LayerKind::MaxPool: pool_forward(li, in, out, ws.argmax[i].data()); break;
            case LayerKind::Activation: {
                const std::size_t n = li.in.size();
                if (li.spec.act == Activation::Tanh) {
                    tanh_n(in, out, n);
                } else {
                    sigmoid_n(in, out, n);
                }
                break;
            }
            case LayerKind::Flatten: std::copy_n(in, li.in.size(), out); break;
            case LayerKind::Dense: dense_forward(li, in, out); break;
            case LayerKind::ChannelNorm: norm_forward(li, in, out, ws.cols[i].data(), ws.inv_std[i].data()); break;
        }
    }

    void backward_layer(std::size_t i, Workspace& ws, std::span<T> gp, bool need_in) const {
        const auto& li = layers_[i];
        const T* g = ws.grad_a.data();
        T* gin = ws.grad_b.data();
        switch (li.spec.kind) {
            case LayerKind::Conv2d: conv_backward(li, g, gin, ws.cols[i].data(), gp, need_in, ws.grad_col, ws.trans); break;
            case LayerKind::MaxPool: {
                const auto* am = ws.argmax[i].data();
                for (std::size_t k = 0; k < li.out.size(); ++k) gin[am[k]] += g[k];
                break;
            }
            case LayerKind::Activation: {
                const T* y = ws.acts[i + 1].data();
                const std::size_t n = li.in.size();
                if (li.spec.act == Activation::Tanh) {
                    for (std::size_t k = 0; k < n; ++k) gin[k] = g[k] * (T{1} - y[k] * y[k]);
                } else {
                    for (std::size_t k = 0; k < n; ++k) gin[k] = g[k] * y[k] * (T{1} - y[k]);
                }
                break;
            }
            case LayerKind::Flatten: std::copy_n(g, li.in.size(), gin); break;
            case LayerKind::Dense: dense_backward(li, g, gin, ws.acts[i].data(), gp, need_in); break;
            case LayerKind::ChannelNorm: norm_backward(li, g, gin, ws.cols[i].data(), ws.inv_std[i].data(), gp); break;
        }
    }

    // Cross-correlation through an im2col buffer of K = C*kh*kw rows by
    // P = Ho*Wo columns; out[oc][p] = b[oc] + sum_k W[oc][k] * col[k][p].
    void conv_forward(const LayerInfo& li, const T* in, T* out, T* col) const {
        const auto& s = li.spec;
        const std::size_t H = li.in.h, W = li.in.w, Ho = li.out.h, Wo = li.out.w, P = Ho * Wo;
        const std::size_t K = li.in.c * s.kernel_h * s.kernel_w;
        const auto pad = static_cast<std::ptrdiff_t>(s.pad);
        for (std::size_t c = 0; c < li.in.c; ++c) {
            for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
                for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
                    T* row = col + ((c * s.kernel_h + ki) * s.kernel_w + kj) * P;
                    for (std::size_t oy = 0; oy < Ho; ++oy) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ki) - pad;
                        T* dst = row + oy * Wo;
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) {
                            std::fill_n(dst, Wo, T{0});
                            continue;
                        }
                        const T* src = in + (c * H + static_cast<std::size_t>(iy)) * W;
                        for (std::size_t ox = 0; ox < Wo; ++ox) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kj) - pad;
                            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) ? T{0} : src[ix];
                        }
                    }
                }
            }
        }
        const T* w = params_.data() + li.w_offset;
        const T* b = params_.data() + li.b_offset;
        for (std::size_t oc = 0; oc < s.out_channels; ++oc) std::fill_n(out + oc * P, P, b[oc]);
        gemm_acc(s.out_channels, P, K, w, col, out);
    }

    void conv_backward(const LayerInfo& li, const T* g, T* gin, const T* col, std::span<T> gp, bool need_in,
                       std::vector<T>& gcol, std::vector<T>& tbuf) const {
        const auto& s = li.spec;
        const std::size_t H = li.in.h, W = li.in.w, Ho = li.out.h, Wo = li.out.w, P = Ho * Wo;
        const std::size_t K = li.in.c * s.kernel_h * s.kernel_w;
        T* gw = gp.data() + li.w_offset;
        T* gb = gp.data() + li.b_offset;
        for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
            const T* go = g + oc * P;
            T bsum{0};
#pragma omp simd reduction(+ : bsum)
            for (std::size_t p = 0; p < P; ++p) bsum += go[p];
            gb[oc] += bsum;
        }
        // dW += g * col^T
        transpose(K, P, col, tbuf);
        gemm_acc(s.out_channels, K, P, g, tbuf.data(), gw);
        if (!need_in) return;
        // dcol = W^T * g
        transpose(s.out_channels, K, params_.data() + li.w_offset, tbuf);
        gcol.assign(K * P, T{0});
        gemm_acc(K, P, s.out_channels, tbuf.data(), g, gcol.data());
        const auto pad = static_cast<std::ptrdiff_t>(s.pad);
        for (std::size_t c = 0; c < li.in.c; ++c) {
            for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
                for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
                    const T* row = gcol.data() + ((c * s.kernel_h + ki) * s.kernel_w + kj) * P;
                    for (std::size_t oy = 0; oy < Ho; ++oy) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ki) - pad;
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                        T* dst = gin + (c * H + static_cast<std::size_t>(iy)) * W;
                        for (std::size_t ox = 0; ox < Wo; ++ox) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kj) - pad;
                            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(W)) dst[ix] += row[oy * Wo + ox];
                        }
                    }
                }
            }
        }
    }

    // Ties resolve to the first element in row-major window order.
    void pool_forward(const LayerInfo& li, const T* in, T* out, std::uint32_t* am) const {
        const std::size_t k = li.spec.pool, st = li.spec.stride;
        const std::size_t H = li.in.h, W = li.in.w, Ho = li.out.h, Wo = li.out.w;
        for (std::size_t c = 0; c < li.in.c; ++c) {
            for (std::size_t oy = 0; oy < Ho; ++oy) {
                T* o = out + (c * Ho + oy) * Wo;
                std::uint32_t* a = am + (c * Ho + oy) * Wo;
                const std::size_t row0 = (c * H + oy * st) * W;
                for (std::size_t ox = 0; ox < Wo; ++ox) {
                    o[ox] = in[row0 + ox * st];
                    a[ox] = static_cast<std::uint32_t>(row0 + ox * st);
                }
                for (std::size_t dy = 0; dy < k; ++dy) {
                    for (std::size_t dx = 0; dx < k; ++dx) {
                        if (dy == 0 && dx == 0) continue;
                        const std::size_t base = row0 + dy * W + dx;
                        for (std::size_t ox = 0; ox < Wo; ++ox) {
                            const T v = in[base + ox * st];
                            const bool gt = v > o[ox];
                            o[ox] = gt ? v : o[ox];
                            a[ox] = gt ? static_cast<std::uint32_t>(base + ox * st) : a[ox];
                        }
                    }
                }
            }
        }
    }

    void dense_forward(const LayerInfo& li, const T* in, T* out) const {
        const std::size_t n = li.in.size();
        const T* w = params_.data() + li.w_offset;
        const T* b = params_.data() + li.b_offset;
        for (std::size_t j = 0; j < li.spec.units; ++j) {
            const T* wr = w + j * n;
            T acc{0};
#pragma omp simd reduction(+ : acc)
            for (std::size_t k = 0; k < n; ++k) acc += wr[k] * in[k];
            out[j] = acc + b[j];
        }
    }

    void dense_backward(const LayerInfo& li, const T* g, T* gin, const T* x, std::span<T> gp, bool need_in) const {
        const std::size_t n = li.in.size();
        const T* w = params_.data() + li.w_offset;
        T* gw = gp.data() + li.w_offset;
        T* gb = gp.data() + li.b_offset;
        for (std::size_t j = 0; j < li.spec.units; ++j) {
            const T gj = g[j];
            T* gr = gw + j * n;
            for (std::size_t k = 0; k < n; ++k) gr[k] += gj * x[k];
            gb[j] += gj;
            if (need_in) {
                const T* wr = w + j * n;
                for (std::size_t k = 0; k < n; ++k) gin[k] += gj * wr[k];
            }
        }
    }

    // Per-sample, per-channel normalisation over the spatial positions with a
    // learned scale and shift; statistics always come from the current input.
    void norm_forward(const LayerInfo& li, const T* in, T* out, T* xhat, T* inv_std) const {
        const std::size_t M = li.in.h * li.in.w;
        const T* gamma = params_.data() + li.w_offset;
        const T* beta = params_.data() + li.b_offset;
        for (std::size_t c = 0; c < li.in.c; ++c) {
            const T* x = in + c * M;
            T mean{0};
            for (std::size_t k = 0; k < M; ++k) mean += x[k];
            mean /= static_cast<T>(M);
            T var{0};
            for (std::size_t k = 0; k < M; ++k) var += (x[k] - mean) * (x[k] - mean);
            var /= static_cast<T>(M);
            const T is = T{1} / std::sqrt(var + static_cast<T>(kNormEps));
            inv_std[c] = is;
            for (std::size_t k = 0; k < M; ++k) {
                xhat[c * M + k] = (x[k] - mean) * is;
                out[c * M + k] = gamma[c] * xhat[c * M + k] + beta[c];
            }
        }
    }

    void norm_backward(const LayerInfo& li, const T* g, T* gin, const T* xhat, const T* inv_std, std::span<T> gp) const {
        const std::size_t M = li.in.h * li.in.w;
        const T* gamma = params_.data() + li.w_offset;
        T* ggamma = gp.data() + li.w_offset;
        T* gbeta = gp.data() + li.b_offset;
        const T m = static_cast<T>(M);
        for (std::size_t c = 0; c < li.in.c; ++c) {
            const T* gc = g + c * M;
            const T* xh = xhat + c * M;
            T sum_g{0}, sum_gx{0};
            for (std::size_t k = 0; k < M; ++k) {
                sum_g += gc[k];
                sum_gx += gc[k] * xh[k];
            }
            ggamma[c] += sum_gx;
            gbeta[c] += sum_g;
            const T scale = gamma[c] * inv_std[c] / m;
            for (std::size_t k = 0; k < M; ++k) gin[c * M + k] = scale * (m * gc[k] - sum_g - xh[k] * sum_gx);
        }
    }

    Shape3 input_;
    std::vector<LayerInfo> layers_;
    std::vector<T> params_;
};

}  // namespace sphbi::nn
