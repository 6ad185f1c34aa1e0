#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "sphbi/core.hpp"

namespace sphbi::nn {

template <class T>
void softmax(std::span<const T> logits, std::span<T> out) {
    const T m = *std::max_element(logits.begin(), logits.end());
    T z{0};
    for (std::size_t k = 0; k < logits.size(); ++k) {
        out[k] = std::exp(logits[k] - m);
        z += out[k];
    }
    for (auto& p : out) p /= z;
}

/// weight * -log softmax(logits)[label]; writes d loss / d logits into grad.
template <class T>
T softmax_cross_entropy(std::span<const T> logits, std::size_t label, T weight, std::span<T> grad) {
    if (label >= logits.size()) throw ContractError("cross entropy: label out of range");
    const T m = *std::max_element(logits.begin(), logits.end());
    T z{0};
    for (T v : logits) z += std::exp(v - m);
    const T log_z = m + std::log(z);
    for (std::size_t k = 0; k < logits.size(); ++k) {
        const T p = std::exp(logits[k] - log_z);
        grad[k] = weight * (p - (k == label ? T{1} : T{0}));
    }
    return weight * (log_z - logits[label]);
}

/// Weighted binary cross-entropy on a single logit; y is 0 or 1.
template <class T>
T binary_cross_entropy(T logit, T y, T weight, T& grad) {
    // log(1 + e^-|x|) + max(x, 0) - x*y
    const T loss = std::log1p(std::exp(-std::abs(logit))) + std::max(logit, T{0}) - logit * y;
    const T p = logit >= T{0} ? T{1} / (T{1} + std::exp(-logit)) : std::exp(logit) / (T{1} + std::exp(logit));
    grad = weight * (p - y);
    return weight * loss;
}

/// Picks CE for multi-logit outputs and BCE for a single logit.
template <class T>
T sample_loss(std::span<const T> out, std::size_t label, T weight, std::span<T> grad) {
    if (out.size() == 1) {
        if (label > 1) throw ContractError("binary loss: label out of range");
        return binary_cross_entropy(out[0], static_cast<T>(label), weight, grad[0]);
    }
    return softmax_cross_entropy(out, label, weight, grad);
}

template <class T>
std::size_t predict_class(std::span<const T> out) {
    if (out.size() == 1) return out[0] > T{0} ? 1 : 0;  // sigmoid(x) > 0.5
    return static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin());
}

}  // namespace sphbi::nn
