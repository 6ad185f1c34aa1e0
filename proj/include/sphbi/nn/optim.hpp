#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "sphbi/core.hpp"

namespace sphbi::nn {

enum class OptimizerKind : std::uint8_t { Sgd, Adam };

inline std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Sgd;
    double lr = 0.01;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <class T>
class Optimizer {
public:
    Optimizer(OptimizerConfig cfg, std::size_t n) : cfg_(cfg), m_(n, T{0}) {
        if (!(cfg.lr > 0.0)) throw ConfigError("learning rate must be positive");
        if (cfg.kind == OptimizerKind::Adam) v_.assign(n, T{0});
    }

    const OptimizerConfig& config() const { return cfg_; }
    std::uint64_t steps() const { return t_; }

    void step(std::span<T> params, std::span<const T> grads) {
        if (params.size() != m_.size() || grads.size() != m_.size()) throw ShapeError("optimizer: size mismatch");
        ++t_;
        const T lr = static_cast<T>(cfg_.lr);
        if (cfg_.kind == OptimizerKind::Sgd) {
            // v = mu*v + g; p -= lr*v
            const T mu = static_cast<T>(cfg_.momentum);
            for (std::size_t i = 0; i < params.size(); ++i) {
                m_[i] = mu * m_[i] + grads[i];
                params[i] -= lr * m_[i];
            }
            return;
        }
        const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2), eps = static_cast<T>(cfg_.eps);
        const T c1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
        const T c2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const T g = grads[i];
            m_[i] = b1 * m_[i] + (T{1} - b1) * g;
            v_[i] = b2 * v_[i] + (T{1} - b2) * g * g;
            params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
        }
    }

private:
    OptimizerConfig cfg_;
    std::vector<T> m_, v_;
    std::uint64_t t_ = 0;
};

}  // namespace sphbi::nn
