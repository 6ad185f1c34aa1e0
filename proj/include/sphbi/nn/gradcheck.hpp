#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "sphbi/nn/loss.hpp"
#include "sphbi/nn/model.hpp"

namespace sphbi::nn {

struct GradCheckOptions {
    double rel_step = 1e-4;  // h = rel_step * max(1, |x|), applied in double precision
    double floor = 1e-4;     // lower bound on the relative-error denominator (absolute / relative tolerance)
    bool check_input = true;
    // Upper bound on coordinates checked per parameter slice (weights or bias of
    // one layer) and for the input; 0 checks everything. Coordinates are
    // evenly spaced and always include the first and last.
    std::size_t max_per_slice = 0;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    bool worst_is_input = false;
    std::size_t checked = 0;
    // Coordinates whose perturbation moved a max-pool selection; the loss is
    // not differentiable there, so they are not compared.
    std::size_t kinks = 0;
};

namespace detail {
inline std::vector<std::size_t> spread(std::size_t begin, std::size_t count, std::size_t limit) {
    std::vector<std::size_t> idx;
    if (count == 0) return idx;
    if (limit == 0 || count <= limit) {
        for (std::size_t i = 0; i < count; ++i) idx.push_back(begin + i);
        return idx;
    }
    for (std::size_t j = 0; j < limit; ++j) idx.push_back(begin + j * (count - 1) / (limit - 1));
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    return idx;
}
}  // namespace detail

/// Compares the analytic gradient of the sample loss (computed in T) with a
/// central difference taken on a double-precision copy of the model.
template <class T>
GradCheckResult grad_check(const Model<T>& model, std::span<const T> input, std::size_t label, double weight = 1.0,
                           GradCheckOptions opt = {}) {
    auto ws = model.make_workspace();
    auto out = model.forward(input, ws);
    std::vector<T> gout(out.size());
    sample_loss<T>(out, label, static_cast<T>(weight), gout);
    std::vector<T> gp(model.param_count(), T{0});
    std::vector<T> gin(input.size(), T{0});
    model.backward(gout, ws, gp, opt.check_input ? std::span<T>(gin) : std::span<T>{});

    Model<double> shadow = model.template cast<double>();
    std::vector<double> x(input.begin(), input.end());
    auto sws = shadow.make_workspace();
    std::vector<double> scratch(shadow.output_size());
    shadow.forward(x, sws);
    const auto base_argmax = sws.argmax;
    bool moved = false;
    auto loss_at = [&]() {
        auto o = shadow.forward(x, sws);
        const double l = sample_loss<double>(o, label, weight, scratch);
        if (sws.argmax != base_argmax) moved = true;
        return l;
    };

    GradCheckResult res;
    auto compare = [&](double analytic, double numeric, std::size_t idx, bool is_input) {
        const double denom = std::max({std::abs(analytic), std::abs(numeric), opt.floor});
        const double err = std::abs(analytic - numeric) / denom;
        if (err > res.max_rel_error) {
            res.max_rel_error = err;
            res.worst_index = idx;
            res.worst_is_input = is_input;
        }
        ++res.checked;
    };
    auto probe = [&](double& slot, double analytic, std::size_t idx, bool is_input) {
        const double orig = slot;
        const double h = opt.rel_step * std::max(1.0, std::abs(orig));
        moved = false;
        slot = orig + h;
        const double up = loss_at();
        slot = orig - h;
        const double down = loss_at();
        slot = orig;
        if (moved) {
            ++res.kinks;
            return;
        }
        compare(analytic, (up - down) / (2.0 * h), idx, is_input);
    };

    auto sp = shadow.params();
    for (const auto& li : shadow.layers()) {
        for (auto i : detail::spread(li.w_offset, li.w_count, opt.max_per_slice)) {
            probe(sp[i], static_cast<double>(gp[i]), i, false);
        }
        for (auto i : detail::spread(li.b_offset, li.b_count, opt.max_per_slice)) {
            probe(sp[i], static_cast<double>(gp[i]), i, false);
        }
    }
    if (opt.check_input) {
        for (auto i : detail::spread(0, x.size(), opt.max_per_slice)) {
            probe(x[i], static_cast<double>(gin[i]), i, true);
        }
    }
    return res;
}

}  // namespace sphbi::nn
