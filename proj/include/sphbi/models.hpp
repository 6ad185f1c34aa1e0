#pragma once

// Model builders for both tasks and the checkpoint file.
//
// Checkpoint layout (little-endian):
//   "SPCK" | u16 version | u32 header length | JSON header | u64 param count | f32 params
// The JSON header echoes the model spec (task, approach, input shape, layers)
// plus training metadata (seed, epoch, val_loss) and free-form provenance.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sphbi/byte_codec.hpp"
#include "sphbi/core.hpp"
#include "sphbi/dataset.hpp"
#include "sphbi/nn/model.hpp"

namespace sphbi {

using nn::Activation;
using nn::LayerKind;
using nn::LayerSpec;
using nn::Shape3;

struct ModelSpec {
    Task task = Task::Multiclass;
    ApproachId approach = ApproachId::A2b;
    Shape3 input;
    std::vector<LayerSpec> layers;
    std::size_t param_count = 0;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Architecture knobs; defaults give the reference networks.
struct ArchOptions {
    std::optional<Activation> activation;  // overrides the task default
    bool batchnorm = false;                // ChannelNorm after every conv
    bool deep = false;                     // four conv layers (multiclass only)
};

inline std::size_t count_params(const Shape3& input, const std::vector<LayerSpec>& layers) {
    return nn::Model<float>(input, layers).param_count();
}

inline std::size_t count_params(const ModelSpec& s) { return count_params(s.input, s.layers); }

inline Shape3 image_shape(ApproachId id) {
    const auto& a = approach(id);
    return {1, a.height, a.width};
}

namespace detail {
inline void push_conv(std::vector<LayerSpec>& v, LayerSpec conv, Activation act, bool norm) {
    v.push_back(conv);
    if (norm) v.push_back(LayerSpec::channel_norm());
    v.push_back(LayerSpec::activation(act));
}
}  // namespace detail

inline ModelSpec build_multiclass(ApproachId id, const ArchOptions& opt = {}) {
    ModelSpec s;
    s.task = Task::Multiclass;
    s.approach = id;
    s.input = image_shape(id);
    const Activation act = opt.activation.value_or(Activation::Sigmoid);
    std::vector<LayerSpec> body;
    detail::push_conv(body, LayerSpec::conv(32, 3, 3, 1), act, opt.batchnorm);
    detail::push_conv(body, LayerSpec::conv(32, 2, 2), act, opt.batchnorm);
    if (opt.deep) {
        detail::push_conv(body, LayerSpec::conv(32, 3, 3, 1), act, opt.batchnorm);
        detail::push_conv(body, LayerSpec::conv(32, 2, 2), act, opt.batchnorm);
    }
    body.push_back(LayerSpec::maxpool(2, 1));
    body.push_back(LayerSpec::flatten());
    // Dense takes its input width from the shape propagated through the body.
    body.push_back(LayerSpec::dense(kNumClasses));
    s.layers = std::move(body);
    s.param_count = count_params(s);
    return s;
}

/// Kernel sizes adapt to the image: k1 = 3 when min(H, W) >= 10, else 2;
/// k2 = 3 when the first feature map is at least 6 on its short side, else 2.
inline ModelSpec build_binary(ApproachId id, const ArchOptions& opt = {}) {
    ModelSpec s;
    s.task = Task::Binary;
    s.approach = id;
    s.input = image_shape(id);
    const Activation act = opt.activation.value_or(Activation::Tanh);
    const std::size_t k1 = std::min(s.input.h, s.input.w) >= 10 ? 3 : 2;
    const std::size_t m1 = std::min(s.input.h, s.input.w) - k1 + 1;
    const std::size_t k2 = m1 >= 6 ? 3 : 2;
    const std::size_t m2h = s.input.h - k1 + 1 - k2 + 1, m2w = s.input.w - k1 + 1 - k2 + 1;
    if (m2h < 2 || m2w < 2) throw ShapeError("build_binary: feature map below pooling window");
    detail::push_conv(s.layers, LayerSpec::conv(1, k1, k1), act, opt.batchnorm);
    detail::push_conv(s.layers, LayerSpec::conv(1, k2, k2), act, opt.batchnorm);
    s.layers.push_back(LayerSpec::maxpool(2, 2));
    s.layers.push_back(LayerSpec::flatten());
    s.layers.push_back(LayerSpec::dense(1));
    s.param_count = count_params(s);
    if (s.param_count >= 100) throw ShapeError("build_binary: parameter budget exceeded");
    return s;
}

inline ModelSpec build_model(Task t, ApproachId id, const ArchOptions& opt = {}) {
    return t == Task::Binary ? build_binary(id, opt) : build_multiclass(id, opt);
}

template <class T = float>
nn::Model<T> instantiate(const ModelSpec& s) {
    return nn::Model<T>(s.input, s.layers);
}

// ---- checkpoint ----

inline constexpr std::array<char, 4> kCheckpointMagic = {'S', 'P', 'C', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelSpec spec;
    std::vector<float> params;
    std::uint64_t seed = 0;
    std::size_t epoch = 0;
    std::optional<double> val_loss;
    nlohmann::json meta = nlohmann::json::object();  // provenance: config hash, versions, ...

    nn::Model<float> model() const {
        auto m = instantiate<float>(spec);
        if (m.param_count() != params.size()) throw FormatError("checkpoint: parameter count does not match spec");
        std::copy(params.begin(), params.end(), m.params().begin());
        return m;
    }

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline std::string task_name(Task t) { return t == Task::Binary ? "binary" : "multiclass"; }

inline std::optional<Task> parse_task(std::string_view s) {
    if (s == "binary") return Task::Binary;
    if (s == "multiclass") return Task::Multiclass;
    return std::nullopt;
}

inline nlohmann::json layer_to_json(const LayerSpec& l) {
    nlohmann::json j;
    j["kind"] = std::string(nn::layer_kind_name(l.kind));
    switch (l.kind) {
        case LayerKind::Conv2d:
            j["out_channels"] = l.out_channels;
            j["kernel"] = {l.kernel_h, l.kernel_w};
            j["pad"] = l.pad;
            break;
        case LayerKind::MaxPool:
            j["pool"] = l.pool;
            j["stride"] = l.stride;
            break;
        case LayerKind::Activation: j["fn"] = std::string(nn::activation_name(l.act)); break;
        case LayerKind::Dense: j["units"] = l.units; break;
        case LayerKind::Flatten:
        case LayerKind::ChannelNorm: break;
    }
    return j;
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "conv2d") {
        const auto k = j.at("kernel");
        return LayerSpec::conv(j.at("out_channels").get<std::size_t>(), k.at(0).get<std::size_t>(),
                               k.at(1).get<std::size_t>(), j.at("pad").get<std::size_t>());
    }
    if (kind == "maxpool") return LayerSpec::maxpool(j.at("pool").get<std::size_t>(), j.at("stride").get<std::size_t>());
    if (kind == "activation") {
        const auto fn = j.at("fn").get<std::string>();
        if (fn != "tanh" && fn != "sigmoid") throw FormatError("checkpoint: unknown activation " + fn);
        return LayerSpec::activation(fn == "tanh" ? Activation::Tanh : Activation::Sigmoid);
    }
    if (kind == "flatten") return LayerSpec::flatten();
    if (kind == "dense") return LayerSpec::dense(j.at("units").get<std::size_t>());
    if (kind == "channelnorm") return LayerSpec::channel_norm();
    throw FormatError("checkpoint: unknown layer kind " + kind);
}

inline nlohmann::json spec_to_json(const ModelSpec& s) {
    nlohmann::json j;
    j["task"] = task_name(s.task);
    j["approach"] = std::string(approach(s.approach).name);
    j["input"] = {s.input.c, s.input.h, s.input.w};
    j["layers"] = nlohmann::json::array();
    for (const auto& l : s.layers) j["layers"].push_back(layer_to_json(l));
    j["param_count"] = s.param_count;
    return j;
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
    ModelSpec s;
    const auto task = parse_task(j.at("task").get<std::string>());
    const auto ap = parse_approach(j.at("approach").get<std::string>());
    if (!task || !ap) throw FormatError("checkpoint: bad task or approach");
    s.task = *task;
    s.approach = *ap;
    const auto in = j.at("input");
    s.input = {in.at(0).get<std::size_t>(), in.at(1).get<std::size_t>(), in.at(2).get<std::size_t>()};
    for (const auto& l : j.at("layers")) s.layers.push_back(layer_from_json(l));
    s.param_count = count_params(s);
    if (j.at("param_count").get<std::size_t>() != s.param_count) {
        throw FormatError("checkpoint: declared parameter count disagrees with layers");
    }
    return s;
}

inline void save_checkpoint(std::ostream& out, const Checkpoint& ck) {
    if (ck.params.size() != ck.spec.param_count) throw ContractError("save_checkpoint: parameter count mismatch");
    nlohmann::json h;
    h["spec"] = spec_to_json(ck.spec);
    h["seed"] = ck.seed;
    h["epoch"] = ck.epoch;
    h["val_loss"] = ck.val_loss ? nlohmann::json(*ck.val_loss) : nlohmann::json(nullptr);
    h["meta"] = ck.meta;
    const std::string header = h.dump();
    std::vector<std::uint8_t> buf(kCheckpointMagic.begin(), kCheckpointMagic.end());
    bytes::put_le(buf, kCheckpointVersion);
    bytes::put_le(buf, static_cast<std::uint32_t>(header.size()));
    buf.insert(buf.end(), header.begin(), header.end());
    bytes::put_le(buf, static_cast<std::uint64_t>(ck.params.size()));
    for (float f : ck.params) {
        std::uint32_t u = 0;
        std::memcpy(&u, &f, sizeof u);
        bytes::put_le(buf, u);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("checkpoint: write failed");
}

inline Checkpoint load_checkpoint(std::istream& in) {
    std::array<std::uint8_t, 10> pre{};
    in.read(reinterpret_cast<char*>(pre.data()), pre.size());
    if (in.gcount() != static_cast<std::streamsize>(pre.size())) throw FormatError("checkpoint: truncated header");
    if (!std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), pre.begin())) {
        throw FormatError("checkpoint: bad magic");
    }
    const auto version = bytes::get_le<std::uint16_t>(pre, 4);
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint: version " + std::to_string(version) + " not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    const auto hlen = bytes::get_le<std::uint32_t>(pre, 6);
    std::string header(hlen, '\0');
    in.read(header.data(), hlen);
    if (in.gcount() != static_cast<std::streamsize>(hlen)) throw FormatError("checkpoint: truncated JSON header");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: bad JSON header: ") + e.what());
    }
    Checkpoint ck;
    try {
        ck.spec = spec_from_json(h.at("spec"));
        ck.seed = h.at("seed").get<std::uint64_t>();
        ck.epoch = h.at("epoch").get<std::size_t>();
        if (!h.at("val_loss").is_null()) ck.val_loss = h.at("val_loss").get<double>();
        ck.meta = h.value("meta", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: bad header field: ") + e.what());
    } catch (const ShapeError& e) {
        throw FormatError(std::string("checkpoint: bad architecture: ") + e.what());
    }
    std::array<std::uint8_t, 8> cnt{};
    in.read(reinterpret_cast<char*>(cnt.data()), cnt.size());
    if (in.gcount() != 8) throw FormatError("checkpoint: truncated parameter count");
    const auto n = bytes::get_le<std::uint64_t>(cnt, 0);
    if (n != ck.spec.param_count) throw FormatError("checkpoint: parameter count disagrees with spec");
    std::vector<std::uint8_t> raw(n * 4);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw FormatError("checkpoint: truncated parameters");
    ck.params.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto u = bytes::get_le<std::uint32_t>(raw, 4 * i);
        std::memcpy(&ck.params[i], &u, sizeof u);
    }
    return ck;
}

inline void save_checkpoint_file(const std::filesystem::path& p, const Checkpoint& ck) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw FormatError("checkpoint: cannot create " + p.string());
    save_checkpoint(out, ck);
}

inline Checkpoint load_checkpoint_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw FormatError("checkpoint: cannot open " + p.string());
    return load_checkpoint(in);
}

}  // namespace sphbi
