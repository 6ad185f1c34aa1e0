#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sphbi {

/// Input file or stream does not follow the expected layout.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid user configuration (ratios, flags, scenario files).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or image dimensions that cannot be satisfied.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A training or evaluation run could not complete.
class RunFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint16_t kModbusPort = 502;

// Label encoding is part of the record file format; do not reorder.
enum class TrafficClass : std::uint8_t {
    Normal = 0,
    BruteForce = 1,
    QueryFlooding = 2,
    Replay = 3,
    FrameStacking = 4,
    PayloadInjection = 5,
    Recon = 6,
    FDI = 7,
    LengthManip = 8,
};

inline constexpr std::size_t kNumClasses = 9;

inline constexpr std::array<TrafficClass, kNumClasses> kAllClasses = {
    TrafficClass::Normal,        TrafficClass::BruteForce,       TrafficClass::QueryFlooding,
    TrafficClass::Replay,        TrafficClass::FrameStacking,    TrafficClass::PayloadInjection,
    TrafficClass::Recon,         TrafficClass::FDI,              TrafficClass::LengthManip,
};

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "Normal", "BruteForce", "QueryFlooding", "Replay", "FrameStacking",
    "PayloadInjection", "Recon", "FDI", "LengthManip",
};

enum class BinaryLabel : std::uint8_t { Normal = 0, Attack = 1 };

inline constexpr std::size_t index_of(TrafficClass c) { return static_cast<std::size_t>(c); }

inline constexpr std::string_view class_name(TrafficClass c) { return kClassNames[index_of(c)]; }

inline constexpr BinaryLabel to_binary(TrafficClass c) {
    return c == TrafficClass::Normal ? BinaryLabel::Normal : BinaryLabel::Attack;
}

/// Lower-cased alphanumerics only, so "Brute force", "brute_force" and
/// "BruteForce" compare equal.
inline std::string normalize_token(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char ch : s) {
        auto u = static_cast<unsigned char>(ch);
        if (std::isalnum(u)) out.push_back(static_cast<char>(std::tolower(u)));
    }
    return out;
}

inline std::optional<TrafficClass> parse_class(std::string_view s) {
    const std::string key = normalize_token(s);
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        if (normalize_token(kClassNames[i]) == key) return kAllClasses[i];
    }
    if (key == "reconnaissance") return TrafficClass::Recon;
    if (key == "falsedatainjection") return TrafficClass::FDI;
    if (key == "lengthmanipulation") return TrafficClass::LengthManip;
    if (key == "payloadinj") return TrafficClass::PayloadInjection;
    return std::nullopt;
}

namespace bytes {

inline std::uint16_t be16(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}

inline std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t at) {
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
           (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

template <class Out>
void put_be16(Out& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

template <class Out>
void put_be32(Out& out, std::uint32_t v) {
    put_be16(out, static_cast<std::uint16_t>(v >> 16));
    put_be16(out, static_cast<std::uint16_t>(v & 0xFFFF));
}

template <class Out, class UInt>
void put_le(Out& out, UInt v) {
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        out.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
    }
}

template <class UInt>
UInt get_le(std::span<const std::uint8_t> b, std::size_t at) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= std::uint64_t{b[at + i]} << (8 * i);
    return static_cast<UInt>(v);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::span<const std::uint8_t> data,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (auto c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()), h);
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

}  // namespace bytes
}  // namespace sphbi
