#pragma once

// 30-byte packet layout, per-approach byte selection and binary image
// encoding.
//
// Layout (network byte order for multi-byte fields):
//   0  ip version/IHL      1  ip DSCP/ECN        2-3  ip total length
//   4-5 ip id              6-7 ip flags/fragoff  8    ip TTL
//   9  ip protocol         10-11 tcp src port    12-13 tcp dst port
//   14-15 tcp offset/flags 16-17 tcp window
//   18-19 MBAP txid        20-21 MBAP proto id   22-23 MBAP length
//   24 MBAP unit id        25 function code      26-29 PDU operands
// Addresses, checksums and sequence numbers are left out.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sphbi/core.hpp"
#include "sphbi/dissect.hpp"

namespace sphbi {

inline constexpr std::size_t kVectorBytes = 30;
using ByteVector30 = std::array<std::uint8_t, kVectorBytes>;

namespace layout {
inline constexpr std::size_t kVersionIhl = 0;
inline constexpr std::size_t kTotalLen = 2;
inline constexpr std::size_t kIpId = 4;
inline constexpr std::size_t kProtocol = 9;
inline constexpr std::size_t kSrcPort = 10;
inline constexpr std::size_t kDstPort = 12;
inline constexpr std::size_t kOffsetFlags = 14;
inline constexpr std::size_t kMbapStart = 18;
inline constexpr std::size_t kMbapLength = 22;
inline constexpr std::size_t kFuncCode = 25;
inline constexpr std::size_t kPduStart = 26;
inline constexpr std::size_t kPduOperands = 4;
}  // namespace layout

enum class ApproachId : std::uint8_t { A1, A2, A2b, A3, A3b };

struct Approach {
    ApproachId id;
    std::string_view name;
    std::string_view layers;
    std::size_t first;
    std::size_t count;
    std::size_t height;
    std::size_t width;
};

inline constexpr std::array<Approach, 5> kApproaches = {{
    {ApproachId::A1, "1", "TCP/IP only", 0, 18, 12, 12},
    {ApproachId::A2, "2", "TCP/IP+MBAP+FC", 0, 26, 16, 13},
    {ApproachId::A2b, "2b", "TCP/IP+MBAP+FC+PDU", 0, 30, 16, 15},
    {ApproachId::A3, "3", "App. layer only", 18, 8, 8, 8},
    {ApproachId::A3b, "3b", "App. layer+PDU", 18, 12, 12, 8},
}};

static_assert([] {
    for (const auto& a : kApproaches) {
        if (a.height * a.width != 8 * a.count || a.first + a.count > kVectorBytes) return false;
    }
    return true;
}());

inline constexpr const Approach& approach(ApproachId id) {
    return kApproaches[static_cast<std::size_t>(id)];
}

inline std::optional<ApproachId> parse_approach(std::string_view s) {
    for (const auto& a : kApproaches) {
        if (a.name == s) return a.id;
    }
    return std::nullopt;
}

/// Field values the way a packet dissector reports them (header lengths in
/// bytes, flags split out), as opposed to the raw header octets.
struct DecodedFields {
    unsigned ip_version = 4;
    unsigned ip_hdr_len = 20;  // bytes
    unsigned ip_dsfield = 0;
    unsigned ip_len = 0;
    unsigned ip_id = 0;
    unsigned ip_flags = 0;  // 3-bit value: reserved, DF, MF
    unsigned ip_frag_offset = 0;  // in 8-byte units
    unsigned ip_ttl = 0;
    unsigned ip_proto = 6;
    unsigned tcp_srcport = 0;
    unsigned tcp_dstport = 0;
    std::uint32_t tcp_seq = 0;
    std::uint32_t tcp_ack = 0;
    unsigned tcp_hdr_len = 20;  // bytes
    unsigned tcp_flags = 0;  // 12 bits: reserved + NS .. FIN
    unsigned tcp_window_size_value = 0;
    unsigned mbtcp_trans_id = 0;
    unsigned mbtcp_prot_id = 0;
    unsigned mbtcp_len = 0;
    unsigned mbtcp_unit_id = 0;
    unsigned modbus_func_code = 0;
    std::vector<std::uint8_t> modbus_data;
    std::uint32_t frame_count = 1;
    std::optional<std::uint8_t> byte_cnt;
    std::uint64_t capture_ts = 0;
};

/// Folds dissector-decoded values back into header octets.
inline PacketFields from_decoded(const DecodedFields& d) {
    PacketFields p;
    p.ip_version_ihl = static_cast<std::uint8_t>(((d.ip_version & 0x0F) << 4) | ((d.ip_hdr_len >> 2) & 0x0F));
    p.ip_dscp_ecn = static_cast<std::uint8_t>(d.ip_dsfield & 0xFF);
    p.ip_total_len = static_cast<std::uint16_t>(d.ip_len);
    p.ip_id = static_cast<std::uint16_t>(d.ip_id);
    p.ip_flags_fragoff = static_cast<std::uint16_t>(((d.ip_flags & 0x7) << 13) | (d.ip_frag_offset & 0x1FFF));
    p.ip_ttl = static_cast<std::uint8_t>(d.ip_ttl);
    p.ip_protocol = static_cast<std::uint8_t>(d.ip_proto);
    p.tcp_src_port = static_cast<std::uint16_t>(d.tcp_srcport);
    p.tcp_dst_port = static_cast<std::uint16_t>(d.tcp_dstport);
    p.tcp_seq = d.tcp_seq;
    p.tcp_ack = d.tcp_ack;
    p.tcp_offset_flags = static_cast<std::uint16_t>((((d.tcp_hdr_len >> 2) & 0x0F) << 12) | (d.tcp_flags & 0x0FFF));
    p.tcp_window = static_cast<std::uint16_t>(d.tcp_window_size_value);
    p.mbap_transaction_id = static_cast<std::uint16_t>(d.mbtcp_trans_id);
    p.mbap_protocol_id = static_cast<std::uint16_t>(d.mbtcp_prot_id);
    p.mbap_length = static_cast<std::uint16_t>(d.mbtcp_len);
    p.mbap_unit_id = static_cast<std::uint8_t>(d.mbtcp_unit_id);
    p.func_code = static_cast<std::uint8_t>(d.modbus_func_code);
    p.pdu_bytes = d.modbus_data;
    p.frame_count = d.frame_count;
    p.byte_cnt = d.byte_cnt;
    p.capture_ts = d.capture_ts;
    return p;
}

inline ByteVector30 reconstruct(const PacketFields& f) {
    ByteVector30 v{};
    auto split = [&v](std::size_t at, std::uint16_t x) {
        v[at] = static_cast<std::uint8_t>(x >> 8);
        v[at + 1] = static_cast<std::uint8_t>(x & 0xFF);
    };
    v[0] = f.ip_version_ihl;
    v[1] = f.ip_dscp_ecn;
    split(2, f.ip_total_len);
    split(4, f.ip_id);
    split(6, f.ip_flags_fragoff);
    v[8] = f.ip_ttl;
    v[9] = f.ip_protocol;
    split(10, f.tcp_src_port);
    split(12, f.tcp_dst_port);
    split(14, f.tcp_offset_flags);
    split(16, f.tcp_window);
    split(18, f.mbap_transaction_id);
    split(20, f.mbap_protocol_id);
    split(22, f.mbap_length);
    v[24] = f.mbap_unit_id;
    v[25] = f.func_code;
    const std::size_t n = std::min(f.pdu_bytes.size(), layout::kPduOperands);
    for (std::size_t i = 0; i < n; ++i) v[layout::kPduStart + i] = f.pdu_bytes[i];
    return v;
}

/// Same 30 bytes taken straight from the captured frame. Returns nullopt for
/// frames dissect() would skip.
inline std::optional<ByteVector30> slice_raw_frame(std::span<const std::uint8_t> frame) {
    auto loc = locate_payload(frame);
    if (std::holds_alternative<SkipReason>(loc)) return std::nullopt;
    const auto& o = std::get<FrameOffsets>(loc);
    ByteVector30 v{};
    std::copy_n(frame.begin() + static_cast<std::ptrdiff_t>(o.ip), 10, v.begin());
    std::copy_n(frame.begin() + static_cast<std::ptrdiff_t>(o.tcp), 4, v.begin() + 10);
    std::copy_n(frame.begin() + static_cast<std::ptrdiff_t>(o.tcp + 12), 4, v.begin() + 14);
    std::copy_n(frame.begin() + static_cast<std::ptrdiff_t>(o.payload), 8, v.begin() + 18);
    const std::size_t pdu_len = std::size_t{bytes::be16(frame, o.payload + 4)} - 2;
    const std::size_t n = std::min(pdu_len, layout::kPduOperands);
    std::copy_n(frame.begin() + static_cast<std::ptrdiff_t>(o.payload + 8), n, v.begin() + 26);
    return v;
}

inline std::span<const std::uint8_t> select(const ByteVector30& v, const Approach& a) {
    return std::span<const std::uint8_t>(v).subspan(a.first, a.count);
}

inline std::span<const std::uint8_t> select(const ByteVector30& v, ApproachId id) {
    return select(v, approach(id));
}

/// H x W grid of bits; bits are stored row-major.
struct BinaryImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> bits;

    std::uint8_t at(std::size_t r, std::size_t c) const { return bits[r * width + c]; }

    friend bool operator==(const BinaryImage&, const BinaryImage&) = default;
};

/// MSB-first per byte, bytes concatenated, reshaped row-major.
inline BinaryImage encode(std::span<const std::uint8_t> selected, const Approach& a) {
    if (selected.size() != a.count) {
        throw ContractError("encode: approach " + std::string(a.name) + " expects " +
                            std::to_string(a.count) + " bytes, got " + std::to_string(selected.size()));
    }
    BinaryImage img{a.height, a.width, std::vector<std::uint8_t>(a.height * a.width)};
    std::size_t k = 0;
    for (std::uint8_t b : selected) {
        for (int bit = 7; bit >= 0; --bit) img.bits[k++] = static_cast<std::uint8_t>((b >> bit) & 1u);
    }
    return img;
}

inline BinaryImage encode(std::span<const std::uint8_t> selected, ApproachId id) {
    return encode(selected, approach(id));
}

/// Inverse of encode().
inline std::vector<std::uint8_t> pack(const BinaryImage& img) {
    if (img.bits.size() % 8 != 0) throw ContractError("pack: bit count not a multiple of 8");
    std::vector<std::uint8_t> out(img.bits.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint8_t b = 0;
        for (std::size_t j = 0; j < 8; ++j) b = static_cast<std::uint8_t>((b << 1) | (img.bits[8 * i + j] & 1u));
        out[i] = b;
    }
    return out;
}

/// Writes the selected bits straight into a float buffer (0.0 / 1.0).
template <class T>
void encode_into(const ByteVector30& v, const Approach& a, std::span<T> out) {
    if (out.size() != a.height * a.width) throw ContractError("encode_into: buffer size mismatch");
    std::size_t k = 0;
    for (std::uint8_t b : select(v, a)) {
        for (int bit = 7; bit >= 0; --bit) out[k++] = static_cast<T>((b >> bit) & 1u);
    }
}

/// Text rendering with '#' for a set bit.
inline std::string render(const BinaryImage& img) {
    std::string s;
    for (std::size_t r = 0; r < img.height; ++r) {
        for (std::size_t c = 0; c < img.width; ++c) s.push_back(img.at(r, c) ? '#' : '.');
        s.push_back('\n');
    }
    return s;
}

}  // namespace sphbi
