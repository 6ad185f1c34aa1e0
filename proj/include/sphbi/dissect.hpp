#pragma once

// Ethernet / IPv4 / TCP / Modbus-TCP dissection of a single captured frame.
// Stateless: no flow tracking and no cross-segment reassembly.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "sphbi/core.hpp"
#include "sphbi/pcap.hpp"

namespace sphbi {

inline constexpr std::size_t kEthHeaderLen = 14;
inline constexpr std::size_t kIpv4MinHeaderLen = 20;
inline constexpr std::size_t kTcpMinHeaderLen = 20;
inline constexpr std::size_t kMbapHeaderLen = 7;

/// Decoded protocol fields of one Modbus TCP packet. Multi-byte values are
/// host-order integers.
struct PacketFields {
    std::uint8_t ip_version_ihl = 0x45;
    std::uint8_t ip_dscp_ecn = 0;
    std::uint16_t ip_total_len = 0;
    std::uint16_t ip_id = 0;
    std::uint16_t ip_flags_fragoff = 0;
    std::uint8_t ip_ttl = 0;
    std::uint8_t ip_protocol = 6;
    std::uint16_t tcp_src_port = 0;
    std::uint16_t tcp_dst_port = 0;
    std::uint32_t tcp_seq = 0;
    std::uint32_t tcp_ack = 0;
    std::uint16_t tcp_offset_flags = 0;
    std::uint16_t tcp_window = 0;
    std::uint16_t mbap_transaction_id = 0;
    std::uint16_t mbap_protocol_id = 0;
    std::uint16_t mbap_length = 0;
    std::uint8_t mbap_unit_id = 0;
    std::uint8_t func_code = 0;
    std::vector<std::uint8_t> pdu_bytes;  // first frame's PDU after the function code
    std::uint32_t frame_count = 0;
    std::optional<std::uint8_t> byte_cnt;
    std::uint64_t capture_ts = 0;

    bool is_response() const { return tcp_src_port == kModbusPort && tcp_dst_port != kModbusPort; }

    friend bool operator==(const PacketFields&, const PacketFields&) = default;
};

enum class SkipReason : std::uint8_t {
    NonIp,
    NonTcp,
    NonModbusPort,
    NoMbapPayload,
    IpOptions,
    Malformed,
};

inline constexpr std::array<std::string_view, 6> kSkipReasonNames = {
    "non_ip", "non_tcp", "non_502", "no_mbap_payload", "ip_options", "malformed",
};

inline constexpr std::string_view skip_reason_name(SkipReason r) {
    return kSkipReasonNames[static_cast<std::size_t>(r)];
}

using DissectResult = std::variant<PacketFields, SkipReason>;

/// Location of the first Modbus frame inside a dissected Ethernet frame.
struct FrameOffsets {
    std::size_t ip = kEthHeaderLen;
    std::size_t tcp = 0;
    std::size_t payload = 0;
    std::size_t payload_len = 0;
};

namespace detail {

// Function codes whose byte-count field sits at a known PDU offset.
inline std::optional<std::uint8_t> byte_count_field(std::uint8_t fc, bool response,
                                                    std::span<const std::uint8_t> pdu) {
    if (response) {
        switch (fc) {
            case 1: case 2: case 3: case 4: case 23:
                if (!pdu.empty()) return pdu[0];
                break;
            default:
                break;
        }
        return std::nullopt;
    }
    switch (fc) {
        case 15: case 16:
            if (pdu.size() >= 5) return pdu[4];
            break;
        case 23:
            if (pdu.size() >= 9) return pdu[8];
            break;
        default:
            break;
    }
    return std::nullopt;
}

/// Walks MBAP length fields; returns the number of complete frames.
/// A partial trailing frame is ignored.
inline std::uint32_t count_mbap_frames(std::span<const std::uint8_t> payload) {
    std::uint32_t frames = 0;
    std::size_t pos = 0;
    while (payload.size() - pos >= kMbapHeaderLen + 1) {
        const std::uint16_t len = bytes::be16(payload, pos + 4);
        if (len < 2) break;
        const std::size_t frame = 6 + std::size_t{len};
        if (frame > payload.size() - pos) break;
        ++frames;
        pos += frame;
    }
    return frames;
}

}  // namespace detail

/// Validates the frame down to the TCP payload. Shared by dissect() and the
/// raw-slice reconstruction path.
inline std::variant<FrameOffsets, SkipReason> locate_payload(std::span<const std::uint8_t> f) {
    if (f.size() < kEthHeaderLen) return SkipReason::Malformed;
    if (bytes::be16(f, 12) != 0x0800) return SkipReason::NonIp;
    FrameOffsets o;
    if (f.size() < o.ip + kIpv4MinHeaderLen) return SkipReason::Malformed;
    const std::uint8_t ver_ihl = f[o.ip];
    if ((ver_ihl >> 4) != 4) return SkipReason::NonIp;
    const std::size_t ihl = std::size_t{ver_ihl & 0x0Fu} * 4;
    if (ihl < kIpv4MinHeaderLen) return SkipReason::Malformed;
    const std::size_t total = bytes::be16(f, o.ip + 2);
    if (total > f.size() - o.ip || total < ihl) return SkipReason::Malformed;
    if (f[o.ip + 9] != 6) return SkipReason::NonTcp;
    if (ihl != kIpv4MinHeaderLen) return SkipReason::IpOptions;
    // Fragments cannot be dissected without reassembly.
    if ((bytes::be16(f, o.ip + 6) & 0x3FFF) != 0) return SkipReason::Malformed;
    o.tcp = o.ip + ihl;
    if (total - ihl < kTcpMinHeaderLen) return SkipReason::Malformed;
    const std::size_t thl = static_cast<std::size_t>(f[o.tcp + 12] >> 4) * 4;
    if (thl < kTcpMinHeaderLen || thl > total - ihl) return SkipReason::Malformed;
    if (bytes::be16(f, o.tcp) != kModbusPort && bytes::be16(f, o.tcp + 2) != kModbusPort) {
        return SkipReason::NonModbusPort;
    }
    o.payload = o.tcp + thl;
    o.payload_len = total - ihl - thl;
    if (o.payload_len < kMbapHeaderLen + 1) return SkipReason::NoMbapPayload;
    const std::uint16_t mlen = bytes::be16(f, o.payload + 4);
    if (mlen < 2 || 6 + std::size_t{mlen} > o.payload_len) return SkipReason::Malformed;
    return o;
}

/// Never throws on arbitrary input: every failure is a SkipReason.
inline DissectResult dissect(const RawPacket& pkt) {
    std::span<const std::uint8_t> f = pkt.link_bytes;
    auto loc = locate_payload(f);
    if (auto* r = std::get_if<SkipReason>(&loc)) return *r;
    const auto& o = std::get<FrameOffsets>(loc);
    const std::size_t ip = o.ip, tcp = o.tcp, pl = o.payload;

    PacketFields p;
    p.ip_version_ihl = f[ip];
    p.ip_dscp_ecn = f[ip + 1];
    p.ip_total_len = bytes::be16(f, ip + 2);
    p.ip_id = bytes::be16(f, ip + 4);
    p.ip_flags_fragoff = bytes::be16(f, ip + 6);
    p.ip_ttl = f[ip + 8];
    p.ip_protocol = f[ip + 9];
    p.tcp_src_port = bytes::be16(f, tcp);
    p.tcp_dst_port = bytes::be16(f, tcp + 2);
    p.tcp_seq = bytes::be32(f, tcp + 4);
    p.tcp_ack = bytes::be32(f, tcp + 8);
    p.tcp_offset_flags = bytes::be16(f, tcp + 12);
    p.tcp_window = bytes::be16(f, tcp + 14);
    p.mbap_transaction_id = bytes::be16(f, pl);
    p.mbap_protocol_id = bytes::be16(f, pl + 2);
    p.mbap_length = bytes::be16(f, pl + 4);
    p.mbap_unit_id = f[pl + 6];
    p.func_code = f[pl + 7];
    const std::size_t pdu_len = std::size_t{p.mbap_length} - 2;
    p.pdu_bytes.assign(f.begin() + static_cast<std::ptrdiff_t>(pl + 8),
                       f.begin() + static_cast<std::ptrdiff_t>(pl + 8 + pdu_len));
    p.frame_count = detail::count_mbap_frames(f.subspan(pl, o.payload_len));
    p.byte_cnt = detail::byte_count_field(p.func_code, p.is_response(), p.pdu_bytes);
    p.capture_ts = pkt.capture_ts;
    return p;
}

}  // namespace sphbi
