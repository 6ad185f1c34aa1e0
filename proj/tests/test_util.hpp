#pragma once

// Byte-level builders for test frames and pcap files. Deliberately written
// without the library's own helpers so tests compare against an independent
// encoding.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testutil {

using Bytes = std::vector<std::uint8_t>;

inline void be16(Bytes& b, unsigned v) {
    b.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    b.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

inline void be32(Bytes& b, std::uint32_t v) {
    be16(b, v >> 16);
    be16(b, v & 0xFFFF);
}

inline void le16(Bytes& b, unsigned v) {
    b.push_back(static_cast<std::uint8_t>(v & 0xFF));
    b.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
}

inline void le32(Bytes& b, std::uint32_t v) {
    le16(b, v & 0xFFFF);
    le16(b, v >> 16);
}

/// One Modbus application data unit: MBAP header + function code + data.
/// `length` overrides the MBAP length field when non-negative.
inline Bytes adu(unsigned txid, unsigned unit, unsigned fc, const Bytes& data, int length = -1, unsigned proto = 0) {
    Bytes b;
    be16(b, txid);
    be16(b, proto);
    be16(b, length >= 0 ? static_cast<unsigned>(length) : static_cast<unsigned>(data.size() + 2));
    b.push_back(static_cast<std::uint8_t>(unit));
    b.push_back(static_cast<std::uint8_t>(fc));
    b.insert(b.end(), data.begin(), data.end());
    return b;
}

struct FrameSpec {
    unsigned ethertype = 0x0800;
    unsigned dscp = 0;
    unsigned ip_id = 0x1234;
    unsigned flags_frag = 0x4000;
    unsigned ttl = 64;
    unsigned protocol = 6;
    std::uint32_t src_ip = 0x0A00000A;
    std::uint32_t dst_ip = 0x0A000014;
    Bytes ip_options;  // multiple of 4 bytes
    unsigned src_port = 49152;
    unsigned dst_port = 502;
    std::uint32_t seq = 1000;
    std::uint32_t ack = 2000;
    unsigned tcp_flags = 0x018;  // PSH|ACK
    unsigned window = 64240;
    Bytes tcp_options;  // multiple of 4 bytes
    int total_len = -1;  // override of the IP total length
    Bytes payload;
};

/// Ethernet II + IPv4 + TCP frame built from the spec.
inline Bytes frame(const FrameSpec& s) {
    Bytes f = {0x02, 0, 0, 0, 0, 0x14, 0x02, 0, 0, 0, 0, 0x0a};
    be16(f, s.ethertype);
    const unsigned ihl = 5 + static_cast<unsigned>(s.ip_options.size() / 4);
    const unsigned thl = 5 + static_cast<unsigned>(s.tcp_options.size() / 4);
    const unsigned l4 = s.protocol == 17 ? 8 : thl * 4;
    const unsigned total =
        s.total_len >= 0 ? static_cast<unsigned>(s.total_len) : ihl * 4 + l4 + static_cast<unsigned>(s.payload.size());
    f.push_back(static_cast<std::uint8_t>(0x40 | ihl));
    f.push_back(static_cast<std::uint8_t>(s.dscp));
    be16(f, total);
    be16(f, s.ip_id);
    be16(f, s.flags_frag);
    f.push_back(static_cast<std::uint8_t>(s.ttl));
    f.push_back(static_cast<std::uint8_t>(s.protocol));
    be16(f, 0);  // checksum, not validated
    be32(f, s.src_ip);
    be32(f, s.dst_ip);
    f.insert(f.end(), s.ip_options.begin(), s.ip_options.end());
    if (s.protocol == 17) {
        be16(f, s.src_port);
        be16(f, s.dst_port);
        be16(f, 8 + static_cast<unsigned>(s.payload.size()));
        be16(f, 0);
    } else {
        be16(f, s.src_port);
        be16(f, s.dst_port);
        be32(f, s.seq);
        be32(f, s.ack);
        be16(f, (thl << 12) | (s.tcp_flags & 0x0FFF));
        be16(f, s.window);
        be16(f, 0);  // checksum
        be16(f, 0);  // urgent
        f.insert(f.end(), s.tcp_options.begin(), s.tcp_options.end());
    }
    f.insert(f.end(), s.payload.begin(), s.payload.end());
    return f;
}

/// The read-holding-registers request used across several tests:
/// txid 1, unit 1, fc 3, start 0, quantity 10.
inline Bytes read_request_frame() {
    FrameSpec s;
    s.payload = adu(1, 1, 3, {0x00, 0x00, 0x00, 0x0A});
    return frame(s);
}

struct PcapRecord {
    std::uint32_t sec = 0;
    std::uint32_t subsec = 0;
    Bytes data;
    std::uint32_t orig_len = 0;  // 0: same as data size
};

/// Classic pcap file bytes. `big` writes every header field big-endian;
/// `nano` uses the nanosecond magic.
inline Bytes pcap_file(const std::vector<PcapRecord>& recs, bool big = false, bool nano = false,
                       std::uint32_t linktype = 1) {
    Bytes b;
    auto w32 = [&](std::uint32_t v) { big ? be32(b, v) : le32(b, v); };
    auto w16 = [&](unsigned v) { big ? be16(b, v) : le16(b, v); };
    w32(nano ? 0xa1b23c4d : 0xa1b2c3d4);
    w16(2);
    w16(4);
    w32(0);
    w32(0);
    w32(65535);
    w32(linktype);
    for (const auto& r : recs) {
        w32(r.sec);
        w32(r.subsec);
        w32(static_cast<std::uint32_t>(r.data.size()));
        w32(r.orig_len ? r.orig_len : static_cast<std::uint32_t>(r.data.size()));
        b.insert(b.end(), r.data.begin(), r.data.end());
    }
    return b;
}

inline std::string as_string(const Bytes& b) { return std::string(b.begin(), b.end()); }

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("sphbi_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline Bytes random_bytes(std::size_t n, std::mt19937_64& rng) {
    Bytes b(n);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng() & 0xFF);
    return b;
}

}  // namespace testutil
