#pragma once

// Classic libpcap capture files: reader and writer.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sphbi/core.hpp"

namespace sphbi {

struct RawPacket {
    std::uint64_t capture_ts = 0;  // microseconds since epoch
    std::vector<std::uint8_t> link_bytes;
    std::uint32_t orig_len = 0;

    friend bool operator==(const RawPacket&, const RawPacket&) = default;
};

enum class TimestampResolution { Micro, Nano };
enum class ByteOrder { Little, Big };

inline constexpr std::uint32_t kPcapMagicMicro = 0xa1b2c3d4;
inline constexpr std::uint32_t kPcapMagicNano = 0xa1b23c4d;
inline constexpr std::uint32_t kLinkTypeEthernet = 1;
inline constexpr std::size_t kPcapGlobalHeaderSize = 24;
inline constexpr std::size_t kPcapRecordHeaderSize = 16;
inline constexpr std::uint32_t kPcapMaxRecord = 256 * 1024;

struct PcapHeader {
    ByteOrder order = ByteOrder::Little;
    TimestampResolution resolution = TimestampResolution::Micro;
    std::uint16_t version_major = 2;
    std::uint16_t version_minor = 4;
    std::uint32_t snaplen = 65535;
    std::uint32_t linktype = kLinkTypeEthernet;
};

/// Streaming reader over a classic pcap file. Only Ethernet captures are
/// accepted; anything else is a file-level FormatError.
class PcapReader {
public:
    explicit PcapReader(std::istream& in) : in_(in) {
        std::array<std::uint8_t, kPcapGlobalHeaderSize> h{};
        if (!read_exact(h.data(), h.size())) {
            throw FormatError("pcap: file shorter than the 24-byte global header");
        }
        const std::uint32_t magic_le = bytes::get_le<std::uint32_t>(h, 0);
        const std::uint32_t magic_be = bytes::be32(h, 0);
        if (magic_le == kPcapMagicMicro || magic_le == kPcapMagicNano) {
            header_.order = ByteOrder::Little;
            header_.resolution = magic_le == kPcapMagicNano ? TimestampResolution::Nano
                                                            : TimestampResolution::Micro;
        } else if (magic_be == kPcapMagicMicro || magic_be == kPcapMagicNano) {
            header_.order = ByteOrder::Big;
            header_.resolution = magic_be == kPcapMagicNano ? TimestampResolution::Nano
                                                            : TimestampResolution::Micro;
        } else {
            throw FormatError("pcap: bad magic 0x" + bytes::hex64(magic_le).substr(8));
        }
        header_.version_major = static_cast<std::uint16_t>(u32_or_u16(h, 4, 2));
        header_.version_minor = static_cast<std::uint16_t>(u32_or_u16(h, 6, 2));
        header_.snaplen = u32_or_u16(h, 16, 4);
        header_.linktype = u32_or_u16(h, 20, 4);
        if (header_.linktype != kLinkTypeEthernet) {
            throw FormatError("pcap: unsupported link type " + std::to_string(header_.linktype) +
                              " (only Ethernet/1)");
        }
        offset_ = kPcapGlobalHeaderSize;
    }

    const PcapHeader& header() const { return header_; }

    /// Next record, or nullopt at a clean end of file.
    std::optional<RawPacket> next() {
        std::array<std::uint8_t, kPcapRecordHeaderSize> rh{};
        const auto got = read_some(rh.data(), rh.size());
        if (got == 0) return std::nullopt;
        if (got != rh.size()) {
            throw FormatError("pcap: truncated record header at byte offset " +
                              std::to_string(offset_));
        }
        const std::uint64_t ts_sec = u32_or_u16(rh, 0, 4);
        const std::uint64_t ts_sub = u32_or_u16(rh, 4, 4);
        const std::uint32_t incl = u32_or_u16(rh, 8, 4);
        const std::uint32_t orig = u32_or_u16(rh, 12, 4);
        if (incl > kPcapMaxRecord) {
            throw FormatError("pcap: implausible record length " + std::to_string(incl) +
                              " at byte offset " + std::to_string(offset_));
        }
        RawPacket pkt;
        pkt.capture_ts = ts_sec * 1'000'000ULL +
                         (header_.resolution == TimestampResolution::Nano ? ts_sub / 1000 : ts_sub);
        pkt.orig_len = orig;
        pkt.link_bytes.resize(incl);
        if (incl > 0 && !read_exact(pkt.link_bytes.data(), incl)) {
            throw FormatError("pcap: truncated record at byte offset " + std::to_string(offset_) +
                              " (declared " + std::to_string(incl) + " bytes)");
        }
        offset_ += kPcapRecordHeaderSize + incl;
        if (count_ > 0 && pkt.capture_ts < last_ts_) ++non_monotonic_;
        last_ts_ = pkt.capture_ts;
        ++count_;
        return pkt;
    }

    std::size_t records_read() const { return count_; }
    /// Records whose timestamp went backwards; reported, never fatal.
    std::size_t non_monotonic() const { return non_monotonic_; }

private:
    std::uint32_t u32_or_u16(std::span<const std::uint8_t> b, std::size_t at, std::size_t width) const {
        std::uint32_t v = 0;
        for (std::size_t i = 0; i < width; ++i) {
            const std::size_t idx = header_.order == ByteOrder::Little ? at + width - 1 - i : at + i;
            v = (v << 8) | b[idx];
        }
        return v;
    }

    std::size_t read_some(std::uint8_t* dst, std::size_t n) {
        in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        return static_cast<std::size_t>(in_.gcount());
    }

    bool read_exact(std::uint8_t* dst, std::size_t n) { return read_some(dst, n) == n; }

    std::istream& in_;
    PcapHeader header_;
    std::uint64_t offset_ = 0;
    std::uint64_t last_ts_ = 0;
    std::size_t count_ = 0;
    std::size_t non_monotonic_ = 0;
};

inline std::vector<RawPacket> read_pcap(std::istream& in) {
    PcapReader reader(in);
    std::vector<RawPacket> out;
    while (auto p = reader.next()) out.push_back(std::move(*p));
    return out;
}

inline std::vector<RawPacket> read_pcap_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("pcap: cannot open " + path.string());
    return read_pcap(in);
}

struct PcapWriteOptions {
    ByteOrder order = ByteOrder::Little;
    TimestampResolution resolution = TimestampResolution::Micro;
    std::uint32_t snaplen = 65535;
};

class PcapWriter {
public:
    explicit PcapWriter(std::ostream& out, PcapWriteOptions opts = {}) : out_(out), opts_(opts) {
        std::vector<std::uint8_t> h;
        put(h, opts_.resolution == TimestampResolution::Nano ? kPcapMagicNano : kPcapMagicMicro, 4);
        put(h, 2, 2);
        put(h, 4, 2);
        put(h, 0, 4);  // thiszone
        put(h, 0, 4);  // sigfigs
        put(h, opts_.snaplen, 4);
        put(h, kLinkTypeEthernet, 4);
        flush(h);
    }

    void write(const RawPacket& pkt) {
        std::vector<std::uint8_t> r;
        r.reserve(kPcapRecordHeaderSize + pkt.link_bytes.size());
        const std::uint64_t sec = pkt.capture_ts / 1'000'000ULL;
        const std::uint64_t usec = pkt.capture_ts % 1'000'000ULL;
        put(r, static_cast<std::uint32_t>(sec), 4);
        put(r, static_cast<std::uint32_t>(opts_.resolution == TimestampResolution::Nano ? usec * 1000 : usec), 4);
        const auto incl = static_cast<std::uint32_t>(pkt.link_bytes.size());
        put(r, incl, 4);
        put(r, pkt.orig_len != 0 ? pkt.orig_len : incl, 4);
        r.insert(r.end(), pkt.link_bytes.begin(), pkt.link_bytes.end());
        flush(r);
    }

private:
    void put(std::vector<std::uint8_t>& b, std::uint32_t v, std::size_t width) const {
        for (std::size_t i = 0; i < width; ++i) {
            const std::size_t shift = opts_.order == ByteOrder::Little ? 8 * i : 8 * (width - 1 - i);
            b.push_back(static_cast<std::uint8_t>((v >> shift) & 0xFF));
        }
    }

    void flush(const std::vector<std::uint8_t>& b) {
        out_.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    }

    std::ostream& out_;
    PcapWriteOptions opts_;
};

inline void write_pcap(std::ostream& out, std::span<const RawPacket> packets, PcapWriteOptions opts = {}) {
    PcapWriter w(out, opts);
    for (const auto& p : packets) w.write(p);
}

inline void write_pcap_file(const std::filesystem::path& path, std::span<const RawPacket> packets,
                            PcapWriteOptions opts = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("pcap: cannot create " + path.string());
    write_pcap(out, packets, opts);
}

}  // namespace sphbi
