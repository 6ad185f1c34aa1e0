#pragma once

// Per-packet labelling from attack-log windows plus protocol signatures.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sphbi/byte_codec.hpp"
#include "sphbi/core.hpp"
#include "sphbi/dissect.hpp"
#include "sphbi/record.hpp"

namespace sphbi {

enum class AttackType : std::uint8_t {
    BruteForce,
    FrameStacking,
    QueryFlooding,
    Recon,
    Replay,
    PayloadInjection,
    LengthManip,
    FDI,
    DelayResponse,
};

inline constexpr std::size_t kNumAttackTypes = 9;

inline constexpr std::array<std::string_view, kNumAttackTypes> kAttackTypeNames = {
    "BruteForce", "FrameStacking", "QueryFlooding", "Recon", "Replay",
    "PayloadInjection", "LengthManip", "FDI", "DelayResponse",
};

inline constexpr std::string_view attack_type_name(AttackType t) {
    return kAttackTypeNames[static_cast<std::size_t>(t)];
}

inline std::optional<AttackType> parse_attack_type(std::string_view s) {
    const std::string key = normalize_token(s);
    for (std::size_t i = 0; i < kNumAttackTypes; ++i) {
        if (normalize_token(kAttackTypeNames[i]) == key) return static_cast<AttackType>(i);
    }
    if (key == "reconnaissance") return AttackType::Recon;
    if (key == "falsedatainjection") return AttackType::FDI;
    if (key == "lengthmanipulation") return AttackType::LengthManip;
    if (key == "delay" || key == "delayedresponse") return AttackType::DelayResponse;
    return std::nullopt;
}

struct AttackWindow {
    std::uint64_t start_ts = 0;  // microseconds
    std::optional<std::uint64_t> end_ts;  // empty: no completion marker in the log
    AttackType attack_type = AttackType::BruteForce;
    std::string scenario;

    friend bool operator==(const AttackWindow&, const AttackWindow&) = default;
};

namespace detail {

inline std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            out.push_back(trim(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

}  // namespace detail

/// Epoch seconds (integer or fractional) or ISO-8601 with optional fraction
/// and zone suffix; returns microseconds since the epoch.
inline std::uint64_t parse_timestamp(std::string_view text) {
    const std::string s = detail::trim(text);
    if (s.empty()) throw FormatError("empty timestamp");
    const bool numeric = std::all_of(s.begin(), s.end(), [](char c) {
        return std::isdigit(static_cast<unsigned char>(c)) || c == '.';
    });
    if (numeric) {
        const auto dot = s.find('.');
        std::uint64_t sec = 0;
        const std::string whole = s.substr(0, dot);
        auto [p, ec] = std::from_chars(whole.data(), whole.data() + whole.size(), sec);
        if (ec != std::errc{} || p != whole.data() + whole.size()) throw FormatError("bad timestamp '" + s + "'");
        std::uint64_t us = 0;
        if (dot != std::string::npos) {
            std::string frac = s.substr(dot + 1);
            frac.resize(6, '0');
            for (char c : frac) {
                if (!std::isdigit(static_cast<unsigned char>(c))) throw FormatError("bad timestamp '" + s + "'");
                us = us * 10 + static_cast<std::uint64_t>(c - '0');
            }
        }
        return sec * 1'000'000ULL + us;
    }
    int Y = 0, M = 0, D = 0, h = 0, m = 0, sec = 0;
    char sep = 0;
    int consumed = 0;
    if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d%n", &Y, &M, &D, &sep, &h, &m, &sec, &consumed) < 7 ||
        (sep != 'T' && sep != ' ')) {
        throw FormatError("bad timestamp '" + s + "'");
    }
    auto i = static_cast<std::size_t>(consumed);
    std::uint64_t us = 0;
    if (i < s.size() && s[i] == '.') {
        ++i;
        int digits = 0;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
            if (digits < 6) us = us * 10 + static_cast<std::uint64_t>(s[i] - '0');
            ++digits;
            ++i;
        }
        for (; digits < 6; ++digits) us *= 10;
    }
    std::int64_t zone = 0;
    if (i < s.size()) {
        if (s[i] == 'Z') {
            ++i;
        } else if (s[i] == '+' || s[i] == '-') {
            const int sign = s[i] == '-' ? -1 : 1;
            int zh = 0, zm = 0;
            std::string rest = s.substr(i + 1);
            rest.erase(std::remove(rest.begin(), rest.end(), ':'), rest.end());
            if (rest.size() != 4 || std::sscanf(rest.c_str(), "%2d%2d", &zh, &zm) != 2) {
                throw FormatError("bad timestamp zone in '" + s + "'");
            }
            zone = sign * (zh * 3600 + zm * 60);
            i = s.size();
        }
    }
    if (i != s.size()) throw FormatError("bad timestamp '" + s + "'");
    const std::int64_t days = detail::days_from_civil(Y, static_cast<unsigned>(M), static_cast<unsigned>(D));
    const std::int64_t secs = days * 86400 + h * 3600 + m * 60 + sec - zone;
    if (secs < 0) throw FormatError("timestamp before epoch '" + s + "'");
    return static_cast<std::uint64_t>(secs) * 1'000'000ULL + us;
}

/// CSV `start_ts,end_ts,attack_type,scenario`; a header row is optional.
/// An empty end_ts marks a window whose completion marker is missing.
inline std::vector<AttackWindow> read_attack_log(std::istream& in) {
    std::vector<AttackWindow> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty() || line[0] == '#') continue;
        auto cols = detail::split_csv_line(line);
        if (lineno == 1 && normalize_token(cols[0]) == "startts") continue;
        if (cols.size() < 3) throw FormatError("attack log line " + std::to_string(lineno) + ": expected 4 columns");
        AttackWindow w;
        try {
            w.start_ts = parse_timestamp(cols[0]);
            if (!cols[1].empty()) w.end_ts = parse_timestamp(cols[1]);
        } catch (const FormatError& e) {
            throw FormatError("attack log line " + std::to_string(lineno) + ": " + e.what());
        }
        auto t = parse_attack_type(cols[2]);
        if (!t) throw FormatError("attack log line " + std::to_string(lineno) + ": unknown attack type '" + cols[2] + "'");
        w.attack_type = *t;
        if (cols.size() > 3) w.scenario = cols[3];
        if (w.end_ts && *w.end_ts < w.start_ts) {
            throw FormatError("attack log line " + std::to_string(lineno) + ": end before start");
        }
        out.push_back(std::move(w));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const AttackWindow& a, const AttackWindow& b) { return a.start_ts < b.start_ts; });
    return out;
}

inline void write_attack_log(std::ostream& out, std::span<const AttackWindow> windows) {
    out << "start_ts,end_ts,attack_type,scenario\n";
    auto fmt = [](std::uint64_t us) {
        std::ostringstream s;
        s << us / 1'000'000ULL << '.';
        const auto frac = std::to_string(us % 1'000'000ULL);
        s << std::string(6 - frac.size(), '0') << frac;
        return s.str();
    };
    for (const auto& w : windows) {
        out << fmt(w.start_ts) << ',' << (w.end_ts ? fmt(*w.end_ts) : std::string{}) << ','
            << attack_type_name(w.attack_type) << ',' << w.scenario << '\n';
    }
}

/// Canonical MBAP length values per function code, union of request and
/// response forms. Codes missing from the table are never judged anomalous.
class LengthTable {
public:
    struct Range {
        std::uint16_t lo, hi, step;
        bool contains(std::uint16_t v) const { return v >= lo && v <= hi && (v - lo) % step == 0; }
    };

    static LengthTable defaults() {
        LengthTable t;
        for (std::uint8_t fc : {1, 2}) t.allow(fc, {{6, 6, 1}, {4, 253, 1}});
        for (std::uint8_t fc : {3, 4}) t.allow(fc, {{6, 6, 1}, {5, 253, 2}});
        for (std::uint8_t fc : {5, 6}) t.allow(fc, {{6, 6, 1}});
        t.allow(15, {{6, 6, 1}, {8, 253, 1}});
        t.allow(16, {{6, 6, 1}, {9, 253, 2}});
        for (unsigned fc = 0x81; fc <= 0x90; ++fc) t.allow(static_cast<std::uint8_t>(fc), {{3, 3, 1}});
        return t;
    }

    /// JSON object: function code -> list of [v], [lo, hi] or [lo, hi, step].
    static LengthTable from_json(const nlohmann::json& j) {
        LengthTable t;
        if (!j.is_object()) throw ConfigError("length table: expected a JSON object");
        for (const auto& [key, ranges] : j.items()) {
            int fc = 0;
            try {
                fc = std::stoi(key);
            } catch (...) {
                throw ConfigError("length table: bad function code '" + key + "'");
            }
            if (fc < 0 || fc > 255) throw ConfigError("length table: function code out of range");
            std::vector<Range> rs;
            for (const auto& r : ranges) {
                if (!r.is_array() || r.empty() || r.size() > 3) throw ConfigError("length table: bad range for " + key);
                Range x{r[0].get<std::uint16_t>(), r[0].get<std::uint16_t>(), 1};
                if (r.size() >= 2) x.hi = r[1].get<std::uint16_t>();
                if (r.size() == 3) x.step = r[2].get<std::uint16_t>();
                if (x.hi < x.lo || x.step == 0) throw ConfigError("length table: bad range for " + key);
                rs.push_back(x);
            }
            t.allow(static_cast<std::uint8_t>(fc), rs);
        }
        return t;
    }

    nlohmann::json to_json() const {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [fc, ranges] : table_) {
            auto arr = nlohmann::json::array();
            for (const auto& r : ranges) arr.push_back({r.lo, r.hi, r.step});
            j[std::to_string(fc)] = arr;
        }
        return j;
    }

    void allow(std::uint8_t fc, std::vector<Range> ranges) {
        auto& v = table_[fc];
        v.insert(v.end(), ranges.begin(), ranges.end());
    }

    bool is_anomalous(std::uint8_t fc, std::uint16_t mbap_length) const {
        auto it = table_.find(fc);
        if (it == table_.end()) return false;
        return std::none_of(it->second.begin(), it->second.end(),
                            [&](const Range& r) { return r.contains(mbap_length); });
    }

private:
    std::map<std::uint8_t, std::vector<Range>> table_;
};

/// The handful of packet properties the labelling rules look at.
struct PacketSignature {
    std::uint8_t func_code = 0;
    std::uint16_t mbap_length = 0;
    std::optional<std::uint8_t> byte_cnt;
    std::uint32_t frame_count = 1;
    std::uint64_t ts = 0;

    friend bool operator==(const PacketSignature&, const PacketSignature&) = default;
};

inline PacketSignature signature_of(const PacketFields& f) {
    return {f.func_code, f.mbap_length, f.byte_cnt, f.frame_count, f.capture_ts};
}

/// Signature recovered from the 30 stored bytes. frame_count is 2 whenever the
/// TCP payload has room for at least one more minimal ADU after the first
/// frame, which reports the same "stacked or not" answer as dissect() unless
/// the trailing bytes are a partial frame. Byte counts located past the four
/// stored operand bytes (function codes 15/16/23 requests) are unavailable.
inline PacketSignature signature_of(const ByteVector30& v, std::uint64_t ts) {
    PacketSignature s;
    s.func_code = v[layout::kFuncCode];
    s.mbap_length = static_cast<std::uint16_t>((v[layout::kMbapLength] << 8) | v[layout::kMbapLength + 1]);
    s.ts = ts;
    const auto src = static_cast<std::uint16_t>((v[layout::kSrcPort] << 8) | v[layout::kSrcPort + 1]);
    const auto dst = static_cast<std::uint16_t>((v[layout::kDstPort] << 8) | v[layout::kDstPort + 1]);
    const bool response = src == kModbusPort && dst != kModbusPort;
    const std::size_t pdu_len = s.mbap_length >= 2 ? s.mbap_length - 2u : 0;
    std::array<std::uint8_t, 4> ops{v[26], v[27], v[28], v[29]};
    s.byte_cnt = detail::byte_count_field(s.func_code, response,
                                          std::span<const std::uint8_t>(ops).first(std::min<std::size_t>(pdu_len, 4)));
    const std::size_t total = (std::size_t{v[layout::kTotalLen]} << 8) | v[layout::kTotalLen + 1];
    const std::size_t ihl = std::size_t{v[layout::kVersionIhl] & 0x0Fu} * 4;
    const std::size_t thl = static_cast<std::size_t>(v[layout::kOffsetFlags] >> 4) * 4;
    const std::size_t first = 6 + std::size_t{s.mbap_length};
    if (total >= ihl + thl + first && total - ihl - thl - first >= kMbapHeaderLen + 1) s.frame_count = 2;
    return s;
}

/// Per-type sorted, merged intervals for fast membership queries.
class WindowIndex {
public:
    WindowIndex() = default;

    /// Windows without an end are closed at `close_open_at`.
    explicit WindowIndex(std::span<const AttackWindow> windows, std::uint64_t close_open_at = UINT64_MAX) {
        for (const auto& w : windows) {
            const std::uint64_t end = w.end_ts.value_or(std::max(close_open_at, w.start_ts));
            by_type_[static_cast<std::size_t>(w.attack_type)].push_back({w.start_ts, end});
        }
        for (auto& v : by_type_) {
            std::sort(v.begin(), v.end());
            std::vector<std::pair<std::uint64_t, std::uint64_t>> merged;
            for (const auto& iv : v) {
                if (!merged.empty() && iv.first <= merged.back().second) {
                    merged.back().second = std::max(merged.back().second, iv.second);
                } else {
                    merged.push_back(iv);
                }
            }
            v = std::move(merged);
        }
    }

    /// Closed interval test: start <= ts <= end.
    bool contains(AttackType t, std::uint64_t ts) const {
        const auto& v = by_type_[static_cast<std::size_t>(t)];
        auto it = std::upper_bound(v.begin(), v.end(), ts,
                                   [](std::uint64_t x, const auto& iv) { return x < iv.first; });
        if (it == v.begin()) return false;
        --it;
        return ts <= it->second;
    }

private:
    std::array<std::vector<std::pair<std::uint64_t, std::uint64_t>>, kNumAttackTypes> by_type_;
};

struct Label {
    TrafficClass multiclass = TrafficClass::Normal;
    BinaryLabel binary = BinaryLabel::Normal;

    friend bool operator==(const Label&, const Label&) = default;
};

inline constexpr std::uint8_t kFdiByteCount = 171;

/// Fixed priority: self-identifying signatures first, then window rules that
/// also need a signature, then plain window membership. DelayResponse windows
/// never produce a label.
inline Label label_packet(const PacketSignature& s, const WindowIndex& windows,
                          const LengthTable& lengths = LengthTable::defaults()) {
    auto make = [](TrafficClass c) { return Label{c, to_binary(c)}; };
    if (s.byte_cnt && *s.byte_cnt == kFdiByteCount) return make(TrafficClass::FDI);
    if (s.frame_count > 1) return make(TrafficClass::FrameStacking);
    if (s.func_code == 5 && windows.contains(AttackType::BruteForce, s.ts)) return make(TrafficClass::BruteForce);
    if (windows.contains(AttackType::LengthManip, s.ts) && lengths.is_anomalous(s.func_code, s.mbap_length)) {
        return make(TrafficClass::LengthManip);
    }
    if (windows.contains(AttackType::QueryFlooding, s.ts)) return make(TrafficClass::QueryFlooding);
    if (windows.contains(AttackType::Recon, s.ts)) return make(TrafficClass::Recon);
    if (windows.contains(AttackType::Replay, s.ts)) return make(TrafficClass::Replay);
    if (windows.contains(AttackType::PayloadInjection, s.ts)) return make(TrafficClass::PayloadInjection);
    return make(TrafficClass::Normal);
}

inline Label label_packet(const PacketFields& f, std::span<const AttackWindow> windows,
                          const LengthTable& lengths = LengthTable::defaults()) {
    return label_packet(signature_of(f), WindowIndex(windows), lengths);
}

struct LabelSummary {
    std::array<std::size_t, kNumClasses> counts{};
    std::size_t unclosed_windows = 0;
    std::size_t delay_response_windows = 0;

    std::size_t normal() const { return counts[0]; }
    std::size_t attack() const {
        std::size_t n = 0;
        for (std::size_t i = 1; i < kNumClasses; ++i) n += counts[i];
        return n;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        for (std::size_t i = 0; i < kNumClasses; ++i) j["counts"][std::string(kClassNames[i])] = counts[i];
        j["normal"] = normal();
        j["attack"] = attack();
        j["unclosed_windows"] = unclosed_windows;
        j["delay_response_windows"] = delay_response_windows;
        return j;
    }

    std::string table() const {
        std::ostringstream s;
        s << "class,packets\n";
        for (std::size_t i = 0; i < kNumClasses; ++i) s << kClassNames[i] << ',' << counts[i] << '\n';
        s << "Total Normal," << normal() << "\nTotal Attack," << attack() << '\n';
        return s.str();
    }
};

/// Labels every record in place. Windows without an end marker are closed at
/// the last record timestamp.
inline LabelSummary label_corpus(std::span<LabeledRecord> records, std::span<const AttackWindow> windows,
                                 const LengthTable& lengths = LengthTable::defaults()) {
    LabelSummary sum;
    std::uint64_t last = 0;
    for (const auto& r : records) last = std::max(last, r.timestamp_us);
    for (const auto& w : windows) {
        if (!w.end_ts) ++sum.unclosed_windows;
        if (w.attack_type == AttackType::DelayResponse) ++sum.delay_response_windows;
    }
    const WindowIndex index(windows, last);
    for (auto& r : records) {
        const Label l = label_packet(signature_of(r.bytes, r.timestamp_us), index, lengths);
        r.label = l.multiclass;
        ++sum.counts[index_of(l.multiclass)];
    }
    return sum;
}

struct OffsetGrid {
    std::int64_t min_us = -86'400LL * 1'000'000;
    std::int64_t max_us = 86'400LL * 1'000'000;
    std::int64_t step_us = 1'000'000;
};

struct OffsetReport {
    std::string file;
    std::size_t packets = 0;
    std::size_t windows = 0;
    double window_overlap_fraction = 0.0;  // at zero offset
    std::int64_t best_offset_us = 0;
    std::size_t covered_at_best = 0;
    std::size_t covered_at_zero = 0;
    bool warning = false;
    std::string note;

    nlohmann::json to_json() const {
        return {{"file", file},
                {"packets", packets},
                {"windows", windows},
                {"window_overlap_fraction", window_overlap_fraction},
                {"best_offset_s", static_cast<double>(best_offset_us) / 1e6},
                {"covered_at_best", covered_at_best},
                {"covered_at_zero", covered_at_zero},
                {"warning", warning},
                {"note", note}};
    }
};

/// Searches a constant clock offset (added to every window) that maximises
/// the number of packets falling inside windows. Ties go to the offset
/// closest to zero.
inline OffsetReport check_offset(std::string file, std::span<const std::uint64_t> timestamps,
                                 std::span<const AttackWindow> windows, const OffsetGrid& grid = {}) {
    OffsetReport rep;
    rep.file = std::move(file);
    rep.packets = timestamps.size();
    std::vector<std::int64_t> ts(timestamps.begin(), timestamps.end());
    std::sort(ts.begin(), ts.end());
    std::vector<std::pair<std::int64_t, std::int64_t>> closed;
    for (const auto& w : windows) {
        if (w.end_ts) closed.emplace_back(static_cast<std::int64_t>(w.start_ts), static_cast<std::int64_t>(*w.end_ts));
    }
    rep.windows = closed.size();
    if (ts.empty() || closed.empty()) {
        rep.warning = true;
        rep.note = "no packets or no closed windows";
        return rep;
    }
    std::size_t overlapping = 0;
    for (const auto& [s, e] : closed) {
        if (e >= ts.front() && s <= ts.back()) ++overlapping;
    }
    rep.window_overlap_fraction = static_cast<double>(overlapping) / static_cast<double>(closed.size());

    auto coverage = [&](std::int64_t off) {
        std::size_t n = 0;
        for (const auto& [s, e] : closed) {
            auto lo = std::lower_bound(ts.begin(), ts.end(), s + off);
            auto hi = std::upper_bound(ts.begin(), ts.end(), e + off);
            if (hi > lo) n += static_cast<std::size_t>(hi - lo);
        }
        return n;
    };
    if (grid.step_us <= 0 || grid.max_us < grid.min_us) throw ConfigError("offset grid: bad range");
    rep.covered_at_zero = coverage(0);
    rep.best_offset_us = 0;
    rep.covered_at_best = rep.covered_at_zero;
    auto better = [&](std::int64_t off, std::size_t cov) {
        if (cov != rep.covered_at_best) return cov > rep.covered_at_best;
        const auto a = off < 0 ? -off : off;
        const auto b = rep.best_offset_us < 0 ? -rep.best_offset_us : rep.best_offset_us;
        return a < b || (a == b && off < rep.best_offset_us);
    };
    for (std::int64_t off = grid.min_us; off <= grid.max_us; off += grid.step_us) {
        const auto cov = coverage(off);
        if (better(off, cov)) {
            rep.best_offset_us = off;
            rep.covered_at_best = cov;
        }
    }
    if (rep.covered_at_best == 0) {
        rep.warning = true;
        rep.note = "no packet falls inside any window at any searched offset";
    } else if (overlapping == 0) {
        rep.warning = true;
        rep.note = "no window overlaps the capture at zero offset";
    }
    return rep;
}

}  // namespace sphbi
