#pragma once

// Synthetic Modbus TCP captures with attack logs and per-packet ground truth.
//
// One master (10.0.0.10, fixed source port) polls one IED (10.0.0.20:502).
// IP/TCP header fields are the same for every packet apart from the total
// length (and, in easy mode, the IP id), so the header bytes alone say little
// about the traffic class.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sphbi/core.hpp"
#include "sphbi/labeling.hpp"
#include "sphbi/pcap.hpp"

namespace sphbi::synth {

enum class Mode { Easy, Hard };

enum class BenignKind : std::uint8_t { ReadHolding, ReadInput, ReadCoils, WriteRegister, WriteQuirk };

inline constexpr std::array<std::string_view, 5> kBenignKindNames = {
    "read_holding", "read_input", "read_coils", "write_register", "write_quirk"};

struct Segment {
    AttackType type = AttackType::BruteForce;
    double start_s = 0.0;  // offset from the capture start
    double duration_s = 1.0;
    std::size_t packets = 0;  // attack-labelled packets this segment produces

    double end_s() const { return start_s + duration_s; }
};

struct ScenarioConfig {
    Mode mode = Mode::Easy;
    std::uint64_t seed = 1;
    std::uint64_t start_epoch_s = 1'672'531'200;  // 2023-01-01T00:00:00Z
    double duration_s = 60.0;
    double poll_interval_ms = 10.0;
    std::array<double, 5> benign_mix{1.0, 0.0, 0.0, 0.0, 0.0};
    /// Share of replayed exchanges drawn from recorded register writes; the
    /// rest are recorded holding-register polls.
    double replay_write_share = 1.0;
    /// Share of brute-force writes the IED answers.
    double bf_response_share = 0.1;
    std::vector<Segment> segments;

    static std::array<double, 5> default_mix(Mode m) {
        if (m == Mode::Easy) return {0.86, 0.06, 0.06, 0.02, 0.0};
        return {0.97, 0.0, 0.0, 0.02, 0.01};
    }

    static double default_replay_write_share(Mode m) { return m == Mode::Easy ? 1.0 : 0.15; }

    void set_mode(Mode m) {
        mode = m;
        benign_mix = default_mix(m);
        replay_write_share = default_replay_write_share(m);
    }

    /// Full nine-class scenario, about 190k packets at scale 1. `scale`
    /// stretches the timeline and the attack packet counts together.
    static ScenarioConfig standard(Mode m, std::uint64_t seed = 1, double scale = 1.0) {
        if (!(scale > 0.0)) throw ConfigError("synth: scale must be positive");
        ScenarioConfig c;
        c.set_mode(m);
        c.seed = seed;
        c.duration_s = 1000.0 * scale;
        struct Plan {
            AttackType t;
            double start, dur;
            std::size_t packets;
        };
        const Plan plan[] = {
            {AttackType::BruteForce, 60, 25, 5000}, {AttackType::QueryFlooding, 120, 5, 750},
            {AttackType::Recon, 180, 10, 250},      {AttackType::PayloadInjection, 240, 10, 250},
            {AttackType::Replay, 300, 10, 1000},    {AttackType::FrameStacking, 360, 20, 300},
            {AttackType::FDI, 420, 20, 150},        {AttackType::LengthManip, 480, 20, 100},
        };
        for (double offset : {0.0, 500.0}) {
            for (const auto& p : plan) {
                Segment s;
                s.type = p.t;
                s.start_s = (p.start + offset) * scale;
                s.duration_s = p.dur * scale;
                s.packets = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(double(p.packets) * scale)));
                c.segments.push_back(s);
            }
        }
        return c;
    }

    void validate() const {
        if (!(duration_s > 0.0)) throw ConfigError("synth: duration must be positive");
        if (!(poll_interval_ms >= 1.0)) throw ConfigError("synth: poll interval must be at least 1 ms");
        if (!(replay_write_share >= 0.0 && replay_write_share <= 1.0)) {
            throw ConfigError("synth: replay_write_share must lie in [0,1]");
        }
        if (!(bf_response_share >= 0.0 && bf_response_share <= 1.0)) {
            throw ConfigError("synth: bf_response_share must lie in [0,1]");
        }
        double total = 0.0;
        for (double w : benign_mix) {
            if (!(w >= 0.0)) throw ConfigError("synth: benign mix weights must be non-negative");
            total += w;
        }
        if (!(total > 0.0)) throw ConfigError("synth: benign mix is empty");
        for (std::size_t i = 0; i < segments.size(); ++i) {
            const auto& s = segments[i];
            if (s.type == AttackType::DelayResponse) throw ConfigError("synth: DelayResponse segments are not generated");
            if (!(s.start_s >= 0.0) || !(s.duration_s > 0.0) || s.end_s() > duration_s) {
                throw ConfigError("synth: segment " + std::to_string(i) + " lies outside the capture");
            }
            if (s.packets == 0) throw ConfigError("synth: segment " + std::to_string(i) + " has no packets");
            if (double(s.packets) > s.duration_s * 1e5) {
                throw ConfigError("synth: segment " + std::to_string(i) + " is too dense");
            }
            for (std::size_t j = 0; j < i; ++j) {
                const auto& o = segments[j];
                if (o.type != s.type && s.start_s <= o.end_s() && o.start_s <= s.end_s()) {
                    throw ConfigError("synth: segments " + std::to_string(j) + " and " + std::to_string(i) +
                                      " overlap with different attack types");
                }
            }
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["mode"] = mode == Mode::Easy ? "easy" : "hard";
        j["seed"] = seed;
        j["start_epoch_s"] = start_epoch_s;
        j["duration_s"] = duration_s;
        j["poll_interval_ms"] = poll_interval_ms;
        for (std::size_t k = 0; k < benign_mix.size(); ++k) j["benign_mix"][std::string(kBenignKindNames[k])] = benign_mix[k];
        j["replay_write_share"] = replay_write_share;
        j["bf_response_share"] = bf_response_share;
        j["segments"] = nlohmann::json::array();
        for (const auto& s : segments) {
            j["segments"].push_back({{"type", std::string(attack_type_name(s.type))},
                                     {"start_s", s.start_s},
                                     {"duration_s", s.duration_s},
                                     {"packets", s.packets}});
        }
        return j;
    }

    /// Accepts a full config or {"preset": "easy"|"hard", "seed", "scale"}
    /// with optional overrides of the other fields.
    static ScenarioConfig from_json(const nlohmann::json& j) {
        try {
            ScenarioConfig c;
            auto parse_mode = [](const std::string& s) {
                if (s == "easy") return Mode::Easy;
                if (s == "hard") return Mode::Hard;
                throw ConfigError("synth: unknown mode '" + s + "'");
            };
            if (j.contains("preset")) {
                c = standard(parse_mode(j.at("preset").get<std::string>()), j.value("seed", std::uint64_t{1}),
                             j.value("scale", 1.0));
            } else if (j.contains("mode")) {
                c.set_mode(parse_mode(j.at("mode").get<std::string>()));
            }
            if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
            if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
            if (j.contains("start_epoch_s")) c.start_epoch_s = j.at("start_epoch_s").get<std::uint64_t>();
            if (j.contains("duration_s")) c.duration_s = j.at("duration_s").get<double>();
            if (j.contains("poll_interval_ms")) c.poll_interval_ms = j.at("poll_interval_ms").get<double>();
            if (j.contains("replay_write_share")) c.replay_write_share = j.at("replay_write_share").get<double>();
            if (j.contains("bf_response_share")) c.bf_response_share = j.at("bf_response_share").get<double>();
            if (j.contains("benign_mix")) {
                c.benign_mix.fill(0.0);
                for (const auto& [k, v] : j.at("benign_mix").items()) {
                    auto it = std::find(kBenignKindNames.begin(), kBenignKindNames.end(), k);
                    if (it == kBenignKindNames.end()) throw ConfigError("synth: unknown benign kind '" + k + "'");
                    c.benign_mix[static_cast<std::size_t>(it - kBenignKindNames.begin())] = v.get<double>();
                }
            }
            if (j.contains("segments")) {
                c.segments.clear();
                for (const auto& s : j.at("segments")) {
                    Segment seg;
                    const auto t = parse_attack_type(s.at("type").get<std::string>());
                    if (!t) throw ConfigError("synth: unknown attack type " + s.at("type").dump());
                    seg.type = *t;
                    seg.start_s = s.at("start_s").get<double>();
                    seg.duration_s = s.at("duration_s").get<double>();
                    seg.packets = s.at("packets").get<std::size_t>();
                    c.segments.push_back(seg);
                }
            }
            c.validate();
            return c;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("synth config: ") + e.what());
        }
    }
};

struct Output {
    std::vector<RawPacket> packets;  // capture order
    std::vector<TrafficClass> truth;  // generator intent per packet
    std::vector<AttackWindow> windows;
};

namespace detail {

inline constexpr std::array<std::uint8_t, 6> kMasterMac = {0x02, 0, 0, 0, 0, 0x0a};
inline constexpr std::array<std::uint8_t, 6> kIedMac = {0x02, 0, 0, 0, 0, 0x14};
inline constexpr std::uint32_t kMasterIp = 0x0a00000a;
inline constexpr std::uint32_t kIedIp = 0x0a000014;
inline constexpr std::uint16_t kMasterPort = 49152;
inline constexpr std::uint8_t kTtl = 64;
inline constexpr std::uint16_t kTcpWindow = 64240;
inline constexpr std::uint8_t kUnitId = 1;

struct Adu {
    std::uint8_t fc = 0;
    std::vector<std::uint8_t> data;  // PDU after the function code
    std::optional<std::uint16_t> length_override;  // MBAP length field if not 2 + data.size()
};

class Builder {
public:
    Builder(Mode mode, std::mt19937_64& rng) : mode_(mode), rng_(rng) {}

    std::uint16_t next_txid() {
        return mode_ == Mode::Hard ? std::uint16_t{1} : static_cast<std::uint16_t>(rng_() & 0xFFFF);
    }

    /// One TCP segment carrying `adus` back to back.
    RawPacket frame(bool from_master, std::uint16_t txid, const std::vector<Adu>& adus, std::uint64_t ts) {
        std::vector<std::uint8_t> payload;
        for (const auto& a : adus) {
            const auto len = a.length_override.value_or(static_cast<std::uint16_t>(2 + a.data.size()));
            bytes::put_be16(payload, txid);
            bytes::put_be16(payload, 0);
            bytes::put_be16(payload, len);
            payload.push_back(kUnitId);
            payload.push_back(a.fc);
            payload.insert(payload.end(), a.data.begin(), a.data.end());
        }
        std::vector<std::uint8_t> f;
        f.reserve(54 + payload.size());
        const auto& dmac = from_master ? kIedMac : kMasterMac;
        const auto& smac = from_master ? kMasterMac : kIedMac;
        f.insert(f.end(), dmac.begin(), dmac.end());
        f.insert(f.end(), smac.begin(), smac.end());
        bytes::put_be16(f, 0x0800);
        const std::size_t ip = f.size();
        f.push_back(0x45);
        f.push_back(0);
        bytes::put_be16(f, static_cast<std::uint16_t>(40 + payload.size()));
        bytes::put_be16(f, mode_ == Mode::Hard ? std::uint16_t{0} : static_cast<std::uint16_t>(rng_() & 0xFFFF));
        bytes::put_be16(f, 0x4000);  // DF
        f.push_back(kTtl);
        f.push_back(6);
        bytes::put_be16(f, 0);  // checksum, filled below
        bytes::put_be32(f, from_master ? kMasterIp : kIedIp);
        bytes::put_be32(f, from_master ? kIedIp : kMasterIp);
        std::uint32_t sum = 0;
        for (std::size_t i = ip; i < ip + 20; i += 2) sum += static_cast<std::uint32_t>((f[i] << 8) | f[i + 1]);
        while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
        f[ip + 10] = static_cast<std::uint8_t>((~sum >> 8) & 0xFF);
        f[ip + 11] = static_cast<std::uint8_t>(~sum & 0xFF);
        auto& seq = from_master ? master_seq_ : ied_seq_;
        const auto ack = from_master ? ied_seq_ : master_seq_;
        bytes::put_be16(f, from_master ? kMasterPort : kModbusPort);
        bytes::put_be16(f, from_master ? kModbusPort : kMasterPort);
        bytes::put_be32(f, seq);
        bytes::put_be32(f, ack);
        bytes::put_be16(f, 0x5018);  // 20-byte header, PSH|ACK
        bytes::put_be16(f, kTcpWindow);
        bytes::put_be16(f, 0);  // checksum not verified by readers
        bytes::put_be16(f, 0);
        seq += static_cast<std::uint32_t>(payload.size());
        f.insert(f.end(), payload.begin(), payload.end());
        RawPacket p;
        p.capture_ts = ts;
        p.link_bytes = std::move(f);
        p.orig_len = static_cast<std::uint32_t>(p.link_bytes.size());
        return p;
    }

private:
    Mode mode_;
    std::mt19937_64& rng_;
    std::uint32_t master_seq_ = 1000;
    std::uint32_t ied_seq_ = 5000;
};

inline std::vector<std::uint8_t> be16s(std::initializer_list<std::uint16_t> vs) {
    std::vector<std::uint8_t> out;
    for (auto v : vs) bytes::put_be16(out, v);
    return out;
}

inline double uniform(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }
inline std::uint64_t below(std::mt19937_64& rng, std::uint64_t n) { return rng() % n; }

struct Event {
    RawPacket pkt;
    TrafficClass truth;
    std::uint64_t order;
};

inline TrafficClass class_of(AttackType t) {
    switch (t) {
        case AttackType::BruteForce: return TrafficClass::BruteForce;
        case AttackType::FrameStacking: return TrafficClass::FrameStacking;
        case AttackType::QueryFlooding: return TrafficClass::QueryFlooding;
        case AttackType::Recon: return TrafficClass::Recon;
        case AttackType::Replay: return TrafficClass::Replay;
        case AttackType::PayloadInjection: return TrafficClass::PayloadInjection;
        case AttackType::LengthManip: return TrafficClass::LengthManip;
        case AttackType::FDI: return TrafficClass::FDI;
        case AttackType::DelayResponse: break;
    }
    throw ContractError("no traffic class for DelayResponse");
}

/// Benign traffic pauses while these run, so every packet in their windows is
/// attack traffic.
inline bool pauses_benign(AttackType t) {
    return t == AttackType::QueryFlooding || t == AttackType::Recon || t == AttackType::Replay ||
           t == AttackType::PayloadInjection;
}

}  // namespace detail

/// Deterministic in the config (including the seed).
inline Output generate(const ScenarioConfig& cfg) {
    cfg.validate();
    using detail::Adu;
    std::mt19937_64 rng(cfg.seed);
    detail::Builder b(cfg.mode, rng);
    const std::uint64_t t0 = cfg.start_epoch_s * 1'000'000ULL;
    auto us = [&](double s) { return t0 + static_cast<std::uint64_t>(std::llround(s * 1e6)); };

    std::vector<std::pair<std::uint64_t, std::uint64_t>> paused, lm_windows;
    Output out;
    for (const auto& s : cfg.segments) {
        const std::uint64_t a = us(s.start_s), e = us(s.end_s());
        out.windows.push_back({a, e, s.type, "synthetic"});
        if (detail::pauses_benign(s.type)) paused.emplace_back(a, e);
        if (s.type == AttackType::LengthManip) lm_windows.emplace_back(a, e);
    }
    std::stable_sort(out.windows.begin(), out.windows.end(),
                     [](const AttackWindow& x, const AttackWindow& y) { return x.start_ts < y.start_ts; });
    auto hits = [](const std::vector<std::pair<std::uint64_t, std::uint64_t>>& v, std::uint64_t lo, std::uint64_t hi) {
        return std::any_of(v.begin(), v.end(), [&](const auto& w) { return lo <= w.second && w.first <= hi; });
    };

    std::vector<detail::Event> events;
    std::uint64_t order = 0;
    auto emit = [&](RawPacket p, TrafficClass c) { events.push_back({std::move(p), c, order++}); };

    // Benign polling. Exchanges are recorded for later replay.
    struct Exchange {
        RawPacket req, resp;
        std::uint64_t ts;
    };
    std::vector<Exchange> reads, writes;
    double total_w = 0.0;
    for (double w : cfg.benign_mix) total_w += w;
    std::array<std::uint16_t, 10> holding{};
    for (auto& h : holding) h = static_cast<std::uint16_t>(1000 + detail::below(rng, 200));
    const auto setpoint = holding;
    const std::uint64_t step = static_cast<std::uint64_t>(std::llround(cfg.poll_interval_ms * 1000.0));
    const std::uint64_t resp_delay = std::max<std::uint64_t>(1, step / 5);
    for (std::uint64_t t = t0; t + resp_delay <= us(cfg.duration_s); t += step) {
        double u = detail::uniform(rng) * total_w;
        std::size_t kind = 0;
        while (kind + 1 < cfg.benign_mix.size() && (u >= cfg.benign_mix[kind] || cfg.benign_mix[kind] == 0.0)) {
            u -= cfg.benign_mix[kind];
            ++kind;
        }
        for (std::size_t i = 0; i < holding.size(); ++i) {
            auto& h = holding[i];
            const auto r = detail::below(rng, 5);
            if (cfg.mode == Mode::Hard) {
                // stationary: jitter around the setpoint
                h = static_cast<std::uint16_t>(setpoint[i] + r - 2);
                continue;
            }
            // slow random walk of the process values
            if (r == 0 && h > 900) --h;
            if (r == 1 && h < 1300) ++h;
        }
        if (hits(paused, t, t + resp_delay)) continue;
        const auto k = static_cast<BenignKind>(kind);
        if (k == BenignKind::WriteQuirk && hits(lm_windows, t, t + resp_delay)) continue;
        const auto tx = b.next_txid();
        Adu req, resp;
        switch (k) {
            case BenignKind::ReadHolding: {
                req = {3, detail::be16s({0, 10}), {}};
                resp.fc = 3;
                resp.data.push_back(20);
                for (auto h : holding) bytes::put_be16(resp.data, h);
                break;
            }
            case BenignKind::ReadInput: {
                req = {4, detail::be16s({100, 8}), {}};
                resp.fc = 4;
                resp.data.push_back(16);
                for (std::size_t i = 0; i < 8; ++i) bytes::put_be16(resp.data, static_cast<std::uint16_t>(detail::below(rng, 4096)));
                break;
            }
            case BenignKind::ReadCoils: {
                req = {1, detail::be16s({0, 16}), {}};
                resp = {1, {2, static_cast<std::uint8_t>(detail::below(rng, 256)), static_cast<std::uint8_t>(detail::below(rng, 256))}, {}};
                break;
            }
            case BenignKind::WriteRegister:
            case BenignKind::WriteQuirk: {
                const auto addr = static_cast<std::uint16_t>(200 + detail::below(rng, 4));
                const auto val = static_cast<std::uint16_t>(detail::below(rng, 1001));
                req = {6, detail::be16s({addr, val}), {}};
                resp = req;
                if (k == BenignKind::WriteQuirk) {
                    // a device that pads writes with one stray byte
                    req.data.push_back(0);
                    req.length_override = 7;
                }
                break;
            }
        }
        Exchange ex{b.frame(true, tx, {req}, t), b.frame(false, tx, {resp}, t + resp_delay), t};
        if (k == BenignKind::ReadHolding) reads.push_back(ex);
        if (k == BenignKind::WriteRegister) writes.push_back(ex);
        emit(ex.req, TrafficClass::Normal);
        emit(ex.resp, TrafficClass::Normal);
    }

    // Attack segments.
    for (const auto& s : cfg.segments) {
        const std::uint64_t a = us(s.start_s), e = us(s.end_s());
        const TrafficClass cls = detail::class_of(s.type);
        const bool paired = s.type != AttackType::FrameStacking && s.type != AttackType::FDI &&
                            s.type != AttackType::LengthManip;
        // Brute-force request i is answered when floor((i + 1) * share) steps.
        auto bf_answered = [&](std::size_t i) {
            return std::floor(double(i + 1) * cfg.bf_response_share) > std::floor(double(i) * cfg.bf_response_share);
        };
        std::size_t slots = paired ? (s.packets + 1) / 2 : s.packets;
        if (s.type == AttackType::BruteForce) {
            slots = 0;
            for (std::size_t n = 0; n < s.packets; ++slots) n += bf_answered(slots) ? 2 : 1;
        }
        const std::uint64_t span = e - a;
        const std::uint64_t gap = span / slots;
        const std::uint64_t delay = std::max<std::uint64_t>(1, std::min<std::uint64_t>(resp_delay, gap / 2));
        std::size_t left = s.packets;
        for (std::size_t i = 0; i < slots; ++i) {
            const std::uint64_t t = a + i * span / slots + (gap > 2 * delay ? gap / 4 : 0);
            const auto tx = b.next_txid();
            auto pair = [&](const Adu& req, const Adu& resp, bool answered = true) {
                emit(b.frame(true, tx, {req}, t), cls);
                --left;
                if (answered && left > 0) {
                    emit(b.frame(false, tx, {resp}, t + delay), cls);
                    --left;
                }
            };
            switch (s.type) {
                case AttackType::BruteForce: {
                    const auto addr = static_cast<std::uint16_t>(i % 2000);
                    const Adu req{5, detail::be16s({addr, static_cast<std::uint16_t>(i % 2 ? 0x0000 : 0xFF00)}), {}};
                    pair(req, req, bf_answered(i));
                    break;
                }
                case AttackType::QueryFlooding: {
                    const auto addr = static_cast<std::uint16_t>(detail::below(rng, 60000));
                    Adu resp{3, {250}, {}};
                    for (std::size_t r = 0; r < 125; ++r) bytes::put_be16(resp.data, static_cast<std::uint16_t>(detail::below(rng, 65536)));
                    pair({3, detail::be16s({addr, 125}), {}}, resp);
                    break;
                }
                case AttackType::Recon: {
                    static constexpr std::uint8_t codes[] = {7, 8, 11, 12, 17, 20, 21, 24, 43};
                    const std::uint8_t fc = codes[detail::below(rng, std::size(codes))];
                    Adu req{fc, {}, {}};
                    Adu resp{static_cast<std::uint8_t>(fc | 0x80), {1}, {}};
                    if (fc == 8) {
                        req.data = detail::be16s({0, static_cast<std::uint16_t>(detail::below(rng, 65536))});
                        resp = req;
                    } else if (fc == 43) {
                        req.data = {0x0E, 0x01, 0x00};
                        resp = {43, {0x0E, 0x01, 0x01, 0x00, 0x00, 0x01, 0x00, 0x04, 'S', 'I', 'M', '1'}, {}};
                    } else if (fc == 20 || fc == 21 || fc == 24) {
                        req.data = detail::be16s({static_cast<std::uint16_t>(detail::below(rng, 65536))});
                    }
                    pair(req, resp);
                    break;
                }
                case AttackType::PayloadInjection: {
                    const auto addr = static_cast<std::uint16_t>(40000 + detail::below(rng, 1000));
                    const auto v1 = static_cast<std::uint16_t>(0xF000 | detail::below(rng, 0x1000));
                    if (detail::below(rng, 2) == 0) {
                        const Adu req{6, detail::be16s({addr, v1}), {}};
                        pair(req, req);
                    } else {
                        const auto v2 = static_cast<std::uint16_t>(0xF000 | detail::below(rng, 0x1000));
                        Adu req{16, detail::be16s({addr, 2}), {}};
                        req.data.push_back(4);
                        bytes::put_be16(req.data, v1);
                        bytes::put_be16(req.data, v2);
                        pair(req, {16, detail::be16s({addr, 2}), {}});
                    }
                    break;
                }
                case AttackType::Replay: {
                    const bool use_write = !writes.empty() && detail::uniform(rng) < cfg.replay_write_share;
                    auto& pool = use_write || reads.empty() ? writes : reads;
                    // only traffic recorded before this segment
                    const auto n = static_cast<std::size_t>(
                        std::partition_point(pool.begin(), pool.end(),
                                             [&](const Exchange& x) { return x.ts + resp_delay < a; }) -
                        pool.begin());
                    if (n == 0) throw ConfigError("synth: replay segment has no earlier benign traffic to copy");
                    const auto& src = pool[detail::below(rng, n)];
                    RawPacket req = src.req, resp = src.resp;
                    req.capture_ts = t;
                    resp.capture_ts = t + delay;
                    emit(std::move(req), cls);
                    --left;
                    if (left > 0) {
                        emit(std::move(resp), cls);
                        --left;
                    }
                    break;
                }
                case AttackType::FrameStacking: {
                    std::vector<Adu> adus(2 + detail::below(rng, 2), Adu{3, detail::be16s({0, 10}), {}});
                    emit(b.frame(true, tx, adus, t), cls);
                    --left;
                    break;
                }
                case AttackType::FDI: {
                    Adu resp{3, {171}, {}};
                    for (std::size_t r = 0; r < 171; ++r) resp.data.push_back(static_cast<std::uint8_t>(detail::below(rng, 256)));
                    emit(b.frame(false, tx, {resp}, t), cls);
                    --left;
                    break;
                }
                case AttackType::LengthManip: {
                    const auto addr = static_cast<std::uint16_t>(200 + detail::below(rng, 4));
                    Adu req{6, detail::be16s({addr, static_cast<std::uint16_t>(detail::below(rng, 1001))}), {}};
                    const std::size_t extra = cfg.mode == Mode::Hard ? 1 : 3 + detail::below(rng, 8);
                    for (std::size_t x = 0; x < extra; ++x) req.data.push_back(static_cast<std::uint8_t>(detail::below(rng, 256)));
                    req.length_override = static_cast<std::uint16_t>(6 + extra);
                    emit(b.frame(true, tx, {req}, t), cls);
                    --left;
                    break;
                }
                case AttackType::DelayResponse:
                    break;
            }
        }
    }

    std::stable_sort(events.begin(), events.end(), [](const detail::Event& x, const detail::Event& y) {
        return x.pkt.capture_ts != y.pkt.capture_ts ? x.pkt.capture_ts < y.pkt.capture_ts : x.order < y.order;
    });
    out.packets.reserve(events.size());
    out.truth.reserve(events.size());
    for (auto& ev : events) {
        out.packets.push_back(std::move(ev.pkt));
        out.truth.push_back(ev.truth);
    }
    return out;
}

inline void write_ground_truth(std::ostream& out, std::span<const TrafficClass> truth) {
    out << "packet_index,true_label\n";
    for (std::size_t i = 0; i < truth.size(); ++i) out << i << ',' << class_name(truth[i]) << '\n';
}

inline std::vector<TrafficClass> read_ground_truth(std::istream& in) {
    std::vector<TrafficClass> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || (lineno == 1 && line.rfind("packet_index", 0) == 0)) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw FormatError("ground truth line " + std::to_string(lineno) + ": expected 2 columns");
        std::size_t idx = 0;
        try {
            idx = std::stoull(line.substr(0, comma));
        } catch (...) {
            throw FormatError("ground truth line " + std::to_string(lineno) + ": bad index");
        }
        if (idx != out.size()) throw FormatError("ground truth line " + std::to_string(lineno) + ": indices must be 0,1,2,...");
        const auto c = parse_class(line.substr(comma + 1));
        if (!c) throw FormatError("ground truth line " + std::to_string(lineno) + ": unknown class");
        out.push_back(*c);
    }
    return out;
}

struct WrittenFiles {
    std::filesystem::path pcap, attack_log, ground_truth, manifest, config;
};

/// capture.pcap, attack_log.csv, ground_truth.csv, manifest.csv and the
/// config that produced them.
inline WrittenFiles write_outputs(const ScenarioConfig& cfg, const Output& o, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    WrittenFiles f{dir / "capture.pcap", dir / "attack_log.csv", dir / "ground_truth.csv", dir / "manifest.csv",
                   dir / "scenario.json"};
    write_pcap_file(f.pcap, o.packets);
    auto open = [](const std::filesystem::path& p) {
        std::ofstream s(p, std::ios::binary);
        if (!s) throw FormatError("cannot create " + p.string());
        return s;
    };
    {
        auto s = open(f.attack_log);
        write_attack_log(s, o.windows);
    }
    {
        auto s = open(f.ground_truth);
        write_ground_truth(s, o.truth);
    }
    {
        auto s = open(f.manifest);
        s << "file_path,capture_class,scenario\n";
        s << "capture.pcap," << (cfg.segments.empty() ? "benign" : "compromised_scada") << ",synthetic-"
          << (cfg.mode == Mode::Easy ? "easy" : "hard") << "-seed" << cfg.seed << '\n';
    }
    {
        auto s = open(f.config);
        s << cfg.to_json().dump(2) << '\n';
    }
    return f;
}

}  // namespace sphbi::synth
