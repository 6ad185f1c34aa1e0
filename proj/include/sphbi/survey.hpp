#pragma once

// Capture directory survey and record extraction.

#include <algorithm>
#include <array>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sphbi/byte_codec.hpp"
#include "sphbi/core.hpp"
#include "sphbi/dissect.hpp"
#include "sphbi/labeling.hpp"
#include "sphbi/pcap.hpp"
#include "sphbi/record.hpp"

namespace sphbi {

enum class CaptureClass : std::uint8_t { Benign, ExternalAttack, CompromisedScada, CompromisedIed, Unknown };

inline constexpr std::array<std::string_view, 5> kCaptureClassNames = {
    "benign", "external_attack", "compromised_scada", "compromised_ied", "unknown"};

inline std::string_view capture_class_name(CaptureClass c) { return kCaptureClassNames[static_cast<std::size_t>(c)]; }

inline std::optional<CaptureClass> parse_capture_class(std::string_view s) {
    const auto key = normalize_token(s);
    for (std::size_t i = 0; i < kCaptureClassNames.size(); ++i) {
        if (normalize_token(kCaptureClassNames[i]) == key) return static_cast<CaptureClass>(i);
    }
    if (key == "external" || key == "externalattacker") return CaptureClass::ExternalAttack;
    if (key == "compromisedhmi") return CaptureClass::CompromisedScada;
    return std::nullopt;
}

struct ManifestEntry {
    std::filesystem::path path;
    CaptureClass capture_class = CaptureClass::Unknown;
    std::string scenario;
};

/// CSV `file_path,capture_class,scenario` with an optional header row.
/// Relative paths are resolved against `base`.
inline std::vector<ManifestEntry> read_manifest(std::istream& in, const std::filesystem::path& base = {}) {
    std::vector<ManifestEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty() || line[0] == '#') continue;
        const auto cols = detail::split_csv_line(line);
        if (lineno == 1 && normalize_token(cols[0]) == "filepath") continue;
        if (cols.size() < 2) throw FormatError("manifest line " + std::to_string(lineno) + ": expected 3 columns");
        ManifestEntry e;
        e.path = cols[0];
        if (e.path.is_relative() && !base.empty()) e.path = base / e.path;
        const auto c = parse_capture_class(cols[1]);
        if (!c) throw FormatError("manifest line " + std::to_string(lineno) + ": unknown capture class '" + cols[1] + "'");
        e.capture_class = *c;
        if (cols.size() > 2) e.scenario = cols[2];
        out.push_back(std::move(e));
    }
    return out;
}

inline std::vector<ManifestEntry> read_manifest_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw FormatError("cannot open manifest " + p.string());
    return read_manifest(in, p.parent_path());
}

struct FileSurvey {
    std::filesystem::path path;
    CaptureClass capture_class = CaptureClass::Unknown;
    std::string scenario;
    std::size_t records = 0;
    std::size_t modbus = 0;
    std::array<std::size_t, 6> skipped{};
    std::size_t non_monotonic = 0;
    std::optional<std::string> error;

    std::size_t skipped_total() const {
        std::size_t n = 0;
        for (auto s : skipped) n += s;
        return n;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["file"] = path.generic_string();
        j["capture_class"] = std::string(capture_class_name(capture_class));
        j["scenario"] = scenario;
        j["records"] = records;
        j["modbus"] = modbus;
        for (std::size_t i = 0; i < skipped.size(); ++i) j["skipped"][std::string(kSkipReasonNames[i])] = skipped[i];
        j["non_monotonic_timestamps"] = non_monotonic;
        j["error"] = error ? nlohmann::json(*error) : nlohmann::json(nullptr);
        return j;
    }
};

struct Survey {
    std::vector<FileSurvey> files;

    struct Group {
        std::size_t files = 0;
        std::size_t modbus = 0;
    };

    std::map<CaptureClass, Group> groups() const {
        std::map<CaptureClass, Group> g;
        for (const auto& f : files) {
            auto& x = g[f.capture_class];
            ++x.files;
            x.modbus += f.modbus;
        }
        return g;
    }

    std::size_t modbus() const {
        std::size_t n = 0;
        for (const auto& f : files) n += f.modbus;
        return n;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["files"] = nlohmann::json::array();
        for (const auto& f : files) j["files"].push_back(f.to_json());
        for (const auto& [c, g] : groups()) {
            j["groups"][std::string(capture_class_name(c))] = {{"files", g.files}, {"modbus", g.modbus}};
        }
        j["modbus_total"] = modbus();
        return j;
    }

    /// file,capture_class,scenario,modbus,skipped,error
    void write_csv(std::ostream& out) const {
        out << "file,capture_class,scenario,modbus,skipped,error\n";
        for (const auto& f : files) {
            out << f.path.generic_string() << ',' << capture_class_name(f.capture_class) << ',' << f.scenario << ','
                << f.modbus << ',' << f.skipped_total() << ',' << f.error.value_or("") << '\n';
        }
    }
};

/// Reads and dissects one capture. `on_packet` receives every Modbus packet in
/// file order. Read errors are recorded in the result rather than thrown.
template <class F>
FileSurvey scan_file(const ManifestEntry& entry, F&& on_packet) {
    FileSurvey s;
    s.path = entry.path;
    s.capture_class = entry.capture_class;
    s.scenario = entry.scenario;
    try {
        std::ifstream in(entry.path, std::ios::binary);
        if (!in) throw FormatError("cannot open " + entry.path.string());
        PcapReader reader(in);
        while (auto pkt = reader.next()) {
            ++s.records;
            auto r = dissect(*pkt);
            if (auto* why = std::get_if<SkipReason>(&r)) {
                ++s.skipped[static_cast<std::size_t>(*why)];
            } else {
                ++s.modbus;
                on_packet(std::get<PacketFields>(r));
            }
        }
        s.non_monotonic = reader.non_monotonic();
    } catch (const FormatError& e) {
        s.error = e.what();
    }
    return s;
}

inline FileSurvey scan_file(const ManifestEntry& entry) {
    return scan_file(entry, [](const PacketFields&) {});
}

/// Capture files under `root` (recursively) whose extension is in
/// `extensions`, sorted by path. A regular file is returned as-is.
inline std::vector<std::filesystem::path> list_captures(const std::filesystem::path& root,
                                                        const std::vector<std::string>& extensions = {".pcap", ".cap"}) {
    std::vector<std::filesystem::path> out;
    if (std::filesystem::is_regular_file(root)) return {root};
    if (!std::filesystem::is_directory(root)) throw FormatError("no such file or directory: " + root.string());
    for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        const auto ext = e.path().extension().string();
        if (extensions.empty() || std::find(extensions.begin(), extensions.end(), ext) != extensions.end()) {
            out.push_back(e.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Attaches manifest classes to files; files missing from the manifest are
/// Unknown.
inline std::vector<ManifestEntry> entries_for(const std::vector<std::filesystem::path>& files,
                                              const std::vector<ManifestEntry>& manifest) {
    std::vector<ManifestEntry> out;
    for (const auto& f : files) {
        ManifestEntry e{f, CaptureClass::Unknown, {}};
        for (const auto& m : manifest) {
            std::error_code ec;
            if (m.path == f || std::filesystem::equivalent(m.path, f, ec)) {
                e.capture_class = m.capture_class;
                e.scenario = m.scenario;
                break;
            }
        }
        out.push_back(std::move(e));
    }
    return out;
}

namespace detail {

template <class Work>
void for_each_index(std::size_t n, std::size_t jobs, Work&& work) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) work(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) work(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace detail

inline Survey scan_directory(const std::filesystem::path& root, const std::vector<ManifestEntry>& manifest = {},
                             const std::vector<std::string>& extensions = {".pcap", ".cap"}, std::size_t jobs = 1) {
    const auto entries = entries_for(list_captures(root, extensions), manifest);
    Survey s;
    s.files.resize(entries.size());
    detail::for_each_index(entries.size(), jobs, [&](std::size_t i) { s.files[i] = scan_file(entries[i]); });
    return s;
}

struct Extraction {
    std::vector<LabeledRecord> records;  // unlabelled, file order then packet order
    Survey survey;
};

/// Dissects and reconstructs every Modbus packet of the given captures.
inline Extraction extract(const std::vector<ManifestEntry>& entries, std::size_t jobs = 1) {
    Extraction ex;
    std::vector<std::vector<LabeledRecord>> per_file(entries.size());
    ex.survey.files.resize(entries.size());
    detail::for_each_index(entries.size(), jobs, [&](std::size_t i) {
        ex.survey.files[i] = scan_file(entries[i], [&](const PacketFields& f) {
            per_file[i].push_back({reconstruct(f), std::nullopt, f.capture_ts});
        });
    });
    std::size_t n = 0;
    for (const auto& v : per_file) n += v.size();
    ex.records.reserve(n);
    for (auto& v : per_file) ex.records.insert(ex.records.end(), v.begin(), v.end());
    return ex;
}

}  // namespace sphbi
