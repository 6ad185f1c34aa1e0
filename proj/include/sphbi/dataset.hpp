#pragma once

// Record persistence, stratified splitting, per-class caps and class weights.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sphbi/core.hpp"
#include "sphbi/record.hpp"

namespace sphbi {

// Record file: "SPB1", u16 version, u64 count, then per record
// 30 bytes | u8 class | u8 binary | u64 timestamp_us. Little-endian.
// Unlabelled records carry 0xFF in both label bytes.
inline constexpr std::array<char, 4> kRecordMagic = {'S', 'P', 'B', '1'};
inline constexpr std::uint16_t kRecordVersion = 1;
inline constexpr std::size_t kRecordHeaderSize = 4 + 2 + 8;
inline constexpr std::size_t kRecordSize = kVectorBytes + 1 + 1 + 8;
inline constexpr std::uint8_t kUnlabelled = 0xFF;

inline void write_records(std::ostream& out, std::span<const LabeledRecord> records) {
    std::vector<std::uint8_t> buf;
    buf.reserve(kRecordHeaderSize + records.size() * kRecordSize);
    buf.insert(buf.end(), kRecordMagic.begin(), kRecordMagic.end());
    bytes::put_le(buf, kRecordVersion);
    bytes::put_le(buf, static_cast<std::uint64_t>(records.size()));
    for (const auto& r : records) {
        buf.insert(buf.end(), r.bytes.begin(), r.bytes.end());
        if (r.label) {
            buf.push_back(static_cast<std::uint8_t>(*r.label));
            buf.push_back(static_cast<std::uint8_t>(to_binary(*r.label)));
        } else {
            buf.push_back(kUnlabelled);
            buf.push_back(kUnlabelled);
        }
        bytes::put_le(buf, r.timestamp_us);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("record file: write failed");
}

inline std::vector<LabeledRecord> read_records(std::istream& in) {
    std::array<std::uint8_t, kRecordHeaderSize> h{};
    in.read(reinterpret_cast<char*>(h.data()), h.size());
    if (static_cast<std::size_t>(in.gcount()) != h.size()) throw FormatError("record file: truncated header");
    if (!std::equal(kRecordMagic.begin(), kRecordMagic.end(), h.begin())) throw FormatError("record file: bad magic");
    const auto version = bytes::get_le<std::uint16_t>(h, 4);
    if (version != kRecordVersion) throw FormatError("record file: unsupported version " + std::to_string(version));
    const auto count = bytes::get_le<std::uint64_t>(h, 6);
    std::vector<LabeledRecord> out;
    out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 24)));
    std::array<std::uint8_t, kRecordSize> rec{};
    for (std::uint64_t i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(rec.data()), rec.size());
        if (static_cast<std::size_t>(in.gcount()) != rec.size()) {
            throw FormatError("record file: truncated at record " + std::to_string(i) + " of " + std::to_string(count) +
                              " (byte offset " + std::to_string(kRecordHeaderSize + i * kRecordSize) + ")");
        }
        LabeledRecord r;
        std::copy_n(rec.begin(), kVectorBytes, r.bytes.begin());
        const std::uint8_t cls = rec[kVectorBytes];
        const std::uint8_t bin = rec[kVectorBytes + 1];
        if (cls == kUnlabelled) {
            if (bin != kUnlabelled) throw FormatError("record file: record " + std::to_string(i) + " half-labelled");
        } else {
            if (cls >= kNumClasses) throw FormatError("record file: record " + std::to_string(i) + " bad class");
            r.label = static_cast<TrafficClass>(cls);
            if (bin != static_cast<std::uint8_t>(to_binary(*r.label))) {
                throw FormatError("record file: record " + std::to_string(i) + " binary label disagrees with class");
            }
        }
        r.timestamp_us = bytes::get_le<std::uint64_t>(rec, kVectorBytes + 2);
        out.push_back(r);
    }
    return out;
}

inline void write_records_file(const std::filesystem::path& p, std::span<const LabeledRecord> records) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw FormatError("record file: cannot create " + p.string());
    write_records(out, records);
}

inline std::vector<LabeledRecord> read_records_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw FormatError("record file: cannot open " + p.string());
    return read_records(in);
}

enum class Task { Binary, Multiclass };

inline std::size_t num_classes(Task t) { return t == Task::Binary ? 2 : kNumClasses; }

/// Class index used by the models: 0/1 for binary, 0..8 for multiclass.
inline std::size_t target_of(const LabeledRecord& r, Task t) {
    return t == Task::Binary ? static_cast<std::size_t>(r.binary()) : index_of(r.cls());
}

inline std::string_view target_name(Task t, std::size_t c) {
    if (t == Task::Binary) return c == 0 ? "Normal" : "Attack";
    return kClassNames[c];
}

/// Labelled records plus per-class positions in stable order.
class RecordStore {
public:
    RecordStore() = default;

    explicit RecordStore(std::vector<LabeledRecord> records, Task task = Task::Multiclass)
        : records_(std::move(records)), task_(task), index_(num_classes(task)) {
        for (std::size_t i = 0; i < records_.size(); ++i) index_[target_of(records_[i], task_)].push_back(i);
    }

    const std::vector<LabeledRecord>& records() const { return records_; }
    Task task() const { return task_; }
    std::size_t size() const { return records_.size(); }
    const std::vector<std::size_t>& positions(std::size_t cls) const { return index_.at(cls); }
    std::size_t class_count(std::size_t cls) const { return index_.at(cls).size(); }

private:
    std::vector<LabeledRecord> records_;
    Task task_ = Task::Multiclass;
    std::vector<std::vector<std::size_t>> index_;
};

struct SplitSpec {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;

    void validate() const {
        for (double r : {train, val, test}) {
            if (!(r > 0.0 && r < 1.0)) throw ConfigError("split ratios must each lie in (0,1)");
        }
        if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
    }
};

struct SplitParts {
    std::vector<LabeledRecord> train, val, test;
    std::vector<std::string> warnings;
};

/// Per-class sizes under the percent-rank rule: rank r (1-based) goes to train
/// when r/n <= train, to val when r/n <= train + val, otherwise to test.
struct SplitCounts {
    std::size_t train = 0, val = 0, test = 0;
};

inline SplitCounts split_counts(std::size_t n, const SplitSpec& spec) {
    spec.validate();
    if (n < 3) return {n, 0, 0};
    const double nn = static_cast<double>(n);
    // Small epsilon so that exact products such as 0.8 * 10 are not floored to 7.
    const auto cut1 = static_cast<std::size_t>(std::floor(spec.train * nn + 1e-9));
    const auto cut2 = static_cast<std::size_t>(std::floor((spec.train + spec.val) * nn + 1e-9));
    return {cut1, cut2 - cut1, n - cut2};
}

/// Stratified by multiclass label in stable store order; no shuffling.
inline SplitParts split(const RecordStore& store, const SplitSpec& spec = {}) {
    spec.validate();
    SplitParts parts;
    const std::size_t k = num_classes(store.task());
    // Emit in store order so every part stays in stable order across classes.
    std::vector<std::uint8_t> dest(store.size(), 0);
    for (std::size_t c = 0; c < k; ++c) {
        const auto& pos = store.positions(c);
        const auto counts = split_counts(pos.size(), spec);
        if (!pos.empty() && pos.size() < 3) {
            parts.warnings.push_back("class " + std::string(target_name(store.task(), c)) + " has " +
                                     std::to_string(pos.size()) + " records; all go to train");
        }
        for (std::size_t i = 0; i < pos.size(); ++i) {
            dest[pos[i]] = i < counts.train ? 0 : (i < counts.train + counts.val ? 1 : 2);
        }
    }
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& r = store.records()[i];
        (dest[i] == 0 ? parts.train : dest[i] == 1 ? parts.val : parts.test).push_back(r);
    }
    return parts;
}

/// Keeps the first `cap` records of each class in stable order. Apply to the
/// training and validation parts only.
inline std::vector<LabeledRecord> apply_cap(std::span<const LabeledRecord> part, std::size_t cap, Task task) {
    if (cap < 1) throw ConfigError("cap must be >= 1");
    std::vector<std::size_t> seen(num_classes(task), 0);
    std::vector<LabeledRecord> out;
    out.reserve(part.size());
    for (const auto& r : part) {
        auto& n = seen[target_of(r, task)];
        if (n < cap) {
            out.push_back(r);
            ++n;
        }
    }
    return out;
}

struct ClassWeights {
    std::vector<double> weights;
    std::vector<std::size_t> counts;
    std::size_t total = 0;

    std::size_t k() const { return counts.size(); }
};

/// weight_c = N / (K * N_c) over all K classes of the task.
inline ClassWeights class_weights(std::span<const LabeledRecord> part, Task task) {
    ClassWeights cw;
    cw.counts.assign(num_classes(task), 0);
    for (const auto& r : part) ++cw.counts[target_of(r, task)];
    cw.total = part.size();
    const double kk = static_cast<double>(cw.k());
    for (std::size_t c = 0; c < cw.k(); ++c) {
        if (cw.counts[c] == 0) {
            throw ConfigError("class weights: class " + std::string(target_name(task, c)) + " is empty");
        }
        cw.weights.push_back(static_cast<double>(cw.total) / (kk * static_cast<double>(cw.counts[c])));
    }
    return cw;
}

}  // namespace sphbi
