#pragma once

// Confusion matrix, derived metrics, report files and model evaluation.

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sphbi/byte_codec.hpp"
#include "sphbi/core.hpp"
#include "sphbi/dataset.hpp"
#include "sphbi/models.hpp"
#include "sphbi/nn/loss.hpp"

namespace sphbi {

/// K x K counts; rows are true labels, columns predictions.
class ConfusionMatrix {
public:
    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::vector<std::string> names)
        : names_(std::move(names)), counts_(names_.size() * names_.size(), 0) {}

    static ConfusionMatrix for_task(Task t) {
        std::vector<std::string> names;
        for (std::size_t c = 0; c < num_classes(t); ++c) names.emplace_back(target_name(t, c));
        return ConfusionMatrix(std::move(names));
    }

    std::size_t k() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }

    void add(std::size_t truth, std::size_t pred, std::uint64_t n = 1) {
        if (truth >= k() || pred >= k()) throw ContractError("confusion matrix: class index out of range");
        counts_[truth * k() + pred] += n;
    }

    void merge(const ConfusionMatrix& o) {
        if (o.names_ != names_) throw ContractError("confusion matrix: merging different class tables");
        for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    }

    std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_.at(truth * k() + pred); }

    std::uint64_t total() const {
        std::uint64_t s = 0;
        for (auto c : counts_) s += c;
        return s;
    }
    std::uint64_t row_total(std::size_t r) const {
        std::uint64_t s = 0;
        for (std::size_t c = 0; c < k(); ++c) s += at(r, c);
        return s;
    }
    std::uint64_t col_total(std::size_t c) const {
        std::uint64_t s = 0;
        for (std::size_t r = 0; r < k(); ++r) s += at(r, c);
        return s;
    }
    std::uint64_t trace() const {
        std::uint64_t s = 0;
        for (std::size_t c = 0; c < k(); ++c) s += at(c, c);
        return s;
    }

    std::optional<double> accuracy() const {
        const auto t = total();
        if (t == 0) return std::nullopt;
        return double(trace()) / double(t);
    }
    /// Undefined (nullopt) when the class has no true samples.
    std::optional<double> recall(std::size_t c) const {
        const auto r = row_total(c);
        if (r == 0) return std::nullopt;
        return double(at(c, c)) / double(r);
    }
    /// Undefined when nothing was predicted as c.
    std::optional<double> precision(std::size_t c) const {
        const auto p = col_total(c);
        if (p == 0) return std::nullopt;
        return double(at(c, c)) / double(p);
    }

    /// Row-normalised matrix; empty rows are nullopt.
    std::vector<std::optional<std::vector<double>>> normalized() const {
        std::vector<std::optional<std::vector<double>>> out;
        for (std::size_t r = 0; r < k(); ++r) {
            const auto rt = row_total(r);
            if (rt == 0) {
                out.emplace_back(std::nullopt);
                continue;
            }
            std::vector<double> row(k());
            for (std::size_t c = 0; c < k(); ++c) row[c] = double(at(r, c)) / double(rt);
            out.emplace_back(std::move(row));
        }
        return out;
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::vector<std::string> names_;
    std::vector<std::uint64_t> counts_;
};

/// TP / (TP + FP) with class 1 as the attack class of a 2x2 matrix.
inline std::optional<double> attack_precision(const ConfusionMatrix& m) {
    if (m.k() != 2) throw ContractError("attack precision needs a binary matrix");
    return m.precision(1);
}

/// Expected false alarms when a detector with the given Normal recall sees
/// `normal_count` benign packets.
inline double false_alarm_projection(double normal_recall, double normal_count) {
    if (!(normal_recall >= 0.0 && normal_recall <= 1.0)) throw ConfigError("recall must lie in [0,1]");
    if (normal_count < 0.0) throw ConfigError("count must be non-negative");
    return (1.0 - normal_recall) * normal_count;
}

inline nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json report_json(const ConfusionMatrix& m) {
    nlohmann::json j;
    j["classes"] = m.names();
    j["total"] = m.total();
    j["accuracy"] = optional_json(m.accuracy());
    nlohmann::json per = nlohmann::json::array();
    for (std::size_t c = 0; c < m.k(); ++c) {
        per.push_back({{"class", m.names()[c]},
                       {"support", m.row_total(c)},
                       {"predicted", m.col_total(c)},
                       {"recall", optional_json(m.recall(c))},
                       {"precision", optional_json(m.precision(c))}});
    }
    j["per_class"] = per;
    nlohmann::json raw = nlohmann::json::array();
    for (std::size_t r = 0; r < m.k(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < m.k(); ++c) row.push_back(m.at(r, c));
        raw.push_back(row);
    }
    j["matrix"] = raw;
    nlohmann::json norm = nlohmann::json::array();
    for (const auto& row : m.normalized()) norm.push_back(row ? nlohmann::json(*row) : nlohmann::json(nullptr));
    j["normalized"] = norm;
    if (m.k() == 2) j["attack_precision"] = optional_json(attack_precision(m));
    return j;
}

/// Matrix as CSV: header "true\pred,<names>", one row per true class.
inline void write_matrix_csv(std::ostream& out, const ConfusionMatrix& m, bool normalized = false) {
    out << "true\\pred";
    for (const auto& n : m.names()) out << ',' << n;
    out << '\n';
    const auto norm = m.normalized();
    for (std::size_t r = 0; r < m.k(); ++r) {
        out << m.names()[r];
        for (std::size_t c = 0; c < m.k(); ++c) {
            out << ',';
            if (!normalized) {
                out << m.at(r, c);
            } else if (norm[r]) {
                out << (*norm[r])[c];
            }
        }
        out << '\n';
    }
}

/// Predictions for a frozen model over a record set. Splits the records into
/// `jobs` contiguous shards; the merged matrix does not depend on `jobs`.
inline ConfusionMatrix evaluate(const nn::Model<float>& model, ApproachId ap, Task task,
                                std::span<const LabeledRecord> records, std::size_t jobs = 1) {
    const auto& a = approach(ap);
    if (model.input_shape().size() != a.height * a.width) {
        throw ShapeError("evaluate: model input does not match approach " + std::string(a.name));
    }
    jobs = std::max<std::size_t>(1, std::min(jobs, records.size() / 256 + 1));
    std::vector<ConfusionMatrix> parts(jobs, ConfusionMatrix::for_task(task));
    auto work = [&](std::size_t part) {
        const std::size_t lo = records.size() * part / jobs, hi = records.size() * (part + 1) / jobs;
        auto ws = model.make_workspace();
        std::vector<float> img(a.height * a.width);
        for (std::size_t i = lo; i < hi; ++i) {
            encode_into<float>(records[i].bytes, a, img);
            parts[part].add(target_of(records[i], task), nn::predict_class<float>(model.forward(img, ws)));
        }
    };
    if (jobs == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t p = 0; p < jobs; ++p) pool.emplace_back(work, p);
        for (auto& t : pool) t.join();
    }
    for (std::size_t p = 1; p < jobs; ++p) parts[0].merge(parts[p]);
    return parts[0];
}

inline ConfusionMatrix evaluate(const Checkpoint& ck, std::span<const LabeledRecord> records, std::size_t jobs = 1) {
    return evaluate(ck.model(), ck.spec.approach, ck.spec.task, records, jobs);
}

}  // namespace sphbi
