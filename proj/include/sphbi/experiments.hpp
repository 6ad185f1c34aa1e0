#pragma once

// Training runs, multi-seed replication, cap sweeps, the two-level factorial
// and a resumable JSON-lines results ledger.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sphbi/byte_codec.hpp"
#include "sphbi/core.hpp"
#include "sphbi/dataset.hpp"
#include "sphbi/metrics.hpp"
#include "sphbi/models.hpp"
#include "sphbi/nn/loss.hpp"
#include "sphbi/nn/optim.hpp"
#include "sphbi/stats.hpp"

namespace sphbi {

inline const std::vector<std::uint64_t> kDefaultSeeds = {42, 0, 1, 2, 3, 4, 5, 6, 7, 8};
inline const std::vector<std::size_t> kDefaultCaps = {500, 1000, 2000, 5000, 10000, 20000, 50000};

struct RunConfig {
    Task task = Task::Multiclass;
    ApproachId approach = ApproachId::A2b;
    std::size_t cap = 1000;
    std::uint64_t seed = 42;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double lr = 0.01;
    nn::OptimizerKind optimizer = nn::OptimizerKind::Sgd;
    double momentum = 0.9;
    std::optional<Activation> activation;
    bool batchnorm = false;
    bool deep = false;

    /// Multiclass: SGD momentum 0.9, lr 0.01, 100 epochs. Binary: Adam lr 0.01,
    /// 20 epochs. Batch 32 for both.
    static RunConfig defaults(Task t, ApproachId a = ApproachId::A2b) {
        RunConfig c;
        c.task = t;
        c.approach = a;
        if (t == Task::Binary) {
            c.optimizer = nn::OptimizerKind::Adam;
            c.epochs = 20;
        }
        return c;
    }

    ArchOptions arch() const { return {activation, batchnorm, deep}; }

    nn::OptimizerConfig optimizer_config() const {
        nn::OptimizerConfig o;
        o.kind = optimizer;
        o.lr = lr;
        o.momentum = momentum;
        return o;
    }

    void validate() const {
        if (cap < 1) throw ConfigError("cap must be >= 1");
        if (batch_size < 1) throw ConfigError("batch size must be >= 1");
        if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
        if (deep && task == Task::Binary) throw ConfigError("the deep variant exists only for the multiclass task");
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["task"] = task_name(task);
        j["approach"] = std::string(sphbi::approach(approach).name);
        j["cap"] = cap;
        j["seed"] = seed;
        j["epochs"] = epochs;
        j["batch_size"] = batch_size;
        j["lr"] = lr;
        j["optimizer"] = std::string(nn::optimizer_name(optimizer));
        j["momentum"] = momentum;
        j["activation"] = activation ? nlohmann::json(std::string(nn::activation_name(*activation))) : nlohmann::json(nullptr);
        j["batchnorm"] = batchnorm;
        j["deep"] = deep;
        return j;
    }

    /// Fields missing from `j` keep the task defaults (or `base` when given).
    static RunConfig from_json(const nlohmann::json& j, std::optional<RunConfig> base = std::nullopt) {
        RunConfig c = base.value_or(RunConfig{});
        try {
            if (j.contains("task")) {
                const auto t = parse_task(j.at("task").get<std::string>());
                if (!t) throw ConfigError("unknown task " + j.at("task").get<std::string>());
                if (!base) c = defaults(*t, c.approach);
                c.task = *t;
            }
            if (j.contains("approach")) {
                const auto a = parse_approach(j.at("approach").get<std::string>());
                if (!a) throw ConfigError("unknown approach " + j.at("approach").get<std::string>());
                c.approach = *a;
            }
            if (j.contains("cap")) c.cap = j.at("cap").get<std::size_t>();
            if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
            if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
            if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
            if (j.contains("lr")) c.lr = j.at("lr").get<double>();
            if (j.contains("optimizer")) {
                const auto o = j.at("optimizer").get<std::string>();
                if (o != "sgd" && o != "adam") throw ConfigError("unknown optimizer " + o);
                c.optimizer = o == "sgd" ? nn::OptimizerKind::Sgd : nn::OptimizerKind::Adam;
            }
            if (j.contains("momentum")) c.momentum = j.at("momentum").get<double>();
            if (j.contains("activation")) {
                if (j.at("activation").is_null()) {
                    c.activation.reset();
                } else {
                    const auto a = j.at("activation").get<std::string>();
                    if (a != "sigmoid" && a != "tanh") throw ConfigError("unknown activation " + a);
                    c.activation = a == "tanh" ? nn::Activation::Tanh : nn::Activation::Sigmoid;
                }
            }
            if (j.contains("batchnorm")) c.batchnorm = j.at("batchnorm").get<bool>();
            if (j.contains("deep")) c.deep = j.at("deep").get<bool>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("run config: ") + e.what());
        }
        c.validate();
        return c;
    }
};

/// FNV-1a over record bytes, labels and timestamps.
inline std::uint64_t fingerprint(std::span<const LabeledRecord> records, std::uint64_t h = 0xcbf29ce484222325ULL) {
    std::vector<std::uint8_t> buf;
    for (const auto& r : records) {
        buf.assign(r.bytes.begin(), r.bytes.end());
        buf.push_back(r.label ? static_cast<std::uint8_t>(*r.label) : kUnlabelled);
        bytes::put_le(buf, r.timestamp_us);
        h = bytes::fnv1a(buf, h);
    }
    return h;
}

/// Stable run identity: canonical config JSON plus the data fingerprint.
inline std::string config_hash(const RunConfig& c, std::uint64_t data_fp) {
    return bytes::hex64(bytes::fnv1a(c.to_json().dump() + "|" + bytes::hex64(data_fp)));
}

// ---- training ----

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    std::optional<double> val_loss;
    double seconds = 0.0;
};

struct TrainResult {
    Checkpoint best;
    std::vector<EpochLog> log;
};

namespace detail {

struct EncodedSet {
    std::size_t dim = 0;
    std::vector<float> images;
    std::vector<std::uint32_t> targets;

    std::size_t size() const { return targets.size(); }
    std::span<const float> image(std::size_t i) const { return {images.data() + i * dim, dim}; }
};

inline EncodedSet encode_set(std::span<const LabeledRecord> recs, const Approach& a, Task task) {
    EncodedSet s;
    s.dim = a.height * a.width;
    s.images.resize(recs.size() * s.dim);
    for (std::size_t i = 0; i < recs.size(); ++i) {
        encode_into<float>(recs[i].bytes, a, std::span<float>(s.images.data() + i * s.dim, s.dim));
        s.targets.push_back(static_cast<std::uint32_t>(target_of(recs[i], task)));
    }
    return s;
}

/// Weighted mean loss sum(w_i * l_i) / sum(w_i).
inline double mean_loss(const nn::Model<float>& m, const EncodedSet& set, const std::vector<float>& w) {
    if (set.size() == 0) return std::numeric_limits<double>::quiet_NaN();
    auto ws = m.make_workspace();
    std::vector<float> g(m.output_size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const float wi = w[set.targets[i]];
        num += nn::sample_loss<float>(m.forward(set.image(i), ws), set.targets[i], wi, g);
        den += wi;
    }
    return num / den;
}

/// Fisher-Yates with plain modulo reduction of mt19937_64 output, so the
/// permutation is the same on every standard library.
inline void shuffle(std::vector<std::uint32_t>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

inline constexpr std::uint64_t kShuffleStream = 0x9e3779b97f4a7c15ULL;

}  // namespace detail

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains on an already-capped training set and keeps the epoch with the lowest
/// validation loss (the earliest on ties). Zero epochs returns the initial
/// weights. Throws RunFailure on a non-finite loss.
inline TrainResult train(const RunConfig& cfg, std::span<const LabeledRecord> train_set,
                         std::span<const LabeledRecord> val_set, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    const auto spec = build_model(cfg.task, cfg.approach, cfg.arch());
    const auto& a = approach(cfg.approach);
    auto model = instantiate<float>(spec);
    model.init(cfg.seed);

    const auto cw = class_weights(train_set, cfg.task);
    std::vector<float> w(cw.weights.begin(), cw.weights.end());
    const auto tr = detail::encode_set(train_set, a, cfg.task);
    const auto va = detail::encode_set(val_set, a, cfg.task);

    TrainResult res;
    auto snapshot = [&](std::size_t epoch, std::optional<double> vl) {
        Checkpoint ck;
        ck.spec = spec;
        ck.params.assign(model.params().begin(), model.params().end());
        ck.seed = cfg.seed;
        ck.epoch = epoch;
        ck.val_loss = vl;
        return ck;
    };
    auto val_loss = [&]() -> std::optional<double> {
        if (va.size() == 0) return std::nullopt;
        return detail::mean_loss(model, va, w);
    };

    res.best = snapshot(0, val_loss());
    if (cfg.epochs == 0) return res;

    nn::Optimizer<float> opt(cfg.optimizer_config(), model.param_count());
    std::mt19937_64 rng(cfg.seed ^ detail::kShuffleStream);
    std::vector<std::uint32_t> order(tr.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::uint32_t>(i);
    auto ws = model.make_workspace();
    std::vector<float> grad(model.param_count());
    std::vector<float> gout(model.output_size());
    std::optional<double> best_score;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        detail::shuffle(order, rng);
        double loss_sum = 0.0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
            const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
            std::fill(grad.begin(), grad.end(), 0.0f);
            for (std::size_t k = b0; k < b1; ++k) {
                const auto i = order[k];
                const auto out = model.forward(tr.image(i), ws);
                const float l = nn::sample_loss<float>(out, tr.targets[i], w[tr.targets[i]], gout);
                if (!std::isfinite(l)) {
                    throw RunFailure("non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                                     std::to_string(i) + " (class " + std::to_string(tr.targets[i]) +
                                     "); lr=" + std::to_string(cfg.lr));
                }
                loss_sum += l;
                model.backward(gout, ws, grad);
            }
            const float inv = 1.0f / static_cast<float>(b1 - b0);
            for (auto& g : grad) g *= inv;
            opt.step(model.params(), grad);
        }
        EpochLog log;
        log.epoch = epoch;
        log.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(1, tr.size()));
        log.val_loss = val_loss();
        if (log.val_loss && !std::isfinite(*log.val_loss)) {
            throw RunFailure("non-finite validation loss at epoch " + std::to_string(epoch));
        }
        log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.log.push_back(log);
        if (on_epoch) on_epoch(log);
        // Without a validation set the training loss stands in.
        const double score = log.val_loss.value_or(log.train_loss);
        if (!best_score || score < *best_score) {
            best_score = score;
            res.best = snapshot(epoch, log.val_loss);
        }
    }
    return res;
}

// ---- data preparation ----

/// Capped training/validation sets plus the uncapped test set.
struct PreparedData {
    std::vector<LabeledRecord> train, val;
    std::span<const LabeledRecord> test;
    std::uint64_t fingerprint = 0;
};

inline PreparedData prepare(const SplitParts& parts, std::size_t cap, Task task) {
    PreparedData d;
    d.train = apply_cap(parts.train, cap, task);
    d.val = apply_cap(parts.val, cap, task);
    d.test = parts.test;
    d.fingerprint = fingerprint(parts.test, fingerprint(parts.val, fingerprint(parts.train)));
    return d;
}

// ---- run results and ledger ----

struct RunResult {
    RunConfig config;
    std::string hash;
    double accuracy = 0.0;
    std::vector<std::optional<double>> recall;
    std::size_t best_epoch = 0;
    std::optional<double> best_val_loss;
    double wall_seconds = 0.0;  // not serialised, so reports stay reproducible
    std::optional<std::string> error;

    bool ok() const { return !error.has_value(); }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["config_hash"] = hash;
        j["config"] = config.to_json();
        j["seed"] = config.seed;
        if (error) {
            j["error"] = *error;
            return j;
        }
        j["accuracy"] = accuracy;
        nlohmann::json rec = nlohmann::json::object();
        for (std::size_t c = 0; c < recall.size(); ++c) rec[std::string(target_name(config.task, c))] = optional_json(recall[c]);
        j["recall"] = rec;
        j["best_epoch"] = best_epoch;
        j["best_val_loss"] = best_val_loss ? nlohmann::json(*best_val_loss) : nlohmann::json(nullptr);
        return j;
    }

    static RunResult from_json(const nlohmann::json& j) {
        RunResult r;
        r.config = RunConfig::from_json(j.at("config"));
        r.hash = j.at("config_hash").get<std::string>();
        if (j.contains("error")) {
            r.error = j.at("error").get<std::string>();
            return r;
        }
        r.accuracy = j.at("accuracy").get<double>();
        for (std::size_t c = 0; c < num_classes(r.config.task); ++c) {
            const auto& v = j.at("recall").at(std::string(target_name(r.config.task, c)));
            r.recall.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
        }
        r.best_epoch = j.at("best_epoch").get<std::size_t>();
        if (!j.at("best_val_loss").is_null()) r.best_val_loss = j.at("best_val_loss").get<double>();
        return r;
    }
};

/// JSON-lines file of completed runs keyed by config hash. Failed runs are
/// not recorded, so they are retried on the next invocation.
class ResultsLedger {
public:
    ResultsLedger() = default;
    explicit ResultsLedger(std::filesystem::path path) : path_(std::move(path)) {
        std::ifstream in(path_);
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            ++n;
            if (line.empty()) continue;
            try {
                auto r = RunResult::from_json(nlohmann::json::parse(line));
                if (r.ok()) done_[r.hash] = r;
            } catch (const std::exception& e) {
                throw FormatError("results ledger " + path_.string() + " line " + std::to_string(n) + ": " + e.what());
            }
        }
    }

    std::optional<RunResult> find(const std::string& hash) const {
        std::lock_guard lock(mu_);
        auto it = done_.find(hash);
        if (it == done_.end()) return std::nullopt;
        return it->second;
    }

    void record(const RunResult& r) {
        if (!r.ok()) return;
        std::lock_guard lock(mu_);
        done_[r.hash] = r;
        if (path_.empty()) return;
        std::ofstream out(path_, std::ios::app);
        out << r.to_json().dump() << '\n';
        if (!out) throw FormatError("results ledger: cannot append to " + path_.string());
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return done_.size();
    }

private:
    std::filesystem::path path_;
    std::map<std::string, RunResult> done_;
    mutable std::mutex mu_;
};

/// Trains and evaluates one configuration on the test part, unless the ledger
/// already holds it.
inline RunResult run_one(const RunConfig& cfg, const SplitParts& parts, ResultsLedger* ledger = nullptr,
                         Checkpoint* checkpoint_out = nullptr) {
    const auto data = prepare(parts, cfg.cap, cfg.task);
    RunResult r;
    r.config = cfg;
    r.hash = config_hash(cfg, data.fingerprint);
    if (ledger && !checkpoint_out) {
        if (auto hit = ledger->find(r.hash)) return *hit;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
        auto tr = train(cfg, data.train, data.val);
        tr.best.meta["config"] = cfg.to_json();
        tr.best.meta["config_hash"] = r.hash;
        tr.best.meta["data_fingerprint"] = bytes::hex64(data.fingerprint);
        const auto cm = evaluate(tr.best, data.test);
        r.accuracy = cm.accuracy().value_or(0.0);
        for (std::size_t c = 0; c < cm.k(); ++c) r.recall.push_back(cm.recall(c));
        r.best_epoch = tr.best.epoch;
        r.best_val_loss = tr.best.val_loss;
        if (checkpoint_out) *checkpoint_out = std::move(tr.best);
    } catch (const RunFailure& e) {
        r.error = e.what();
    } catch (const ConfigError& e) {
        r.error = e.what();
    } catch (const ShapeError& e) {
        r.error = e.what();
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (ledger) ledger->record(r);
    return r;
}

/// Runs every config on up to `jobs` threads; results come back in input
/// order and do not depend on `jobs`.
inline std::vector<RunResult> run_all(const std::vector<RunConfig>& cfgs, const SplitParts& parts, std::size_t jobs = 1,
                                      ResultsLedger* ledger = nullptr,
                                      const std::function<void(const RunResult&)>& on_done = {}) {
    std::vector<RunResult> out(cfgs.size());
    std::atomic<std::size_t> next{0};
    std::mutex cb_mu;
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cfgs.size()) return;
            out[i] = run_one(cfgs[i], parts, ledger);
            if (on_done) {
                std::lock_guard lock(cb_mu);
                on_done(out[i]);
            }
        }
    };
    jobs = std::max<std::size_t>(1, std::min(jobs, cfgs.size()));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return out;
}

// ---- multi-seed ----

struct MultiSeedResult {
    std::vector<RunResult> runs;
    std::optional<StatSummary> summary;  // accuracy, over successful runs
    bool partial = false;                // some seed failed

    std::vector<double> accuracies() const {
        std::vector<double> v;
        for (const auto& r : runs) {
            if (r.ok()) v.push_back(r.accuracy);
        }
        return v;
    }

    /// Mean recall of class c over successful runs where it is defined.
    std::optional<double> mean_recall(std::size_t c) const {
        double s = 0.0;
        std::size_t n = 0;
        for (const auto& r : runs) {
            if (r.ok() && c < r.recall.size() && r.recall[c]) {
                s += *r.recall[c];
                ++n;
            }
        }
        if (n == 0) return std::nullopt;
        return s / double(n);
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["runs"] = nlohmann::json::array();
        for (const auto& r : runs) j["runs"].push_back(r.to_json());
        j["summary"] = summary ? summary->to_json() : nlohmann::json(nullptr);
        j["partial"] = partial;
        return j;
    }
};

inline MultiSeedResult summarize(std::vector<RunResult> runs) {
    MultiSeedResult m;
    m.runs = std::move(runs);
    for (const auto& r : m.runs) m.partial |= !r.ok();
    const auto acc = m.accuracies();
    if (acc.size() >= 2) m.summary = StatSummary::from_values(acc);
    return m;
}

inline MultiSeedResult multi_seed(const RunConfig& base, std::span<const std::uint64_t> seeds, const SplitParts& parts,
                                  std::size_t jobs = 1, ResultsLedger* ledger = nullptr,
                                  const std::function<void(const RunResult&)>& on_done = {}) {
    if (seeds.size() < 2) throw ConfigError("multi_seed needs at least 2 seeds");
    std::vector<RunConfig> cfgs;
    for (auto s : seeds) {
        auto c = base;
        c.seed = s;
        cfgs.push_back(c);
    }
    return summarize(run_all(cfgs, parts, jobs, ledger, on_done));
}

// ---- cap sweep ----

struct SweepRow {
    ApproachId approach;
    std::size_t cap = 0;
    MultiSeedResult result;
};

inline std::vector<SweepRow> cap_sweep(const std::vector<RunConfig>& bases, std::span<const std::size_t> caps,
                                       std::span<const std::uint64_t> seeds, const SplitParts& parts,
                                       std::size_t jobs = 1, ResultsLedger* ledger = nullptr,
                                       const std::function<void(const RunResult&)>& on_done = {}) {
    if (seeds.size() < 2) throw ConfigError("cap sweep needs at least 2 seeds");
    std::vector<RunConfig> cfgs;
    for (const auto& b : bases) {
        for (auto cap : caps) {
            for (auto s : seeds) {
                auto c = b;
                c.cap = cap;
                c.seed = s;
                c.validate();
                cfgs.push_back(c);
            }
        }
    }
    auto results = run_all(cfgs, parts, jobs, ledger, on_done);
    std::vector<SweepRow> rows;
    std::size_t k = 0;
    for (const auto& b : bases) {
        for (auto cap : caps) {
            std::vector<RunResult> rs(results.begin() + static_cast<std::ptrdiff_t>(k),
                                      results.begin() + static_cast<std::ptrdiff_t>(k + seeds.size()));
            k += seeds.size();
            rows.push_back({b.approach, cap, summarize(std::move(rs))});
        }
    }
    return rows;
}

/// One row per (approach, cap): accuracy mean/std/CI and mean per-class recall.
inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows, Task task) {
    out << "approach,cap,n,accuracy_mean,accuracy_std,ci_low,ci_high";
    for (std::size_t c = 0; c < num_classes(task); ++c) out << ",recall_" << target_name(task, c);
    out << '\n';
    for (const auto& r : rows) {
        out << approach(r.approach).name << ',' << r.cap << ',';
        if (r.result.summary) {
            const auto& s = *r.result.summary;
            out << s.n << ',' << s.mean << ',' << s.std << ',' << s.ci_low << ',' << s.ci_high;
        } else {
            out << r.result.accuracies().size() << ",,,,";
        }
        for (std::size_t c = 0; c < num_classes(task); ++c) {
            out << ',';
            if (auto m = r.result.mean_recall(c)) out << *m;
        }
        out << '\n';
    }
}

// ---- factorial ----

/// A two-level factor; each level is a JSON patch applied to the run config.
struct Factor {
    std::string name;
    nlohmann::json low;
    nlohmann::json high;
};

inline std::vector<Factor> default_factors() {
    return {
        {"activation", {{"activation", "sigmoid"}}, {{"activation", "tanh"}}},
        {"batchnorm", {{"batchnorm", false}}, {{"batchnorm", true}}},
        {"lr", {{"lr", 0.01}}, {{"lr", 0.001}}},
        {"batch", {{"batch_size", 32}}, {{"batch_size", 64}}},
    };
}

struct FactorialCell {
    std::vector<bool> levels;  // false = low, true = high, per factor
    RunResult result;
};

struct FactorialResult {
    std::vector<Factor> factors;
    std::vector<FactorialCell> multiclass, binary;

    /// Highest-accuracy multiclass cell (first on ties).
    const FactorialCell* best_multiclass() const {
        const FactorialCell* best = nullptr;
        for (const auto& c : multiclass) {
            if (c.result.ok() && (!best || c.result.accuracy > best->result.accuracy)) best = &c;
        }
        return best;
    }

    /// max - min accuracy across successful cells of one task.
    static std::optional<double> spread(const std::vector<FactorialCell>& cells) {
        std::optional<double> lo, hi;
        for (const auto& c : cells) {
            if (!c.result.ok()) continue;
            lo = lo ? std::min(*lo, c.result.accuracy) : c.result.accuracy;
            hi = hi ? std::max(*hi, c.result.accuracy) : c.result.accuracy;
        }
        if (!lo) return std::nullopt;
        return *hi - *lo;
    }

    nlohmann::json to_json() const {
        auto cells = [&](const std::vector<FactorialCell>& v) {
            nlohmann::json a = nlohmann::json::array();
            for (const auto& c : v) {
                nlohmann::json lv;
                for (std::size_t f = 0; f < factors.size(); ++f) lv[factors[f].name] = c.levels[f] ? "high" : "low";
                a.push_back({{"levels", lv}, {"result", c.result.to_json()}});
            }
            return a;
        };
        nlohmann::json j;
        j["multiclass"] = cells(multiclass);
        j["binary"] = cells(binary);
        const auto* b = best_multiclass();
        j["best_multiclass"] = b ? b->result.config.to_json() : nlohmann::json(nullptr);
        j["binary_spread"] = optional_json(spread(binary));
        j["multiclass_spread"] = optional_json(spread(multiclass));
        return j;
    }
};

/// All 2^F level combinations for both tasks. Combinations that produce an
/// identical config (e.g. a factor whose two levels agree) are run once.
inline std::vector<RunConfig> factorial_configs(const RunConfig& base, const std::vector<Factor>& factors,
                                                std::vector<std::vector<bool>>* levels_out = nullptr) {
    if (factors.size() > 16) throw ConfigError("too many factors");
    std::vector<RunConfig> out;
    std::vector<std::string> seen;
    for (std::size_t mask = 0; mask < (std::size_t{1} << factors.size()); ++mask) {
        auto j = base.to_json();
        std::vector<bool> lv;
        for (std::size_t f = 0; f < factors.size(); ++f) {
            const bool high = (mask >> f) & 1u;
            lv.push_back(high);
            j.merge_patch(high ? factors[f].high : factors[f].low);
        }
        auto c = RunConfig::from_json(j, base);
        const auto key = c.to_json().dump();
        if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
        seen.push_back(key);
        out.push_back(c);
        if (levels_out) levels_out->push_back(lv);
    }
    return out;
}

inline FactorialResult factorial(ApproachId ap, const std::vector<Factor>& factors, const SplitParts& parts,
                                 std::uint64_t seed = 42, std::size_t cap = 1000, std::size_t jobs = 1,
                                 ResultsLedger* ledger = nullptr,
                                 const std::function<void(const RunResult&)>& on_done = {},
                                 std::optional<std::size_t> epochs_override = std::nullopt) {
    FactorialResult res;
    res.factors = factors;
    std::vector<RunConfig> all;
    std::vector<std::vector<bool>> lv_mc, lv_bin;
    for (Task t : {Task::Multiclass, Task::Binary}) {
        auto base = RunConfig::defaults(t, ap);
        base.seed = seed;
        base.cap = cap;
        if (epochs_override) base.epochs = *epochs_override;
        auto cfgs = factorial_configs(base, factors, t == Task::Multiclass ? &lv_mc : &lv_bin);
        all.insert(all.end(), cfgs.begin(), cfgs.end());
    }
    const auto results = run_all(all, parts, jobs, ledger, on_done);
    for (std::size_t i = 0; i < lv_mc.size(); ++i) res.multiclass.push_back({lv_mc[i], results[i]});
    for (std::size_t i = 0; i < lv_bin.size(); ++i) res.binary.push_back({lv_bin[i], results[lv_mc.size() + i]});
    return res;
}

struct FollowUp {
    MultiSeedResult winner, baseline;
    TTest paired;

    nlohmann::json to_json() const {
        return {{"winner", winner.to_json()}, {"baseline", baseline.to_json()}, {"paired_t", paired.to_json()}};
    }
};

/// Multi-seed replication of a winning config against a baseline with a
/// paired t-test over matched seeds.
inline FollowUp factorial_followup(const RunConfig& winner, const RunConfig& baseline,
                                   std::span<const std::uint64_t> seeds, const SplitParts& parts, std::size_t jobs = 1,
                                   ResultsLedger* ledger = nullptr) {
    FollowUp f;
    f.winner = multi_seed(winner, seeds, parts, jobs, ledger);
    f.baseline = multi_seed(baseline, seeds, parts, jobs, ledger);
    std::vector<double> a, b;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (f.winner.runs[i].ok() && f.baseline.runs[i].ok()) {
            a.push_back(f.winner.runs[i].accuracy);
            b.push_back(f.baseline.runs[i].accuracy);
        }
    }
    f.paired = paired_t(a, b);
    return f;
}

}  // namespace sphbi
