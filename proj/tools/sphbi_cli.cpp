// sphbi: command-line front end for the Modbus single-packet image pipeline.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data format
// error, 3 run failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sphbi/sphbi.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sphbi;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw FormatError("cannot open " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string file_hash(const fs::path& p) { return bytes::hex64(bytes::fnv1a(read_file(p))); }

json read_json(const fs::path& p) {
    try {
        return json::parse(read_file(p));
    } catch (const json::parse_error& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

std::ofstream create(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw FormatError("cannot create " + p.string());
    return out;
}

void write_json(const fs::path& p, const json& j) {
    auto out = create(p);
    out << j.dump(2) << '\n';
}

json provenance(const std::string& command, json inputs = json::object(), json extra = json::object()) {
    json j{{"tool", "sphbi"}, {"version", kToolVersion}, {"command", command}, {"inputs", std::move(inputs)}};
    for (auto& [k, v] : extra.items()) j[k] = v;
    return j;
}

/// Leading comment line for CSV outputs.
void csv_provenance(std::ostream& out, const json& prov) { out << "# " << prov.dump() << '\n'; }

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = detail::trim(item);
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            if constexpr (std::is_floating_point_v<T>) {
                out.push_back(static_cast<T>(std::stod(item, &used)));
            } else {
                if (item[0] == '-') throw std::invalid_argument("negative");
                out.push_back(static_cast<T>(std::stoull(item, &used)));
            }
            if (used != item.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ConfigError(std::string("bad ") + what + " value '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError(std::string("empty ") + what + " list");
    return out;
}

std::vector<LabeledRecord> load_labelled(const fs::path& p) {
    auto recs = read_records_file(p);
    for (const auto& r : recs) {
        if (!r.label) throw FormatError(p.string() + " contains unlabelled records; run `sphbi label` first");
    }
    return recs;
}

struct SplitFiles {
    fs::path train, val, test;
};

SplitFiles split_files(const fs::path& dir) { return {dir / "train.spb", dir / "val.spb", dir / "test.spb"}; }

SplitParts load_split(const fs::path& dir) {
    const auto f = split_files(dir);
    SplitParts p;
    p.train = load_labelled(f.train);
    p.val = load_labelled(f.val);
    p.test = load_labelled(f.test);
    return p;
}

json split_inputs(const fs::path& dir) {
    const auto f = split_files(dir);
    return {{"train", file_hash(f.train)}, {"val", file_hash(f.val)}, {"test", file_hash(f.test)}};
}

void progress(const RunResult& r) {
    std::cerr << "  " << approach(r.config.approach).name << ' ' << task_name(r.config.task) << " cap=" << r.config.cap
              << " seed=" << r.config.seed << ' ';
    if (r.ok()) {
        std::cerr << "acc=" << r.accuracy << " (" << r.wall_seconds << " s)\n";
    } else {
        std::cerr << "FAILED: " << *r.error << '\n';
    }
}

// ---- subcommands ----

struct ExtractOpts {
    std::string pcap, manifest, out, survey;
    std::size_t jobs = 1;
};

int cmd_extract(const ExtractOpts& o) {
    std::vector<ManifestEntry> manifest;
    if (!o.manifest.empty()) manifest = read_manifest_file(o.manifest);
    const auto entries = entries_for(list_captures(o.pcap), manifest);
    const auto ex = extract(entries, o.jobs);
    write_records_file(o.out, ex.records);
    std::size_t failed = 0, skipped = 0;
    for (const auto& f : ex.survey.files) {
        if (f.error) {
            ++failed;
            std::cerr << "warning: " << f.path.string() << ": " << *f.error << '\n';
        }
        skipped += f.skipped_total();
    }
    if (!o.survey.empty()) {
        json j = ex.survey.to_json();
        json inputs = json::object();
        if (!o.manifest.empty()) inputs["manifest"] = file_hash(o.manifest);
        j["provenance"] = provenance("extract", inputs);
        write_json(o.survey, j);
    }
    std::cout << "files " << ex.survey.files.size() << ", modbus packets " << ex.records.size() << ", skipped " << skipped
              << ", unreadable " << failed << '\n';
    if (!ex.survey.files.empty() && failed == ex.survey.files.size()) return 2;
    return 0;
}

struct LabelOpts {
    std::string records, attack_log, out, length_table, summary, ground_truth;
    bool offset_check = false;
    double offset_range_s = 86400.0;
    double offset_step_s = 1.0;
};

int cmd_label(const LabelOpts& o) {
    auto recs = read_records_file(o.records);
    std::ifstream log(o.attack_log);
    if (!log) throw FormatError("cannot open " + o.attack_log);
    const auto windows = read_attack_log(log);
    const auto lengths =
        o.length_table.empty() ? LengthTable::defaults() : LengthTable::from_json(read_json(o.length_table));
    json report;
    if (o.offset_check) {
        std::vector<std::uint64_t> ts;
        ts.reserve(recs.size());
        for (const auto& r : recs) ts.push_back(r.timestamp_us);
        OffsetGrid g;
        g.min_us = -static_cast<std::int64_t>(o.offset_range_s * 1e6);
        g.max_us = static_cast<std::int64_t>(o.offset_range_s * 1e6);
        g.step_us = static_cast<std::int64_t>(o.offset_step_s * 1e6);
        const auto rep = check_offset(o.records, ts, windows, g);
        report["offset_check"] = rep.to_json();
        std::cout << "offset check: best offset " << double(rep.best_offset_us) / 1e6 << " s, covered "
                  << rep.covered_at_best << " (at zero: " << rep.covered_at_zero << ")\n";
        if (rep.warning) std::cerr << "warning: " << rep.note << '\n';
    }
    const auto sum = label_corpus(recs, windows, lengths);
    write_records_file(o.out, recs);
    std::cout << sum.table();
    if (sum.unclosed_windows) std::cerr << "warning: " << sum.unclosed_windows << " windows without an end marker\n";
    report["summary"] = sum.to_json();
    if (!o.ground_truth.empty()) {
        std::ifstream gt(o.ground_truth);
        if (!gt) throw FormatError("cannot open " + o.ground_truth);
        const auto truth = synth::read_ground_truth(gt);
        if (truth.size() != recs.size()) {
            throw FormatError("ground truth has " + std::to_string(truth.size()) + " rows for " +
                              std::to_string(recs.size()) + " records");
        }
        std::array<std::size_t, kNumClasses> n{}, ok{};
        std::size_t agree = 0;
        for (std::size_t i = 0; i < recs.size(); ++i) {
            ++n[index_of(truth[i])];
            if (*recs[i].label == truth[i]) {
                ++agree;
                ++ok[index_of(truth[i])];
            }
        }
        json a;
        a["agree"] = agree;
        a["total"] = recs.size();
        a["fraction"] = recs.empty() ? 1.0 : double(agree) / double(recs.size());
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            if (n[c]) a["per_class"][std::string(kClassNames[c])] = double(ok[c]) / double(n[c]);
        }
        report["ground_truth_agreement"] = a;
        std::cout << "ground-truth agreement " << agree << '/' << recs.size() << " ("
                  << 100.0 * a["fraction"].get<double>() << "%)\n";
    }
    if (!o.summary.empty()) {
        json inputs{{"records", file_hash(o.records)}, {"attack_log", file_hash(o.attack_log)}};
        if (!o.length_table.empty()) inputs["length_table"] = file_hash(o.length_table);
        report["provenance"] = provenance("label", inputs);
        write_json(o.summary, report);
    }
    return 0;
}

struct SplitOpts {
    std::string records, ratios = "0.8,0.1,0.1", out;
};

int cmd_split(const SplitOpts& o) {
    const auto r = parse_list<double>(o.ratios, "ratio");
    if (r.size() != 3) throw ConfigError("--ratios needs three values");
    const SplitSpec spec{r[0], r[1], r[2]};
    spec.validate();
    const RecordStore store(load_labelled(o.records));
    const auto parts = split(store, spec);
    const auto f = split_files(o.out);
    fs::create_directories(o.out);
    write_records_file(f.train, parts.train);
    write_records_file(f.val, parts.val);
    write_records_file(f.test, parts.test);
    json j;
    json counts;
    auto count = [](const std::vector<LabeledRecord>& v) {
        std::array<std::size_t, kNumClasses> n{};
        for (const auto& x : v) ++n[index_of(x.cls())];
        return n;
    };
    const auto a = count(parts.train), b = count(parts.val), c = count(parts.test);
    std::cout << "class,train,val,test\n";
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        counts[std::string(kClassNames[k])] = {{"train", a[k]}, {"val", b[k]}, {"test", c[k]}};
        std::cout << kClassNames[k] << ',' << a[k] << ',' << b[k] << ',' << c[k] << '\n';
    }
    j["counts"] = counts;
    j["ratios"] = r;
    j["warnings"] = parts.warnings;
    j["provenance"] = provenance("split", {{"records", file_hash(o.records)}});
    write_json(fs::path(o.out) / "split.json", j);
    for (const auto& w : parts.warnings) std::cerr << "warning: " << w << '\n';
    return 0;
}

struct RunFlags {
    std::string config, task, approach, optimizer, activation;
    std::optional<std::size_t> cap, epochs, batch;
    std::optional<std::uint64_t> seed;
    std::optional<double> lr, momentum;
    bool batchnorm = false, deep = false;

    void add(CLI::App* sc) {
        sc->add_option("--config", config, "Run config JSON (flags override its fields)");
        sc->add_option("--task", task, "binary or multiclass (default multiclass)")->check(CLI::IsMember({"binary", "multiclass"}));
        sc->add_option("--approach", approach, "1, 2, 2b, 3 or 3b (default 2b)")->check(CLI::IsMember({"1", "2", "2b", "3", "3b"}));
        sc->add_option("--cap", cap, "Per-class cap on train/val records (default 1000)");
        sc->add_option("--seed", seed, "Initialisation and shuffle seed (default 42)");
        sc->add_option("--epochs", epochs, "Epochs (default 100 multiclass, 20 binary)");
        sc->add_option("--batch", batch, "Batch size (default 32)");
        sc->add_option("--lr", lr, "Learning rate (default 0.01)");
        sc->add_option("--optimizer", optimizer, "sgd or adam (default sgd multiclass, adam binary)")->check(CLI::IsMember({"sgd", "adam"}));
        sc->add_option("--momentum", momentum, "SGD momentum (default 0.9)");
        sc->add_option("--activation", activation, "sigmoid or tanh (default sigmoid multiclass, tanh binary)")->check(CLI::IsMember({"sigmoid", "tanh"}));
        sc->add_flag("--batchnorm", batchnorm, "Per-channel normalisation after each convolution");
        sc->add_flag("--deep", deep, "Four convolution layers (multiclass only)");
    }

    RunConfig resolve() const {
        json j = config.empty() ? json::object() : read_json(config);
        if (!task.empty()) j["task"] = task;
        if (!approach.empty()) j["approach"] = approach;
        if (cap) j["cap"] = *cap;
        if (seed) j["seed"] = *seed;
        if (epochs) j["epochs"] = *epochs;
        if (batch) j["batch_size"] = *batch;
        if (lr) j["lr"] = *lr;
        if (!optimizer.empty()) j["optimizer"] = optimizer;
        if (momentum) j["momentum"] = *momentum;
        if (!activation.empty()) j["activation"] = activation;
        if (batchnorm) j["batchnorm"] = true;
        if (deep) j["deep"] = true;
        const Task t = j.contains("task") ? parse_task(j["task"].get<std::string>()).value_or(Task::Multiclass) : Task::Multiclass;
        const ApproachId a =
            j.contains("approach") ? parse_approach(j["approach"].get<std::string>()).value_or(ApproachId::A2b) : ApproachId::A2b;
        return RunConfig::from_json(j, RunConfig::defaults(t, a));
    }
};

struct TrainOpts {
    RunFlags run;
    std::string data, out, log, report;
};

int cmd_train(const TrainOpts& o) {
    const auto cfg = o.run.resolve();
    const auto parts = load_split(o.data);
    const auto data = prepare(parts, cfg.cap, cfg.task);
    const auto hash = config_hash(cfg, data.fingerprint);
    std::cerr << "training " << task_name(cfg.task) << " approach " << approach(cfg.approach).name << " on "
              << data.train.size() << " records (val " << data.val.size() << ")\n";
    auto tr = train(cfg, data.train, data.val, [](const EpochLog& l) {
        std::cerr << "  epoch " << l.epoch << " train " << l.train_loss << " val "
                  << (l.val_loss ? std::to_string(*l.val_loss) : std::string("-")) << " (" << l.seconds << " s)\n";
    });
    tr.best.meta["provenance"] = provenance("train", split_inputs(o.data), {{"config_hash", hash}, {"seed", cfg.seed}});
    tr.best.meta["config"] = cfg.to_json();
    tr.best.meta["data_fingerprint"] = bytes::hex64(data.fingerprint);
    save_checkpoint_file(o.out, tr.best);
    std::cout << "checkpoint " << o.out << " (epoch " << tr.best.epoch << ", config " << hash << ")\n";
    if (!o.log.empty()) {
        auto out = create(o.log);
        csv_provenance(out, provenance("train", json::object(), {{"config_hash", hash}}));
        out << "epoch,train_loss,val_loss\n";
        for (const auto& l : tr.log) {
            out << l.epoch << ',' << l.train_loss << ',';
            if (l.val_loss) out << *l.val_loss;
            out << '\n';
        }
    }
    if (!o.report.empty()) {
        const auto cm = evaluate(tr.best, data.test);
        json j = report_json(cm);
        j["provenance"] = provenance("train", split_inputs(o.data), {{"config_hash", hash}, {"seed", cfg.seed}});
        write_json(o.report, j);
        std::cout << "test accuracy " << cm.accuracy().value_or(0.0) << '\n';
    }
    return 0;
}

struct EvalOpts {
    std::string checkpoint, test, report, matrix, normalized;
    std::size_t jobs = 1;
};

int cmd_evaluate(const EvalOpts& o) {
    const auto ck = load_checkpoint_file(o.checkpoint);
    const auto recs = load_labelled(o.test);
    const auto cm = evaluate(ck, recs, o.jobs);
    json extra{{"checkpoint_config_hash", ck.meta.value("config_hash", json(nullptr))}};
    if (ck.meta.contains("provenance")) extra["checkpoint_config_hash"] = ck.meta["provenance"].value("config_hash", json(nullptr));
    const auto prov =
        provenance("evaluate", {{"checkpoint", file_hash(o.checkpoint)}, {"test", file_hash(o.test)}}, extra);
    json j = report_json(cm);
    j["task"] = task_name(ck.spec.task);
    j["approach"] = std::string(approach(ck.spec.approach).name);
    j["provenance"] = prov;
    write_json(o.report, j);
    if (!o.matrix.empty()) {
        auto out = create(o.matrix);
        csv_provenance(out, prov);
        write_matrix_csv(out, cm, false);
    }
    if (!o.normalized.empty()) {
        auto out = create(o.normalized);
        csv_provenance(out, prov);
        write_matrix_csv(out, cm, true);
    }
    std::cout << "accuracy " << cm.accuracy().value_or(0.0) << " on " << cm.total() << " records\n";
    for (std::size_t c = 0; c < cm.k(); ++c) {
        std::cout << "  " << cm.names()[c] << " recall ";
        if (auto r = cm.recall(c)) {
            std::cout << *r;
        } else {
            std::cout << "undefined";
        }
        std::cout << '\n';
    }
    return 0;
}

struct SeedsOpts {
    RunFlags run;
    std::string seeds, data, out, ledger;
    std::size_t jobs = 1;
};

std::vector<std::uint64_t> seeds_or_default(const std::string& s) {
    return s.empty() ? kDefaultSeeds : parse_list<std::uint64_t>(s, "seed");
}

std::optional<ResultsLedger> open_ledger(const std::string& p) {
    if (p.empty()) return std::nullopt;
    return std::optional<ResultsLedger>(std::in_place, fs::path(p));
}

int cmd_seeds(const SeedsOpts& o) {
    const auto cfg = o.run.resolve();
    const auto seeds = seeds_or_default(o.seeds);
    const auto parts = load_split(o.data);
    auto ledger = open_ledger(o.ledger);
    const auto res = multi_seed(cfg, seeds, parts, o.jobs, ledger ? &*ledger : nullptr, progress);
    json j = res.to_json();
    j["config"] = cfg.to_json();
    for (std::size_t c = 0; c < num_classes(cfg.task); ++c) {
        j["mean_recall"][std::string(target_name(cfg.task, c))] = optional_json(res.mean_recall(c));
    }
    j["provenance"] = provenance("seeds", split_inputs(o.data), {{"seeds", seeds}});
    write_json(o.out, j);
    if (res.summary) {
        std::cout << "accuracy " << res.summary->mean << " +/- " << res.summary->std << " (95% CI "
                  << res.summary->ci_low << ", " << res.summary->ci_high << "), n=" << res.summary->n << '\n';
    }
    if (res.partial) {
        std::cerr << "warning: some seeds failed; see " << o.out << '\n';
        return 3;
    }
    return 0;
}

struct SweepOpts {
    RunFlags run;
    std::string caps, approaches = "1,2,2b,3,3b", seeds, data, out, json_out, ledger;
    std::size_t jobs = 1;
};

int cmd_sweep(const SweepOpts& o) {
    const auto base = o.run.resolve();
    const auto caps = o.caps.empty() ? kDefaultCaps : parse_list<std::size_t>(o.caps, "cap");
    const auto seeds = seeds_or_default(o.seeds);
    std::vector<RunConfig> bases;
    std::stringstream ss(o.approaches);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto a = parse_approach(detail::trim(item));
        if (!a) throw ConfigError("unknown approach '" + item + "'");
        auto c = base;
        c.approach = *a;
        bases.push_back(c);
    }
    if (bases.empty()) throw ConfigError("empty approach list");
    const auto parts = load_split(o.data);
    auto ledger = open_ledger(o.ledger);
    const auto rows = cap_sweep(bases, caps, seeds, parts, o.jobs, ledger ? &*ledger : nullptr, progress);
    const auto prov = provenance("sweep", split_inputs(o.data), {{"base_config", base.to_json()}, {"seeds", seeds}});
    {
        auto out = create(o.out);
        csv_provenance(out, prov);
        write_sweep_csv(out, rows, base.task);
    }
    bool partial = false;
    if (!o.json_out.empty()) {
        json j;
        j["rows"] = json::array();
        for (const auto& r : rows) {
            j["rows"].push_back({{"approach", std::string(approach(r.approach).name)}, {"cap", r.cap}, {"result", r.result.to_json()}});
        }
        j["provenance"] = prov;
        write_json(o.json_out, j);
    }
    for (const auto& r : rows) partial |= r.result.partial;
    std::cout << rows.size() << " sweep rows written to " << o.out << '\n';
    return partial ? 3 : 0;
}

struct FactorialOpts {
    std::string approach = "2b", data, out, ledger, followup_seeds;
    std::uint64_t seed = 42;
    std::size_t cap = 1000;
    std::optional<std::size_t> epochs;
    std::size_t jobs = 1;
};

int cmd_factorial(const FactorialOpts& o) {
    const auto ap = parse_approach(o.approach);
    if (!ap) throw ConfigError("unknown approach '" + o.approach + "'");
    const auto parts = load_split(o.data);
    auto ledger = open_ledger(o.ledger);
    auto* lp = ledger ? &*ledger : nullptr;
    const auto res = factorial(*ap, default_factors(), parts, o.seed, o.cap, o.jobs, lp, progress, o.epochs);
    json j = res.to_json();
    if (!o.followup_seeds.empty()) {
        const auto* best = res.best_multiclass();
        if (!best) throw RunFailure("factorial: every multiclass configuration failed");
        auto baseline = RunConfig::defaults(Task::Multiclass, *ap);
        baseline.cap = o.cap;
        if (o.epochs) baseline.epochs = *o.epochs;
        const auto seeds = parse_list<std::uint64_t>(o.followup_seeds, "seed");
        j["followup"] = factorial_followup(best->result.config, baseline, seeds, parts, o.jobs, lp).to_json();
    }
    j["provenance"] = provenance("factorial", split_inputs(o.data), {{"seed", o.seed}, {"cap", o.cap}});
    write_json(o.out, j);
    if (const auto* b = res.best_multiclass()) {
        std::cout << "best multiclass config " << b->result.config.to_json().dump() << " acc " << b->result.accuracy << '\n';
    }
    if (auto s = FactorialResult::spread(res.binary)) std::cout << "binary accuracy spread " << *s << '\n';
    return 0;
}

struct SynthOpts {
    std::string config, preset, out;
    std::uint64_t seed = 1;
    double scale = 1.0;
};

int cmd_synth(const SynthOpts& o) {
    if (o.config.empty() == o.preset.empty()) throw ConfigError("give exactly one of --config or --preset");
    const auto cfg = o.config.empty()
                         ? synth::ScenarioConfig::from_json({{"preset", o.preset}, {"seed", o.seed}, {"scale", o.scale}})
                         : synth::ScenarioConfig::from_json(read_json(o.config));
    const auto gen = synth::generate(cfg);
    const auto files = synth::write_outputs(cfg, gen, o.out);
    std::array<std::size_t, kNumClasses> n{};
    for (auto c : gen.truth) ++n[index_of(c)];
    std::cout << "wrote " << gen.packets.size() << " packets to " << files.pcap.string() << '\n';
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        if (n[c]) std::cout << "  " << kClassNames[c] << ' ' << n[c] << '\n';
    }
    return 0;
}

std::array<double, 3> parse_moments(const std::string& s) {
    const auto v = parse_list<double>(s, "moment");
    if (v.size() != 3) throw ConfigError("expected mean,std,n but got '" + s + "'");
    if (v[2] < 2 || v[2] != std::floor(v[2])) throw ConfigError("n must be an integer >= 2");
    return {v[0], v[1], v[2]};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Single-packet binary-image intrusion detection for Modbus TCP"};
    app.set_version_flag("--version", std::string("sphbi ") + kToolVersion);
    app.require_subcommand(1);
    std::function<int()> run;

    ExtractOpts ex;
    auto* sc = app.add_subcommand("extract", "Dissect captures into an unlabelled record file");
    sc->add_option("--pcap", ex.pcap, "Capture file or directory")->required();
    sc->add_option("--manifest", ex.manifest, "CSV file_path,capture_class,scenario");
    sc->add_option("--out", ex.out, "Output record file")->required();
    sc->add_option("--survey", ex.survey, "Per-file survey JSON");
    sc->add_option("--jobs", ex.jobs, "Parallel files (default 1)")->check(CLI::PositiveNumber);
    sc->callback([&] { run = [&] { return cmd_extract(ex); }; });

    LabelOpts lb;
    sc = app.add_subcommand("label", "Label records from an attack log");
    sc->add_option("--records", lb.records, "Input record file")->required();
    sc->add_option("--attack-log", lb.attack_log, "CSV start_ts,end_ts,attack_type,scenario")->required();
    sc->add_option("--out", lb.out, "Output record file")->required();
    sc->add_flag("--offset-check", lb.offset_check, "Search for a constant clock offset between log and capture");
    sc->add_option("--offset-range", lb.offset_range_s, "Offset search half-range in seconds (default 86400)");
    sc->add_option("--offset-step", lb.offset_step_s, "Offset search step in seconds (default 1)");
    sc->add_option("--length-table", lb.length_table, "JSON of canonical MBAP lengths per function code");
    sc->add_option("--summary", lb.summary, "Summary JSON");
    sc->add_option("--ground-truth", lb.ground_truth, "CSV packet_index,true_label to compare against");
    sc->callback([&] { run = [&] { return cmd_label(lb); }; });

    SplitOpts sp;
    sc = app.add_subcommand("split", "Stratified train/val/test split in stable order");
    sc->add_option("--records", sp.records, "Labelled record file")->required();
    sc->add_option("--ratios", sp.ratios, "train,val,test (default 0.8,0.1,0.1)");
    sc->add_option("--out", sp.out, "Output directory")->required();
    sc->callback([&] { run = [&] { return cmd_split(sp); }; });

    TrainOpts tr;
    sc = app.add_subcommand("train", "Train one model");
    tr.run.add(sc);
    sc->add_option("--data", tr.data, "Directory written by `split`")->required();
    sc->add_option("--out", tr.out, "Checkpoint path")->required();
    sc->add_option("--log", tr.log, "Per-epoch loss CSV");
    sc->add_option("--report", tr.report, "Evaluate the best checkpoint on the test part");
    sc->callback([&] { run = [&] { return cmd_train(tr); }; });

    EvalOpts ev;
    sc = app.add_subcommand("evaluate", "Evaluate a checkpoint on a record file");
    sc->add_option("--checkpoint", ev.checkpoint)->required();
    sc->add_option("--test", ev.test, "Labelled record file")->required();
    sc->add_option("--report", ev.report, "Report JSON")->required();
    sc->add_option("--matrix", ev.matrix, "Confusion matrix CSV (counts)");
    sc->add_option("--normalized-matrix", ev.normalized, "Row-normalised confusion matrix CSV");
    sc->add_option("--jobs", ev.jobs, "Threads (default 1)")->check(CLI::PositiveNumber);
    sc->callback([&] { run = [&] { return cmd_evaluate(ev); }; });

    SeedsOpts se;
    sc = app.add_subcommand("seeds", "Repeat one configuration over several seeds");
    se.run.add(sc);
    sc->add_option("--seeds", se.seeds, "Comma-separated seeds (default 42,0,1,...,8)");
    sc->add_option("--data", se.data, "Directory written by `split`")->required();
    sc->add_option("--out", se.out, "Result JSON")->required();
    sc->add_option("--ledger", se.ledger, "JSON-lines ledger of finished runs (resumable)");
    sc->add_option("--jobs", se.jobs, "Parallel runs (default 1)")->check(CLI::PositiveNumber);
    sc->callback([&] { run = [&] { return cmd_seeds(se); }; });

    SweepOpts sw;
    sc = app.add_subcommand("sweep", "Cap sweep over approaches and seeds");
    sw.run.add(sc);
    sc->add_option("--caps", sw.caps, "Comma-separated caps (default 500,...,50000)");
    sc->add_option("--approaches", sw.approaches, "Comma-separated approaches (default all five)");
    sc->add_option("--seeds", sw.seeds, "Comma-separated seeds (default 42,0,1,...,8)");
    sc->add_option("--data", sw.data, "Directory written by `split`")->required();
    sc->add_option("--out", sw.out, "Summary CSV")->required();
    sc->add_option("--json", sw.json_out, "Full results JSON");
    sc->add_option("--ledger", sw.ledger, "JSON-lines ledger of finished runs (resumable)");
    sc->add_option("--jobs", sw.jobs, "Parallel runs (default 1)")->check(CLI::PositiveNumber);
    sc->callback([&] { run = [&] { return cmd_sweep(sw); }; });

    FactorialOpts fa;
    sc = app.add_subcommand("factorial", "2^4 grid over activation, normalisation, learning rate and batch size");
    sc->add_option("--approach", fa.approach, "Approach (default 2b)")->check(CLI::IsMember({"1", "2", "2b", "3", "3b"}));
    sc->add_option("--data", fa.data, "Directory written by `split`")->required();
    sc->add_option("--out", fa.out, "Result JSON")->required();
    sc->add_option("--seed", fa.seed, "Seed for every grid cell (default 42)");
    sc->add_option("--cap", fa.cap, "Per-class cap (default 1000)");
    sc->add_option("--epochs", fa.epochs, "Override the task default epochs");
    sc->add_option("--followup-seeds", fa.followup_seeds, "Re-run the best multiclass cell and the baseline over these seeds");
    sc->add_option("--ledger", fa.ledger, "JSON-lines ledger of finished runs (resumable)");
    sc->add_option("--jobs", fa.jobs, "Parallel runs (default 1)")->check(CLI::PositiveNumber);
    sc->callback([&] { run = [&] { return cmd_factorial(fa); }; });

    SynthOpts sy;
    sc = app.add_subcommand("synth", "Generate a synthetic capture with attack log and ground truth");
    sc->add_option("--config", sy.config, "Scenario JSON");
    sc->add_option("--preset", sy.preset, "easy or hard")->check(CLI::IsMember({"easy", "hard"}));
    sc->add_option("--seed", sy.seed, "Seed for --preset (default 1)");
    sc->add_option("--scale", sy.scale, "Timeline scale for --preset (default 1)");
    sc->add_option("--out", sy.out, "Output directory")->required();
    sc->callback([&] { run = [&] { return cmd_synth(sy); }; });

    std::string wa, wb, cm_mean, cm_std;
    double level = 0.95;
    std::size_t cn = 0;
    auto* st = app.add_subcommand("stats", "Statistics from published moments");
    st->require_subcommand(1);
    auto* welch = st->add_subcommand("welch", "Welch's t-test from mean,std,n pairs");
    welch->add_option("--a", wa, "mean,std,n")->required();
    welch->add_option("--b", wb, "mean,std,n")->required();
    welch->callback([&] {
        run = [&] {
            const auto a = parse_moments(wa), b = parse_moments(wb);
            const auto r = welch_t(StatSummary::from_moments(a[0], a[1], static_cast<std::size_t>(a[2])),
                                   StatSummary::from_moments(b[0], b[1], static_cast<std::size_t>(b[2])));
            std::cout << r.to_json().dump() << '\n';
            return 0;
        };
    });
    auto* ci = st->add_subcommand("ci", "Student-t confidence interval from mean,std,n");
    ci->add_option("--mean", cm_mean)->required();
    ci->add_option("--std", cm_std)->required();
    ci->add_option("--n", cn)->required();
    ci->add_option("--level", level, "Confidence level (default 0.95)");
    ci->callback([&] {
        run = [&] {
            const auto m = parse_list<double>(cm_mean, "mean"), s = parse_list<double>(cm_std, "std");
            std::cout << StatSummary::from_moments(m.at(0), s.at(0), cn, level).to_json().dump() << '\n';
            return 0;
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    try {
        return run ? run() : 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const FormatError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const RunFailure& e) {
        std::cerr << "run failed: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << '\n';
        return 3;
    }
}
