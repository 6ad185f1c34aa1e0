#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "sphbi/experiments.hpp"
#include "test_util.hpp"

using namespace sphbi;

namespace {

// Function code 3 for Normal, 5 for the attack class; every other byte random
// (only the transaction id when `quiet`).
// With `flip` > 0 that share of each class carries the other class's code.
std::vector<LabeledRecord> fc_corpus(std::size_t normal, std::size_t attack, double flip, std::uint64_t seed,
                                     TrafficClass attack_class = TrafficClass::BruteForce, bool quiet = false) {
    std::mt19937_64 rng(seed);
    std::vector<LabeledRecord> v;
    std::uint64_t ts = 0;
    auto make = [&](TrafficClass c) {
        LabeledRecord r;
        for (std::size_t i = 0; i < r.bytes.size(); ++i) {
            const bool txid = i == layout::kMbapStart || i == layout::kMbapStart + 1;
            r.bytes[i] = quiet && !txid ? std::uint8_t(0x40 + i) : static_cast<std::uint8_t>(rng());
        }
        const bool swap = double(rng() >> 11) * 0x1.0p-53 < flip;
        const bool attack_code = (c != TrafficClass::Normal) != swap;
        r.bytes[layout::kFuncCode] = attack_code ? 5 : 3;
        r.label = c;
        r.timestamp_us = ts++;
        v.push_back(r);
    };
    for (std::size_t i = 0; i < std::max(normal, attack); ++i) {
        if (i < normal) make(TrafficClass::Normal);
        if (i < attack) make(attack_class);
    }
    return v;
}

RunConfig binary_a2b(std::size_t epochs = 20) {
    auto c = RunConfig::defaults(Task::Binary, ApproachId::A2b);
    c.epochs = epochs;
    c.cap = 50000;
    return c;
}

RunConfig binary_a3(std::size_t epochs = 20) {
    auto c = RunConfig::defaults(Task::Binary, ApproachId::A3);
    c.epochs = epochs;
    c.cap = 50000;
    return c;
}

}  // namespace

TEST(Train, SeparableBinarySetIsLearned) {
    const auto parts = split(RecordStore(fc_corpus(600, 400, 0.0, 1, TrafficClass::BruteForce, true)));
    const auto data = prepare(parts, 50000, Task::Binary);
    const auto tr = train(binary_a2b(), data.train, data.val);
    ASSERT_EQ(tr.log.size(), 20u);
    ASSERT_TRUE(tr.best.val_loss);
    ASSERT_TRUE(tr.log.front().val_loss);
    // Validation loss improves on the initial weights within the run.
    const auto init = train(binary_a2b(0), data.train, data.val);
    EXPECT_LT(*tr.best.val_loss, *init.best.val_loss);
    EXPECT_LT(*tr.best.val_loss, *tr.log.front().val_loss);
    const auto cm = evaluate(tr.best, data.test);
    EXPECT_GT(*cm.accuracy(), 0.99);
}

TEST(Train, ZeroEpochsReturnsInitialisation) {
    const auto parts = split(RecordStore(fc_corpus(100, 100, 0.0, 2)));
    const auto data = prepare(parts, 50000, Task::Binary);
    const auto tr = train(binary_a3(0), data.train, data.val);
    EXPECT_EQ(tr.best.epoch, 0u);
    EXPECT_TRUE(tr.log.empty());
    auto m = instantiate<float>(build_binary(ApproachId::A3));
    m.init(binary_a3().seed);
    EXPECT_TRUE(std::equal(tr.best.params.begin(), tr.best.params.end(), m.params().begin()));
}

TEST(Train, DeterministicAndBestEpochIsMinimum) {
    const auto parts = split(RecordStore(fc_corpus(300, 200, 0.1, 3)));
    const auto data = prepare(parts, 50000, Task::Binary);
    const auto a = train(binary_a3(8), data.train, data.val);
    const auto b = train(binary_a3(8), data.train, data.val);
    EXPECT_EQ(a.best, b.best);
    double best = *a.log.front().val_loss;
    std::size_t epoch = 1;
    for (const auto& l : a.log) {
        if (*l.val_loss < best) {
            best = *l.val_loss;
            epoch = l.epoch;
        }
    }
    EXPECT_EQ(a.best.epoch, epoch);
    auto other = binary_a3(8);
    other.seed = 7;
    EXPECT_NE(train(other, data.train, data.val).best.params, a.best.params);
}

TEST(Train, MulticlassRunReportsAllClasses) {
    std::vector<LabeledRecord> recs;
    std::mt19937_64 rng(4);
    for (std::size_t i = 0; i < 9 * 30; ++i) {
        LabeledRecord r;
        for (auto& b : r.bytes) b = static_cast<std::uint8_t>(rng());
        const auto c = i % 9;
        r.bytes[layout::kFuncCode] = static_cast<std::uint8_t>(c * 17);
        r.label = kAllClasses[c];
        r.timestamp_us = i;
        recs.push_back(r);
    }
    const auto parts = split(RecordStore(recs));
    auto cfg = RunConfig::defaults(Task::Multiclass, ApproachId::A3);
    cfg.epochs = 3;
    const auto r = run_one(cfg, parts);
    ASSERT_TRUE(r.ok()) << *r.error;
    EXPECT_EQ(r.recall.size(), 9u);
    EXPECT_GE(r.best_epoch, 1u);
}

TEST(Runs, JobsDoNotChangeResults) {
    const auto parts = split(RecordStore(fc_corpus(200, 100, 0.05, 5)));
    std::vector<RunConfig> cfgs;
    for (std::uint64_t s : {1, 2, 3}) {
        auto c = binary_a3(3);
        c.seed = s;
        cfgs.push_back(c);
    }
    const auto one = run_all(cfgs, parts, 1);
    const auto three = run_all(cfgs, parts, 3);
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
        EXPECT_EQ(one[i].to_json(), three[i].to_json());
        EXPECT_EQ(one[i].config.seed, cfgs[i].seed);
    }
}

TEST(Runs, FailureIsReportedNotThrown) {
    const auto parts = split(RecordStore(fc_corpus(100, 0, 0.0, 6)));  // attack class empty
    const auto r = run_one(binary_a3(1), parts);
    EXPECT_FALSE(r.ok());
    EXPECT_TRUE(r.to_json().contains("error"));
}

TEST(MultiSeed, SummaryOverSeeds) {
    const auto parts = split(RecordStore(fc_corpus(200, 100, 0.0, 7)));
    const std::vector<std::uint64_t> seeds = {42, 0, 1};
    const auto m = multi_seed(binary_a3(5), seeds, parts);
    ASSERT_EQ(m.runs.size(), 3u);
    ASSERT_TRUE(m.summary);
    EXPECT_EQ(m.summary->n, 3u);
    const auto acc = m.accuracies();
    EXPECT_NEAR(m.summary->mean, (acc[0] + acc[1] + acc[2]) / 3.0, 1e-12);
    EXPECT_FALSE(m.partial);
    EXPECT_THROW(multi_seed(binary_a3(5), std::vector<std::uint64_t>{1}, parts), ConfigError);
}

TEST(CapSweep, MoreDataDoesNotHurtDominantClass) {
    const auto parts = split(RecordStore(fc_corpus(4000, 1500, 0.1, 8)));
    const std::vector<std::size_t> caps = {100, 1000};
    const std::vector<std::uint64_t> seeds = {1, 2};
    const auto rows = cap_sweep({binary_a3(10)}, caps, seeds, parts);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].cap, 100u);
    ASSERT_TRUE(rows[0].result.summary && rows[1].result.summary);
    EXPECT_GE(rows[1].result.summary->mean, rows[0].result.summary->mean);
    EXPECT_GE(*rows[1].result.mean_recall(0), *rows[0].result.mean_recall(0));
    std::ostringstream csv;
    write_sweep_csv(csv, rows, Task::Binary);
    const auto text = csv.str();
    EXPECT_EQ(text.substr(0, text.find('\n')),
              "approach,cap,n,accuracy_mean,accuracy_std,ci_low,ci_high,recall_Normal,recall_Attack");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}

TEST(Factorial, SixteenCellsPerTaskAndDegenerateFactors) {
    const auto base = RunConfig::defaults(Task::Multiclass, ApproachId::A2b);
    std::vector<std::vector<bool>> levels;
    const auto cfgs = factorial_configs(base, default_factors(), &levels);
    EXPECT_EQ(cfgs.size(), 16u);
    EXPECT_EQ(levels.size(), 16u);
    std::set<std::string> distinct;
    for (const auto& c : cfgs) distinct.insert(c.to_json().dump());
    EXPECT_EQ(distinct.size(), 16u);
    // A factor whose levels coincide collapses the design.
    std::vector<Factor> f = {{"same", {{"lr", 0.01}}, {{"lr", 0.01}}}, {"bn", {{"batchnorm", false}}, {{"batchnorm", true}}}};
    EXPECT_EQ(factorial_configs(base, f).size(), 2u);
    f[1].high = f[1].low;
    EXPECT_EQ(factorial_configs(base, f).size(), 1u);
}

TEST(Factorial, RunsBothTasksAndPicksWinner) {
    const auto parts = split(RecordStore(fc_corpus(200, 100, 0.0, 9)));
    // Multiclass needs every class; keep only two factors to stay fast.
    std::vector<LabeledRecord> all = fc_corpus(200, 100, 0.0, 9);
    for (std::size_t c = 2; c < 9; ++c) {
        const auto more = fc_corpus(0, 30, 0.0, 100 + c, kAllClasses[c]);
        all.insert(all.end(), more.begin(), more.end());
    }
    for (std::size_t i = 0; i < all.size(); ++i) all[i].timestamp_us = i;
    const auto p = split(RecordStore(all));
    const std::vector<Factor> f = {{"batchnorm", {{"batchnorm", false}}, {{"batchnorm", true}}},
                                   {"batch", {{"batch_size", 32}}, {{"batch_size", 64}}}};
    const auto res = factorial(ApproachId::A3, f, p, 42, 1000, 1, nullptr, {}, 2);
    EXPECT_EQ(res.multiclass.size(), 4u);
    EXPECT_EQ(res.binary.size(), 4u);
    ASSERT_NE(res.best_multiclass(), nullptr);
    for (const auto& c : res.multiclass) EXPECT_LE(c.result.accuracy, res.best_multiclass()->result.accuracy);
    EXPECT_TRUE(FactorialResult::spread(res.binary));
    EXPECT_EQ(res.to_json()["multiclass"].size(), 4u);
}

TEST(Factorial, FollowUpAgainstItselfHasPOne) {
    const auto parts = split(RecordStore(fc_corpus(200, 100, 0.05, 10)));
    const std::vector<std::uint64_t> seeds = {1, 2, 3};
    const auto f = factorial_followup(binary_a3(2), binary_a3(2), seeds, parts);
    EXPECT_DOUBLE_EQ(f.paired.p, 1.0);
    EXPECT_EQ(f.paired.t, 0.0);
}

TEST(Ledger, ResumeSkipsCompletedRuns) {
    const auto dir = testutil::scratch_dir("ledger");
    const auto path = dir / "runs.jsonl";
    const auto parts = split(RecordStore(fc_corpus(200, 100, 0.0, 11)));
    const std::vector<std::uint64_t> seeds = {5, 6};
    RunResult first;
    {
        ResultsLedger ledger(path);
        const auto m = multi_seed(binary_a3(3), seeds, parts, 1, &ledger);
        EXPECT_EQ(ledger.size(), 2u);
        first = m.runs[0];
    }
    std::ifstream in(path);
    std::size_t lines = 0;
    for (std::string l; std::getline(in, l);) ++lines;
    EXPECT_EQ(lines, 2u);

    ResultsLedger again(path);
    EXPECT_EQ(again.size(), 2u);
    std::size_t trained = 0;
    const auto m = multi_seed(binary_a3(3), seeds, parts, 1, &again, [&](const RunResult& r) { trained += r.wall_seconds > 0; });
    EXPECT_EQ(trained, 0u);
    EXPECT_EQ(m.runs[0].to_json(), first.to_json());
    // A changed config is a new run.
    auto changed = binary_a3(3);
    changed.lr = 0.005;
    EXPECT_NE(run_one(changed, parts, &again).hash, first.hash);
    EXPECT_EQ(again.size(), 3u);
}

TEST(Ledger, CorruptLineNamesTheLine) {
    const auto dir = testutil::scratch_dir("ledger_bad");
    std::ofstream(dir / "runs.jsonl") << "{\"config_hash\":1}\n";
    try {
        ResultsLedger l(dir / "runs.jsonl");
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
    }
}

TEST(RunConfigJson, RoundTripAndHash) {
    auto c = RunConfig::defaults(Task::Binary, ApproachId::A3b);
    c.activation = Activation::Sigmoid;
    c.batchnorm = true;
    EXPECT_EQ(RunConfig::from_json(c.to_json()).to_json(), c.to_json());
    EXPECT_EQ(config_hash(c, 1), config_hash(c, 1));
    EXPECT_NE(config_hash(c, 1), config_hash(c, 2));
    EXPECT_THROW(RunConfig::from_json({{"task", "ternary"}}), ConfigError);
    EXPECT_THROW(RunConfig::from_json({{"cap", 0}}), ConfigError);
    const auto b = RunConfig::from_json({{"task", "binary"}});
    EXPECT_EQ(b.optimizer, nn::OptimizerKind::Adam);
    EXPECT_EQ(b.epochs, 20u);
}
