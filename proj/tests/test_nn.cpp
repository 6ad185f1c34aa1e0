#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "sphbi/models.hpp"
#include "sphbi/nn/gradcheck.hpp"
#include "sphbi/nn/loss.hpp"
#include "sphbi/nn/model.hpp"
#include "sphbi/nn/optim.hpp"

using namespace sphbi::nn;

namespace {

template <class T>
std::vector<T> random_input(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(lo + (hi - lo) * uniform01(rng));
    return v;
}

template <class T>
std::vector<T> random_bits(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(rng() & 1u);
    return v;
}

template <class T>
double check(const Model<T>& m, const std::vector<T>& x, std::size_t label, double weight = 1.0) {
    return grad_check<T>(m, x, label, weight).max_rel_error;
}

struct Case {
    const char* name;
    Shape3 in;
    std::vector<LayerSpec> layers;
    std::size_t label;
};

std::vector<Case> isolated_cases() {
    return {
        {"conv_pad", {2, 5, 4}, {LayerSpec::conv(3, 3, 3, 1), LayerSpec::flatten()}, 7},
        {"conv_nopad", {2, 5, 4}, {LayerSpec::conv(2, 2, 2), LayerSpec::flatten()}, 3},
        {"conv_rect", {1, 6, 5}, {LayerSpec::conv(2, 2, 3, 1), LayerSpec::flatten()}, 0},
        {"maxpool_s1", {2, 4, 4}, {LayerSpec::maxpool(2, 1), LayerSpec::flatten()}, 4},
        {"maxpool_s2", {2, 5, 4}, {LayerSpec::maxpool(2, 2), LayerSpec::flatten()}, 1},
        {"tanh", {1, 3, 3}, {LayerSpec::activation(Activation::Tanh), LayerSpec::flatten()}, 2},
        {"sigmoid", {1, 3, 3}, {LayerSpec::activation(Activation::Sigmoid), LayerSpec::flatten()}, 8},
        {"flatten", {2, 2, 2}, {LayerSpec::flatten()}, 5},
        {"dense", {1, 4, 3}, {LayerSpec::flatten(), LayerSpec::dense(5)}, 2},
        {"dense_binary", {1, 4, 3}, {LayerSpec::flatten(), LayerSpec::dense(1)}, 1},
        {"channelnorm", {3, 3, 4}, {LayerSpec::channel_norm(), LayerSpec::flatten()}, 6},
    };
}

template <class T>
Model<T> make(const Case& c, std::uint64_t seed) {
    Model<T> m(c.in, c.layers);
    m.init(seed);
    // Move norm scale/shift off their identity start so their gradients are exercised.
    std::mt19937_64 rng(seed + 1);
    for (const auto& li : m.layers()) {
        if (li.spec.kind != LayerKind::ChannelNorm) continue;
        for (std::size_t i = 0; i < li.w_count + li.b_count; ++i) {
            m.params()[li.w_offset + i] = static_cast<T>(0.5 + uniform01(rng));
        }
    }
    return m;
}

}  // namespace

TEST(NnShapes, ConvPaddingAndPooling) {
    Model<float> m({1, 16, 15}, {LayerSpec::conv(32, 3, 3, 1), LayerSpec::activation(Activation::Sigmoid),
                                 LayerSpec::conv(32, 2, 2), LayerSpec::maxpool(2, 1), LayerSpec::flatten(),
                                 LayerSpec::dense(9)});
    EXPECT_EQ(m.layers()[0].out, (Shape3{32, 16, 15}));
    EXPECT_EQ(m.layers()[2].out, (Shape3{32, 15, 14}));
    EXPECT_EQ(m.layers()[3].out, (Shape3{32, 14, 13}));
    EXPECT_EQ(m.layers()[4].out, (Shape3{32 * 14 * 13, 1, 1}));
    EXPECT_EQ(m.output_size(), 9u);
}

TEST(NnShapes, KernelLargerThanInputThrows) {
    EXPECT_THROW((Model<float>({1, 2, 2}, {LayerSpec::conv(1, 3, 3)})), sphbi::ShapeError);
    EXPECT_THROW((Model<float>({1, 1, 4}, {LayerSpec::maxpool(2, 2)})), sphbi::ShapeError);
}

TEST(NnForward, ConvMatchesDirectCorrelation) {
    Model<double> m({2, 4, 5}, {LayerSpec::conv(3, 3, 2, 1)});
    m.init(11);
    const auto x = random_input<double>(40, 12);
    auto ws = m.make_workspace();
    const auto y = m.forward(x, ws);
    const auto& li = m.layers()[0];
    const auto p = m.params();
    for (std::size_t oc = 0; oc < 3; ++oc) {
        for (std::size_t oy = 0; oy < li.out.h; ++oy) {
            for (std::size_t ox = 0; ox < li.out.w; ++ox) {
                double acc = p[li.b_offset + oc];
                for (std::size_t c = 0; c < 2; ++c) {
                    for (std::size_t i = 0; i < 3; ++i) {
                        for (std::size_t j = 0; j < 2; ++j) {
                            const long iy = static_cast<long>(oy + i) - 1, ix = static_cast<long>(ox + j) - 1;
                            if (iy < 0 || iy >= 4 || ix < 0 || ix >= 5) continue;
                            acc += p[li.w_offset + ((oc * 2 + c) * 3 + i) * 2 + j] * x[(c * 4 + iy) * 5 + ix];
                        }
                    }
                }
                EXPECT_NEAR(y[(oc * li.out.h + oy) * li.out.w + ox], acc, 1e-12);
            }
        }
    }
}

TEST(NnForward, MaxPoolTiesGoToFirstElement) {
    Model<float> m({1, 2, 2}, {LayerSpec::maxpool(2, 1)});
    auto ws = m.make_workspace();
    const std::vector<float> x = {1.0f, 1.0f, 1.0f, 1.0f};
    m.forward(x, ws);
    std::vector<float> gp(0), gin(4);
    const std::vector<float> g = {1.0f};
    m.backward(g, ws, gp, gin);
    EXPECT_EQ(gin, (std::vector<float>{1.0f, 0.0f, 0.0f, 0.0f}));
}

TEST(NnForward, ChannelNormOutputIsStandardised) {
    Model<double> m({2, 3, 3}, {LayerSpec::channel_norm()});
    const auto x = random_input<double>(18, 5, -3.0, 7.0);
    auto ws = m.make_workspace();
    const auto y = m.forward(x, ws);
    for (std::size_t c = 0; c < 2; ++c) {
        double s = 0, s2 = 0;
        for (std::size_t k = 0; k < 9; ++k) {
            s += y[c * 9 + k];
            s2 += y[c * 9 + k] * y[c * 9 + k];
        }
        EXPECT_NEAR(s / 9, 0.0, 1e-12);
        EXPECT_NEAR(s2 / 9, 1.0, 1e-3);
    }
}

TEST(NnInit, UniformWithinFanInBound) {
    Model<float> m({1, 8, 8}, {LayerSpec::conv(4, 3, 3), LayerSpec::flatten(), LayerSpec::dense(3)});
    m.init(7);
    const auto& conv = m.layers()[0];
    const auto& dense = m.layers()[2];
    for (std::size_t i = 0; i < conv.w_count + conv.b_count; ++i) {
        EXPECT_LE(std::abs(m.params()[conv.w_offset + i]), 1.0f / 3.0f);
    }
    const float db = 1.0f / std::sqrt(float(dense.in.size()));
    for (std::size_t i = 0; i < dense.w_count + dense.b_count; ++i) {
        EXPECT_LE(std::abs(m.params()[dense.w_offset + i]), db);
    }
    Model<float> m2 = m;
    m2.init(7);
    EXPECT_TRUE(std::equal(m.params().begin(), m.params().end(), m2.params().begin()));
}

TEST(NnGrad, EveryLayerKindDouble) {
    for (const auto& c : isolated_cases()) {
        const auto m = make<double>(c, 3);
        const auto x = random_input<double>(c.in.size(), 4);
        EXPECT_LT(check(m, x, c.label), 1e-5) << c.name;
    }
}

TEST(NnGrad, EveryLayerKindFloat) {
    for (const auto& c : isolated_cases()) {
        const auto m = make<float>(c, 3);
        const auto x = random_input<float>(c.in.size(), 4);
        EXPECT_LT(check(m, x, c.label), 1e-3) << c.name;
    }
}

TEST(NnGrad, WeightedLossScalesGradient) {
    Model<double> m({1, 3, 3}, {LayerSpec::flatten(), LayerSpec::dense(4)});
    m.init(1);
    const auto x = random_input<double>(9, 2);
    EXPECT_LT(check(m, x, 2, 3.5), 1e-6);
}

TEST(NnLoss, CrossEntropyStableForLargeLogits) {
    const std::vector<double> logits = {1000.0, 0.0, -1000.0};
    std::vector<double> g(3);
    const double l = softmax_cross_entropy<double>(logits, 0, 1.0, g);
    EXPECT_NEAR(l, 0.0, 1e-12);
    EXPECT_TRUE(std::isfinite(softmax_cross_entropy<double>(logits, 2, 1.0, g)));
    EXPECT_NEAR(softmax_cross_entropy<double>(logits, 2, 1.0, g), 2000.0, 1e-9);
}

TEST(NnLoss, CrossEntropyUniformLogits) {
    const std::vector<double> logits(9, 0.25);
    std::vector<double> g(9);
    EXPECT_NEAR(softmax_cross_entropy<double>(logits, 4, 2.0, g), 2.0 * std::log(9.0), 1e-12);
    double s = 0;
    for (double v : g) s += v;
    EXPECT_NEAR(s, 0.0, 1e-12);
}

TEST(NnLoss, BinaryCrossEntropyMatchesDefinition) {
    for (double x : {-30.0, -2.0, 0.0, 0.7, 40.0}) {
        for (double y : {0.0, 1.0}) {
            double g = 0;
            const double l = binary_cross_entropy(x, y, 1.5, g);
            const double p = 1.0 / (1.0 + std::exp(-x));
            const double ref = -(y * std::log(p) + (1 - y) * std::log1p(-p));
            if (std::isfinite(ref)) {
                EXPECT_NEAR(l, 1.5 * ref, 1e-9 * std::max(1.0, ref));
            }
            EXPECT_TRUE(std::isfinite(l));
            EXPECT_NEAR(g, 1.5 * (p - y), 1e-12);
        }
    }
}

TEST(NnLoss, PredictClass) {
    EXPECT_EQ(predict_class<float>(std::vector<float>{0.1f}), 1u);
    EXPECT_EQ(predict_class<float>(std::vector<float>{-0.1f}), 0u);
    EXPECT_EQ(predict_class<float>(std::vector<float>{0.0f}), 0u);
    EXPECT_EQ(predict_class<float>(std::vector<float>{1.0f, 3.0f, 3.0f}), 1u);
}

TEST(NnOptim, SgdMomentumRecurrence) {
    Optimizer<double> opt({OptimizerKind::Sgd, 0.1, 0.9}, 1);
    std::vector<double> p = {1.0};
    const std::vector<double> g = {2.0};
    opt.step(p, g);  // v = 2, p = 1 - 0.2
    EXPECT_DOUBLE_EQ(p[0], 0.8);
    opt.step(p, g);  // v = 3.8, p = 0.8 - 0.38
    EXPECT_NEAR(p[0], 0.42, 1e-15);
}

TEST(NnOptim, AdamFirstStepIsLrTimesSign) {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::Adam;
    cfg.lr = 0.01;
    Optimizer<double> opt(cfg, 3);
    std::vector<double> p = {0.0, 0.0, 0.0};
    const std::vector<double> g = {5.0, -0.001, 0.0};
    opt.step(p, g);
    EXPECT_NEAR(p[0], -0.01, 1e-9);
    EXPECT_NEAR(p[1], 0.01, 1e-7);
    EXPECT_EQ(p[2], 0.0);
}

TEST(NnOptim, RejectsNonPositiveLearningRate) {
    OptimizerConfig cfg;
    cfg.lr = 0.0;
    EXPECT_THROW(Optimizer<float>(cfg, 1), sphbi::ConfigError);
}

TEST(NnTrain, LearnsLinearlySeparableBits) {
    // Label = first bit; a dense layer must reach zero training error.
    Model<float> m({1, 4, 4}, {LayerSpec::flatten(), LayerSpec::dense(2)});
    m.init(9);
    Optimizer<float> opt({OptimizerKind::Sgd, 0.1, 0.9}, m.param_count());
    auto ws = m.make_workspace();
    std::vector<float> grad(m.param_count()), gout(2);
    std::vector<std::vector<float>> xs;
    for (int i = 0; i < 64; ++i) xs.push_back(random_bits<float>(16, 100 + i));
    for (int epoch = 0; epoch < 30; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0f);
        for (const auto& x : xs) {
            auto out = m.forward(x, ws);
            softmax_cross_entropy<float>(out, static_cast<std::size_t>(x[0]), 1.0f, gout);
            m.backward(gout, ws, grad);
        }
        for (auto& g : grad) g /= 64.0f;
        opt.step(m.params(), grad);
    }
    for (const auto& x : xs) {
        auto out = m.forward(x, ws);
        EXPECT_EQ(predict_class<float>(out), static_cast<std::size_t>(x[0]));
    }
}

TEST(NnCast, DoubleShadowMatchesFloat) {
    Model<float> m({1, 6, 6}, {LayerSpec::conv(2, 3, 3, 1), LayerSpec::activation(Activation::Tanh),
                               LayerSpec::flatten(), LayerSpec::dense(3)});
    m.init(21);
    const auto md = m.cast<double>();
    const auto xf = random_bits<float>(36, 22);
    const std::vector<double> xd(xf.begin(), xf.end());
    auto wf = m.make_workspace();
    auto wd = md.make_workspace();
    const auto yf = m.forward(xf, wf);
    const auto yd = md.forward(xd, wd);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(yf[i], yd[i], 1e-5);
}

TEST(NnForward, HandExamples) {
    Model<double> conv({1, 2, 2}, {LayerSpec::conv(1, 2, 2)});
    conv.params()[0] = 1;
    conv.params()[1] = 0;
    conv.params()[2] = 0;
    conv.params()[3] = 1;
    conv.params()[4] = 0;
    auto ws = conv.make_workspace();
    EXPECT_EQ(conv.forward(std::vector<double>{1, 2, 3, 4}, ws)[0], 5.0);
    EXPECT_EQ(conv.forward(std::vector<double>{0, 0, 0, 0}, ws)[0], 0.0);

    Model<double> unit({2, 3, 3}, {LayerSpec::conv(2, 1, 1)});
    std::fill(unit.params().begin(), unit.params().end(), 0.0);
    unit.params()[0] = 1;  // out 0 <- in 0
    unit.params()[3] = 1;  // out 1 <- in 1
    auto wu = unit.make_workspace();
    const auto x = random_input<double>(18, 31);
    const auto y = unit.forward(x, wu);
    EXPECT_TRUE(std::equal(y.begin(), y.end(), x.begin()));

    Model<double> pool({1, 3, 3}, {LayerSpec::maxpool(2, 1)});
    auto wp = pool.make_workspace();
    const auto p = pool.forward(std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9}, wp);
    EXPECT_EQ(std::vector<double>(p.begin(), p.end()), (std::vector<double>{5, 6, 8, 9}));
    Model<double> pool2({1, 2, 2}, {LayerSpec::maxpool(2, 1)});
    auto wp2 = pool2.make_workspace();
    EXPECT_EQ(pool2.forward(std::vector<double>{1, 2, 3, 4}, wp2)[0], 4.0);
}

TEST(NnLoss, SoftmaxAndWeightScaling) {
    std::mt19937_64 rng(40);
    for (int i = 0; i < 50; ++i) {
        const auto z = random_input<double>(9, rng(), -20.0, 20.0);
        std::vector<double> p(9);
        softmax<double>(z, p);
        double s = 0;
        for (double v : p) s += v;
        EXPECT_NEAR(s, 1.0, 1e-6);
        std::vector<double> g1(9), g2(9);
        const auto label = static_cast<std::size_t>(rng() % 9);
        const double l1 = softmax_cross_entropy<double>(z, label, 1.0, g1);
        const double l2 = softmax_cross_entropy<double>(z, label, 2.0, g2);
        EXPECT_NEAR(l2, 2.0 * l1, 1e-12 * std::max(1.0, l1));
        for (std::size_t k = 0; k < 9; ++k) EXPECT_NEAR(g2[k], 2.0 * g1[k], 1e-15);
        // unit weight is plain cross-entropy
        EXPECT_NEAR(l1, -std::log(p[label]), 1e-9 * std::max(1.0, l1));
    }
    std::vector<float> z(9, 0.0f), g(9);
    z[3] = 30.0f;
    EXPECT_LT(softmax_cross_entropy<float>(z, 3, 1.0f, g), 1e-10f);
}

TEST(NnOptim, HandRecursions) {
    Optimizer<double> sgd({OptimizerKind::Sgd, 0.01, 0.9}, 1);
    std::vector<double> p = {0.0};
    const std::vector<double> one = {1.0};
    sgd.step(p, one);
    sgd.step(p, one);
    EXPECT_NEAR(p[0], -0.01 * (1.0 + 1.9), 1e-15);

    OptimizerConfig ac;
    ac.kind = OptimizerKind::Adam;
    ac.lr = 0.01;
    for (double g : {1e-3, 0.5, 1.0, 250.0}) {
        Optimizer<double> adam(ac, 1);
        std::vector<double> q = {1.0};
        adam.step(q, std::vector<double>{g});
        EXPECT_NEAR(q[0] - 1.0, -0.01, 1e-7) << g;
    }

    for (auto kind : {OptimizerKind::Sgd, OptimizerKind::Adam}) {
        OptimizerConfig c;
        c.kind = kind;
        Optimizer<float> opt(c, 4);
        std::vector<float> w = {0.5f, -1.0f, 2.0f, 0.0f};
        const auto before = w;
        for (int i = 0; i < 3; ++i) opt.step(w, std::vector<float>(4, 0.0f));
        EXPECT_EQ(w, before);
    }
}

TEST(NnTrain, FixedSeedAndOrderGiveIdenticalWeights) {
    auto run = [] {
        Model<float> m({1, 6, 6}, {LayerSpec::conv(3, 3, 3, 1), LayerSpec::activation(Activation::Tanh),
                                   LayerSpec::maxpool(2, 2), LayerSpec::flatten(), LayerSpec::dense(3)});
        m.init(13);
        Optimizer<float> opt({OptimizerKind::Sgd, 0.05, 0.9}, m.param_count());
        auto ws = m.make_workspace();
        std::vector<float> grad(m.param_count()), gout(3);
        for (int i = 0; i < 40; ++i) {
            std::fill(grad.begin(), grad.end(), 0.0f);
            const auto x = random_bits<float>(36, 500 + i);
            auto out = m.forward(x, ws);
            softmax_cross_entropy<float>(out, static_cast<std::size_t>(i % 3), 1.0f, gout);
            m.backward(gout, ws, grad);
            opt.step(m.params(), grad);
        }
        return std::vector<float>(m.params().begin(), m.params().end());
    };
    const auto a = run();
    const auto b = run();
    EXPECT_EQ(0, std::memcmp(a.data(), b.data(), a.size() * sizeof(float)));
}

class FullArchGrad : public ::testing::TestWithParam<std::tuple<sphbi::ApproachId, sphbi::Task>> {};

TEST_P(FullArchGrad, MatchesFiniteDifferences) {
    const auto [id, task] = GetParam();
    const auto spec = sphbi::build_model(task, id);
    GradCheckOptions opt;
    opt.max_per_slice = 256;
    const std::size_t label = task == sphbi::Task::Binary ? 1 : 4;
    auto mf = sphbi::instantiate<float>(spec);
    mf.init(5);
    auto md = sphbi::instantiate<double>(spec);
    md.init(5);
    const auto xf = random_bits<float>(spec.input.size(), 3);
    const std::vector<double> xd(xf.begin(), xf.end());
    const auto rf = grad_check<float>(mf, xf, label, 1.0, opt);
    const auto rd = grad_check<double>(md, xd, label, 1.0, opt);
    EXPECT_LT(rf.max_rel_error, 1e-3);
    EXPECT_LT(rd.max_rel_error, 1e-5);
    EXPECT_GT(rf.checked, 4 * rf.kinks);
}

INSTANTIATE_TEST_SUITE_P(AllApproaches, FullArchGrad,
                         ::testing::Combine(::testing::Values(sphbi::ApproachId::A1, sphbi::ApproachId::A2,
                                                              sphbi::ApproachId::A2b, sphbi::ApproachId::A3,
                                                              sphbi::ApproachId::A3b),
                                            ::testing::Values(sphbi::Task::Multiclass, sphbi::Task::Binary)));
