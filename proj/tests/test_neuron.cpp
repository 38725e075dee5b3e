#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "spikereg/neuron.hpp"

using namespace spikereg;

namespace {

LayerParams lif_params(double w, double beta, double thr)
{
    LayerParams p;
    p.weights = Matrix{{w}};
    p.decay = Matrix{{beta}};
    p.threshold = Matrix{{thr}};
    return p;
}

LayerParams random_gated(std::size_t n, std::size_t m, std::size_t r, SeededRng& rng)
{
    LayerParams p;
    p.weights = uniform_init(4 * n, m + 1, 1.0, rng);
    p.recurrent = uniform_init(4 * n, r, 1.0, rng);
    p.threshold = Matrix(1, n, 0.3);
    return p;
}

} // namespace

TEST(SpikeActivation, BelowThresholdIsSilent)
{
    EXPECT_EQ(spike_activation(std::vector<double>{0.5}, std::vector<double>{1.0}), std::vector<double>{0.0});
}

TEST(SpikeActivation, BoundaryFires)
{
    EXPECT_EQ(spike_activation(std::vector<double>{1.0}, std::vector<double>{1.0}), std::vector<double>{1.0});
}

TEST(SpikeActivation, Elementwise)
{
    EXPECT_EQ(spike_activation(std::vector<double>{-3, 7}, std::vector<double>{1, 1}),
              (std::vector<double>{0, 1}));
}

TEST(SpikeActivation, SizeMismatchIsShapeError)
{
    EXPECT_THROW(spike_activation(std::vector<double>{1, 2}, std::vector<double>{1}), ShapeError);
}

TEST(Surrogate, ValuesAtZeroAndOne)
{
    EXPECT_EQ(surrogate(0.0), 0.0);
    EXPECT_EQ(surrogate_grad(0.0), 1.0);
    EXPECT_NEAR(surrogate(1.0), std::atan(std::numbers::pi) / std::numbers::pi, 1e-15);
    EXPECT_NEAR(surrogate(1.0), 0.40191, 5e-6);
}

TEST(Surrogate, GradientIsEvenPositiveAndMaximalAtZero)
{
    SeededRng rng(3);
    for (int i = 0; i < 100; ++i) {
        const double x = rng.uniform(-5.0, 5.0);
        EXPECT_EQ(surrogate_grad(x), surrogate_grad(-x));
        EXPECT_GT(surrogate_grad(x), 0.0);
        EXPECT_LE(surrogate_grad(x), 1.0);
    }
}

TEST(Surrogate, GradientIsDerivativeOfSurrogate)
{
    SeededRng rng(4);
    for (int i = 0; i < 10; ++i) {
        const double x = rng.uniform(-3.0, 3.0);
        EXPECT_NEAR(oracle::central_difference(surrogate, x), surrogate_grad(x), 1e-6);
    }
}

TEST(LifStep, DirectSubstitution)
{
    const auto p = lif_params(1.0, 0.9, 1.0);
    const LifState s0{{0.5}, {0.0}};
    const auto s1 = lif_step(s0, std::vector<double>{0.4}, p);
    EXPECT_DOUBLE_EQ(s1.membrane[0], 0.85);
    EXPECT_EQ(s1.last_spike[0], 0.0);
    const auto s2 = lif_step(s1, std::vector<double>{0.4}, p);
    EXPECT_DOUBLE_EQ(s2.membrane[0], 0.9 * 0.85 + 0.4);
    EXPECT_EQ(s2.last_spike[0], 1.0);
}

TEST(LifStep, ZeroInputDecaysGeometrically)
{
    const auto p = lif_params(1.0, 0.7, 10.0);
    LifState s{{2.0}, {0.0}};
    double expect = 2.0;
    for (int t = 1; t <= 20; ++t) {
        s = lif_step(s, std::vector<double>{0.0}, p);
        expect *= 0.7;
        EXPECT_NEAR(s.membrane[0], expect, 1e-15);
    }
}

TEST(LifStep, ResetSubtractsThresholdExactlyOnce)
{
    const auto p = lif_params(1.0, 0.8, 0.6);
    const LifState fired{{0.7}, {1.0}};
    const LifState quiet{{0.7}, {0.0}};
    const auto a = lif_step(fired, std::vector<double>{0.3}, p);
    const auto b = lif_step(quiet, std::vector<double>{0.3}, p);
    EXPECT_DOUBLE_EQ(b.membrane[0] - a.membrane[0], 0.6);
}

TEST(LifStep, SpikesAreBinaryInSurrogateMode)
{
    SeededRng rng(9);
    LayerParams p;
    p.weights = uniform_init(16, 4, 2.0, rng);
    p.decay = Matrix(1, 16, 0.8);
    p.threshold = Matrix(1, 16, 0.5);
    auto s = LifState::zeros(16);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> x(3);
        for (auto& v : x)
            v = rng.uniform(-1.0, 1.0);
        s = lif_step(s, x, p);
        for (double v : s.last_spike)
            ASSERT_TRUE(v == 0.0 || v == 1.0);
    }
}

TEST(LifStep, RlifWithZeroRecurrentWeightsMatchesLif)
{
    SeededRng rng(10);
    LayerParams lif;
    lif.weights = uniform_init(8, 3, 1.5, rng);
    lif.decay = Matrix(1, 8, 0.85);
    lif.threshold = Matrix(1, 8, 0.4);
    LayerParams rlif = lif;
    rlif.recurrent = Matrix(8, 2);
    auto a = LifState::zeros(8);
    auto b = LifState::zeros(8);
    std::vector<double> prev(2);
    for (int t = 0; t < 30; ++t) {
        std::vector<double> x{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        a = lif_step(a, x, lif);
        b = lif_step(b, x, rlif, prev);
        ASSERT_EQ(a.membrane, b.membrane);
        ASSERT_EQ(a.last_spike, b.last_spike);
        prev = x;
    }
}

TEST(LifStep, WrongStateSizeIsShapeError)
{
    const auto p = lif_params(1.0, 0.9, 1.0);
    EXPECT_THROW(lif_step(LifState::zeros(2), std::vector<double>{1.0}, p), ShapeError);
}

TEST(SlstmStep, ZeroWeights)
{
    LayerParams p;
    p.weights = Matrix(4, 2);
    p.recurrent = Matrix(4, 1);
    p.threshold = Matrix{{1.0}};
    const auto g = lstm_gates(std::vector<double>{0.3}, p, std::vector<double>{0.2});
    EXPECT_EQ(g.forget[0], 0.5);
    EXPECT_EQ(g.input[0], 0.5);
    EXPECT_EQ(g.output[0], 0.5);
    EXPECT_EQ(g.candidate[0], 0.0);
    const auto s = slstm_step(SlstmState::zeros(1), std::vector<double>{0.3}, p, std::vector<double>{0.2});
    EXPECT_EQ(s.cell[0], 0.0);
    EXPECT_EQ(s.hidden[0], 0.0);
    EXPECT_EQ(s.last_spike[0], 0.0);
}

TEST(SlstmStep, SaturatedCellFires)
{
    LayerParams p;
    // Bias-only gates: o = sigmoid(50) ~ 1, i ~ 1, c~ = tanh(50) ~ 1.
    p.weights = Matrix{{0, 0}, {0, 50}, {0, 50}, {0, 50}};
    p.threshold = Matrix{{0.5}};
    SlstmState s = SlstmState::zeros(1);
    s.cell[0] = 20.0;
    const auto next = slstm_step(s, std::vector<double>{0.0}, p);
    EXPECT_NEAR(next.hidden[0], 1.0, 1e-9);
    EXPECT_EQ(next.last_spike[0], 1.0);
}

TEST(SlstmStep, MatchesScalarGateComputation)
{
    SeededRng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = random_gated(1, 2, 2, rng);
        const std::vector<double> x{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        const std::vector<double> r{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        SlstmState s{{rng.uniform(-1.0, 1.0)}, {0.0}, {trial % 2 ? 1.0 : 0.0}};

        auto pre = [&](std::size_t row) {
            return p.weights(row, 2) + p.weights(row, 0) * x[0] + p.weights(row, 1) * x[1] +
                   p.recurrent(row, 0) * r[0] + p.recurrent(row, 1) * r[1];
        };
        const double f = oracle::sigmoid(pre(0));
        const double i = oracle::sigmoid(pre(1));
        const double o = oracle::sigmoid(pre(2));
        const double cc = std::tanh(pre(3));
        const double c = f * s.cell[0] + i * cc;
        const double h = o * std::tanh(c) - s.last_spike[0] * 0.3;

        const auto next = slstm_step(s, x, p, r);
        EXPECT_LT(std::abs(next.cell[0] - c), 1e-12);
        EXPECT_LT(std::abs(next.hidden[0] - h), 1e-12);
        EXPECT_EQ(next.last_spike[0], h >= 0.3 ? 1.0 : 0.0);
    }
}

TEST(LstmStep, IsSlstmWithoutSpikeAndReset)
{
    SeededRng rng(22);
    const auto p = random_gated(3, 2, 3, rng);
    LstmState l = LstmState::zeros(3);
    std::vector<double> x{0.4, -0.2};
    for (int t = 0; t < 5; ++t) {
        const auto g = lstm_gates(x, p, l.hidden);
        const auto next = lstm_step(l, x, p, l.hidden);
        for (std::size_t j = 0; j < 3; ++j) {
            const double c = g.forget[j] * l.cell[j] + g.input[j] * g.candidate[j];
            EXPECT_EQ(next.cell[j], c);
            EXPECT_EQ(next.hidden[j], g.output[j] * std::tanh(c));
        }
        l = next;
    }
}

TEST(Project, BiasThenWeightsThenRecurrent)
{
    const Matrix w{{2, 3, 1}};
    const Matrix v{{5}};
    const auto z = project(w, std::vector<double>{1, 1}, v, std::vector<double>{2});
    EXPECT_EQ(z[0], 1 + 2 + 3 + 10);
    EXPECT_THROW(project(w, std::vector<double>{1}), ShapeError);
}
