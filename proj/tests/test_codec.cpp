#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "spikereg/codec.hpp"

using namespace spikereg;

TEST(ConstantCurrent, ScalarBroadcast)
{
    const Matrix x = constant_current_encode(std::vector<double>{0.5}, 3);
    EXPECT_EQ(x, (Matrix{{0.5}, {0.5}, {0.5}}));
}

TEST(ConstantCurrent, SequencePassesThrough)
{
    const Matrix seq{{1}, {2}, {3}};
    EXPECT_EQ(constant_current_encode(seq), seq);
}

TEST(ConstantCurrent, EmptyStepsRejected)
{
    EXPECT_THROW(constant_current_encode(std::vector<double>{1.0}, 0), ShapeError);
    EXPECT_THROW(constant_current_encode(Matrix(0, 1)), ShapeError);
}

TEST(Decoder, MemorylessWithIdentityWeights)
{
    const auto next = decode_step({{0, 0}}, std::vector<double>{2, 4}, Matrix::identity(2), std::vector<double>{0, 0});
    EXPECT_EQ(next.membrane, (std::vector<double>{2, 4}));
}

TEST(Decoder, PureIntegratorHolds)
{
    DecoderState s{{1.0}};
    for (int i = 0; i < 2; ++i)
        s = decode_step(s, std::vector<double>{0.0}, Matrix{{1.0}}, std::vector<double>{1.0});
    EXPECT_EQ(s.membrane[0], 1.0);
}

TEST(Decoder, RolloutMatchesGeometricSum)
{
    SeededRng rng(5);
    const Matrix w = uniform_init(3, 4, 1.0, rng);
    std::vector<double> beta{rng.uniform(), rng.uniform(), rng.uniform()};
    std::vector<std::vector<double>> h(3, std::vector<double>(4));
    for (auto& step : h)
        for (auto& v : step)
            v = rng.uniform(-1.0, 1.0);
    DecoderState s{{0, 0, 0}};
    for (const auto& step : h)
        s = decode_step(s, step, w, beta);
    for (std::size_t j = 0; j < 3; ++j) {
        double expect = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            double wh = 0.0;
            for (std::size_t i = 0; i < 4; ++i)
                wh += w(j, i) * h[k][i];
            expect += std::pow(beta[j], static_cast<double>(2 - k)) * wh;
        }
        EXPECT_LT(std::abs(s.membrane[j] - expect), 1e-12);
    }
}

TEST(Decoder, LipschitzInInput)
{
    SeededRng rng(6);
    const Matrix w = uniform_init(5, 3, 1.0, rng);
    double frob = 0.0;
    for (double v : w.values())
        frob += v * v;
    frob = std::sqrt(frob);
    const std::vector<double> beta(5, 0.7);
    const DecoderState s{{0.1, 0.2, 0.3, 0.4, 0.5}};
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> h(3), dh(3), h2(3);
        double nh = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
            h[i] = rng.uniform(-1.0, 1.0);
            dh[i] = rng.uniform(-1e-3, 1e-3);
            h2[i] = h[i] + dh[i];
            nh += dh[i] * dh[i];
        }
        const auto a = decode_step(s, h, w, beta);
        const auto b = decode_step(s, h2, w, beta);
        double nu = 0.0;
        for (std::size_t j = 0; j < 5; ++j)
            nu += (a.membrane[j] - b.membrane[j]) * (a.membrane[j] - b.membrane[j]);
        EXPECT_LE(std::sqrt(nu), frob * std::sqrt(nh) * (1 + 1e-12));
    }
}

TEST(PopulationVote, Mean)
{
    EXPECT_EQ(population_vote(std::vector<double>{1.0, 3.0}), 2.0);
    EXPECT_EQ(population_vote(std::vector<double>(7, 2.5)), 2.5);
}

TEST(PopulationVote, EmptyPopulationRejected)
{
    EXPECT_THROW(population_vote(std::vector<double>{}), ShapeError);
}

TEST(PopulationVote, MatchesNaiveMean)
{
    SeededRng rng(7);
    std::vector<double> u(64);
    for (auto& v : u)
        v = rng.uniform(-10.0, 10.0);
    double s = 0.0;
    for (double v : u)
        s += v;
    EXPECT_LT(std::abs(population_vote(u) - s / 64.0), 1e-14);
}

TEST(PopulationVote, PermutationInvariant)
{
    SeededRng rng(8);
    std::vector<double> u(32);
    for (auto& v : u)
        v = rng.uniform(-1.0, 1.0);
    const double a = population_vote(u);
    const auto perm = shuffled_indices(u.size(), rng);
    std::vector<double> p(u.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        p[i] = u[perm[i]];
    EXPECT_NEAR(population_vote(p), a, 1e-14);
}

TEST(PopulationVote, OnePopulationPerOutput)
{
    const std::vector<double> u{1, 3, 10, 20};
    EXPECT_EQ(population_vote(u, 2), (std::vector<double>{2, 15}));
    EXPECT_THROW(population_vote(u, 3), ShapeError);
}
