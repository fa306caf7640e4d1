#include "prefshape/oracle.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace prefshape;

namespace {

Trajectory two_step()
{
    Trajectory t;
    t.states = {{{0.0, 0.0, 90.0, 0.9}, {0.17, 0.2, 90.0, 0.8}}, {{0.02, 0.09, 100.0, 0.95}, {0.16, 0.28, 92.0, 0.8}}};
    return t;
}

Trajectory shifted(double dy)
{
    Trajectory t = two_step();
    for (auto &s : t.states)
        s.robot.y += dy;
    return t;
}

GroundTruth linear(double beta)
{
    GroundTruth gt;
    gt.w = Eigen::Vector4d(0.3, 0.2, 0.2, 0.9).normalized();
    gt.beta = beta;
    return gt;
}

// fraction of +1 answers and the binomial standard deviation of that fraction
std::pair<double, double> frequency(const Trajectory &a, const Trajectory &b, const GroundTruth &gt, int n,
                                    std::uint64_t seed, double p)
{
    std::mt19937_64 rng(seed);
    int plus = 0;
    for (int i = 0; i < n; ++i)
        plus += respond(a, b, gt, rng) == 1;
    return {static_cast<double>(plus) / n, std::sqrt(p * (1 - p) / n)};
}

} // namespace

TEST(TrueReward, TwoStepMatchesDirectEvaluation)
{
    const auto t = two_step();
    GroundTruth gt = linear(10);
    double expected = 0;
    for (const auto &s : t.states) {
        const double dx = s.robot.x - s.human.x, dy = s.robot.y - s.human.y;
        double lane = 1e9;
        for (double c : {-0.17, 0.0, 0.17})
            lane = std::min(lane, (s.robot.x - c) * (s.robot.x - c));
        const double phi[4] = {std::exp(-std::log(2.0) / (0.085 * 0.085) * lane), -(s.robot.v - 1) * (s.robot.v - 1),
                               std::sin(s.robot.theta * std::numbers::pi / 180),
                               -std::exp(-(7 * dx * dx + 3 * dy * dy))};
        for (int k = 0; k < 4; ++k)
            expected += gt.w[k] * phi[k] / 2.0;
    }
    EXPECT_NEAR(true_reward(t, gt), expected, 1e-14);

    gt.kind = GroundTruthKind::LinearPlusHidden;
    gt.alpha = 0.5;
    double ahead = 0;
    for (const auto &s : t.states)
        ahead += std::tanh(5 * (s.robot.y - s.human.y)) / 2.0;
    EXPECT_NEAR(true_reward(t, gt), expected + 0.5 * ahead, 1e-14);
}

TEST(TrueReward, AlphaZeroReducesToLinear)
{
    GroundTruth gt = linear(10);
    const double lin = true_reward(two_step(), gt);
    gt.kind = GroundTruthKind::LinearPlusHidden;
    gt.alpha = 0.0;
    EXPECT_DOUBLE_EQ(true_reward(two_step(), gt), lin);
}

TEST(TrueReward, ZeroWeightsLeaveOnlyTheHiddenTerm)
{
    GroundTruth gt;
    gt.kind = GroundTruthKind::LinearPlusHidden;
    gt.alpha = 1.0;
    const auto t = two_step();
    EXPECT_DOUBLE_EQ(true_reward(t, gt), hidden_feature(t, HiddenFeature::AheadOfHuman, 5.0));
    gt.hidden = HiddenFeature::MinGapPenalty;
    double worst = 0;
    for (const auto &s : t.states)
        worst = std::max(worst, std::exp(-5 * distance(s) * distance(s)));
    EXPECT_DOUBLE_EQ(true_reward(t, gt), -worst);
}

TEST(HiddenFeature, AheadSaturatesFarInFront)
{
    EXPECT_NEAR(hidden_feature(shifted(5.0), HiddenFeature::AheadOfHuman, 5.0), 1.0, 1e-9);
    EXPECT_NEAR(hidden_feature(shifted(-5.0), HiddenFeature::AheadOfHuman, 5.0), -1.0, 1e-9);
    EXPECT_THROW(hidden_feature(Trajectory{}, HiddenFeature::AheadOfHuman, 5.0), Error);
}

TEST(Respond, EqualRewardsSplitEvenly)
{
    const auto t = two_step();
    const auto [f, sd] = frequency(t, t, linear(10), 10000, 1, 0.5);
    EXPECT_NEAR(f, 0.5, 3 * sd);
}

TEST(Respond, BetaOneUnitMarginFrequency)
{
    // scale the weights so the mean-feature margin is exactly 1
    GroundTruth gt = linear(1.0);
    const auto a = two_step(), b = shifted(-0.4);
    const double diff = true_reward(a, gt) - true_reward(b, gt);
    ASSERT_GT(std::abs(diff), 1e-3);
    gt.beta = 1.0 / diff;
    const double p = 0.73105857863000487925;
    EXPECT_NEAR(response_probability(true_reward(a, gt), true_reward(b, gt), gt.beta), p, 1e-12);
    const auto [f, sd] = frequency(a, b, gt, 10000, 2, p);
    EXPECT_NEAR(f, p, 3 * sd);
}

TEST(Respond, DeterministicModeAlwaysPicksTheBetter)
{
    GroundTruth gt = linear(std::numeric_limits<double>::infinity());
    const auto a = two_step(), b = shifted(-0.4);
    const int better = true_reward(a, gt) > true_reward(b, gt) ? 1 : -1;
    std::mt19937_64 rng(3);
    for (int i = 0; i < 1000; ++i) {
        ASSERT_EQ(respond(a, b, gt, rng), better);
        ASSERT_EQ(respond(b, a, gt, rng), -better);
    }
    // ties go to A
    EXPECT_EQ(respond(a, a, gt, rng), 1);
}

TEST(Respond, FrequencyApproachesDeterministicAsBetaGrows)
{
    GroundTruth gt = linear(1.0);
    const auto a = two_step(), b = shifted(-0.4);
    const bool a_better = true_reward(a, gt) > true_reward(b, gt);
    double last = 0;
    for (double beta : {1.0, 10.0, 100.0}) {
        gt.beta = beta;
        const auto [f, sd] = frequency(a, b, gt, 10000, 4, 0.5);
        const double agree = a_better ? f : 1 - f;
        EXPECT_GE(agree, last - 3 * sd) << "beta " << beta;
        last = agree;
    }
    EXPECT_GT(last, 0.9);
}

TEST(GroundTruth, Validation)
{
    GroundTruth gt;
    gt.w = Eigen::Vector4d(0.9, 0.9, 0, 0);
    EXPECT_THROW(gt.validate(), Error);
    gt.w = Eigen::Vector4d(0.1, 0.1, 0, 0);
    gt.beta = 0;
    EXPECT_THROW(gt.validate(), Error);
    gt.beta = 5;
    EXPECT_NO_THROW(gt.validate());
}
