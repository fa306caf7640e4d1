#include "prefshape/features.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace prefshape;

namespace {

JointState at(double xr, double yr, double th, double v, double xh, double yh)
{
    return {{xr, yr, th, v}, {xh, yh, 90.0, 0.8}};
}

Trajectory constant_trajectory(const JointState &s, int n)
{
    Trajectory t;
    t.states.assign(static_cast<std::size_t>(n), s);
    return t;
}

FeatureConfig mean_cfg()
{
    FeatureConfig c;
    c.aggregation = Aggregation::Mean;
    return c;
}

} // namespace

TEST(PhiHc, CoincidentCarsHitEveryExtremum)
{
    const auto phi = phi_hc(at(0, 0, 90, 1, 0, 0));
    EXPECT_DOUBLE_EQ(phi[kStayLane], 1.0);
    EXPECT_DOUBLE_EQ(phi[kKeepSpeed], 0.0);
    EXPECT_DOUBLE_EQ(phi[kHeading], 1.0);
    EXPECT_DOUBLE_EQ(phi[kCollision], -1.0);
}

TEST(PhiHc, CollisionOneLaneApart)
{
    // -exp(-7 * 0.17^2) = -exp(-0.2023)
    const long double expected = -0.81684983622944908404L;
    EXPECT_NEAR(phi_hc(at(0.17, 1, 90, 1, 0, 1))[kCollision], static_cast<double>(expected), 1e-15);
}

TEST(PhiHc, KeepSpeedAtEightyPercent)
{
    EXPECT_NEAR(phi_hc(at(0, 0, 90, 0.8, 0, 5))[kKeepSpeed], -0.04, 1e-15);
}

TEST(PhiHc, StayLaneHalvesBetweenLanes)
{
    EXPECT_NEAR(phi_hc(at(0.085, 0, 90, 1, 0, 5))[kStayLane], 0.5, 1e-12);
    EXPECT_NEAR(phi_hc(at(-0.17, 0, 90, 1, 0, 5))[kStayLane], 1.0, 1e-15);
    EXPECT_GT(phi_hc(at(0.16, 0, 90, 1, 0, 5))[kStayLane], phi_hc(at(0.1, 0, 90, 1, 0, 5))[kStayLane]);
}

TEST(PhiHc, ValuesStayInUnitInterval)
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> x(-0.4, 0.4), y(-3, 3), th(0, 360), v(0, 1);
    for (int i = 0; i < 5000; ++i) {
        const auto phi = phi_hc(at(x(rng), y(rng), th(rng), v(rng), x(rng), y(rng)));
        for (int f = 0; f < kNumHandCoded; ++f) {
            EXPECT_GE(phi[f], -1.0);
            EXPECT_LE(phi[f], 1.0);
        }
    }
}

TEST(PhiHc, WeightedGradientMatchesFiniteDifferences)
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> x(-0.3, 0.3), y(-1, 1), th(0, 360), v(0.05, 0.95), w(0, 1);
    for (int i = 0; i < 50; ++i) {
        const JointState s = at(x(rng), y(rng), th(rng), v(rng), x(rng), y(rng));
        Eigen::Vector4d wt(w(rng), w(rng), w(rng), w(rng));
        const auto g = phi_hc_weighted_grad(s, wt);
        for (int c = 0; c < 4; ++c) {
            const double h = c == 2 ? 1e-4 : 1e-6;
            JointState p = s, m = s;
            double *pp[] = {&p.robot.x, &p.robot.y, &p.robot.theta, &p.robot.v};
            double *mm[] = {&m.robot.x, &m.robot.y, &m.robot.theta, &m.robot.v};
            *pp[c] += h;
            *mm[c] -= h;
            const double fd = (wt.dot(phi_hc(p)) - wt.dot(phi_hc(m))) / (2 * h);
            EXPECT_NEAR(g[c], fd, 1e-6 * (1 + std::abs(fd))) << "coordinate " << c;
        }
    }
}

TEST(Distance, Examples)
{
    EXPECT_DOUBLE_EQ(distance(at(0, 0, 90, 1, 0.3, 0.4)), 0.5);
    EXPECT_DOUBLE_EQ(distance(at(0.1, 2, 90, 1, 0.1, 2)), 0.0);
}

TEST(GapRate, RatioAndSaturation)
{
    EXPECT_DOUBLE_EQ(gap_rate({{0, 0.5, 90, 1.0}, {0, 0.3, 90, 0.8}}), 1.0);
    EXPECT_DOUBLE_EQ(gap_rate({{0, 0.5, 90, 0.8}, {0, 0.3, 90, 0.8}}), 10.0);
    EXPECT_DOUBLE_EQ(gap_rate({{0, 0.1, 90, 0.8}, {0, 0.3, 90, 0.8}}), -10.0);
    EXPECT_DOUBLE_EQ(gap_rate({{0, 0.3, 90, 0.8}, {0, 0.3, 90, 0.8}}), 0.0);
    EXPECT_DOUBLE_EQ(gap_rate({{0, 5.0, 90, 0.81}, {0, 0.0, 90, 0.8}}), 10.0);
}

TEST(NetInput, LayoutAndHeadingInRadians)
{
    const JointState s{{0.1, 0.5, 90.0, 0.7}, {0.1, 0.2, 90.0, 0.8}};
    const auto in4 = net_input(s, 4);
    ASSERT_EQ(in4.size(), 4);
    EXPECT_DOUBLE_EQ(in4[0], 0.1);
    EXPECT_NEAR(in4[1], 0.3, 1e-15);
    EXPECT_NEAR(in4[2], std::numbers::pi / 2, 1e-15);
    EXPECT_DOUBLE_EQ(in4[3], 0.7);
    const auto in5 = net_input(s, 5);
    EXPECT_NEAR(in5[4], 0.3 / -0.1, 1e-12);
    EXPECT_THROW(net_input(s, 3), Error);
}

TEST(Accumulate, MeanOfConstantIsTheConstant)
{
    const auto s = at(0, 0, 90, 0.8, 0.17, 0.5);
    const auto traj = constant_trajectory(s, 51);
    const auto phi = phi_hc_trajectory(traj, mean_cfg());
    const auto per = phi_hc(s);
    for (int f = 0; f < 4; ++f)
        EXPECT_NEAR(phi[f], per[f], 1e-14);
    // unit weight on heading, always straight ahead
    WeightVector w = WeightVector::Zero(4);
    w[kHeading] = 1;
    EXPECT_NEAR(reward_hc(traj, w, mean_cfg()), 1.0, 1e-14);
}

TEST(Accumulate, SumIsMeanTimesLength)
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    Trajectory t;
    for (int i = 0; i < 51; ++i)
        t.states.push_back(at(u(rng), u(rng), 90 + 100 * u(rng), 0.5 + u(rng), u(rng), u(rng)));
    const auto sum = phi_hc_trajectory(t);
    const auto mean = phi_hc_trajectory(t, mean_cfg());
    EXPECT_LT((sum - 51.0 * mean).norm(), 1e-12);
}

TEST(Accumulate, LinearityAndAdditivity)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.3, 0.3), wd(0, 1);
    Trajectory a, b, ab;
    for (int i = 0; i < 20; ++i)
        a.states.push_back(at(u(rng), u(rng), 90 + 100 * u(rng), 0.5 + u(rng), u(rng), u(rng)));
    for (int i = 0; i < 31; ++i)
        b.states.push_back(at(u(rng), u(rng), 90 + 100 * u(rng), 0.5 + u(rng), u(rng), u(rng)));
    ab.states = a.states;
    ab.states.insert(ab.states.end(), b.states.begin(), b.states.end());
    EXPECT_LT((phi_hc_trajectory(ab) - phi_hc_trajectory(a) - phi_hc_trajectory(b)).norm(), 1e-12);

    WeightVector w1(4), w2(4);
    w1 << wd(rng), wd(rng), wd(rng), wd(rng);
    w2 << wd(rng), wd(rng), wd(rng), wd(rng);
    const double c = 0.37;
    EXPECT_NEAR(reward_hc(ab, w1 + c * w2), reward_hc(ab, w1) + c * reward_hc(ab, w2), 1e-12);
}

TEST(Accumulate, EmptyTrajectoryIsAnError)
{
    EXPECT_THROW(phi_hc_trajectory(Trajectory{}), Error);
}

TEST(LinearReward, DimensionMismatchIsAnError)
{
    EXPECT_THROW(linear_reward(FeatureVector::Zero(4), WeightVector::Zero(5)), Error);
}

TEST(FeatureGrid, CellsEqualDirectCalls)
{
    const JointState frozen{{0.0, 0.0, 90.0, 1.0}, {0.17, 0.0, 90.0, 0.8}};
    auto feature = [](const JointState &s) { return phi_hc(s)[kCollision]; };
    const auto g = eval_feature_grid(feature, {{GridAxisKind::XR, -0.3, 0.3, 7}, {GridAxisKind::YR, -1, 1, 5}}, frozen);
    ASSERT_EQ(g.values.size(), 35u);
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 5; ++j) {
            JointState s = frozen;
            s.robot.x = -0.3 + 0.1 * i;
            s.robot.y = -1 + 0.5 * j;
            EXPECT_NEAR(g.values[static_cast<std::size_t>(i * 5 + j)], feature(s), 1e-12);
        }
}

TEST(FeatureGrid, HeadingSweepIsASineCurve)
{
    const auto g = eval_feature_grid([](const JointState &s) { return phi_hc(s)[kHeading]; },
                                     {{GridAxisKind::ThetaR, 0, 360, 361}}, slice_state(0, 0.5, 90, 0.8));
    for (int i = 0; i <= 360; ++i)
        EXPECT_NEAR(g.values[static_cast<std::size_t>(i)], std::sin(i * std::numbers::pi / 180), 1e-12);
}

TEST(FeatureGrid, CsvHasHeaderAndOneRowPerCell)
{
    const auto g = eval_feature_grid([](const JointState &s) { return s.robot.v; }, {{GridAxisKind::VR, 0, 1, 3}},
                                     slice_state(0, 0.5, 90, 0.8));
    std::ostringstream os;
    g.write_csv(os);
    std::istringstream is(os.str());
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(is, line))
        lines.push_back(line);
    ASSERT_EQ(lines.size(), 6u);
    EXPECT_EQ(lines[0].rfind("# axes", 0), 0u);
    EXPECT_EQ(lines[2], "v_r,value");
    EXPECT_EQ(lines[5], "1,1");
}

TEST(FeatureGrid, EmptyAxisIsAnError)
{
    EXPECT_THROW(eval_feature_grid([](const JointState &) { return 0.0; }, {{GridAxisKind::VR, 0, 1, 0}}, {}), Error);
    EXPECT_THROW(eval_feature_grid([](const JointState &) { return 0.0; }, {}, {}), Error);
}
