#ifndef PREFSHAPE_FEATURES_HPP
#define PREFSHAPE_FEATURES_HPP

#include "prefshape/dynamics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace prefshape {

using FeatureVector = Eigen::VectorXd;
using WeightVector = Eigen::VectorXd;

inline constexpr int kNumHandCoded = 4;

enum HandCodedIndex : int { kStayLane = 0, kKeepSpeed = 1, kHeading = 2, kCollision = 3 };

inline const std::vector<std::string> &feature_names()
{
    static const std::vector<std::string> names{"stay_lane", "keep_speed", "heading", "collision", "learned"};
    return names;
}

enum class Aggregation { Mean, Sum };

struct FeatureConfig
{
    // exp(-c_lane * d^2) halves midway between adjacent lanes (d = 0.085)
    double c_lane = std::numbers::ln2 / (0.085 * 0.085);
    std::array<double, 3> lane_centers{-0.17, 0.0, 0.17};
    Aggregation aggregation = Aggregation::Sum;
    double gap_bound = 10.0;
    double gap_eps = 1e-6;
};

inline double lane_offset_sq(double x, const FeatureConfig &cfg, double *nearest = nullptr)
{
    double best = std::numeric_limits<double>::infinity();
    for (double c : cfg.lane_centers) {
        const double d2 = (x - c) * (x - c);
        if (d2 < best) {
            best = d2;
            if (nearest)
                *nearest = c;
        }
    }
    return best;
}

inline double collision_exponent(const JointState &s)
{
    const double dx = s.robot.x - s.human.x;
    const double dy = s.robot.y - s.human.y;
    return 7.0 * dx * dx + 3.0 * dy * dy;
}

/// Hand-coded per-step features in the order [stay_lane, keep_speed, heading, collision].
inline Eigen::Vector4d phi_hc(const JointState &s, const FeatureConfig &cfg = {})
{
    const double dv = s.robot.v - 1.0;
    return {std::exp(-cfg.c_lane * lane_offset_sq(s.robot.x, cfg)),
            -dv * dv,
            std::sin(s.robot.theta * kDegToRad),
            -std::exp(-collision_exponent(s))};
}

/// Gradient of w^T phi_hc(s) with respect to the robot state (x, y, theta[deg], v).
inline Eigen::Vector4d phi_hc_weighted_grad(const JointState &s, const Eigen::Ref<const Eigen::VectorXd> &w,
                                            const FeatureConfig &cfg = {})
{
    Eigen::Vector4d g = Eigen::Vector4d::Zero();
    double center = 0.0;
    const double lane = std::exp(-cfg.c_lane * lane_offset_sq(s.robot.x, cfg, &center));
    g[0] += w[kStayLane] * lane * (-cfg.c_lane * 2.0 * (s.robot.x - center));

    g[3] += w[kKeepSpeed] * (-2.0 * (s.robot.v - 1.0));

    g[2] += w[kHeading] * std::cos(s.robot.theta * kDegToRad) * kDegToRad;

    const double dx = s.robot.x - s.human.x;
    const double dy = s.robot.y - s.human.y;
    const double e = std::exp(-(7.0 * dx * dx + 3.0 * dy * dy));
    g[0] += w[kCollision] * e * 14.0 * dx;
    g[1] += w[kCollision] * e * 6.0 * dy;
    return g;
}

inline double distance(const JointState &s)
{
    return std::hypot(s.robot.x - s.human.x, s.robot.y - s.human.y);
}

/// (y_r - y_h) / (v_r - v_h), clamped to [-bound, bound]; saturates when the
/// speeds (nearly) coincide.
inline double gap_rate(const JointState &s, double bound = 10.0, double eps = 1e-6)
{
    const double dy = s.robot.y - s.human.y;
    const double dv = s.robot.v - s.human.v;
    if (std::abs(dv) < eps) {
        if (dy == 0.0)
            return 0.0;
        return dy > 0.0 ? bound : -bound;
    }
    return std::clamp(dy / dv, -bound, bound);
}

/// Network input [x_r, d, theta_r, v_r] with the optional gap rate as a fifth
/// entry. The heading enters in radians so all inputs share an O(1) scale.
inline Eigen::VectorXd net_input(const JointState &s, int n_in, const FeatureConfig &cfg = {})
{
    if (n_in != 4 && n_in != 5)
        throw Error("network input size must be 4 or 5");
    Eigen::VectorXd in(n_in);
    in << s.robot.x, distance(s), s.robot.theta * kDegToRad, s.robot.v, 0.0;
    if (n_in == 5)
        in[4] = gap_rate(s, cfg.gap_bound, cfg.gap_eps);
    return in.head(n_in);
}

/// Network inputs for every state of a trajectory, one column per state.
inline Eigen::MatrixXd net_inputs(const Trajectory &traj, int n_in, const FeatureConfig &cfg = {})
{
    Eigen::MatrixXd out(n_in, static_cast<Eigen::Index>(traj.states.size()));
    for (std::size_t t = 0; t < traj.states.size(); ++t)
        out.col(static_cast<Eigen::Index>(t)) = net_input(traj.states[t], n_in, cfg);
    return out;
}

inline double aggregation_scale(std::size_t num_states, Aggregation agg)
{
    return agg == Aggregation::Mean ? 1.0 / static_cast<double>(num_states) : 1.0;
}

template <class PerStep>
FeatureVector accumulate(const Trajectory &traj, PerStep &&per_step, Aggregation agg = Aggregation::Mean)
{
    if (traj.states.empty())
        throw Error("cannot accumulate features over an empty trajectory");
    FeatureVector sum = per_step(traj.states.front());
    for (std::size_t t = 1; t < traj.states.size(); ++t)
        sum += per_step(traj.states[t]);
    return sum * aggregation_scale(traj.states.size(), agg);
}

inline FeatureVector phi_hc_trajectory(const Trajectory &traj, const FeatureConfig &cfg = {})
{
    return accumulate(
        traj, [&](const JointState &s) -> FeatureVector { return phi_hc(s, cfg); }, cfg.aggregation);
}

inline double linear_reward(const FeatureVector &phi, const WeightVector &w)
{
    if (phi.size() != w.size())
        throw Error("weight vector has " + std::to_string(w.size()) + " entries but model has " +
                    std::to_string(phi.size()) + " features");
    return w.dot(phi);
}

inline double reward_hc(const Trajectory &traj, const WeightVector &w, const FeatureConfig &cfg = {})
{
    return linear_reward(phi_hc_trajectory(traj, cfg), w);
}

// ---------------------------------------------------------------------------
// Feature grids for slice plots and heat maps

enum class GridAxisKind { XR, YR, ThetaR, VR };

inline std::string axis_name(GridAxisKind k)
{
    switch (k) {
    case GridAxisKind::XR: return "x_r";
    case GridAxisKind::YR: return "y_r";
    case GridAxisKind::ThetaR: return "theta_r";
    case GridAxisKind::VR: return "v_r";
    }
    return "?";
}

struct GridAxis
{
    GridAxisKind kind;
    double lo;
    double hi;
    int count;

    double value(int i) const { return count == 1 ? lo : lo + (hi - lo) * i / (count - 1); }
};

struct FeatureGrid
{
    std::vector<GridAxis> axes;
    JointState frozen;
    std::vector<double> values; // row-major, last axis fastest

    void write_csv(std::ostream &os) const
    {
        os.precision(17);
        os << "# axes";
        for (const auto &a : axes)
            os << ',' << axis_name(a.kind) << ':' << a.lo << ':' << a.hi << ':' << a.count;
        os << '\n';
        const auto f = frozen.flat();
        os << "# frozen,x_r=" << f[0] << ",y_r=" << f[1] << ",theta_r=" << f[2] << ",v_r=" << f[3]
           << ",x_h=" << f[4] << ",y_h=" << f[5] << ",theta_h=" << f[6] << ",v_h=" << f[7] << ",d=" << distance(frozen)
           << '\n';
        for (const auto &a : axes)
            os << axis_name(a.kind) << ',';
        os << "value\n";
        std::vector<int> idx(axes.size(), 0);
        for (double v : values) {
            for (std::size_t i = 0; i < axes.size(); ++i)
                os << axes[i].value(idx[i]) << ',';
            os << v << '\n';
            for (std::size_t i = axes.size(); i-- > 0;) {
                if (++idx[i] < axes[i].count)
                    break;
                idx[i] = 0;
            }
        }
    }
};

inline void set_axis(JointState &s, GridAxisKind kind, double value)
{
    switch (kind) {
    case GridAxisKind::XR: s.robot.x = value; break;
    case GridAxisKind::YR: s.robot.y = value; break;
    case GridAxisKind::ThetaR: s.robot.theta = value; break;
    case GridAxisKind::VR: s.robot.v = value; break;
    }
}

/// Joint state realising a network-input slice: robot at (x_r, 0) and the human
/// directly behind in the same lane at distance d.
inline JointState slice_state(double x_r, double d, double theta_r, double v_r, double v_h = 0.8)
{
    return {{x_r, 0.0, theta_r, v_r}, {x_r, -d, 90.0, v_h}};
}

inline FeatureGrid eval_feature_grid(const std::function<double(const JointState &)> &feature,
                                     std::vector<GridAxis> axes, const JointState &frozen)
{
    if (axes.empty())
        throw Error("feature grid needs at least one axis");
    std::size_t total = 1;
    for (const auto &a : axes) {
        if (a.count < 1)
            throw Error("feature grid axis " + axis_name(a.kind) + " is empty");
        total *= static_cast<std::size_t>(a.count);
    }
    FeatureGrid grid{std::move(axes), frozen, {}};
    grid.values.reserve(total);
    std::vector<int> idx(grid.axes.size(), 0);
    for (std::size_t n = 0; n < total; ++n) {
        JointState s = frozen;
        for (std::size_t i = 0; i < grid.axes.size(); ++i)
            set_axis(s, grid.axes[i].kind, grid.axes[i].value(idx[i]));
        grid.values.push_back(feature(s));
        for (std::size_t i = grid.axes.size(); i-- > 0;) {
            if (++idx[i] < grid.axes[i].count)
                break;
            idx[i] = 0;
        }
    }
    return grid;
}

} // namespace prefshape

#endif
