#ifndef PREFSHAPE_DYNAMICS_HPP
#define PREFSHAPE_DYNAMICS_HPP

// Two-car kinematic driving scenario: a robot car controlled by block-constant
// (steer rate, acceleration) inputs and a human car that follows a fixed script.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace prefshape {

struct Error : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

inline constexpr double kDegToRad = std::numbers::pi / 180.0;

inline double wrap_degrees(double theta)
{
    double w = std::fmod(theta, 360.0);
    if (w < 0.0)
        w += 360.0;
    // fmod of a tiny negative number can round up to exactly 360
    if (w >= 360.0)
        w = 0.0;
    return w;
}

struct CarState
{
    double x = 0.0;
    double y = 0.0;
    double theta = 90.0; // degrees, 90 = straight along the road
    double v = 0.0;      // [0, 1], 1 = maximum speed

    bool operator==(const CarState &) const = default;
};

struct JointState
{
    CarState robot;
    CarState human;

    bool operator==(const JointState &) const = default;

    std::array<double, 8> flat() const
    {
        return {robot.x, robot.y, robot.theta, robot.v, human.x, human.y, human.theta, human.v};
    }
};

struct Control
{
    double steer = 0.0; // degrees per step
    double accel = 0.0; // speed units per step

    bool operator==(const Control &) const = default;
};

struct ControlSequence
{
    std::vector<Control> blocks;
    int block_len = 1;

    bool operator==(const ControlSequence &) const = default;

    int steps() const { return static_cast<int>(blocks.size()) * block_len; }
    const Control &at_step(int t) const { return blocks[static_cast<std::size_t>(t / block_len)]; }

    // Flattened [steer_0, accel_0, steer_1, accel_1, ...] view used by the optimizer.
    std::vector<double> to_vector() const
    {
        std::vector<double> out;
        out.reserve(blocks.size() * 2);
        for (const auto &b : blocks) {
            out.push_back(b.steer);
            out.push_back(b.accel);
        }
        return out;
    }

    static ControlSequence from_vector(std::span<const double> flat, int block_len)
    {
        if (flat.size() % 2 != 0)
            throw Error("control vector must have an even number of entries");
        ControlSequence u;
        u.block_len = block_len;
        for (std::size_t i = 0; i < flat.size(); i += 2)
            u.blocks.push_back({flat[i], flat[i + 1]});
        return u;
    }
};

struct ScenarioConfig
{
    std::string id = "merge";
    int k = 50;
    int block_len = 10;
    double dt = 0.1;
    std::array<double, 3> lane_centers{-0.17, 0.0, 0.17};
    double road_half_width = 0.255;
    JointState initial{{0.0, 0.0, 90.0, 0.8}, {0.17, 0.0, 90.0, 0.8}};
    double steer_max = 15.0;
    double accel_max = 0.05;
    // human script
    double human_speed = 0.8;
    double human_target_x = 0.0;

    int num_blocks() const { return k / block_len; }

    void validate() const
    {
        if (k <= 0)
            throw Error("scenario horizon k must be positive");
        if (block_len <= 0 || k % block_len != 0)
            throw Error("scenario block_len must divide k");
        if (dt <= 0.0)
            throw Error("scenario dt must be positive");
        if (steer_max < 0.0 || accel_max < 0.0)
            throw Error("control bounds must be nonnegative");
    }
};

struct Trajectory
{
    std::string scenario_id;
    std::vector<JointState> states;
    ControlSequence controls;

    bool operator==(const Trajectory &) const = default;
    int horizon() const { return static_cast<int>(states.size()) - 1; }
};

inline CarState step_car(const CarState &s, const Control &u, double dt)
{
    const double heading = s.theta * kDegToRad;
    CarState n;
    n.theta = wrap_degrees(s.theta + u.steer);
    n.v = std::clamp(s.v + u.accel, 0.0, 1.0);
    n.x = s.x + n.v * std::cos(heading) * dt;
    n.y = s.y + n.v * std::sin(heading) * dt;
    return n;
}

inline JointState step(const JointState &s, const Control &u_robot, const Control &u_human, double dt)
{
    return {step_car(s.robot, u_robot, dt), step_car(s.human, u_human, dt)};
}

namespace detail {

// Heading offset (degrees) of the human car at step j of an n-step lane change.
inline double lane_change_profile(double amplitude, int j, int n)
{
    return amplitude * std::sin(std::numbers::pi * j / n);
}

inline double lateral_shift(double amplitude, int n, double v, double dt)
{
    double shift = 0.0;
    for (int j = 0; j < n; ++j)
        shift += v * std::cos((90.0 + lane_change_profile(amplitude, j, n)) * kDegToRad) * dt;
    return shift;
}

} // namespace detail

/// Per-step human controls: hold speed, then a sine-shaped heading bump over
/// the middle fifth of the horizon that moves the car onto human_target_x.
inline std::vector<Control> human_reference(const ScenarioConfig &sc)
{
    sc.validate();
    std::vector<Control> u(static_cast<std::size_t>(sc.k));
    const double v0 = sc.initial.human.v;
    u[0].accel = sc.human_speed - v0;

    const int n = std::max(2, sc.k / 5);
    const int start = std::max(1, (sc.k - n) / 2);
    if (start + n > sc.k)
        return u;

    // Each step moves laterally by v*cos(heading)*dt; solve for the bump
    // amplitude that covers the required shift.
    const double needed = sc.human_target_x - sc.initial.human.x;
    const double sign = needed < 0.0 ? 1.0 : -1.0; // turning left (theta > 90) moves toward -x
    double lo = 0.0, hi = 89.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double shift = detail::lateral_shift(sign * mid, n, sc.human_speed, sc.dt);
        if (std::abs(shift) < std::abs(needed))
            lo = mid;
        else
            hi = mid;
    }
    const double amplitude = sign * 0.5 * (lo + hi);
    // heading at state start+j must equal 90 + profile(j); the steer command
    // issued at step t takes effect on state t+1
    for (int j = 1; j <= n; ++j)
        u[static_cast<std::size_t>(start + j - 1)].steer =
            detail::lane_change_profile(amplitude, j, n) - detail::lane_change_profile(amplitude, j - 1, n);
    return u;
}

inline void check_controls(const ControlSequence &u, const ScenarioConfig &sc)
{
    if (u.block_len != sc.block_len || u.steps() != sc.k)
        throw Error("control sequence length does not match scenario (expected " +
                    std::to_string(sc.num_blocks()) + " blocks of " + std::to_string(sc.block_len) + ")");
}

inline Trajectory rollout(const JointState &s0, const ControlSequence &u, const ScenarioConfig &sc,
                          std::span<const Control> human_controls)
{
    check_controls(u, sc);
    if (static_cast<int>(human_controls.size()) != sc.k)
        throw Error("human control script length does not match scenario");
    Trajectory traj;
    traj.scenario_id = sc.id;
    traj.controls = u;
    traj.states.reserve(static_cast<std::size_t>(sc.k) + 1);
    traj.states.push_back(s0);
    for (int t = 0; t < sc.k; ++t)
        traj.states.push_back(step(traj.states.back(), u.at_step(t), human_controls[static_cast<std::size_t>(t)], sc.dt));
    return traj;
}

inline Trajectory rollout(const JointState &s0, const ControlSequence &u, const ScenarioConfig &sc)
{
    const auto human = human_reference(sc);
    return rollout(s0, u, sc, human);
}

inline Trajectory rollout(const ControlSequence &u, const ScenarioConfig &sc)
{
    return rollout(sc.initial, u, sc);
}

template <class Rng>
ControlSequence sample_random_controls(Rng &rng, const ScenarioConfig &sc)
{
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    ControlSequence u;
    u.block_len = sc.block_len;
    u.blocks.resize(static_cast<std::size_t>(sc.num_blocks()));
    for (auto &b : u.blocks) {
        b.steer = sc.steer_max * unit(rng);
        b.accel = sc.accel_max * unit(rng);
    }
    return u;
}

} // namespace prefshape

#endif
