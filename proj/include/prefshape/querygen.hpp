#ifndef PREFSHAPE_QUERYGEN_HPP
#define PREFSHAPE_QUERYGEN_HPP

#include "prefshape/belief.hpp"
#include "prefshape/dynamics.hpp"
#include "prefshape/features.hpp"
#include "prefshape/lbfgs.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace prefshape {

struct QueryProvenance
{
    std::optional<WeightVector> w_a;
    std::optional<WeightVector> w_b;
    bool random = false;
};

struct Query
{
    std::string query_id;
    Trajectory traj_a;
    Trajectory traj_b;
    QueryProvenance provenance;
};

struct QueryConfig
{
    int num_samples = 100; // M
    double mu = 0.1;
    int restarts = 10;
    int max_retries = 5;
    McmcConfig mcmc;
    lbfgs::Params solver;
    FeatureConfig features;
};

// ---------------------------------------------------------------------------
// Weight-pair heuristic

struct WeightPair
{
    std::size_t i = 0;
    std::size_t j = 0;
    double objective = 0.0;
};

/// Posterior values normalized by their maximum over the sample set.
inline std::vector<double> relative_posterior(const std::vector<WeightVector> &samples, const BeliefState &belief)
{
    std::vector<double> logp(samples.size());
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        logp[i] = belief.log_unnorm_posterior(samples[i]);
        best = std::max(best, logp[i]);
    }
    std::vector<double> p(samples.size(), 0.0);
    if (!std::isfinite(best))
        return p;
    for (std::size_t i = 0; i < samples.size(); ++i)
        p[i] = std::exp(logp[i] - best);
    return p;
}

/// Exhaustive search over unordered pairs i < j of p(w_i) p(w_j) + mu |w_i - w_j|.
/// Ties resolve to the lexicographically lowest (i, j).
inline WeightPair select_weight_pair(const std::vector<double> &p, const std::vector<WeightVector> &samples, double mu)
{
    if (samples.size() < 2)
        throw Error("weight-pair selection needs at least two samples");
    if (mu < 0.0)
        throw Error("mu must be nonnegative");
    WeightPair best{0, 1, -std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (std::size_t j = i + 1; j < samples.size(); ++j) {
            const double obj = p[i] * p[j] + mu * (samples[i] - samples[j]).norm();
            if (obj > best.objective)
                best = {i, j, obj};
        }
    return best;
}

inline WeightPair select_weight_pair(const std::vector<WeightVector> &samples, const BeliefState &belief, double mu)
{
    if (samples.size() < 2)
        throw Error("weight-pair selection needs at least two samples");
    return select_weight_pair(relative_posterior(samples, belief), samples, mu);
}

// ---------------------------------------------------------------------------
// Trajectory optimization

/// Hand-coded reward of the rollout from a flattened control vector, with its
/// gradient obtained by a reverse sweep through the dynamics.
class TrajectoryObjective
{
public:
    TrajectoryObjective(const ScenarioConfig &sc, WeightVector w, FeatureConfig fcfg = {})
        : sc_(sc), human_(human_reference(sc)), w_(std::move(w)), fcfg_(fcfg)
    {
        if (w_.size() != kNumHandCoded)
            throw Error("trajectory optimization expects " + std::to_string(kNumHandCoded) + " hand-coded weights");
    }

    const ScenarioConfig &scenario() const { return sc_; }
    const std::vector<Control> &human_script() const { return human_; }

    Trajectory trajectory(std::span<const double> controls) const
    {
        return rollout(sc_.initial, ControlSequence::from_vector(controls, sc_.block_len), sc_, human_);
    }

    double reward(std::span<const double> controls) const
    {
        return reward_hc(trajectory(controls), w_, fcfg_);
    }

    /// Reward and d(reward)/d(controls), controls in physical units.
    double reward_and_gradient(std::span<const double> controls, std::span<double> grad) const
    {
        const Trajectory traj = trajectory(controls);
        const auto &states = traj.states;
        const double scale = aggregation_scale(states.size(), fcfg_.aggregation);
        const double dt = sc_.dt;
        std::fill(grad.begin(), grad.end(), 0.0);

        double total = 0.0;
        for (const auto &s : states)
            total += w_.dot(phi_hc(s, fcfg_));

        // adjoint of the robot state (x, y, theta, v) at step t+1
        Eigen::Vector4d adj = scale * phi_hc_weighted_grad(states.back(), w_, fcfg_);
        for (int t = sc_.k - 1; t >= 0; --t) {
            const CarState &cur = states[static_cast<std::size_t>(t)].robot;
            const CarState &next = states[static_cast<std::size_t>(t) + 1].robot;
            const Control &u = traj.controls.at_step(t);
            const double heading = cur.theta * kDegToRad;
            const double c = std::cos(heading), s = std::sin(heading);
            const std::size_t block = static_cast<std::size_t>(t / sc_.block_len);

            // d/d(v_{t+1}) through the position update and later steps
            const double g_speed = adj[3] + adj[0] * c * dt + adj[1] * s * dt;
            const double raw = cur.v + u.accel;
            const bool unclamped = raw > 0.0 && raw < 1.0;

            grad[2 * block] += adj[2];
            if (unclamped)
                grad[2 * block + 1] += g_speed;

            Eigen::Vector4d prev = scale * phi_hc_weighted_grad(states[static_cast<std::size_t>(t)], w_, fcfg_);
            prev[0] += adj[0];
            prev[1] += adj[1];
            prev[2] += adj[2] + (adj[0] * next.v * -s * dt + adj[1] * next.v * c * dt) * kDegToRad;
            prev[3] += unclamped ? g_speed : 0.0;
            adj = prev;
        }
        return total * scale;
    }

private:
    ScenarioConfig sc_;
    std::vector<Control> human_;
    WeightVector w_;
    FeatureConfig fcfg_;
};

struct OptimizationReport
{
    Trajectory best;
    double best_reward = -std::numeric_limits<double>::infinity();
    std::vector<double> start_rewards;
    std::vector<double> final_rewards;
    int failed_restarts = 0;
};

/// Maximizes the hand-coded reward from `restarts` random control initializations.
template <class Rng>
OptimizationReport optimize_trajectory_detailed(const WeightVector &w, const ScenarioConfig &sc, int restarts, Rng &rng,
                                                const lbfgs::Params &solver = {}, const FeatureConfig &fcfg = {})
{
    if (restarts < 1)
        throw Error("trajectory optimization needs at least one restart");
    const TrajectoryObjective objective(sc, w, fcfg);
    const int n = 2 * sc.num_blocks();

    // optimize in normalized coordinates so steer (degrees) and accel share a scale
    Eigen::VectorXd unit(n), lo(n), hi(n);
    for (int i = 0; i < n; ++i) {
        const double bound = i % 2 == 0 ? sc.steer_max : sc.accel_max;
        unit[i] = bound > 0.0 ? bound : 1.0;
        lo[i] = bound > 0.0 ? -1.0 : 0.0;
        hi[i] = bound > 0.0 ? 1.0 : 0.0;
    }
    auto negative_reward = [&](const Eigen::VectorXd &z, Eigen::VectorXd &g) {
        const Eigen::VectorXd u = z.cwiseProduct(unit);
        const double r = objective.reward_and_gradient({u.data(), static_cast<std::size_t>(n)},
                                                       {g.data(), static_cast<std::size_t>(n)});
        g = -g.cwiseProduct(unit);
        return -r;
    };

    OptimizationReport report;
    for (int k = 0; k < restarts; ++k) {
        const auto init = sample_random_controls(rng, sc).to_vector();
        const Eigen::VectorXd z0 = Eigen::Map<const Eigen::VectorXd>(init.data(), n).cwiseQuotient(unit);
        report.start_rewards.push_back(objective.reward(init));
        try {
            const auto res = lbfgs::minimize(negative_reward, z0, lo, hi, solver);
            Eigen::VectorXd u = res.x.cwiseProduct(unit);
            // keep the exact bounds after the unit round trip
            for (int i = 0; i < n; ++i)
                u[i] = std::clamp(u[i], -unit[i] * hi[i], unit[i] * hi[i]);
            const double r = -res.value;
            report.final_rewards.push_back(r);
            if (r > report.best_reward) {
                report.best_reward = r;
                report.best = objective.trajectory({u.data(), static_cast<std::size_t>(n)});
            }
        } catch (const lbfgs::NonFiniteObjective &) {
            ++report.failed_restarts;
            report.final_rewards.push_back(-std::numeric_limits<double>::infinity());
        }
    }
    if (report.best.states.empty())
        throw Error("every trajectory optimization restart produced a non-finite reward");
    return report;
}

template <class Rng>
Trajectory optimize_trajectory(const WeightVector &w, const ScenarioConfig &sc, int restarts, Rng &rng,
                               const lbfgs::Params &solver = {}, const FeatureConfig &fcfg = {})
{
    return optimize_trajectory_detailed(w, sc, restarts, rng, solver, fcfg).best;
}

// ---------------------------------------------------------------------------
// Queries

struct DegenerateQuery : Error
{
    DegenerateQuery(WeightVector a, WeightVector b)
        : Error("optimized trajectories for the selected weight pair stayed identical"), w_a(std::move(a)),
          w_b(std::move(b))
    {
    }
    WeightVector w_a, w_b;
};

inline std::string format_query_id(const std::string &prefix, int n)
{
    std::string digits = std::to_string(n);
    if (digits.size() < 4)
        digits.insert(0, 4 - digits.size(), '0');
    return prefix + digits;
}

/// Optimizes one trajectory per weight, reseeding the second until the two differ.
template <class Rng>
Query build_query(const std::string &id, const WeightVector &w_a, const WeightVector &w_b, const ScenarioConfig &sc,
                  int restarts, int max_retries, Rng &rng, const lbfgs::Params &solver, const FeatureConfig &fcfg)
{
    Query q;
    q.query_id = id;
    q.provenance.w_a = w_a;
    q.provenance.w_b = w_b;
    q.traj_a = optimize_trajectory(w_a, sc, restarts, rng, solver, fcfg);
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        std::mt19937_64 child(rng());
        q.traj_b = optimize_trajectory(w_b, sc, restarts, child, solver, fcfg);
        if (!(q.traj_b.controls == q.traj_a.controls))
            return q;
    }
    throw DegenerateQuery(w_a, w_b);
}

template <class Rng>
Query generate_query(const BeliefState &belief, const ScenarioConfig &sc, const QueryConfig &cfg, Rng &rng,
                     const std::string &query_id = "q0000")
{
    if (belief.dimension() != kNumHandCoded)
        throw Error("active queries are generated from the hand-coded belief only");
    const auto samples = sample_posterior(belief, cfg.num_samples, cfg.mcmc, rng);
    const auto pair = select_weight_pair(samples, belief, cfg.mu);
    return build_query(query_id, samples[pair.i], samples[pair.j], sc, cfg.restarts, cfg.max_retries, rng, cfg.solver,
                       cfg.features);
}

/// Uniform draw from {w >= 0, |w| <= 1}.
template <class Rng>
WeightVector sample_support_uniform(int d, Rng &rng)
{
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unit;
    WeightVector w(d);
    for (int i = 0; i < d; ++i)
        w[i] = std::abs(normal(rng));
    const double norm = w.norm();
    if (norm == 0.0)
        return WeightVector::Zero(d);
    return w / norm * std::pow(unit(rng), 1.0 / d);
}

/// Standardized test queries: independent uniform weight pairs, each trajectory
/// locally optimized from one random initialization by default.
template <class Rng>
std::vector<Query> generate_standardized_test(int count, const ScenarioConfig &sc, Rng &rng, int restarts = 1,
                                              const lbfgs::Params &solver = {}, const FeatureConfig &fcfg = {})
{
    if (count < 1)
        throw Error("standardized test set needs at least one query");
    std::vector<Query> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int n = 0; n < count; ++n) {
        const WeightVector w_a = sample_support_uniform(kNumHandCoded, rng);
        const WeightVector w_b = sample_support_uniform(kNumHandCoded, rng);
        out.push_back(build_query(format_query_id("t", n), w_a, w_b, sc, restarts, 5, rng, solver, fcfg));
    }
    return out;
}

/// Highest-reward rollout among N random control sequences. `reward` maps a
/// Trajectory to a real. Candidates are drawn sequentially from `rng`, so a run
/// with larger N on the same seed scores a superset of the candidates.
template <class Reward, class Rng>
Trajectory best_of_n_trajectory(Reward &&reward, const ScenarioConfig &sc, int N, Rng &rng,
                                double *best_reward = nullptr)
{
    if (N < 1)
        throw Error("best-of-N needs N >= 1");
    const auto human = human_reference(sc);
    Trajectory best;
    double best_r = -std::numeric_limits<double>::infinity();
    for (int n = 0; n < N; ++n) {
        auto traj = rollout(sc.initial, sample_random_controls(rng, sc), sc, human);
        const double r = reward(traj);
        if (best.states.empty() || r > best_r) {
            best_r = r;
            best = std::move(traj);
        }
    }
    if (best_reward)
        *best_reward = best_r;
    return best;
}

} // namespace prefshape

#endif
