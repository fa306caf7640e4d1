#ifndef PREFSHAPE_ORACLE_HPP
#define PREFSHAPE_ORACLE_HPP

// Simulated users answering preference queries from a known reward.

#include "prefshape/belief.hpp"
#include "prefshape/features.hpp"
#include "prefshape/querygen.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace prefshape {

enum class GroundTruthKind { LinearHandCoded, LinearPlusHidden };
enum class HiddenFeature { AheadOfHuman, MinGapPenalty };

inline std::string to_string(GroundTruthKind k)
{
    return k == GroundTruthKind::LinearHandCoded ? "linear_hc" : "linear_plus_hidden";
}

inline std::string to_string(HiddenFeature h)
{
    return h == HiddenFeature::AheadOfHuman ? "ahead_of_human" : "min_gap_penalty";
}

struct GroundTruth
{
    GroundTruthKind kind = GroundTruthKind::LinearHandCoded;
    WeightVector w = WeightVector::Zero(kNumHandCoded);
    double alpha = 0.5;
    HiddenFeature hidden = HiddenFeature::AheadOfHuman;
    double gamma = 5.0;
    // +inf selects the noiseless responder
    double beta = 10.0;
    // the oracle scores trajectories in per-step-mean units so alpha and beta
    // do not depend on the horizon
    FeatureConfig features = mean_features();

    static FeatureConfig mean_features()
    {
        FeatureConfig f;
        f.aggregation = Aggregation::Mean;
        return f;
    }

    bool deterministic() const { return std::isinf(beta); }

    void validate() const
    {
        if (w.size() != kNumHandCoded || !in_support(w))
            throw Error("ground-truth weights must lie in the belief support");
        if (!(beta > 0.0))
            throw Error("oracle temperature must be positive");
        if (kind == GroundTruthKind::LinearPlusHidden && !(std::isfinite(alpha) && alpha > 0.0 && gamma > 0.0))
            throw Error("hidden-feature oracle needs finite positive alpha and gamma");
    }
};

inline double hidden_feature(const Trajectory &traj, HiddenFeature h, double gamma)
{
    if (traj.states.empty())
        throw Error("hidden feature of an empty trajectory");
    if (h == HiddenFeature::AheadOfHuman) {
        double sum = 0.0;
        for (const auto &s : traj.states)
            sum += std::tanh(gamma * (s.robot.y - s.human.y));
        return sum / static_cast<double>(traj.states.size());
    }
    double worst = 0.0;
    for (const auto &s : traj.states) {
        const double d = distance(s);
        worst = std::max(worst, std::exp(-gamma * d * d));
    }
    return -worst;
}

inline double true_reward(const Trajectory &traj, const GroundTruth &gt)
{
    double r = gt.w.dot(phi_hc_trajectory(traj, gt.features));
    if (gt.kind == GroundTruthKind::LinearPlusHidden)
        r += gt.alpha * hidden_feature(traj, gt.hidden, gt.gamma);
    return r;
}

/// Probability that the oracle prefers trajectory a.
inline double response_probability(double r_a, double r_b, double beta)
{
    if (std::isinf(beta))
        return r_a >= r_b ? 1.0 : 0.0;
    return sigmoid(beta * (r_a - r_b));
}

template <class Rng>
int respond(const Trajectory &a, const Trajectory &b, const GroundTruth &gt, Rng &rng)
{
    const double p = response_probability(true_reward(a, gt), true_reward(b, gt), gt.beta);
    if (gt.deterministic())
        return p >= 0.5 ? 1 : -1;
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p ? 1 : -1;
}

template <class Rng>
int respond(const Query &q, const GroundTruth &gt, Rng &rng)
{
    return respond(q.traj_a, q.traj_b, gt, rng);
}

} // namespace prefshape

#endif
