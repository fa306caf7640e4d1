#ifndef PREFSHAPE_BELIEF_HPP
#define PREFSHAPE_BELIEF_HPP

// Posterior over reward weights given pairwise preferences. Uniform prior on
// {w >= 0, |w|_2 <= 1}, sigmoid likelihood, adaptive Metropolis sampling.

#include "prefshape/features.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace prefshape {

struct PreferenceRecord
{
    std::string query_id;
    FeatureVector phi_a;
    FeatureVector phi_b;
    int response = 1; // +1: a preferred, -1: b preferred
};

inline double sigmoid(double z)
{
    if (z >= 0.0)
        return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(sigmoid(z)) without overflow for large |z|
inline double log_sigmoid(double z)
{
    if (z >= 0.0)
        return -std::log1p(std::exp(-z));
    return z - std::log1p(std::exp(z));
}

inline void check_record(const PreferenceRecord &r)
{
    if (r.response != 1 && r.response != -1)
        throw Error("preference response must be +1 or -1");
    if (r.phi_a.size() != r.phi_b.size())
        throw Error("preference record feature vectors differ in length");
}

inline double likelihood(const PreferenceRecord &r, const WeightVector &w)
{
    check_record(r);
    if (w.size() != r.phi_a.size())
        throw Error("weight dimension does not match preference record");
    return sigmoid(r.response * w.dot(r.phi_a - r.phi_b));
}

inline bool in_support(const WeightVector &w)
{
    return (w.array() >= 0.0).all() && w.squaredNorm() <= 1.0;
}

class BeliefState
{
public:
    explicit BeliefState(int dimension) : dimension_(dimension)
    {
        if (dimension < 1)
            throw Error("belief dimension must be positive");
    }

    int dimension() const { return dimension_; }
    const std::vector<PreferenceRecord> &records() const { return records_; }

    /// Returns the updated belief; this state is left untouched.
    BeliefState with_record(PreferenceRecord r) const
    {
        check_record(r);
        if (r.phi_a.size() != dimension_)
            throw Error("preference record has dimension " + std::to_string(r.phi_a.size()) +
                        ", belief expects " + std::to_string(dimension_));
        BeliefState next = *this;
        next.records_.push_back(std::move(r));
        next.rebuild();
        return next;
    }

    double log_unnorm_posterior(const WeightVector &w) const
    {
        if (w.size() != dimension_)
            throw Error("weight dimension does not match belief");
        if (!in_support(w))
            return -std::numeric_limits<double>::infinity();
        if (records_.empty())
            return 0.0;
        const Eigen::VectorXd z = signed_diffs_ * w;
        double sum = 0.0;
        for (Eigen::Index i = 0; i < z.size(); ++i)
            sum += log_sigmoid(z[i]);
        return sum;
    }

private:
    void rebuild()
    {
        signed_diffs_.resize(static_cast<Eigen::Index>(records_.size()), dimension_);
        for (std::size_t i = 0; i < records_.size(); ++i)
            signed_diffs_.row(static_cast<Eigen::Index>(i)) =
                records_[i].response * (records_[i].phi_a - records_[i].phi_b).transpose();
    }

    int dimension_;
    std::vector<PreferenceRecord> records_;
    Eigen::MatrixXd signed_diffs_; // row n: I_n (phi_a - phi_b)
};

inline double log_unnorm_posterior(const WeightVector &w, const BeliefState &belief)
{
    return belief.log_unnorm_posterior(w);
}

struct McmcConfig
{
    int chain_length = 20000;
    int burn_in = 5000;
    int adapt_start = 1000; // t0
    double adapt_eps = 1e-6;
    double initial_step = 0.05;
};

struct ChainStats
{
    int accepted = 0;
    int proposed = 0;
    double acceptance_rate() const { return proposed ? static_cast<double>(accepted) / proposed : 0.0; }
};

/// Full post-burn-in chain of an adaptive Metropolis run (Haario et al. 2001).
template <class Rng>
std::vector<WeightVector> adaptive_metropolis_chain(const BeliefState &belief, const McmcConfig &cfg, Rng &rng,
                                                    ChainStats *stats = nullptr)
{
    if (cfg.chain_length <= cfg.burn_in || cfg.burn_in < 0)
        throw Error("MCMC chain must be longer than its burn-in");
    const int d = belief.dimension();
    const double sd = 2.4 * 2.4 / d;
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unit;

    WeightVector current = WeightVector::Constant(d, 0.5 / std::sqrt(static_cast<double>(d)));
    double current_logp = belief.log_unnorm_posterior(current);

    Eigen::VectorXd mean = current;
    Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(d, d); // sum of outer products of deviations
    Eigen::MatrixXd chol = cfg.initial_step * Eigen::MatrixXd::Identity(d, d);
    int n = 1;

    std::vector<WeightVector> kept;
    kept.reserve(static_cast<std::size_t>(cfg.chain_length - cfg.burn_in));
    ChainStats local;

    for (int t = 1; t <= cfg.chain_length; ++t) {
        if (t > cfg.adapt_start) {
            Eigen::MatrixXd cov = sd * scatter / (n - 1);
            cov.diagonal().array() += sd * cfg.adapt_eps;
            Eigen::LLT<Eigen::MatrixXd> llt(cov);
            if (llt.info() == Eigen::Success)
                chol = llt.matrixL();
        }
        Eigen::VectorXd z(d);
        for (int i = 0; i < d; ++i)
            z[i] = normal(rng);
        const WeightVector proposal = current + chol * z;
        const double proposal_logp = belief.log_unnorm_posterior(proposal);
        ++local.proposed;
        if (std::isfinite(proposal_logp)) {
            const double log_alpha = proposal_logp - current_logp;
            if (log_alpha >= 0.0 || std::log(unit(rng)) < log_alpha) {
                current = proposal;
                current_logp = proposal_logp;
                ++local.accepted;
            }
        }

        // Welford update of the chain history
        ++n;
        const Eigen::VectorXd delta = current - mean;
        mean += delta / n;
        scatter += delta * (current - mean).transpose();

        if (t > cfg.burn_in)
            kept.push_back(current);
    }
    if (stats)
        *stats = local;
    return kept;
}

/// M posterior samples: the post-burn-in chain thinned at a uniform stride.
template <class Rng>
std::vector<WeightVector> sample_posterior(const BeliefState &belief, int M, const McmcConfig &cfg, Rng &rng,
                                           ChainStats *stats = nullptr)
{
    if (M < 1)
        throw Error("number of posterior samples must be at least 1");
    if (M > cfg.chain_length - cfg.burn_in)
        throw Error("requested " + std::to_string(M) + " samples but the post-burn-in chain has only " +
                    std::to_string(cfg.chain_length - cfg.burn_in) + " states");
    const auto chain = adaptive_metropolis_chain(belief, cfg, rng, stats);
    const std::size_t stride = chain.size() / static_cast<std::size_t>(M);
    std::vector<WeightVector> out;
    out.reserve(static_cast<std::size_t>(M));
    for (int i = 0; i < M; ++i)
        out.push_back(chain[(static_cast<std::size_t>(i) + 1) * stride - 1]);
    return out;
}

/// Coordinate-wise mean projected back onto the support.
inline WeightVector point_estimate(const std::vector<WeightVector> &samples)
{
    if (samples.empty())
        throw Error("point estimate needs at least one sample");
    WeightVector mean = WeightVector::Zero(samples.front().size());
    for (const auto &s : samples)
        mean += s;
    mean /= static_cast<double>(samples.size());
    mean = mean.cwiseMax(0.0);
    const double norm = mean.norm();
    if (norm > 1.0)
        mean /= norm;
    return mean;
}

} // namespace prefshape

#endif
