#ifndef PREFSHAPE_FEATLEARN_HPP
#define PREFSHAPE_FEATLEARN_HPP

// Offline learning of one neural-network feature plus the mixed linear weights
// from recorded preference pairs.

#include "prefshape/belief.hpp"
#include "prefshape/features.hpp"
#include "prefshape/mlp.hpp"
#include "prefshape/nadam.hpp"
#include "prefshape/querygen.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <thread>
#include <vector>

namespace prefshape {

/// Precomputed view of one trajectory: hand-coded Phi and per-step network inputs.
struct TrajectoryData
{
    FeatureVector phi_hc;
    Eigen::MatrixXd inputs; // n_in x (k+1)
};

struct LabeledPair
{
    std::string query_id;
    TrajectoryData a;
    TrajectoryData b;
    int response = 1;
};

inline TrajectoryData make_trajectory_data(const Trajectory &traj, int n_in, const FeatureConfig &fcfg = {})
{
    return {phi_hc_trajectory(traj, fcfg), net_inputs(traj, n_in, fcfg)};
}

inline LabeledPair make_labeled_pair(const Query &q, int response, int n_in, const FeatureConfig &fcfg = {})
{
    if (response != 1 && response != -1)
        throw Error("preference response must be +1 or -1");
    return {q.query_id, make_trajectory_data(q.traj_a, n_in, fcfg), make_trajectory_data(q.traj_b, n_in, fcfg),
            response};
}

struct RewardModel
{
    FeatureConfig features;
    std::optional<MlpParams> net;
    WeightVector w_hc = WeightVector::Zero(kNumHandCoded);
    double w_nn = 0.0;

    int n_in() const { return net ? net->n_in() : 0; }
    int dimension() const { return kNumHandCoded + (net ? 1 : 0); }

    WeightVector weights() const
    {
        WeightVector w(dimension());
        w.head(kNumHandCoded) = w_hc;
        if (net)
            w[kNumHandCoded] = w_nn;
        return w;
    }

    double learned_phi(const Eigen::MatrixXd &inputs) const
    {
        if (!net)
            throw Error("reward model has no learned feature");
        return mlp_forward_batch(*net, inputs).sum() * aggregation_scale(static_cast<std::size_t>(inputs.cols()),
                                                                          features.aggregation);
    }

    FeatureVector phi(const TrajectoryData &d) const
    {
        FeatureVector out(dimension());
        out.head(kNumHandCoded) = d.phi_hc;
        if (net)
            out[kNumHandCoded] = learned_phi(d.inputs);
        return out;
    }

    FeatureVector phi(const Trajectory &traj) const
    {
        return phi(TrajectoryData{phi_hc_trajectory(traj, features), net ? net_inputs(traj, n_in(), features)
                                                                           : Eigen::MatrixXd{}});
    }

    double reward(const TrajectoryData &d) const { return linear_reward(phi(d), weights()); }
    double reward(const Trajectory &traj) const { return linear_reward(phi(traj), weights()); }

    /// Learned feature at a single state.
    double learned_feature(const JointState &s) const
    {
        if (!net)
            throw Error("reward model has no learned feature");
        return mlp_forward(*net, net_input(s, n_in(), features));
    }
};

/// Hand-coded Phi followed by the per-step aggregate of the network output.
inline FeatureVector mixed_phi(const Trajectory &traj, const RewardModel &model)
{
    if (!model.net)
        throw Error("mixed features need a reward model with a network");
    return model.phi(traj);
}

inline double predict_prob_a(const TrajectoryData &a, const TrajectoryData &b, const RewardModel &model)
{
    return sigmoid(model.reward(a) - model.reward(b));
}

// ---------------------------------------------------------------------------
// Loss and gradients

inline constexpr double kProbClamp = 1e-12;

/// All records stacked for full-batch evaluation.
struct PackedBatch
{
    Eigen::MatrixXd inputs;          // n_in x total steps (a then b per record)
    std::vector<Eigen::Index> start; // column offset of trajectory 2n (a) and 2n+1 (b)
    std::vector<Eigen::Index> count;
    Eigen::MatrixXd delta_hc;        // N x 4, phi_hc(a) - phi_hc(b)
    Eigen::VectorXd z;               // targets in {0, 1}
    std::vector<int> response;

    std::size_t size() const { return response.size(); }

    static PackedBatch pack(std::span<const LabeledPair> records)
    {
        PackedBatch b;
        const auto n = static_cast<Eigen::Index>(records.size());
        Eigen::Index cols = 0, rows = 0;
        for (const auto &r : records) {
            cols += r.a.inputs.cols() + r.b.inputs.cols();
            rows = std::max(rows, r.a.inputs.rows());
        }
        b.inputs.resize(rows, cols);
        b.delta_hc.resize(n, kNumHandCoded);
        b.z.resize(n);
        Eigen::Index c = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto &r = records[static_cast<std::size_t>(i)];
            if (r.response != 1 && r.response != -1)
                throw Error("preference response must be +1 or -1");
            for (const auto *t : {&r.a, &r.b}) {
                if (t->inputs.cols() > 0 && t->inputs.rows() != rows)
                    throw Error("records disagree on the network input size");
                b.start.push_back(c);
                b.count.push_back(t->inputs.cols());
                if (t->inputs.cols() > 0)
                    b.inputs.middleCols(c, t->inputs.cols()) = t->inputs;
                c += t->inputs.cols();
            }
            b.delta_hc.row(i) = (r.a.phi_hc - r.b.phi_hc).transpose();
            b.z[i] = r.response == 1 ? 1.0 : 0.0;
            b.response.push_back(r.response);
        }
        return b;
    }
};

struct ModelGradient
{
    double loss = 0.0;
    std::optional<MlpParams> net;
    Eigen::VectorXd w_hc;
    double w_nn = 0.0;
};

namespace detail {

inline double clamped_prob(double delta_r)
{
    return std::clamp(sigmoid(delta_r), kProbClamp, 1.0 - kProbClamp);
}

} // namespace detail

/// Forward and backward passes over a packed batch. Buffers are kept between
/// calls so a training loop does not reallocate them every epoch.
class BatchEvaluator
{
public:
    explicit BatchEvaluator(const PackedBatch &batch) : b_(batch) {}

    /// R(a) - R(b) for every record.
    const Eigen::VectorXd &margins(const RewardModel &m)
    {
        forward(m);
        return delta_r_;
    }

    double loss(const RewardModel &m)
    {
        if (b_.size() == 0)
            throw Error("cross-entropy loss needs at least one record");
        forward(m);
        double sum = 0.0;
        for (Eigen::Index i = 0; i < delta_r_.size(); ++i) {
            const double p = detail::clamped_prob(delta_r_[i]);
            sum += b_.z[i] * std::log(p) + (1.0 - b_.z[i]) * std::log(1.0 - p);
        }
        return -sum / static_cast<double>(b_.size());
    }

    /// Loss and its exact gradient; `g.net` is reused when already sized.
    void loss_and_grad(const RewardModel &m, ModelGradient &g)
    {
        if (b_.size() == 0)
            throw Error("cross-entropy loss needs at least one record");
        forward(m);
        const auto n = static_cast<Eigen::Index>(b_.size());
        const double inv_n = 1.0 / static_cast<double>(n);

        dr_.resize(n); // dLoss / d(R_a - R_b)
        double loss = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double raw = sigmoid(delta_r_[i]);
            const double p = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
            loss += b_.z[i] * std::log(p) + (1.0 - b_.z[i]) * std::log(1.0 - p);
            const bool clamped = raw < kProbClamp || raw > 1.0 - kProbClamp;
            dr_[i] = clamped ? 0.0 : -(b_.z[i] - p) * inv_n;
        }
        g.loss = -loss * inv_n;
        g.w_hc = b_.delta_hc.transpose() * dr_;
        g.w_nn = dr_.dot(delta_nn_);

        if (!m.net) {
            g.net.reset();
            return;
        }
        const MlpParams &net = *m.net;
        // upstream weight of each column's network output
        d_out_.resize(b_.inputs.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto ia = static_cast<std::size_t>(2 * i), ib = ia + 1;
            const double base = m.w_nn * dr_[i];
            d_out_.segment(b_.start[ia], b_.count[ia])
                .setConstant(base * aggregation_scale(static_cast<std::size_t>(b_.count[ia]), m.features.aggregation));
            d_out_.segment(b_.start[ib], b_.count[ib])
                .setConstant(-base * aggregation_scale(static_cast<std::size_t>(b_.count[ib]), m.features.aggregation));
        }
        d_out_.array() *= 1.0 - output_.array().square();

        if (!g.net || g.net->n_in() != net.n_in() || g.net->hidden() != net.hidden())
            g.net = MlpParams::zeros(net.n_in(), net.hidden());
        MlpParams &gn = *g.net;
        gn.W2.noalias() = d_out_ * hidden_.transpose();
        gn.b2 = d_out_.sum();
        // reuse the hidden buffer for dLoss/d(pre-activation)
        hidden_.noalias() = net.W2.transpose() * d_out_;
        hidden_.array() *= (pre_.array() > 0.0).cast<double>();
        gn.W1.noalias() = hidden_ * b_.inputs.transpose();
        gn.b1 = hidden_.rowwise().sum();
    }

private:
    void forward(const RewardModel &m)
    {
        const auto n = static_cast<Eigen::Index>(b_.size());
        delta_nn_.setZero(n);
        if (m.net) {
            pre_.noalias() = m.net->W1 * b_.inputs;
            pre_.colwise() += m.net->b1;
            hidden_ = pre_.cwiseMax(0.0);
            output_.noalias() = m.net->W2 * hidden_;
            output_ = (output_.array() + m.net->b2).tanh().matrix();
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto ia = static_cast<std::size_t>(2 * i), ib = ia + 1;
                const double pa = output_.segment(b_.start[ia], b_.count[ia]).sum() *
                                  aggregation_scale(static_cast<std::size_t>(b_.count[ia]), m.features.aggregation);
                const double pb = output_.segment(b_.start[ib], b_.count[ib]).sum() *
                                  aggregation_scale(static_cast<std::size_t>(b_.count[ib]), m.features.aggregation);
                delta_nn_[i] = pa - pb;
            }
        }
        delta_r_.noalias() = b_.delta_hc * m.w_hc;
        delta_r_ += m.w_nn * delta_nn_;
    }

    const PackedBatch &b_;
    Eigen::MatrixXd pre_;
    Eigen::MatrixXd hidden_;
    Eigen::RowVectorXd output_;
    Eigen::RowVectorXd d_out_;
    Eigen::VectorXd delta_nn_;
    Eigen::VectorXd delta_r_;
    Eigen::VectorXd dr_;
};

inline double bce_loss(const RewardModel &m, const PackedBatch &b)
{
    return BatchEvaluator(b).loss(m);
}

inline double bce_loss(const RewardModel &m, std::span<const LabeledPair> records)
{
    if (records.empty())
        throw Error("cross-entropy loss needs at least one record");
    return bce_loss(m, PackedBatch::pack(records));
}

/// Exact gradient of bce_loss with respect to the network parameters and the linear weights.
inline ModelGradient grad_loss(const RewardModel &m, const PackedBatch &b)
{
    ModelGradient g;
    BatchEvaluator(b).loss_and_grad(m, g);
    return g;
}

inline ModelGradient grad_loss(const RewardModel &m, std::span<const LabeledPair> records)
{
    if (records.empty())
        throw Error("cross-entropy loss needs at least one record");
    return grad_loss(m, PackedBatch::pack(records));
}

// ---------------------------------------------------------------------------
// Accuracy

/// Fraction of records whose preferred trajectory has the higher predicted
/// reward; exact ties count one half.
inline double accuracy_from_margins(const Eigen::VectorXd &delta_r, std::span<const int> responses)
{
    if (responses.empty())
        throw Error("accuracy needs at least one record");
    double correct = 0.0;
    for (std::size_t i = 0; i < responses.size(); ++i) {
        const double d = delta_r[static_cast<Eigen::Index>(i)];
        if (d == 0.0)
            correct += 0.5;
        else if ((d > 0.0) == (responses[i] == 1))
            correct += 1.0;
    }
    return correct / static_cast<double>(responses.size());
}

inline double evaluate_accuracy(const RewardModel &m, const PackedBatch &b)
{
    return accuracy_from_margins(BatchEvaluator(b).margins(m), b.response);
}

inline double evaluate_accuracy(const RewardModel &m, std::span<const LabeledPair> records)
{
    if (records.empty())
        throw Error("accuracy needs at least one record");
    return evaluate_accuracy(m, PackedBatch::pack(records));
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig
{
    int epochs = 500;
    NadamConfig nadam;
    int linear_update_period = 20;
    double linear_lr = 0.001;
    int trials = 40;
    int top_k = 5;
    std::uint64_t seed = 0;
    int n_in = 4;
    int eval_every = 10;
    double w_nn_init_max = 0.5;
    int threads = 1;

    void validate() const
    {
        if (trials < 1 || top_k < 1)
            throw Error("trials and top_k must be positive");
        if (top_k > trials)
            throw Error("top_k (" + std::to_string(top_k) + ") exceeds trials (" + std::to_string(trials) + ")");
        if (epochs < 0 || linear_update_period < 1 || eval_every < 1)
            throw Error("invalid epoch settings");
        if (n_in != 4 && n_in != 5)
            throw Error("network input size must be 4 or 5");
    }
};

struct DatasetSplit
{
    std::vector<LabeledPair> train;
    std::vector<LabeledPair> val;
    std::vector<LabeledPair> test;

    /// First `n_train` records train, the next `n_val` validate.
    static DatasetSplit from_session(std::vector<LabeledPair> records, std::vector<LabeledPair> test,
                                     std::size_t n_train = 70, std::size_t n_val = 30)
    {
        if (records.size() < n_train + n_val)
            throw Error("need " + std::to_string(n_train) + " training and " + std::to_string(n_val) +
                        " validation records, have " + std::to_string(records.size()));
        DatasetSplit s;
        s.train.assign(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(n_train));
        s.val.assign(records.begin() + static_cast<std::ptrdiff_t>(n_train),
                     records.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
        s.test = std::move(test);
        return s;
    }
};

struct TrialResult
{
    int trial = 0;
    std::uint64_t seed = 0;
    RewardModel model; // checkpoint with the best validation accuracy
    int best_epoch = 0;
    double val_acc = 0.0;
    double test_acc = 0.0;
    std::vector<double> train_loss; // entry e: loss before the update of epoch e+1
    std::vector<std::pair<int, double>> val_curve;
};

struct TrainReport
{
    std::vector<TrialResult> trials;
    std::vector<int> top; // trial indices, best validation accuracy first
    double mean_test_acc = 0.0;
    double std_test_acc = 0.0;

    const RewardModel &best_model() const { return trials[static_cast<std::size_t>(top.front())].model; }
};

/// One training trial: fresh network, linear weights reset to `w_hc_init`.
inline TrialResult train_trial(const PackedBatch &train, const PackedBatch &val, const PackedBatch *test,
                               const WeightVector &w_hc_init, const TrainConfig &cfg, const FeatureConfig &fcfg,
                               int trial, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    RewardModel model;
    model.features = fcfg;
    model.net = MlpParams::glorot(cfg.n_in, rng);
    model.w_hc = w_hc_init;
    model.w_nn = std::uniform_real_distribution<double>(0.0, cfg.w_nn_init_max)(rng);

    TrialResult res;
    res.trial = trial;
    res.seed = seed;
    res.model = model;
    res.val_acc = -1.0;

    Eigen::VectorXd flat = model.net->flatten();
    NadamState opt(flat.size());
    BatchEvaluator train_eval(train), val_eval(val);
    ModelGradient g;
    auto track = [&](int epoch) {
        const double acc = val.size() ? accuracy_from_margins(val_eval.margins(model), val.response) : 0.0;
        res.val_curve.emplace_back(epoch, acc);
        if (acc > res.val_acc) {
            res.val_acc = acc;
            res.best_epoch = epoch;
            res.model = model;
        }
    };
    track(0);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        train_eval.loss_and_grad(model, g);
        res.train_loss.push_back(g.loss);
        opt.step(flat, g.net->flatten(), cfg.nadam);
        model.net->unflatten(flat);
        if (epoch % cfg.linear_update_period == 0) {
            model.w_hc = (model.w_hc - cfg.linear_lr * g.w_hc).cwiseMax(0.0);
            model.w_nn = std::max(0.0, model.w_nn - cfg.linear_lr * g.w_nn);
        }
        if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)
            track(epoch);
    }
    res.train_loss.push_back(train_eval.loss(model));
    if (test && test->size())
        res.test_acc = evaluate_accuracy(res.model, *test);
    return res;
}

/// Runs cfg.trials independent trials and summarizes the top_k by validation accuracy.
inline TrainReport train(const DatasetSplit &split, const WeightVector &w_hc_init, const TrainConfig &cfg,
                         const FeatureConfig &fcfg = {})
{
    cfg.validate();
    if (split.train.empty())
        throw Error("training split is empty");
    if (w_hc_init.size() != kNumHandCoded || !in_support(w_hc_init))
        throw Error("initial hand-coded weights must lie in the belief support");
    const auto train_b = PackedBatch::pack(split.train);
    const auto val_b = PackedBatch::pack(split.val);
    const auto test_b = PackedBatch::pack(split.test);
    if (train_b.inputs.rows() != cfg.n_in)
        throw Error("records carry " + std::to_string(train_b.inputs.rows()) + " network inputs, config expects " +
                    std::to_string(cfg.n_in));

    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32)};
    std::vector<std::uint32_t> raw(static_cast<std::size_t>(cfg.trials) * 2);
    seq.generate(raw.begin(), raw.end());

    TrainReport report;
    report.trials.resize(static_cast<std::size_t>(cfg.trials));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int t = next++; t < cfg.trials; t = next++) {
            const std::uint64_t seed = (static_cast<std::uint64_t>(raw[2 * static_cast<std::size_t>(t)]) << 32) |
                                       raw[2 * static_cast<std::size_t>(t) + 1];
            report.trials[static_cast<std::size_t>(t)] =
                train_trial(train_b, val_b, &test_b, w_hc_init, cfg, fcfg, t, seed);
        }
    };
    const int threads = std::clamp(cfg.threads, 1, cfg.trials);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int i = 0; i < threads; ++i)
            pool.emplace_back(worker);
    }

    std::vector<int> order(static_cast<std::size_t>(cfg.trials));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return report.trials[static_cast<std::size_t>(a)].val_acc > report.trials[static_cast<std::size_t>(b)].val_acc;
    });
    report.top.assign(order.begin(), order.begin() + cfg.top_k);
    double sum = 0.0, sq = 0.0;
    for (int t : report.top)
        sum += report.trials[static_cast<std::size_t>(t)].test_acc;
    report.mean_test_acc = sum / cfg.top_k;
    for (int t : report.top) {
        const double d = report.trials[static_cast<std::size_t>(t)].test_acc - report.mean_test_acc;
        sq += d * d;
    }
    report.std_test_acc = cfg.top_k > 1 ? std::sqrt(sq / (cfg.top_k - 1)) : 0.0;
    return report;
}

} // namespace prefshape

#endif
