// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Tolerances and experiment settings are fixed here on purpose.

#include "prefshape/service.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

using namespace prefshape;

namespace {

// criterion 1
constexpr int kRecoverySeeds = 5;
constexpr int kActiveQueries = 100;
constexpr double kMinCosine = 0.9;
constexpr double kMaxRecoverySeconds = 600;

// criteria 2 and 3
constexpr int kExperimentSeeds = 3;
constexpr int kTestQueries = 75;
constexpr double kNoisyBeta = 10;
constexpr double kLinearUserBeta = 100;
constexpr double kMinGain = 0.05;
constexpr double kMinHandCoded = 0.85;
constexpr double kMaxRegression = 0.05;

// criteria 4, 6, 7
constexpr double kGradRelTol = 1e-5;
constexpr double kSeFactor = 3;
constexpr double kLn2Tol = 1e-12;

struct Outcome
{
    bool pass;
    std::string detail;
};

using SteadyClock = std::chrono::steady_clock;

double seconds_since(SteadyClock::time_point t0)
{
    return std::chrono::duration<double>(SteadyClock::now() - t0).count();
}

std::string fmt(double v, int prec = 4)
{
    std::ostringstream os;
    os.precision(prec);
    os << std::fixed << v;
    return os.str();
}

std::string sci(double v)
{
    std::ostringstream os;
    os.precision(2);
    os << std::scientific << v;
    return os.str();
}

Outcome posterior_recovery()
{
    const WeightVector w_star = Eigen::Vector4d(0.3, 0.2, 0.2, 0.9).normalized();
    GroundTruth gt;
    gt.w = w_star;
    gt.beta = std::numeric_limits<double>::infinity();
    double total_cos = 0, worst_time = 0;
    std::string per_seed;
    for (int seed = 1; seed <= kRecoverySeeds; ++seed) {
        SessionConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(seed);
        cfg.n_queries = kActiveQueries;
        const auto t0 = SteadyClock::now();
        const auto log = run_active_session(new_session("acc", cfg, gt), oracle_responder(gt, cfg.seed));
        const auto est = session_estimate(log, log.entries.size());
        worst_time = std::max(worst_time, seconds_since(t0));
        const double cos = est.dot(w_star) / est.norm();
        total_cos += cos;
        per_seed += " " + fmt(cos, 3);
    }
    const double mean = total_cos / kRecoverySeeds;
    return {mean >= kMinCosine && worst_time <= kMaxRecoverySeconds,
            "mean cosine " + fmt(mean) + " (>= " + fmt(kMinCosine, 2) + "; seeds" + per_seed + "), slowest run " +
                fmt(worst_time, 1) + " s (<= " + fmt(kMaxRecoverySeconds, 0) + ")"};
}

struct Accuracies
{
    double hand_coded = 0;
    double mixed = 0;
};

// Active session, frozen test answers and offline training, as the CLI's simulate does.
Accuracies experiment(const GroundTruth &gt, std::uint64_t seed, int n_in)
{
    SessionConfig cfg;
    cfg.seed = seed;
    cfg.n_queries = kActiveQueries;
    const auto log = run_active_session(new_session("acc", cfg, gt), oracle_responder(gt, seed));
    auto rng = derived_rng(seed, 0, kTestStream);
    TestSet ts = build_test_set(kTestQueries, cfg.scenario, rng, cfg.query);
    answer_test_set(ts, gt, seed + 1);
    OfflineConfig oc;
    oc.train.seed = seed;
    oc.train.n_in = n_in;
    oc.train.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    const auto rep = run_offline_training(log, ts, oc);
    return {rep.hand_coded_test_acc, rep.mixed_test_acc_mean};
}

Outcome nonlinear_users()
{
    GroundTruth gt;
    gt.kind = GroundTruthKind::LinearPlusHidden;
    gt.hidden = HiddenFeature::AheadOfHuman;
    gt.alpha = 0.5;
    gt.beta = kNoisyBeta;
    gt.w = Eigen::Vector4d(0.5, 0.5, 0.5, 0.5).normalized();
    double gain = 0;
    std::string per_seed;
    for (int seed = 1; seed <= kExperimentSeeds; ++seed) {
        const auto acc = experiment(gt, static_cast<std::uint64_t>(seed), 5);
        gain += acc.mixed - acc.hand_coded;
        per_seed += " " + fmt(acc.hand_coded, 3) + "->" + fmt(acc.mixed, 3);
    }
    gain /= kExperimentSeeds;
    return {gain >= kMinGain, "mean gain " + fmt(100 * gain, 2) + " points (>= " + fmt(100 * kMinGain, 0) +
                                  "; hand-coded->mixed" + per_seed + ")"};
}

Outcome linear_users()
{
    GroundTruth gt;
    gt.w = Eigen::Vector4d(0.3, 0.2, 0.2, 0.9).normalized();
    gt.beta = kLinearUserBeta;
    double hc = 0, mixed = 0;
    std::string per_seed;
    for (int seed = 1; seed <= kExperimentSeeds; ++seed) {
        const auto acc = experiment(gt, static_cast<std::uint64_t>(seed), 4);
        hc += acc.hand_coded;
        mixed += acc.mixed;
        per_seed += " " + fmt(acc.hand_coded, 3) + "/" + fmt(acc.mixed, 3);
    }
    hc /= kExperimentSeeds;
    mixed /= kExperimentSeeds;
    return {hc >= kMinHandCoded && std::abs(mixed - hc) <= kMaxRegression,
            "hand-coded " + fmt(hc) + " (>= " + fmt(kMinHandCoded, 2) + "), mixed " + fmt(mixed) + " (within " +
                fmt(kMaxRegression, 2) + "; per seed hc/mixed" + per_seed + ")"};
}

TrajectoryData random_traj_data(std::mt19937_64 &rng, int steps, int n_in)
{
    std::uniform_real_distribution<double> u(-1, 1);
    TrajectoryData d;
    d.phi_hc = FeatureVector(4);
    for (int k = 0; k < 4; ++k)
        d.phi_hc[k] = u(rng);
    d.inputs.resize(n_in, steps);
    for (Eigen::Index i = 0; i < d.inputs.size(); ++i)
        d.inputs.data()[i] = u(rng);
    return d;
}

Outcome gradient_suite()
{
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0, 1), b(-0.3, 0.3);
    long double worst = 0;
    std::size_t coords = 0;
    // min |pre-activation| over every hidden unit and step; finite differences
    // are only meaningful when no ReLU is within reach of its kink
    auto kink_margin = [](const MlpParams &net, const std::vector<LabeledPair> &recs) {
        double margin = 1e300;
        for (const auto &r : recs)
            for (const auto *d : {&r.a, &r.b})
                for (Eigen::Index t = 0; t < d->inputs.cols(); ++t)
                    margin = std::min(margin, (net.W1 * d->inputs.col(t) + net.b1).cwiseAbs().minCoeff());
        return margin;
    };
    int redrawn = 0;
    for (int inst = 0; inst < 20; ++inst) {
        RewardModel m;
        m.features.aggregation = inst % 2 ? Aggregation::Mean : Aggregation::Sum;
        const int n_in = inst % 3 ? 4 : 5;
        m.net = MlpParams::glorot(n_in, rng);
        for (Eigen::Index i = 0; i < m.net->b1.size(); ++i)
            m.net->b1[i] = b(rng);
        m.net->b2 = b(rng);
        m.w_hc = Eigen::Vector4d(u(rng), u(rng), u(rng), u(rng)) * 0.5;
        m.w_nn = u(rng);
        std::vector<LabeledPair> recs;
        for (int r = 0; r < 4; ++r)
            recs.push_back({"r", random_traj_data(rng, 5, n_in), random_traj_data(rng, 5, n_in), r % 2 ? 1 : -1});
        if (kink_margin(*m.net, recs) < 1e-4) {
            --inst;
            ++redrawn;
            continue;
        }
        const auto g = grad_loss(m, recs);

        auto record = [&](long double analytic, long double fd) {
            const long double scale = std::max({std::abs(fd), std::abs(analytic), 1e-6L});
            worst = std::max(worst, std::abs(analytic - fd) / scale);
            ++coords;
        };
        auto fd_of = [&](const std::function<void(RewardModel &, double)> &shift) {
            const double h = 1e-6;
            RewardModel p = m, q = m;
            shift(p, h);
            shift(q, -h);
            return (oracles::bce_reference(p, recs) - oracles::bce_reference(q, recs)) / (2.0L * h);
        };
        const Eigen::VectorXd flat = m.net->flatten(), g_flat = g.net->flatten();
        for (Eigen::Index i = 0; i < flat.size(); ++i)
            record(g_flat[i], fd_of([&](RewardModel &x, double h) {
                       Eigen::VectorXd f = flat;
                       f[i] += h;
                       x.net->unflatten(f);
                   }));
        for (int k = 0; k < 4; ++k)
            record(g.w_hc[k], fd_of([&](RewardModel &x, double h) { x.w_hc[k] += h; }));
        record(g.w_nn, fd_of([&](RewardModel &x, double h) { x.w_nn += h; }));
    }
    return {worst <= kGradRelTol, "worst relative error " + sci(static_cast<double>(worst)) + " over " +
                                      std::to_string(coords) + " coordinates (<= 1e-5; " + std::to_string(redrawn) +
                                      " instances redrawn for lying near a ReLU kink)"};
}

Outcome invariant_suite()
{
    std::vector<std::string> failed;
    auto check = [&](bool ok, const std::string &name) {
        if (!ok)
            failed.push_back(name);
    };
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-1, 1);

    bool ok = true;
    for (double z = -40; z <= 40; z += 0.01)
        ok = ok && std::abs(sigmoid(z) + sigmoid(-z) - 1.0) <= 1e-12;
    check(ok, "sigmoid complement");

    ok = true;
    for (int i = 0; i < 50; ++i) {
        RewardModel m;
        m.net = MlpParams::glorot(4, rng);
        m.w_hc = Eigen::Vector4d(u(rng), u(rng), u(rng), u(rng)).cwiseAbs();
        m.w_nn = std::abs(u(rng));
        const auto a = random_traj_data(rng, 6, 4), b = random_traj_data(rng, 6, 4);
        ok = ok && std::abs(predict_prob_a(a, b, m) + predict_prob_a(b, a, m) - 1.0) <= 1e-12;
    }
    check(ok, "predict_prob antisymmetry");

    ScenarioConfig sc;
    ok = true;
    bool bounded = true, resim = true;
    for (int i = 0; i < 50; ++i) {
        const auto ta = rollout(sample_random_controls(rng, sc), sc);
        const auto tb = rollout(sample_random_controls(rng, sc), sc);
        Trajectory joined = ta;
        joined.states.insert(joined.states.end(), tb.states.begin(), tb.states.end());
        ok = ok && (phi_hc_trajectory(joined) - phi_hc_trajectory(ta) - phi_hc_trajectory(tb)).norm() <= 1e-10;
        const WeightVector w1 = Eigen::Vector4d(u(rng), u(rng), u(rng), u(rng)),
                           w2 = Eigen::Vector4d(u(rng), u(rng), u(rng), u(rng));
        ok = ok && std::abs(reward_hc(ta, w1 + 0.7 * w2) - reward_hc(ta, w1) - 0.7 * reward_hc(ta, w2)) <= 1e-10;
        for (const auto &s : ta.states) {
            const auto phi = phi_hc(s);
            bounded = bounded && phi[kStayLane] >= 0 && phi[kStayLane] <= 1 && phi[kKeepSpeed] >= -1 &&
                      phi[kKeepSpeed] <= 0 && phi[kHeading] >= -1 && phi[kHeading] <= 1 && phi[kCollision] >= -1 &&
                      phi[kCollision] <= 0;
        }
        resim = resim && rollout(ta.states.front(), ta.controls, sc) == ta;
    }
    check(ok, "feature linearity and additivity");
    check(bounded, "feature bounds");
    check(resim, "re-simulation bit equality");

    BeliefState belief(4);
    for (int i = 0; i < 20; ++i)
        belief = belief.with_record({"q", Eigen::Vector4d(u(rng), u(rng), u(rng), u(rng)),
                                     Eigen::Vector4d(u(rng), u(rng), u(rng), u(rng)), i % 2 ? 1 : -1});
    const auto chain = adaptive_metropolis_chain(belief, McmcConfig{}, rng);
    ok = !chain.empty();
    for (const auto &w : chain)
        ok = ok && in_support(w);
    check(ok, "MCMC support containment");

    const WeightVector w = Eigen::Vector4d(0.2, 0.5, 0.3, 0.4);
    auto reward = [&](const Trajectory &t) { return reward_hc(t, w); };
    ok = true;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        double prev = -1e300;
        for (int n : {1, 10, 100, 1000}) {
            std::mt19937_64 r(seed);
            double best = 0;
            best_of_n_trajectory(reward, sc, n, r, &best);
            ok = ok && best >= prev;
            prev = best;
        }
    }
    check(ok, "best-of-N monotone under nested streams");

    ok = true;
    McmcConfig small;
    small.chain_length = 4000;
    small.burn_in = 1000;
    for (int trial = 0; trial < 10; ++trial) {
        const auto samples = sample_posterior(belief, 20, small, rng);
        std::vector<double> logp;
        for (const auto &s : samples) {
            long double l = 0;
            for (const auto &r : belief.records())
                l += std::log(oracles::logistic(r.response * (r.phi_a - r.phi_b).dot(s)));
            logp.push_back(static_cast<double>(l));
        }
        for (double mu : {0.0, 0.1, 0.5}) {
            const auto expected = oracles::brute_force_pair(samples, logp, mu);
            const auto got = select_weight_pair(samples, belief, mu);
            ok = ok && got.i == expected.first && got.j == expected.second;
        }
    }
    check(ok, "weight-pair selection equals brute force at M=20");

    std::string detail = "8 invariant groups";
    for (const auto &f : failed)
        detail += "; broken: " + f;
    return {failed.empty(), detail};
}

Outcome small_posterior()
{
    std::mt19937_64 data(11);
    const auto belief = oracles::random_belief_2d(5, data);
    const auto exact = oracles::grid_posterior_mean_2d(belief, 1200);
    std::mt19937_64 rng(12);
    McmcConfig cfg;
    cfg.chain_length = 60000;
    const auto chain = adaptive_metropolis_chain(belief, cfg, rng);
    bool ok = true;
    std::string detail;
    for (int c = 0; c < 2; ++c) {
        const auto [mean, se] = oracles::batch_means(chain, c, 30);
        ok = ok && std::abs(mean - exact[c]) <= kSeFactor * se;
        detail += (c ? ", " : "") + std::string("w") + std::to_string(c) + " mcmc " + fmt(mean) + " grid " +
                  fmt(exact[c]) + " (" + fmt(std::abs(mean - exact[c]) / se, 2) + " SE)";
    }
    return {ok, detail + " (<= 3 SE)"};
}

Outcome loss_sanity()
{
    RewardModel m;
    m.w_hc = Eigen::Vector4d(1, 0, 0, 0);
    std::vector<LabeledPair> half;
    for (int i = 0; i < 4; ++i) {
        LabeledPair p;
        p.a.phi_hc = FeatureVector::Constant(4, 0.3);
        p.b.phi_hc = FeatureVector::Constant(4, 0.3);
        p.a.inputs.resize(4, 0);
        p.b.inputs.resize(4, 0);
        p.response = i % 2 ? 1 : -1;
        half.push_back(p);
    }
    const double ln2_err = std::abs(bce_loss(m, half) - std::log(2.0));

    std::mt19937_64 rng(10);
    auto separable = [&](int n) {
        std::vector<LabeledPair> recs;
        for (int i = 0; i < n; ++i) {
            auto a = random_traj_data(rng, 6, 4), b = random_traj_data(rng, 6, 4);
            a.phi_hc.setZero();
            b.phi_hc.setZero();
            a.inputs.row(0).array() += 1.0;
            b.inputs.row(0).array() -= 1.0;
            const bool flip = i % 2;
            recs.push_back({"s", flip ? b : a, flip ? a : b, flip ? -1 : 1});
        }
        return recs;
    };
    const auto train = PackedBatch::pack(separable(40));
    const auto val = PackedBatch::pack(separable(10));
    TrainConfig cfg;
    cfg.epochs = 50;
    const auto res = train_trial(train, val, nullptr, Eigen::Vector4d(0.1, 0.1, 0.1, 0.1), cfg, {}, 0, 42);
    bool decreasing = res.train_loss.size() == 51;
    for (std::size_t e = 1; decreasing && e < res.train_loss.size(); ++e)
        decreasing = res.train_loss[e] < res.train_loss[e - 1];
    return {ln2_err <= kLn2Tol && decreasing, "|loss - ln 2| = " + sci(ln2_err) +
                                                  " (<= 1e-12); loss " + fmt(res.train_loss.front()) + " -> " +
                                                  fmt(res.train_loss.back()) +
                                                  (decreasing ? ", strictly decreasing" : ", NOT strictly decreasing") +
                                                  " over 50 epochs"};
}

} // namespace

int main(int argc, char **argv)
{
    // optional list of criterion numbers to run, e.g. `acceptance 4 5 6`
    std::vector<int> only;
    for (int i = 1; i < argc; ++i)
        only.push_back(std::atoi(argv[i]));
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"posterior recovery", posterior_recovery}, {"mixed beats hand-coded on nonlinear users", nonlinear_users},
        {"no regression on linear users", linear_users}, {"gradient suite", gradient_suite},
        {"invariant suite", invariant_suite},       {"small-instance posterior oracle", small_posterior},
        {"loss sanity", loss_sanity}};

    bool all = true;
    for (std::size_t c = 0; c < criteria.size(); ++c) {
        const int n = static_cast<int>(c) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), n) == only.end())
            continue;
        const auto t0 = SteadyClock::now();
        Outcome o;
        try {
            o = criteria[c].second();
        } catch (const std::exception &e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        all = all && o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " " << n << " " << criteria[c].first << ": " << o.detail << " ["
                  << fmt(seconds_since(t0), 1) << " s]" << std::endl;
    }
    return all ? 0 : 1;
}
