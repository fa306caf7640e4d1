#ifndef PREFSHAPE_JSON_IO_HPP
#define PREFSHAPE_JSON_IO_HPP

// JSON encodings for trajectories, queries, beliefs, oracles and models.

#include "prefshape/belief.hpp"
#include "prefshape/featlearn.hpp"
#include "prefshape/oracle.hpp"
#include "prefshape/querygen.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace prefshape {

using nlohmann::json;

inline json vector_to_json(const Eigen::VectorXd &v)
{
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::VectorXd vector_from_json(const json &j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json matrix_to_json(const Eigen::MatrixXd &m)
{
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        rows.push_back(vector_to_json(m.row(r).transpose()));
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json &j, Eigen::Index cols_if_empty = 0)
{
    if (j.empty())
        return Eigen::MatrixXd(0, cols_if_empty);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j.front().size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        m.row(r) = vector_from_json(j[static_cast<std::size_t>(r)]).transpose();
    return m;
}

// ---------------------------------------------------------------------------
// Scenario and trajectories

inline json to_json(const JointState &s)
{
    const auto f = s.flat();
    return std::vector<double>(f.begin(), f.end());
}

inline JointState joint_state_from_json(const json &j)
{
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 8)
        throw Error("joint state must have 8 entries");
    return {{v[0], v[1], v[2], v[3]}, {v[4], v[5], v[6], v[7]}};
}

inline json to_json(const ScenarioConfig &sc)
{
    return {{"id", sc.id},
            {"k", sc.k},
            {"block_len", sc.block_len},
            {"dt", sc.dt},
            {"lane_centers", sc.lane_centers},
            {"road_half_width", sc.road_half_width},
            {"initial", to_json(sc.initial)},
            {"steer_max", sc.steer_max},
            {"accel_max", sc.accel_max},
            {"human_speed", sc.human_speed},
            {"human_target_x", sc.human_target_x}};
}

inline ScenarioConfig scenario_from_json(const json &j)
{
    ScenarioConfig sc;
    sc.id = j.value("id", sc.id);
    sc.k = j.value("k", sc.k);
    sc.block_len = j.value("block_len", sc.block_len);
    sc.dt = j.value("dt", sc.dt);
    if (j.contains("lane_centers"))
        sc.lane_centers = j.at("lane_centers").get<std::array<double, 3>>();
    sc.road_half_width = j.value("road_half_width", sc.road_half_width);
    if (j.contains("initial"))
        sc.initial = joint_state_from_json(j.at("initial"));
    sc.steer_max = j.value("steer_max", sc.steer_max);
    sc.accel_max = j.value("accel_max", sc.accel_max);
    sc.human_speed = j.value("human_speed", sc.human_speed);
    sc.human_target_x = j.value("human_target_x", sc.human_target_x);
    sc.validate();
    return sc;
}

inline json to_json(const Trajectory &t)
{
    json controls = json::array();
    for (const auto &b : t.controls.blocks)
        controls.push_back({b.steer, b.accel});
    json states = json::array();
    for (const auto &s : t.states)
        states.push_back(to_json(s));
    return {{"scenario_id", t.scenario_id},
            {"block_len", t.controls.block_len},
            {"controls", std::move(controls)},
            {"states", std::move(states)}};
}

inline Trajectory trajectory_from_json(const json &j)
{
    Trajectory t;
    t.scenario_id = j.at("scenario_id").get<std::string>();
    t.controls.block_len = j.value("block_len", 1);
    for (const auto &c : j.at("controls"))
        t.controls.blocks.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
    for (const auto &s : j.at("states"))
        t.states.push_back(joint_state_from_json(s));
    return t;
}

inline json to_json(const Query &q)
{
    json prov = {{"random", q.provenance.random}};
    prov["w_a"] = q.provenance.w_a ? vector_to_json(*q.provenance.w_a) : json(nullptr);
    prov["w_b"] = q.provenance.w_b ? vector_to_json(*q.provenance.w_b) : json(nullptr);
    return {{"query_id", q.query_id}, {"traj_a", to_json(q.traj_a)}, {"traj_b", to_json(q.traj_b)}, {"provenance", prov}};
}

inline Query query_from_json(const json &j)
{
    Query q;
    q.query_id = j.at("query_id").get<std::string>();
    q.traj_a = trajectory_from_json(j.at("traj_a"));
    q.traj_b = trajectory_from_json(j.at("traj_b"));
    if (j.contains("provenance")) {
        const auto &p = j.at("provenance");
        q.provenance.random = p.value("random", false);
        if (p.contains("w_a") && !p.at("w_a").is_null())
            q.provenance.w_a = vector_from_json(p.at("w_a"));
        if (p.contains("w_b") && !p.at("w_b").is_null())
            q.provenance.w_b = vector_from_json(p.at("w_b"));
    }
    return q;
}

// ---------------------------------------------------------------------------
// Standardized test set: queries with optional frozen responses

struct TestSet
{
    std::vector<Query> queries;
    std::vector<int> responses; // empty, or one per query

    bool has_responses() const { return !queries.empty() && responses.size() == queries.size(); }
};

inline json to_json(const TestSet &ts)
{
    json arr = json::array();
    for (std::size_t i = 0; i < ts.queries.size(); ++i) {
        json q = to_json(ts.queries[i]);
        if (ts.has_responses())
            q["response"] = ts.responses[i];
        arr.push_back(std::move(q));
    }
    return arr;
}

inline TestSet test_set_from_json(const json &j)
{
    TestSet ts;
    bool all = true;
    for (const auto &q : j) {
        ts.queries.push_back(query_from_json(q));
        if (q.contains("response"))
            ts.responses.push_back(q.at("response").get<int>());
        else
            all = false;
    }
    if (!all)
        ts.responses.clear();
    return ts;
}

// ---------------------------------------------------------------------------
// Belief

inline json to_json(const PreferenceRecord &r)
{
    return {{"query_id", r.query_id}, {"phi_a", vector_to_json(r.phi_a)}, {"phi_b", vector_to_json(r.phi_b)},
            {"response", r.response}};
}

inline PreferenceRecord preference_record_from_json(const json &j)
{
    PreferenceRecord r{j.at("query_id").get<std::string>(), vector_from_json(j.at("phi_a")),
                       vector_from_json(j.at("phi_b")), j.at("response").get<int>()};
    check_record(r);
    return r;
}

struct BeliefSnapshot
{
    BeliefState belief{kNumHandCoded};
    std::uint64_t seed = 0;
    std::vector<WeightVector> samples;
};

inline json to_json(const BeliefSnapshot &s)
{
    json records = json::array();
    for (const auto &r : s.belief.records())
        records.push_back(to_json(r));
    json samples = json::array();
    for (const auto &w : s.samples)
        samples.push_back(vector_to_json(w));
    return {{"dimension", s.belief.dimension()}, {"records", records}, {"seed", s.seed}, {"samples", samples}};
}

inline BeliefSnapshot belief_snapshot_from_json(const json &j)
{
    BeliefSnapshot s{BeliefState(j.at("dimension").get<int>()), j.value("seed", std::uint64_t{0}), {}};
    for (const auto &r : j.at("records"))
        s.belief = s.belief.with_record(preference_record_from_json(r));
    for (const auto &w : j.at("samples"))
        s.samples.push_back(vector_from_json(w));
    return s;
}

// ---------------------------------------------------------------------------
// Oracle

inline json to_json(const GroundTruth &gt)
{
    json j = {{"kind", to_string(gt.kind)},
              {"w", vector_to_json(gt.w)},
              {"alpha", gt.alpha},
              {"hidden", to_string(gt.hidden)},
              {"gamma", gt.gamma}};
    j["beta"] = gt.deterministic() ? json("inf") : json(gt.beta);
    return j;
}

inline GroundTruth ground_truth_from_json(const json &j)
{
    GroundTruth gt;
    const auto kind = j.value("kind", std::string("linear_hc"));
    if (kind == "linear_hc")
        gt.kind = GroundTruthKind::LinearHandCoded;
    else if (kind == "linear_plus_hidden")
        gt.kind = GroundTruthKind::LinearPlusHidden;
    else
        throw Error("unknown oracle kind '" + kind + "'");
    gt.w = vector_from_json(j.at("w"));
    gt.alpha = j.value("alpha", gt.alpha);
    const auto hidden = j.value("hidden", std::string("ahead_of_human"));
    if (hidden == "ahead_of_human")
        gt.hidden = HiddenFeature::AheadOfHuman;
    else if (hidden == "min_gap_penalty")
        gt.hidden = HiddenFeature::MinGapPenalty;
    else
        throw Error("unknown hidden feature '" + hidden + "'");
    gt.gamma = j.value("gamma", gt.gamma);
    if (j.contains("beta")) {
        const auto &b = j.at("beta");
        gt.beta = b.is_string() ? std::numeric_limits<double>::infinity() : b.get<double>();
    }
    gt.validate();
    return gt;
}

// ---------------------------------------------------------------------------
// Configs

inline json to_json(const McmcConfig &c)
{
    return {{"chain_length", c.chain_length}, {"burn_in", c.burn_in}, {"adapt_start", c.adapt_start},
            {"adapt_eps", c.adapt_eps}, {"initial_step", c.initial_step}};
}

inline McmcConfig mcmc_config_from_json(const json &j)
{
    McmcConfig c;
    c.chain_length = j.value("chain_length", c.chain_length);
    c.burn_in = j.value("burn_in", c.burn_in);
    c.adapt_start = j.value("adapt_start", c.adapt_start);
    c.adapt_eps = j.value("adapt_eps", c.adapt_eps);
    c.initial_step = j.value("initial_step", c.initial_step);
    return c;
}

inline json to_json(const QueryConfig &c)
{
    return {{"num_samples", c.num_samples}, {"mu", c.mu},
            {"restarts", c.restarts},       {"max_retries", c.max_retries},
            {"mcmc", to_json(c.mcmc)},      {"max_iterations", c.solver.max_iterations},
            {"memory", c.solver.memory},    {"grad_tolerance", c.solver.grad_tolerance}};
}

inline QueryConfig query_config_from_json(const json &j)
{
    QueryConfig c;
    c.num_samples = j.value("num_samples", c.num_samples);
    c.mu = j.value("mu", c.mu);
    c.restarts = j.value("restarts", c.restarts);
    c.max_retries = j.value("max_retries", c.max_retries);
    if (j.contains("mcmc"))
        c.mcmc = mcmc_config_from_json(j.at("mcmc"));
    c.solver.max_iterations = j.value("max_iterations", c.solver.max_iterations);
    c.solver.memory = j.value("memory", c.solver.memory);
    c.solver.grad_tolerance = j.value("grad_tolerance", c.solver.grad_tolerance);
    return c;
}

inline json to_json(const TrainConfig &c)
{
    return {{"epochs", c.epochs},
            {"lr", c.nadam.lr},
            {"betas", {c.nadam.beta1, c.nadam.beta2}},
            {"linear_update_period", c.linear_update_period},
            {"linear_lr", c.linear_lr},
            {"trials", c.trials},
            {"top_k", c.top_k},
            {"seed", c.seed},
            {"n_in", c.n_in},
            {"eval_every", c.eval_every}};
}

inline TrainConfig train_config_from_json(const json &j)
{
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.nadam.lr = j.value("lr", c.nadam.lr);
    if (j.contains("betas")) {
        c.nadam.beta1 = j.at("betas").at(0).get<double>();
        c.nadam.beta2 = j.at("betas").at(1).get<double>();
    }
    c.linear_update_period = j.value("linear_update_period", c.linear_update_period);
    c.linear_lr = j.value("linear_lr", c.linear_lr);
    c.trials = j.value("trials", c.trials);
    c.top_k = j.value("top_k", c.top_k);
    c.seed = j.value("seed", c.seed);
    c.n_in = j.value("n_in", c.n_in);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.threads = j.value("threads", c.threads);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Models

inline json to_json(const RewardModel &m, const json &train_meta = json::object())
{
    json j = {{"n_in", m.n_in()}, {"w_hc", vector_to_json(m.w_hc)}, {"w_nn", m.w_nn}, {"train_meta", train_meta}};
    if (m.net) {
        j["W1"] = matrix_to_json(m.net->W1);
        j["b1"] = vector_to_json(m.net->b1);
        j["W2"] = vector_to_json(m.net->W2.transpose());
        j["b2"] = m.net->b2;
    }
    return j;
}

inline RewardModel reward_model_from_json(const json &j)
{
    RewardModel m;
    m.w_hc = vector_from_json(j.at("w_hc"));
    if (m.w_hc.size() != kNumHandCoded)
        throw Error("model file must carry 4 hand-coded weights");
    m.w_nn = j.value("w_nn", 0.0);
    if (j.contains("W1")) {
        MlpParams p;
        p.W1 = matrix_from_json(j.at("W1"));
        p.b1 = vector_from_json(j.at("b1"));
        p.W2 = vector_from_json(j.at("W2")).transpose();
        p.b2 = j.at("b2").get<double>();
        if (p.b1.size() != p.W1.rows() || p.W2.size() != p.W1.rows())
            throw Error("model file has inconsistent layer sizes");
        if (p.n_in() != j.value("n_in", p.n_in()))
            throw Error("model file n_in does not match W1");
        m.net = std::move(p);
    }
    return m;
}

inline json to_json(const TrainReport &r)
{
    json trials = json::array();
    for (const auto &t : r.trials) {
        json val = json::array();
        for (const auto &[epoch, acc] : t.val_curve)
            val.push_back({epoch, acc});
        trials.push_back({{"trial", t.trial},
                          {"seed", t.seed},
                          {"best_epoch", t.best_epoch},
                          {"val_acc", t.val_acc},
                          {"test_acc", t.test_acc},
                          {"train_loss", t.train_loss},
                          {"val_curve", val}});
    }
    return {{"trials", trials},
            {"top", r.top},
            {"mean_test_acc", r.mean_test_acc},
            {"std_test_acc", r.std_test_acc}};
}

// ---------------------------------------------------------------------------
// Files

inline json read_json_file(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open " + path);
    return json::parse(in);
}

inline void write_json_file(const std::string &path, const json &j, int indent = 1)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write " + path);
    out << j.dump(indent) << '\n';
}

} // namespace prefshape

#endif
