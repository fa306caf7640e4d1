#ifndef PREFSHAPE_SESSION_HPP
#define PREFSHAPE_SESSION_HPP

// The active-learning loop (sample -> select pair -> optimize -> ask -> update),
// its on-disk log, offline training and analysis exports.

#include "prefshape/belief.hpp"
#include "prefshape/featlearn.hpp"
#include "prefshape/json_io.hpp"
#include "prefshape/oracle.hpp"
#include "prefshape/querygen.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace prefshape {

namespace fs = std::filesystem;

/// Independent, reproducible stream for (seed, index, purpose).
inline std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t purpose)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(purpose)};
    return std::mt19937_64(seq);
}

enum RngPurpose : std::uint64_t { kQueryStream = 1, kOracleStream = 2, kSnapshotStream = 3, kEstimateStream = 4 };

struct SessionConfig
{
    ScenarioConfig scenario;
    QueryConfig query;
    int n_queries = 100;
    std::uint64_t seed = 0;
    int snapshot_every = 10;
};

inline json to_json(const SessionConfig &c)
{
    return {{"scenario", to_json(c.scenario)},
            {"query", to_json(c.query)},
            {"n_queries", c.n_queries},
            {"seed", c.seed},
            {"snapshot_every", c.snapshot_every}};
}

inline SessionConfig session_config_from_json(const json &j)
{
    SessionConfig c;
    if (j.contains("scenario"))
        c.scenario = scenario_from_json(j.at("scenario"));
    if (j.contains("query"))
        c.query = query_config_from_json(j.at("query"));
    c.n_queries = j.value("n_queries", c.n_queries);
    c.seed = j.value("seed", c.seed);
    c.snapshot_every = j.value("snapshot_every", c.snapshot_every);
    return c;
}

struct SessionEntry
{
    Query query;
    int response = 1;
    std::string timestamp;
    std::string snapshot; // relative path of the belief snapshot written after this entry, if any
};

struct SessionLog
{
    std::string session_id;
    SessionConfig config;
    std::optional<GroundTruth> oracle; // empty for human users
    std::vector<SessionEntry> entries;

    BeliefState belief(const FeatureConfig &fcfg = {}) const
    {
        BeliefState b(kNumHandCoded);
        for (const auto &e : entries)
            b = b.with_record({e.query.query_id, phi_hc_trajectory(e.query.traj_a, fcfg),
                               phi_hc_trajectory(e.query.traj_b, fcfg), e.response});
        return b;
    }
};

inline json to_json(const SessionEntry &e, std::size_t index)
{
    return {{"index", index},
            {"query", to_json(e.query)},
            {"response", e.response},
            {"timestamp", e.timestamp},
            {"snapshot", e.snapshot}};
}

inline json session_header(const SessionLog &log)
{
    return {{"session_id", log.session_id},
            {"config", to_json(log.config)},
            {"user", log.oracle ? json{{"kind", "oracle"}, {"oracle", to_json(*log.oracle)}} : json{{"kind", "human"}}}};
}

// ---------------------------------------------------------------------------
// Persistence: <dir>/session.json, <dir>/records.jsonl, <dir>/snapshots/

class SessionStore
{
public:
    explicit SessionStore(fs::path dir) : dir_(std::move(dir)) {}

    const fs::path &dir() const { return dir_; }
    bool exists() const { return fs::exists(dir_ / "session.json"); }

    void create(const SessionLog &log) const
    {
        fs::create_directories(dir_ / "snapshots");
        write_json_file((dir_ / "session.json").string(), session_header(log));
        std::ofstream(dir_ / "records.jsonl", std::ios::trunc);
    }

    void append(const SessionEntry &e, std::size_t index) const
    {
        std::ofstream out(dir_ / "records.jsonl", std::ios::app);
        if (!out)
            throw Error("cannot append to session log in " + dir_.string());
        out << to_json(e, index).dump() << '\n';
        out.flush();
    }

    std::string write_snapshot(const BeliefSnapshot &snap, std::size_t answered) const
    {
        std::string name = std::to_string(answered);
        name.insert(0, name.size() < 4 ? 4 - name.size() : 0, '0');
        const auto rel = "snapshots/belief_" + name + ".json";
        write_json_file((dir_ / rel).string(), to_json(snap), -1);
        return rel;
    }

    SessionLog load() const
    {
        const json header = read_json_file((dir_ / "session.json").string());
        SessionLog log;
        log.session_id = header.at("session_id").get<std::string>();
        log.config = session_config_from_json(header.at("config"));
        const auto &user = header.at("user");
        if (user.at("kind") == "oracle")
            log.oracle = ground_truth_from_json(user.at("oracle"));
        std::ifstream in(dir_ / "records.jsonl");
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty())
                continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const json::parse_error &) {
                break; // torn final line from an interrupted write
            }
            if (j.at("index").get<std::size_t>() != log.entries.size())
                throw Error("session log " + dir_.string() + " is out of order");
            log.entries.push_back({query_from_json(j.at("query")), j.at("response").get<int>(),
                                   j.value("timestamp", std::string()), j.value("snapshot", std::string())});
        }
        return log;
    }

private:
    fs::path dir_;
};

// ---------------------------------------------------------------------------
// Active loop

/// Supplies a response for a query; std::nullopt means the user did not answer
/// in time and the session pauses.
using Responder = std::function<std::optional<int>(const Query &, std::size_t index)>;
using Clock = std::function<std::string(std::size_t index)>;

inline std::string wall_clock(std::size_t)
{
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
    return std::to_string(secs);
}

/// Logical timestamps keep simulated sessions bit-reproducible.
inline std::string logical_clock(std::size_t index)
{
    return "step:" + std::to_string(index);
}

inline Responder oracle_responder(const GroundTruth &gt, std::uint64_t seed)
{
    return [gt, seed](const Query &q, std::size_t index) -> std::optional<int> {
        auto rng = derived_rng(seed, index, kOracleStream);
        return respond(q, gt, rng);
    };
}

struct ActiveSessionHooks
{
    std::function<void(const std::string &phase, std::size_t answered)> on_phase;
    std::function<void(const Query &, std::size_t index)> on_query;
};

/// Generates query `index` for the current belief. Depends only on the seed,
/// the index and the belief, so resumed sessions regenerate identical queries.
inline Query next_active_query(const BeliefState &belief, const SessionConfig &cfg, std::size_t index)
{
    auto rng = derived_rng(cfg.seed, index, kQueryStream);
    return generate_query(belief, cfg.scenario, cfg.query, rng, format_query_id("q", static_cast<int>(index) + 1));
}

/// Runs (or resumes) the active loop until `cfg.n_queries` responses exist or
/// the responder pauses. With a store, every response is persisted before the
/// next query is generated.
inline SessionLog run_active_session(SessionLog log, const Responder &user, const SessionStore *store = nullptr,
                                     const Clock &clock = logical_clock, const ActiveSessionHooks &hooks = {})
{
    const auto &cfg = log.config;
    if (cfg.n_queries < 0)
        throw Error("number of queries must be nonnegative");
    const FeatureConfig &fcfg = cfg.query.features;
    BeliefState belief = log.belief(fcfg);
    while (log.entries.size() < static_cast<std::size_t>(cfg.n_queries)) {
        const std::size_t index = log.entries.size();
        if (hooks.on_phase)
            hooks.on_phase("optimizing", index);
        Query q = next_active_query(belief, cfg, index);
        if (hooks.on_query)
            hooks.on_query(q, index);
        const auto response = user(q, index);
        if (!response)
            break;
        if (*response != 1 && *response != -1)
            throw Error("responses must be +1 or -1");
        belief = belief.with_record(
            {q.query_id, phi_hc_trajectory(q.traj_a, fcfg), phi_hc_trajectory(q.traj_b, fcfg), *response});
        SessionEntry entry{std::move(q), *response, clock(index), {}};
        const std::size_t answered = index + 1;
        if (store && cfg.snapshot_every > 0 && answered % static_cast<std::size_t>(cfg.snapshot_every) == 0) {
            auto rng = derived_rng(cfg.seed, answered, kSnapshotStream);
            BeliefSnapshot snap{belief, cfg.seed, sample_posterior(belief, cfg.query.num_samples, cfg.query.mcmc, rng)};
            entry.snapshot = store->write_snapshot(snap, answered);
        }
        if (store)
            store->append(entry, index);
        log.entries.push_back(std::move(entry));
    }
    if (hooks.on_phase)
        hooks.on_phase(log.entries.size() >= static_cast<std::size_t>(cfg.n_queries) ? "complete" : "paused",
                       log.entries.size());
    return log;
}

inline SessionLog new_session(std::string id, SessionConfig cfg, std::optional<GroundTruth> oracle)
{
    cfg.scenario.validate();
    if (oracle)
        oracle->validate();
    return SessionLog{std::move(id), std::move(cfg), std::move(oracle), {}};
}

/// Point estimate of the hand-coded weights from the session's records.
inline WeightVector session_estimate(const SessionLog &log, std::size_t num_records)
{
    BeliefState b(kNumHandCoded);
    const auto &fcfg = log.config.query.features;
    for (std::size_t i = 0; i < std::min(num_records, log.entries.size()); ++i) {
        const auto &e = log.entries[i];
        b = b.with_record({e.query.query_id, phi_hc_trajectory(e.query.traj_a, fcfg),
                           phi_hc_trajectory(e.query.traj_b, fcfg), e.response});
    }
    auto rng = derived_rng(log.config.seed, num_records, kEstimateStream);
    return point_estimate(sample_posterior(b, log.config.query.num_samples, log.config.query.mcmc, rng));
}

// ---------------------------------------------------------------------------
// Standardized test set and offline training

template <class Rng>
TestSet build_test_set(int count, const ScenarioConfig &sc, Rng &rng, const QueryConfig &qcfg = {})
{
    return {generate_standardized_test(count, sc, rng, 1, qcfg.solver, qcfg.features), {}};
}

/// Freezes oracle responses into the test set.
inline void answer_test_set(TestSet &ts, const GroundTruth &gt, std::uint64_t seed)
{
    ts.responses.clear();
    for (std::size_t i = 0; i < ts.queries.size(); ++i) {
        auto rng = derived_rng(seed, i, kOracleStream);
        ts.responses.push_back(respond(ts.queries[i], gt, rng));
    }
}

struct OfflineConfig
{
    TrainConfig train;
    std::size_t n_train = 70;
    std::size_t n_val = 30;
};

struct ExperimentReport
{
    WeightVector w_hc_estimate;
    double hand_coded_test_acc = 0.0;
    double mixed_test_acc_mean = 0.0;
    double mixed_test_acc_std = 0.0;
    TrainReport training;
    std::string hand_coded_trajectory; // optimal-trajectory file references, filled by exports
    std::string mixed_trajectory;
};

inline json to_json(const ExperimentReport &r)
{
    return {{"w_hc_estimate", vector_to_json(r.w_hc_estimate)},
            {"hand_coded_test_acc", r.hand_coded_test_acc},
            {"mixed_test_acc_mean", r.mixed_test_acc_mean},
            {"mixed_test_acc_std", r.mixed_test_acc_std},
            {"training", to_json(r.training)},
            {"optimal_trajectories", {{"hand_coded", r.hand_coded_trajectory}, {"mixed", r.mixed_trajectory}}}};
}

inline std::vector<LabeledPair> labeled_pairs(const std::vector<Query> &queries, const std::vector<int> &responses,
                                              int n_in, const FeatureConfig &fcfg)
{
    std::vector<LabeledPair> out;
    out.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i)
        out.push_back(make_labeled_pair(queries[i], responses[i], n_in, fcfg));
    return out;
}

inline ExperimentReport run_offline_training(const SessionLog &log, const TestSet &test, const OfflineConfig &cfg)
{
    if (log.entries.size() < cfg.n_train + cfg.n_val)
        throw Error("offline training needs " + std::to_string(cfg.n_train) + " training + " +
                    std::to_string(cfg.n_val) + " validation records; the session has " +
                    std::to_string(log.entries.size()));
    if (!test.has_responses())
        throw Error("the test set carries no responses");
    const auto &fcfg = log.config.query.features;
    std::vector<Query> queries;
    std::vector<int> responses;
    for (const auto &e : log.entries) {
        queries.push_back(e.query);
        responses.push_back(e.response);
    }
    auto records = labeled_pairs(queries, responses, cfg.train.n_in, fcfg);
    auto test_records = labeled_pairs(test.queries, test.responses, cfg.train.n_in, fcfg);
    const auto split = DatasetSplit::from_session(std::move(records), std::move(test_records), cfg.n_train, cfg.n_val);

    ExperimentReport rep;
    rep.w_hc_estimate = session_estimate(log, cfg.n_train + cfg.n_val);
    RewardModel hc;
    hc.features = fcfg;
    hc.w_hc = rep.w_hc_estimate;
    rep.hand_coded_test_acc = evaluate_accuracy(hc, split.test);
    rep.training = train(split, rep.w_hc_estimate, cfg.train, fcfg);
    rep.mixed_test_acc_mean = rep.training.mean_test_acc;
    rep.mixed_test_acc_std = rep.training.std_test_acc;
    return rep;
}

// ---------------------------------------------------------------------------
// Analysis exports

struct ExportSpec
{
    int heading_points = 361;
    int speed_points = 101;
    int heat_x_points = 61;
    int heat_y_points = 121;
    int best_of_n = 10000;
    std::uint64_t seed = 0;
};

inline void write_grid(const fs::path &path, const FeatureGrid &g)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write " + path.string());
    g.write_csv(out);
}

/// Writes heading/speed slices, the 2-D heat map and best-of-N trajectories for
/// the hand-coded and (if present) mixed models. Returns the written paths.
inline std::vector<fs::path> export_analysis(const RewardModel &model, const ScenarioConfig &sc,
                                             const fs::path &out_dir, const ExportSpec &spec = {})
{
    fs::create_directories(out_dir);
    std::vector<fs::path> written;
    const auto &fcfg = model.features;
    auto heading_feature = [&](const JointState &s) { return phi_hc(s, fcfg)[kHeading]; };

    // slices through x_r = 0, d = 0.5
    const JointState heading_frozen = slice_state(0.0, 0.5, 90.0, 0.8, sc.human_speed);
    const GridAxis heading_axis{GridAxisKind::ThetaR, 0.0, 360.0, spec.heading_points};
    write_grid(out_dir / "heading_sweep_hand_coded.csv", eval_feature_grid(heading_feature, {heading_axis}, heading_frozen));
    written.push_back(out_dir / "heading_sweep_hand_coded.csv");

    const JointState speed_frozen = slice_state(0.0, 0.5, 90.0, 0.8, sc.human_speed);
    const GridAxis speed_axis{GridAxisKind::VR, 0.0, 1.0, spec.speed_points};

    // heat map: robot moves around a human fixed in the right lane
    JointState heat_frozen{{0.0, 0.0, 90.0, 1.0}, {0.17, 0.0, 90.0, sc.human_speed}};
    const std::vector<GridAxis> heat_axes{{GridAxisKind::XR, -sc.road_half_width - 0.1, sc.road_half_width + 0.1,
                                           spec.heat_x_points},
                                          {GridAxisKind::YR, -1.0, 1.0, spec.heat_y_points}};

    if (model.net) {
        auto learned = [&](const JointState &s) { return model.learned_feature(s); };
        write_grid(out_dir / "heading_sweep_learned.csv", eval_feature_grid(learned, {heading_axis}, heading_frozen));
        write_grid(out_dir / "speed_sweep_learned.csv", eval_feature_grid(learned, {speed_axis}, speed_frozen));
        write_grid(out_dir / "heatmap_learned.csv", eval_feature_grid(learned, heat_axes, heat_frozen));
        written.push_back(out_dir / "heading_sweep_learned.csv");
        written.push_back(out_dir / "speed_sweep_learned.csv");
        written.push_back(out_dir / "heatmap_learned.csv");
    }

    RewardModel hc = model;
    hc.net.reset();
    auto rng_hc = derived_rng(spec.seed, 0, kQueryStream);
    double r_hc = 0.0;
    const auto best_hc =
        best_of_n_trajectory([&](const Trajectory &t) { return hc.reward(t); }, sc, spec.best_of_n, rng_hc, &r_hc);
    write_json_file((out_dir / "optimal_hand_coded.json").string(), {{"reward", r_hc}, {"trajectory", to_json(best_hc)}});
    written.push_back(out_dir / "optimal_hand_coded.json");
    if (model.net) {
        auto rng_mixed = derived_rng(spec.seed, 0, kQueryStream);
        double r_mixed = 0.0;
        const auto best_mixed = best_of_n_trajectory([&](const Trajectory &t) { return model.reward(t); }, sc,
                                                     spec.best_of_n, rng_mixed, &r_mixed);
        write_json_file((out_dir / "optimal_mixed.json").string(),
                        {{"reward", r_mixed}, {"trajectory", to_json(best_mixed)}});
        written.push_back(out_dir / "optimal_mixed.json");
    }
    return written;
}

} // namespace prefshape

#endif
