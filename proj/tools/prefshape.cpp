// prefshape command line: oracle simulations, the human-session HTTP server,
// offline feature learning, analysis exports and standardized test sets.

#include "prefshape/service.hpp"
#include "prefshape/session.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

using namespace prefshape;

namespace {

struct RunConfig
{
    ServiceSessionConfig service;
    std::optional<GroundTruth> oracle;
};

// Config file layout: {"session": {...}, "test_size": n, "offline": {...}, "oracle": {...}}
RunConfig load_config(const std::string &config_file, const std::string &scenario_file, std::optional<std::uint64_t> seed)
{
    RunConfig rc;
    json j = json::object();
    if (!config_file.empty())
        j = read_json_file(config_file);
    rc.service = service_config_from_json(j);
    if (j.contains("oracle"))
        rc.oracle = ground_truth_from_json(j.at("oracle"));
    if (!scenario_file.empty())
        rc.service.session.scenario = scenario_from_json(read_json_file(scenario_file));
    if (seed) {
        rc.service.session.seed = *seed;
        rc.service.offline.train.seed = *seed;
    }
    rc.service.session.scenario.validate();
    return rc;
}

void write_report(const fs::path &out, const ExperimentReport &rep)
{
    write_json_file((out / "report.json").string(), to_json(rep));
    if (!rep.training.top.empty())
        write_json_file((out / "model.json").string(), prefshape::to_json(rep.training.best_model(), prefshape::to_json(rep.training)));
    std::cout << "hand-coded test accuracy " << rep.hand_coded_test_acc << "\n"
              << "mixed test accuracy (top-" << rep.training.top.size() << " mean) " << rep.mixed_test_acc_mean
              << " +/- " << rep.mixed_test_acc_std << "\n";
}

std::atomic<httplib::Server *> g_server{nullptr};

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Preference-based reward learning with hand-coded and learned features"};
    app.require_subcommand(1);

    std::string config_file, scenario_file, out_dir = "out";
    std::optional<std::uint64_t> seed;
    auto common = [&](CLI::App *sub) {
        sub->add_option("--seed", seed, "master random seed");
        sub->add_option("--scenario", scenario_file, "scenario JSON file");
        sub->add_option("--config", config_file, "run configuration JSON file");
        sub->add_option("--out", out_dir, "output directory");
    };

    auto *simulate = app.add_subcommand("simulate", "run an oracle user end to end: active queries, test set, training");
    common(simulate);
    int n_queries = -1;
    bool skip_training = false;
    simulate->add_option("--queries", n_queries, "number of active queries");
    simulate->add_flag("--no-train", skip_training, "stop after the active session");

    auto *serve = app.add_subcommand("serve", "serve human sessions over HTTP");
    common(serve);
    std::string host = "127.0.0.1", data_dir;
    int port = 8080;
    serve->add_option("--host", host);
    serve->add_option("--port", port);
    serve->add_option("--data-dir", data_dir, "session storage root (default $PREFSHAPE_DATA_DIR)");

    auto *train_cmd = app.add_subcommand("train", "offline feature learning from a session log");
    common(train_cmd);
    std::string session_dir, test_file;
    train_cmd->add_option("--session", session_dir, "session directory")->required();
    train_cmd->add_option("--test", test_file, "answered test-set JSON (default <session>/test_set.json)");

    auto *export_cmd = app.add_subcommand("export", "feature sweeps, heat maps and best-of-N trajectories");
    common(export_cmd);
    std::string model_file;
    int best_of = 10000;
    export_cmd->add_option("--model", model_file, "model JSON written by train")->required();
    export_cmd->add_option("--best-of", best_of, "random candidates per optimal trajectory");

    auto *testset = app.add_subcommand("testset", "build the standardized query set");
    common(testset);
    int count = -1;
    testset->add_option("--count", count, "number of queries");
    testset->add_flag("--answer", "freeze responses from the configured oracle");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig rc = load_config(config_file, scenario_file, seed);
        auto &scfg = rc.service.session;
        const fs::path out(out_dir);

        if (simulate->parsed()) {
            if (!rc.oracle)
                throw Error("simulate needs an \"oracle\" entry in the config file");
            if (n_queries >= 0)
                scfg.n_queries = n_queries;
            fs::create_directories(out);
            SessionStore store(out / "session");
            SessionLog log = store.exists() ? store.load() : new_session("sim-" + std::to_string(scfg.seed), scfg, rc.oracle);
            if (!store.exists())
                store.create(log);
            if (!log.entries.empty())
                std::cout << "resuming at query " << log.entries.size() + 1 << "\n";
            ActiveSessionHooks hooks;
            hooks.on_query = [&](const Query &q, std::size_t i) {
                std::cerr << "\rquery " << i + 1 << "/" << scfg.n_queries << " " << q.query_id << std::flush;
            };
            const GroundTruth gt = *log.oracle;
            log = run_active_session(std::move(log), oracle_responder(gt, scfg.seed), &store, logical_clock, hooks);
            std::cerr << "\n";
            const auto est = session_estimate(log, log.entries.size());
            std::cout << "weight estimate " << vector_to_json(est).dump() << "\n";
            if (skip_training)
                return 0;
            auto rng = derived_rng(scfg.seed, 0, kTestStream);
            TestSet ts = build_test_set(rc.service.test_size, scfg.scenario, rng, scfg.query);
            answer_test_set(ts, gt, scfg.seed + 1);
            write_json_file((out / "session" / "test_set.json").string(), to_json(ts));
            write_report(out, run_offline_training(log, ts, rc.service.offline));
            return 0;
        }

        if (serve->parsed()) {
            const fs::path root = data_dir.empty() ? default_data_dir() : fs::path(data_dir);
            SessionService service(root, rc.service);
            httplib::Server srv;
            service.mount(srv);
            g_server = &srv;
            std::signal(SIGINT, [](int) {
                if (auto *s = g_server.load())
                    s->stop();
            });
            std::cout << "serving sessions from " << root << " on http://" << host << ":" << port << std::endl;
            if (!srv.listen(host, port))
                throw Error("cannot listen on " + host + ":" + std::to_string(port));
            return 0;
        }

        if (train_cmd->parsed()) {
            SessionStore store(session_dir);
            if (!store.exists())
                throw Error("no session in " + session_dir);
            const SessionLog log = store.load();
            fs::path tf = test_file.empty() ? fs::path(session_dir) / "test_set.json" : fs::path(test_file);
            TestSet ts = test_set_from_json(read_json_file(tf.string()));
            const fs::path responses = fs::path(session_dir) / "test_responses.jsonl";
            if (!ts.has_responses() && fs::exists(responses)) {
                std::ifstream in(responses);
                std::string line;
                while (std::getline(in, line))
                    if (!line.empty())
                        ts.responses.push_back(json::parse(line).at("response").get<int>());
            }
            if (!ts.has_responses()) {
                const auto gt = rc.oracle ? rc.oracle : log.oracle;
                if (gt)
                    answer_test_set(ts, *gt, log.config.seed + 1);
            }
            fs::create_directories(out);
            write_report(out, run_offline_training(log, ts, rc.service.offline));
            return 0;
        }

        if (export_cmd->parsed()) {
            const RewardModel model = reward_model_from_json(read_json_file(model_file));
            ExportSpec spec;
            spec.best_of_n = best_of;
            spec.seed = scfg.seed;
            for (const auto &p : export_analysis(model, scfg.scenario, out, spec))
                std::cout << p.string() << "\n";
            return 0;
        }

        if (testset->parsed()) {
            auto rng = derived_rng(scfg.seed, 0, kTestStream);
            TestSet ts = build_test_set(count >= 0 ? count : rc.service.test_size, scfg.scenario, rng, scfg.query);
            if (testset->count("--answer")) {
                if (!rc.oracle)
                    throw Error("--answer needs an \"oracle\" entry in the config file");
                answer_test_set(ts, *rc.oracle, scfg.seed + 1);
            }
            fs::create_directories(out);
            write_json_file((out / "session" / "test_set.json").string(), to_json(ts));
            std::cout << (out / "test_set.json").string() << "\n";
            return 0;
        }
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
