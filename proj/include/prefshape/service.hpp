#ifndef PREFSHAPE_SERVICE_HPP
#define PREFSHAPE_SERVICE_HPP

// HTTP front end for human sessions. Each session is owned by one worker
// thread that runs the active loop, then the standardized test queries, then
// offline training. Handlers only touch the session through its mutex.

#include "prefshape/session.hpp"

#include <httplib.h>

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace prefshape {

inline constexpr std::uint64_t kTestStream = 5;

/// Everything a human session needs beyond the active-loop config.
struct ServiceSessionConfig
{
    SessionConfig session;
    int test_size = 75;
    OfflineConfig offline;
};

inline json to_json(const ServiceSessionConfig &c)
{
    return {{"session", to_json(c.session)},
            {"test_size", c.test_size},
            {"offline",
             {{"n_train", c.offline.n_train}, {"n_val", c.offline.n_val}, {"train", to_json(c.offline.train)}}}};
}

inline ServiceSessionConfig service_config_from_json(const json &j, ServiceSessionConfig c = {})
{
    if (j.contains("session"))
        c.session = session_config_from_json(j.at("session"));
    c.test_size = j.value("test_size", c.test_size);
    if (j.contains("offline")) {
        const auto &o = j.at("offline");
        c.offline.n_train = o.value("n_train", c.offline.n_train);
        c.offline.n_val = o.value("n_val", c.offline.n_val);
        if (o.contains("train"))
            c.offline.train = train_config_from_json(o.at("train"));
    }
    if (c.test_size < 0)
        throw Error("test_size must be nonnegative");
    return c;
}

inline fs::path default_data_dir()
{
    if (const char *env = std::getenv("PREFSHAPE_DATA_DIR"); env && *env)
        return env;
    return "prefshape-data";
}

class LiveSession
{
public:
    LiveSession(std::string id, ServiceSessionConfig cfg, fs::path dir)
        : id_(std::move(id)), cfg_(std::move(cfg)), store_(std::move(dir))
    {
    }

    ~LiveSession() { stop(); }

    LiveSession(const LiveSession &) = delete;
    LiveSession &operator=(const LiveSession &) = delete;

    void start()
    {
        worker_ = std::thread([this] { run(); });
    }

    void stop()
    {
        {
            std::lock_guard lock(mu_);
            stopping_ = true;
        }
        cv_.notify_all();
        if (worker_.joinable())
            worker_.join();
    }

    const std::string &id() const { return id_; }

    json state() const
    {
        std::lock_guard lock(mu_);
        json j{{"answered", answered_},
               {"total", cfg_.session.n_queries + cfg_.test_size},
               {"phase", phase_},
               {"stage", stage_}};
        if (!error_.empty())
            j["error"] = error_;
        return j;
    }

    /// Outstanding query, or nullopt while the worker is busy.
    std::optional<json> current_query() const
    {
        std::lock_guard lock(mu_);
        if (!current_)
            return std::nullopt;
        json j = to_json(*current_);
        j["stage"] = stage_;
        j["index"] = answered_;
        return j;
    }

    enum class Submit { Accepted, NoQuery, WrongQuery };

    Submit submit(const std::string &query_id, int response)
    {
        {
            std::lock_guard lock(mu_);
            if (!current_ || pending_)
                return Submit::NoQuery;
            if (current_->query_id != query_id)
                return Submit::WrongQuery;
            pending_ = response;
            current_.reset();
            ++answered_;
            phase_ = "optimizing";
        }
        cv_.notify_all();
        return Submit::Accepted;
    }

    std::optional<json> report() const
    {
        std::lock_guard lock(mu_);
        return report_;
    }

    /// Blocks until the phase matches or the timeout passes; used by tests and the CLI.
    bool wait_for_phase(const std::string &phase, std::chrono::milliseconds timeout) const
    {
        std::unique_lock lock(mu_);
        return cv_.wait_for(lock, timeout, [&] { return phase_ == phase || phase_ == "error"; }) && phase_ == phase;
    }

    bool wait_for_query(std::chrono::milliseconds timeout) const
    {
        std::unique_lock lock(mu_);
        return cv_.wait_for(lock, timeout, [&] { return current_.has_value() || phase_ == "complete" || phase_ == "error"; }) &&
               current_.has_value();
    }

private:
    void set_phase(const std::string &p)
    {
        {
            std::lock_guard lock(mu_);
            phase_ = p;
        }
        cv_.notify_all();
    }

    // Publishes q and blocks until the user answers it or the service stops.
    std::optional<int> ask(const Query &q)
    {
        std::unique_lock lock(mu_);
        current_ = q;
        pending_.reset();
        phase_ = "awaiting_response";
        cv_.notify_all();
        cv_.wait(lock, [&] { return pending_.has_value() || stopping_; });
        if (stopping_ && !pending_)
            return std::nullopt;
        const int r = *pending_;
        pending_.reset();
        return r;
    }

    void run()
    {
        try {
            run_active();
            if (stopped())
                return;
            run_test();
            if (stopped())
                return;
            run_training();
        } catch (const std::exception &e) {
            std::lock_guard lock(mu_);
            error_ = e.what();
            phase_ = "error";
            current_.reset();
        }
        cv_.notify_all();
    }

    bool stopped() const
    {
        std::lock_guard lock(mu_);
        return stopping_;
    }

    void run_active()
    {
        SessionLog log = store_.exists() ? store_.load() : new_session(id_, cfg_.session, std::nullopt);
        if (!store_.exists()) {
            store_.create(log);
            write_json_file((store_.dir() / "service.json").string(), to_json(cfg_));
        }
        {
            std::lock_guard lock(mu_);
            answered_ = log.entries.size();
            stage_ = "active";
        }
        ActiveSessionHooks hooks;
        hooks.on_phase = [this](const std::string &p, std::size_t) {
            if (p == "optimizing")
                set_phase(p);
        };
        auto user = [this](const Query &q, std::size_t) { return ask(q); };
        log_ = run_active_session(std::move(log), user, &store_, wall_clock, hooks);
    }

    fs::path test_set_path() const { return store_.dir() / "test_set.json"; }
    fs::path test_responses_path() const { return store_.dir() / "test_responses.jsonl"; }

    void run_test()
    {
        {
            std::lock_guard lock(mu_);
            stage_ = "test";
            phase_ = "optimizing";
        }
        cv_.notify_all();
        if (fs::exists(test_set_path())) {
            test_ = test_set_from_json(read_json_file(test_set_path().string()));
        } else {
            auto rng = derived_rng(cfg_.session.seed, 0, kTestStream);
            test_ = build_test_set(cfg_.test_size, cfg_.session.scenario, rng, cfg_.session.query);
            write_json_file(test_set_path().string(), to_json(test_));
        }
        test_.responses.clear();
        {
            std::ifstream in(test_responses_path());
            std::string line;
            while (std::getline(in, line) && test_.responses.size() < test_.queries.size()) {
                try {
                    test_.responses.push_back(json::parse(line).at("response").get<int>());
                } catch (const json::exception &) {
                    break;
                }
            }
        }
        {
            std::lock_guard lock(mu_);
            answered_ = log_.entries.size() + test_.responses.size();
        }
        while (test_.responses.size() < test_.queries.size()) {
            const auto &q = test_.queries[test_.responses.size()];
            const auto r = ask(q);
            if (!r)
                return;
            std::ofstream out(test_responses_path(), std::ios::app);
            out << json{{"query_id", q.query_id}, {"response", *r}, {"timestamp", wall_clock(0)}}.dump() << '\n';
            test_.responses.push_back(*r);
        }
    }

    void run_training()
    {
        const auto report_path = store_.dir() / "report.json";
        json rep;
        if (fs::exists(report_path)) {
            rep = read_json_file(report_path.string());
        } else {
            set_phase("training");
            const auto r = run_offline_training(log_, test_, cfg_.offline);
            rep = to_json(r);
            write_json_file(report_path.string(), rep);
            if (!r.training.top.empty())
                write_json_file((store_.dir() / "model.json").string(), to_json(r.training.best_model()));
        }
        {
            std::lock_guard lock(mu_);
            report_ = std::move(rep);
            phase_ = "complete";
        }
        cv_.notify_all();
    }

    std::string id_;
    ServiceSessionConfig cfg_;
    SessionStore store_;
    SessionLog log_;
    TestSet test_;

    mutable std::mutex mu_;
    mutable std::condition_variable cv_;
    std::string phase_ = "optimizing";
    std::string stage_ = "active";
    std::string error_;
    std::size_t answered_ = 0;
    std::optional<Query> current_;
    std::optional<int> pending_;
    std::optional<json> report_;
    bool stopping_ = false;
    std::thread worker_;
};

class SessionService
{
public:
    explicit SessionService(fs::path root, ServiceSessionConfig defaults = {})
        : root_(std::move(root)), defaults_(std::move(defaults))
    {
        fs::create_directories(root_);
    }

    ~SessionService() { shutdown(); }

    void shutdown()
    {
        std::map<std::string, std::shared_ptr<LiveSession>> sessions;
        {
            std::lock_guard lock(mu_);
            sessions.swap(sessions_);
        }
        for (auto &[id, s] : sessions)
            s->stop();
    }

    std::shared_ptr<LiveSession> create(const json &body)
    {
        auto cfg = service_config_from_json(body, defaults_);
        if (!body.contains("session") || !body.at("session").contains("seed"))
            cfg.session.seed = std::random_device{}();
        cfg.session.scenario.validate();
        std::string id = new_id();
        auto s = std::make_shared<LiveSession>(id, std::move(cfg), root_ / id);
        {
            std::lock_guard lock(mu_);
            sessions_[id] = s;
        }
        s->start();
        return s;
    }

    /// Looks up a live session, resuming it from disk if the service restarted.
    std::shared_ptr<LiveSession> find(const std::string &id)
    {
        std::lock_guard lock(mu_);
        if (auto it = sessions_.find(id); it != sessions_.end())
            return it->second;
        const auto dir = root_ / id;
        if (id.empty() || id.find_first_of("/\\.") != std::string::npos || !fs::exists(dir / "service.json"))
            return nullptr;
        auto cfg = service_config_from_json(read_json_file((dir / "service.json").string()));
        auto s = std::make_shared<LiveSession>(id, std::move(cfg), dir);
        sessions_[id] = s;
        s->start();
        return s;
    }

    void mount(httplib::Server &srv)
    {
        auto reply = [](httplib::Response &res, int status, const json &body) {
            res.status = status;
            res.set_content(body.dump(), "application/json");
        };

        srv.Post("/sessions", [this, reply](const httplib::Request &req, httplib::Response &res) {
            json body = json::object();
            try {
                if (!req.body.empty())
                    body = json::parse(req.body);
                auto s = create(body);
                reply(res, 201, {{"session_id", s->id()}});
            } catch (const std::exception &e) {
                reply(res, 400, {{"error", e.what()}});
            }
        });

        srv.Get(R"(/sessions/([^/]+)/query)", [this, reply](const httplib::Request &req, httplib::Response &res) {
            auto s = find(req.matches[1]);
            if (!s)
                return reply(res, 404, {{"error", "unknown session"}});
            if (auto q = s->current_query())
                return reply(res, 200, *q);
            const json st = s->state();
            if (st.at("phase") == "complete")
                return reply(res, 409, {{"error", "session complete"}, {"status", "complete"}});
            if (st.at("phase") == "error")
                return reply(res, 500, {{"error", st.value("error", "")}, {"status", "error"}});
            reply(res, 202, {{"status", st.at("phase")}});
        });

        srv.Post(R"(/sessions/([^/]+)/response)", [this, reply](const httplib::Request &req, httplib::Response &res) {
            auto s = find(req.matches[1]);
            if (!s)
                return reply(res, 404, {{"error", "unknown session"}});
            std::string query_id;
            int response = 0;
            try {
                const auto body = json::parse(req.body);
                query_id = body.at("query_id").get<std::string>();
                const auto choice = body.at("choice").get<std::string>();
                if (choice == "A")
                    response = 1;
                else if (choice == "B")
                    response = -1;
                else
                    return reply(res, 400, {{"error", "choice must be \"A\" or \"B\""}});
            } catch (const std::exception &e) {
                return reply(res, 400, {{"error", std::string("malformed response: ") + e.what()}});
            }
            switch (s->submit(query_id, response)) {
            case LiveSession::Submit::Accepted: return reply(res, 200, s->state());
            case LiveSession::Submit::NoQuery: return reply(res, 409, {{"error", "no query is awaiting a response"}});
            case LiveSession::Submit::WrongQuery:
                return reply(res, 409, {{"error", "query " + query_id + " is not the outstanding query"}});
            }
        });

        srv.Get(R"(/sessions/([^/]+)/state)", [this, reply](const httplib::Request &req, httplib::Response &res) {
            auto s = find(req.matches[1]);
            if (!s)
                return reply(res, 404, {{"error", "unknown session"}});
            reply(res, 200, s->state());
        });

        srv.Get(R"(/sessions/([^/]+)/report)", [this, reply](const httplib::Request &req, httplib::Response &res) {
            auto s = find(req.matches[1]);
            if (!s)
                return reply(res, 404, {{"error", "unknown session"}});
            if (auto r = s->report())
                return reply(res, 200, *r);
            reply(res, 202, {{"status", s->state().at("phase")}});
        });
    }

private:
    std::string new_id()
    {
        std::lock_guard lock(mu_);
        static std::mt19937_64 gen(std::random_device{}());
        for (;;) {
            std::ostringstream os;
            os << 's' << std::hex << (gen() & 0xffffffffffULL);
            if (!sessions_.count(os.str()) && !fs::exists(root_ / os.str()))
                return os.str();
        }
    }

    fs::path root_;
    ServiceSessionConfig defaults_;
    std::mutex mu_;
    std::map<std::string, std::shared_ptr<LiveSession>> sessions_;
};

} // namespace prefshape

#endif
