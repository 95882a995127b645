// SPDX-License-Identifier: Apache-2.0
#include "ttpo/server.hpp"

#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "ttpo/error.hpp"
#include "ttpo/field_io.hpp"
#include "ttpo/pipeline.hpp"

namespace ttpo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class OutputState { Idle, Running, Done, Failed };

std::string_view to_string(OutputState s) {
    switch (s) {
        case OutputState::Idle: return "idle";
        case OutputState::Running: return "running";
        case OutputState::Done: return "done";
        case OutputState::Failed: return "failed";
    }
    return "idle";
}

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, ErrorCode code, const std::string& message) {
    reply(res, status, {{"error", std::string(to_string(code))}, {"message", message}});
}

json pixels_json(const Field& f) {
    return {{"height", f.height()}, {"width", f.width()}, {"pixels", io::unit_scaled(f)}};
}

json curves_json(const std::string& csv) {
    json rows = json::array();
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<double> v;
        while (std::getline(ls, cell, ',')) v.push_back(std::stod(cell));
        if (v.size() != 6) continue;
        rows.push_back({{"t", v[0]}, {"L_ttpo", v[1]}, {"L_r", v[2]}, {"d_win", v[3]}, {"d_lose", v[4]},
                        {"grad_norm", v[5]}});
    }
    return rows;
}

}  // namespace

struct SelectionServer::Impl {
    fs::path run_dir;
    ServeOptions opt;
    CandidateSet set;
    httplib::Server http;

    std::mutex mutex;  // guards session, state, error, worker
    PairwiseSession session;
    OutputState state = OutputState::Idle;
    std::string error;
    std::thread worker;

    Impl(fs::path dir, ServeOptions o)
        : run_dir(std::move(dir)), opt(o), set(load_candidates(run_dir)), session(initial_session()) {
        routes();
    }

    PairwiseSession initial_session() {
        std::vector<int> ids;
        for (const auto& c : set.candidates) ids.push_back(c.id);
        if (fs::exists(session_path(run_dir))) {
            PairwiseSession s = session_from_json(json::parse(io::read_text(session_path(run_dir))));
            if (s.ids() == ids) return s;
        }
        return PairwiseSession(ids);
    }

    void persist_session() { io::write_text(session_path(run_dir), session_to_json(session).dump(2) + "\n"); }

    void start_optimize(const PreferencePair& pair, bool from_session) {
        if (from_session) {
            persist_session();
            cmd_select(run_dir, SelectionMode::Human, {true, true});
        } else {
            write_pair(run_dir, pair);
        }
        if (worker.joinable()) worker.join();
        state = OutputState::Running;
        error.clear();
        worker = std::thread([this] {
            try {
                cmd_optimize(run_dir, {true, true});
                std::lock_guard lock(mutex);
                state = OutputState::Done;
            } catch (const std::exception& e) {
                std::lock_guard lock(mutex);
                state = OutputState::Failed;
                error = e.what();
            }
        });
    }

    void routes() {
        http.Get("/api/candidates", [this](const httplib::Request&, httplib::Response& res) {
            json list = json::array();
            for (const auto& c : set.candidates) {
                json item = pixels_json(c.field);
                item["id"] = c.id;
                item["source"] = c.source;
                list.push_back(item);
            }
            reply(res, 200, {{"candidates", list}});
        });

        http.Get("/api/pairs", [this](const httplib::Request&, httplib::Response& res) {
            std::lock_guard lock(mutex);
            json pairs = json::array();
            for (std::size_t i = 0; i < session.pairs().size(); ++i) {
                const auto [a, b] = session.pairs()[i];
                json p = {{"index", i}, {"a", a}, {"b", b}};
                p["winner_id"] = session.choices()[i] ? json(*session.choices()[i]) : json(nullptr);
                pairs.push_back(p);
            }
            reply(res, 200, {{"pairs", pairs}, {"total", session.total()}});
        });

        http.Post("/api/choice", [this](const httplib::Request& req, httplib::Response& res) {
            json body;
            try {
                body = json::parse(req.body);
                const auto index = body.at("pair_index").get<std::size_t>();
                const int winner = body.at("winner_id").get<int>();
                std::lock_guard lock(mutex);
                const bool recorded = session.record(index, winner);
                if (recorded) persist_session();
                reply(res, 200, {{"recorded", recorded}, {"answered", session.answered()}, {"total", session.total()}});
            } catch (const json::exception& e) {
                reply_error(res, 400, ErrorCode::InvalidInput, e.what());
            } catch (const Error& e) {
                reply_error(res, 400, e.code(), e.what());
            }
        });

        http.Get("/api/result", [this](const httplib::Request&, httplib::Response& res) {
            std::lock_guard lock(mutex);
            const auto result = session.result();
            if (!result) {
                reply(res, 200, {{"pending", true}, {"answered", session.answered()}, {"total", session.total()}});
                return;
            }
            json counts = json::object();
            for (const auto& [id, n] : session.counts()) counts[std::to_string(id)] = n;
            reply(res, 200, {{"win_id", result->win_id}, {"lose_id", result->lose_id}, {"counts", counts},
                             {"answered", session.answered()}, {"total", session.total()}});
        });

        http.Post("/api/finalize", [this](const httplib::Request&, httplib::Response& res) {
            std::lock_guard lock(mutex);
            const auto result = session.result();
            if (!result) {
                reply_error(res, 409, ErrorCode::SelectionPending,
                            std::to_string(session.answered()) + " of " + std::to_string(session.total()) +
                                " pairs answered");
                return;
            }
            if (state == OutputState::Running) {
                reply(res, 202, {{"status", std::string(to_string(state))}, {"output_available", false}});
                return;
            }
            try {
                start_optimize(*result, true);
            } catch (const Error& e) {
                reply_error(res, 500, e.code(), e.what());
                return;
            }
            reply(res, 202, {{"status", std::string(to_string(state))}, {"output_available", false}});
        });

        http.Post("/api/pick", [this](const httplib::Request& req, httplib::Response& res) {
            if (!opt.quick) {
                reply_error(res, 404, ErrorCode::InvalidInput, "quick selection is disabled; start serve with --quick");
                return;
            }
            try {
                const json body = json::parse(req.body);
                PreferencePair pair;
                pair.win_id = body.at("win_id").get<int>();
                pair.lose_id = body.at("lose_id").get<int>();
                pair.provenance = Provenance::Human;
                (void)set.by_id(pair.win_id);
                (void)set.by_id(pair.lose_id);
                if (pair.win_id == pair.lose_id) throw Error(ErrorCode::InvalidInput, "win and lose must differ");
                std::lock_guard lock(mutex);
                if (state == OutputState::Running) {
                    reply(res, 202, {{"status", std::string(to_string(state))}, {"output_available", false}});
                    return;
                }
                start_optimize(pair, false);
                reply(res, 202, {{"status", std::string(to_string(state))}, {"output_available", false}});
            } catch (const json::exception& e) {
                reply_error(res, 400, ErrorCode::InvalidInput, e.what());
            } catch (const Error& e) {
                reply_error(res, 400, e.code(), e.what());
            }
        });

        http.Get("/api/output", [this](const httplib::Request&, httplib::Response& res) {
            std::lock_guard lock(mutex);
            json body = {{"status", std::string(to_string(state))}, {"output_available", state == OutputState::Done}};
            if (state == OutputState::Failed) body["error"] = error;
            if (state == OutputState::Done) {
                try {
                    const Field out = io::read_field(run_dir / "output.bin");
                    body.update(pixels_json(out));
                    body["curves"] = curves_json(io::read_text(run_dir / "curves.csv"));
                } catch (const Error& e) {
                    reply_error(res, 500, e.code(), e.what());
                    return;
                }
            }
            reply(res, 200, body);
        });
    }
};

SelectionServer::SelectionServer(fs::path run_dir, ServeOptions opt)
    : impl_(std::make_unique<Impl>(std::move(run_dir), opt)) {}

SelectionServer::~SelectionServer() {
    stop();
    wait_for_output();
}

int SelectionServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->http.bind_to_any_port(host);
        if (bound < 0) throw Error(ErrorCode::Io, "cannot bind " + host);
        return bound;
    }
    if (!impl_->http.bind_to_port(host, port)) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void SelectionServer::listen() { impl_->http.listen_after_bind(); }

void SelectionServer::stop() { impl_->http.stop(); }

void SelectionServer::wait_for_output() {
    std::thread t;
    {
        std::lock_guard lock(impl_->mutex);
        t = std::move(impl_->worker);
    }
    if (t.joinable()) t.join();
}

}  // namespace ttpo
