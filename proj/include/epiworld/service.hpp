#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>

#include "epiworld/config.hpp"

namespace httplib {
class Server;
}

namespace epiworld {

struct HttpResponse {
    int status = 200;
    json body;
};

/// Error body {code, message, details[]} with an HTTP status.
HttpResponse error_response(int status, const std::string& code, const std::string& message,
                            const std::vector<std::string>& details = {});

/// One analyst session: a held-out true world, the analyst's belief about
/// it, and the committed history. Invariant: actions.size() == cursor ==
/// belief.week.
struct Session {
    std::string id;
    Config config;
    std::string config_hash;
    std::uint64_t seed = 0;
    LatentState truth_state;
    std::vector<LatentState> truth_history; ///< truth after each committed week
    Belief belief;
    ActionSequence actions;
    std::vector<Observation> observations;
    std::vector<BeliefReport> reports; ///< week 0 .. cursor
    int cursor = 0;
    struct Replay {
        std::string payload_hash;
        json response;
    };
    std::map<std::string, Replay> idempotency;
    mutable std::mutex mutex;
};

/// In-memory session store behind the JSON API. Every handler is callable
/// directly; bind() routes the same handlers through an HTTP server.
class Service {
public:
    HttpResponse create_session(const json& config);
    HttpResponse get_session(const std::string& id) const;
    HttpResponse step_session(const std::string& id, const json& body, const std::string& idempotency_key = "");
    HttpResponse rollout_candidates(const std::string& id, const json& body) const;
    HttpResponse history(const std::string& id) const;
    HttpResponse export_session(const std::string& id) const;
    HttpResponse healthz() const;

    /// Routes a raw request; bodies are JSON text.
    HttpResponse handle(const std::string& method, const std::string& path, const std::string& body,
                        const std::string& idempotency_key = "");

    /// Hash of all mutable session state; unchanged by read-only handlers.
    std::string state_hash(const std::string& id) const;

    void bind(httplib::Server& server);

private:
    std::shared_ptr<Session> find(const std::string& id) const;

    mutable std::shared_mutex store_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t next_id_ = 1;
};

/// Serves until the server is stopped. Returns false if binding fails.
bool serve(Service& service, const std::string& host, int port);

} // namespace epiworld
