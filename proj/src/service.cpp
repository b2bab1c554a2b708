#include "epiworld/service.hpp"

#include <cstdio>
#include <regex>

#include "httplib.h"

#include "epiworld/dynamics.hpp"
#include "epiworld/parallel.hpp"
#include "epiworld/scenarios.hpp"

namespace epiworld {

namespace {

constexpr std::uint64_t kTruthStream = 1;
constexpr std::uint64_t kFilterStream = 2;
constexpr std::uint64_t kRolloutStream = 3;
constexpr std::uint64_t kBeliefInitStream = 4;

std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

json ledger_entry(const std::string& purpose, const RngStream& s)
{
    return json{{"purpose", purpose}, {"seed", hex64(s.seed())}, {"stream", hex64(s.stream_id())}};
}

json session_ledger(const Session& s)
{
    return json::array({json{{"purpose", "session"}, {"seed", hex64(s.seed)}, {"stream", hex64(0)}},
                        ledger_entry("belief_init", derive_stream(s.seed, kBeliefInitStream))});
}

int status_for(const Error& e)
{
    const std::string& c = e.code();
    if (c == "not_found") {
        return 404;
    }
    if (c == "idempotency_conflict") {
        return 409;
    }
    if (c == "observation_impossible") {
        return 500;
    }
    return 422;
}

HttpResponse from_error(const Error& e) { return error_response(status_for(e), e.code(), e.what(), e.details()); }

json belief_json(const Belief& b)
{
    json j;
    j["week"] = b.week;
    j["cum_loglik"] = b.cum_loglik;
    j["log_weights"] = b.log_weights;
    j["particles"] = b.particles;
    return j;
}

json state_json(const Session& s)
{
    return json{{"cursor", s.cursor},
                {"truth_state", s.truth_state},
                {"truth_history", s.truth_history},
                {"belief", belief_json(s.belief)},
                {"actions", s.actions},
                {"observations", s.observations}};
}

std::string hash_state(const Session& s) { return content_hash(state_json(s).dump()); }

json envelope(const Session& s)
{
    return json{{"session", s.id}, {"config_hash", s.config_hash}, {"seed_ledger", session_ledger(s)}};
}

/// Accepts {"week", "dims"} objects or bare dims arrays; a missing week
/// defaults to `week`.
Action parse_action(const json& j, int week)
{
    Action a;
    a.week = week;
    if (j.is_array()) {
        a.dims = decode<std::vector<int>>(j, "action dims");
    } else if (j.is_object() && j.contains("dims")) {
        a.dims = decode<std::vector<int>>(j.at("dims"), "action dims");
        if (j.contains("week")) {
            a.week = decode<int>(j.at("week"), "action week");
        }
    } else {
        throw Error("invalid_json", "action must be {week, dims} or an array of levels");
    }
    return a;
}

} // namespace

HttpResponse error_response(int status, const std::string& code, const std::string& message,
                            const std::vector<std::string>& details)
{
    return HttpResponse{status, json{{"code", code}, {"message", message}, {"details", details}}};
}

std::shared_ptr<Session> Service::find(const std::string& id) const
{
    std::shared_lock lock(store_mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        throw Error("not_found", "unknown session '" + id + "'", {id});
    }
    return it->second;
}

HttpResponse Service::create_session(const json& body)
{
    try {
        auto s = std::make_shared<Session>();
        s->config = config_from_json(body);
        s->config.scenario.validate();
        s->config_hash = config_hash(s->config);
        s->seed = s->config.scenario.seed.value_or(0);
        const auto& sc = s->config.scenario;
        s->truth_state = initial_state(sc, s->seed);
        s->belief = init_belief(sc.prior, sc.particles, sc.params, derive_stream(s->seed, kBeliefInitStream));
        s->belief.week = 0;
        s->reports.push_back(summarize(s->belief, sc.params));
        {
            std::unique_lock lock(store_mutex_);
            char id[32];
            std::snprintf(id, sizeof(id), "s%06llu", static_cast<unsigned long long>(next_id_++));
            s->id = id;
            sessions_.emplace(s->id, s);
        }
        json out = envelope(*s);
        out["id"] = s->id;
        out["week"] = s->cursor;
        out["belief"] = s->reports.back();
        out["state_hash"] = hash_state(*s);
        return {201, out};
    } catch (const Error& e) {
        return error_response(422, e.code(), e.what(), e.details());
    } catch (const std::exception& e) {
        return error_response(422, "invalid_config", e.what());
    }
}

HttpResponse Service::get_session(const std::string& id) const
{
    try {
        const auto s = find(id);
        std::lock_guard lock(s->mutex);
        json out = envelope(*s);
        out["id"] = s->id;
        out["week"] = s->cursor;
        out["belief"] = s->reports.back();
        out["state_hash"] = hash_state(*s);
        out["debug"] = s->config.service.debug;
        if (!s->observations.empty()) {
            out["last_observation"] = s->observations.back();
        }
        if (s->config.service.debug) {
            out["truth"] = s->truth_state;
            out["truth_effective_R"] = effective_R(s->truth_state, s->config.scenario.truth_params());
        }
        return {200, out};
    } catch (const Error& e) {
        return from_error(e);
    }
}

HttpResponse Service::step_session(const std::string& id, const json& body, const std::string& header_key)
{
    try {
        const auto s = find(id);
        std::lock_guard lock(s->mutex);
        if (!body.is_object()) {
            throw Error("invalid_json", "step body must be an object");
        }
        std::string key = header_key;
        if (key.empty() && body.contains("idempotency_key")) {
            key = decode<std::string>(body.at("idempotency_key"), "idempotency_key");
        }
        const json action_json = body.contains("action") ? body.at("action") : body.value("dims", json());
        if (action_json.is_null()) {
            throw Error("invalid_json", "step body needs 'action'");
        }
        const std::string payload_hash = content_hash(action_json.dump());
        if (!key.empty()) {
            const auto it = s->idempotency.find(key);
            if (it != s->idempotency.end()) {
                if (it->second.payload_hash != payload_hash) {
                    throw Error("idempotency_conflict",
                                "idempotency key '" + key + "' was already used with a different action", {key});
                }
                return {200, it->second.response};
            }
        }
        const Action a = parse_action(action_json, s->cursor);
        if (a.week != s->cursor) {
            throw Error("week_mismatch", "action week " + std::to_string(a.week) + " does not match session week " +
                                             std::to_string(s->cursor));
        }
        const auto violations = validate_action(a);
        if (!violations.empty()) {
            std::vector<std::string> details;
            for (const auto& v : violations) {
                details.push_back(v.describe());
            }
            throw Error("invalid_action", "action is invalid", details);
        }

        const auto& sc = s->config.scenario;
        const auto w = static_cast<std::uint64_t>(s->cursor);
        const double vax = s->cursor < static_cast<int>(sc.vaccination.size()) ? sc.vaccination[s->cursor] : 0.0;
        const RngStream truth_week = derive_stream(s->seed, kTruthStream).derive(w);
        const RngStream filter_week = derive_stream(s->seed, kFilterStream).derive(w);

        LatentState next = step(s->truth_state, a, sc.truth_params(), truth_week.derive(0), Exogenous{vax});
        const Observation o = observe(next, a, sc.regime, sc.truth_params(), truth_week.derive(1), s->cursor + 1);
        Belief bel = filter_step(s->belief, a, o, sc.params, sc.regime, filter_week, sc.filter, Exogenous{vax});
        const BeliefReport report = summarize(bel, sc.params);

        s->truth_state = next;
        s->truth_history.push_back(next);
        s->belief = std::move(bel);
        s->actions.push_back(a);
        s->observations.push_back(o);
        s->reports.push_back(report);
        s->cursor += 1;

        json out = envelope(*s);
        out["week"] = s->cursor;
        out["action"] = a;
        out["observation"] = o;
        out["belief"] = report;
        out["state_hash"] = hash_state(*s);
        out["seed_ledger"].push_back(ledger_entry("truth_dynamics", truth_week.derive(0)));
        out["seed_ledger"].push_back(ledger_entry("truth_observation", truth_week.derive(1)));
        out["seed_ledger"].push_back(ledger_entry("filter", filter_week));
        if (s->config.service.debug) {
            out["truth"] = next;
        }
        if (!key.empty()) {
            out["idempotency_key"] = key;
            s->idempotency.emplace(key, Session::Replay{payload_hash, out});
        }
        return {200, out};
    } catch (const Error& e) {
        return from_error(e);
    }
}

HttpResponse Service::rollout_candidates(const std::string& id, const json& body) const
{
    try {
        const auto s = find(id);
        std::lock_guard lock(s->mutex);
        if (!body.is_object() || !body.contains("candidates") || !body.at("candidates").is_array()) {
            throw Error("invalid_json", "rollout body needs a 'candidates' array");
        }
        const auto& list = body.at("candidates");
        if (list.empty()) {
            throw Error("no_candidates", "at least one candidate is required");
        }
        const long long samples = body.contains("samples") ? decode<long long>(body.at("samples"), "samples") : 16;
        if (samples < 1) {
            throw Error("invalid_samples", "samples must be >= 1", {"samples"});
        }
        RewardSpec reward;
        if (body.contains("reward")) {
            reward = decode<RewardSpec>(body.at("reward"), "reward");
        }
        validate_reward(reward);

        const auto& sc = s->config.scenario;
        std::vector<InterventionPlan> plans;
        std::vector<std::string> violations;
        for (std::size_t c = 0; c < list.size(); ++c) {
            const json& cand = list[c];
            const json& actions = cand.is_object() ? cand.value("actions", json::array()) : cand;
            if (!actions.is_array()) {
                throw Error("invalid_json", "candidate " + std::to_string(c) + " needs an actions array");
            }
            InterventionPlan plan;
            for (std::size_t w = 0; w < actions.size(); ++w) {
                Action a = parse_action(actions[w], s->cursor + static_cast<int>(w));
                a.week = s->cursor + static_cast<int>(w);
                for (const auto& v : validate_action(a)) {
                    violations.push_back("candidate " + std::to_string(c) + " step " + std::to_string(w) + ": " +
                                         v.describe());
                }
                plan.actions.push_back(std::move(a));
            }
            if (cand.is_object() && cand.contains("vaccination")) {
                plan.vaccination = decode<std::vector<double>>(cand.at("vaccination"), "vaccination");
            } else {
                for (std::size_t w = 0; w < plan.actions.size(); ++w) {
                    const std::size_t cal = static_cast<std::size_t>(s->cursor) + w;
                    plan.vaccination.push_back(cal < sc.vaccination.size() ? sc.vaccination[cal] : 0.0);
                }
            }
            for (double v : plan.vaccination) {
                if (!(v >= 0.0 && v <= 1.0)) {
                    violations.push_back("candidate " + std::to_string(c) + ": vaccination outside [0, 1]");
                    break;
                }
            }
            plans.push_back(std::move(plan));
        }
        if (!violations.empty()) {
            throw Error("invalid_action", "invalid candidates", violations);
        }

        const auto K = static_cast<std::size_t>(samples);
        const RngStream base = derive_stream(s->seed, kRolloutStream).derive(static_cast<std::uint64_t>(s->cursor));
        RolloutOptions opt;
        opt.icu_capacity = sc.icu_capacity;
        opt.start_week = s->cursor;
        std::vector<std::vector<RolloutResult>> results(plans.size(), std::vector<RolloutResult>(K));
        parallel_for(
            plans.size() * K,
            [&](std::size_t i) {
                const std::size_t c = i / K;
                const std::size_t k = i % K;
                results[c][k] = rollout(s->belief, plans[c], sc.params, sc.regime, base.derive(k), opt);
            },
            1);
        const auto ranked = evaluate(results, reward);

        json cands = json::array();
        json ranking = json::array();
        for (const auto& ev : ranked) {
            ranking.push_back(ev.index);
        }
        std::vector<CandidateEvaluation> by_index(ranked.size());
        for (const auto& ev : ranked) {
            by_index[ev.index] = ev;
        }
        for (std::size_t c = 0; c < plans.size(); ++c) {
            std::vector<std::vector<double>> latent;
            std::vector<std::vector<double>> observed;
            int violation_weeks = 0;
            for (const auto& r : results[c]) {
                latent.push_back(hosp_series(r));
                observed.push_back(observed_hosp_series(r));
                violation_weeks = std::max(violation_weeks, r.metrics.icu_violation_weeks);
            }
            const auto& ev = by_index[c];
            cands.push_back(json{{"index", c},
                                 {"rank", ev.rank},
                                 {"score", ev.score},
                                 {"feasible", ev.feasible},
                                 {"metrics", ev.metrics},
                                 {"max_icu_violation_weeks", violation_weeks},
                                 {"fan_chart",
                                  {{"hosp_admissions_per_100k", fan_chart(latent)},
                                   {"observed_hosp_per_100k", fan_chart(observed)}}}});
        }
        json out = envelope(*s);
        out["week"] = s->cursor;
        out["samples"] = K;
        out["reward"] = reward;
        out["candidates"] = cands;
        out["ranking"] = ranking;
        out["state_hash"] = hash_state(*s);
        out["seed_ledger"].push_back(ledger_entry("rollouts", base));
        return {200, out};
    } catch (const Error& e) {
        return from_error(e);
    }
}

HttpResponse Service::history(const std::string& id) const
{
    try {
        const auto s = find(id);
        std::lock_guard lock(s->mutex);
        json out = envelope(*s);
        out["week"] = s->cursor;
        out["actions"] = s->actions;
        out["observations"] = s->observations;
        out["beliefs"] = s->reports;
        if (s->config.service.debug) {
            out["truth"] = s->truth_history;
        }
        return {200, out};
    } catch (const Error& e) {
        return from_error(e);
    }
}

HttpResponse Service::export_session(const std::string& id) const
{
    try {
        const auto s = find(id);
        std::lock_guard lock(s->mutex);
        json out = envelope(*s);
        out["config"] = to_json_value(s->config);
        out["state"] = state_json(*s);
        out["beliefs"] = s->reports;
        out["state_hash"] = hash_state(*s);
        return {200, out};
    } catch (const Error& e) {
        return from_error(e);
    }
}

HttpResponse Service::healthz() const
{
    std::shared_lock lock(store_mutex_);
    return {200, json{{"status", "ok"}, {"sessions", sessions_.size()}}};
}

std::string Service::state_hash(const std::string& id) const
{
    const auto s = find(id);
    std::lock_guard lock(s->mutex);
    return hash_state(*s);
}

HttpResponse Service::handle(const std::string& method, const std::string& path, const std::string& body,
                             const std::string& idempotency_key)
{
    static const std::regex session_re(R"(^/sessions/([^/]+)(/(step|rollouts|history|export))?$)");
    json parsed;
    const bool wants_body = method == "POST";
    if (wants_body) {
        parsed = json::parse(body.empty() ? std::string("{}") : body, nullptr, false);
        if (parsed.is_discarded()) {
            return error_response(400, "invalid_json", "request body is not valid JSON");
        }
    }
    if (path == "/healthz") {
        return method == "GET" ? healthz() : error_response(405, "method_not_allowed", "use GET");
    }
    if (path == "/sessions") {
        return method == "POST" ? create_session(parsed) : error_response(405, "method_not_allowed", "use POST");
    }
    std::smatch m;
    if (!std::regex_match(path, m, session_re)) {
        return error_response(404, "not_found", "no route for " + path);
    }
    const std::string id = m[1];
    const std::string sub = m[3];
    if (sub.empty()) {
        return method == "GET" ? get_session(id) : error_response(405, "method_not_allowed", "use GET");
    }
    if (sub == "step") {
        return method == "POST" ? step_session(id, parsed, idempotency_key)
                                : error_response(405, "method_not_allowed", "use POST");
    }
    if (sub == "rollouts") {
        return method == "POST" ? rollout_candidates(id, parsed)
                                : error_response(405, "method_not_allowed", "use POST");
    }
    if (sub == "history") {
        return method == "GET" ? history(id) : error_response(405, "method_not_allowed", "use GET");
    }
    return method == "GET" ? export_session(id) : error_response(405, "method_not_allowed", "use GET");
}

void Service::bind(httplib::Server& server)
{
    auto route = [this](const httplib::Request& req, httplib::Response& res) {
        const auto r = handle(req.method, req.path, req.body, req.get_header_value("Idempotency-Key"));
        res.status = r.status;
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_content(r.body.dump(), "application/json");
    };
    server.Get(".*", route);
    server.Post(".*", route);
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_header("Access-Control-Allow-Headers", "Content-Type, Idempotency-Key");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.status = 204;
    });
}

bool serve(Service& service, const std::string& host, int port)
{
    httplib::Server server;
    service.bind(server);
    return server.listen(host, port);
}

} // namespace epiworld
