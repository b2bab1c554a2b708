#include "doctest.h"

#include <thread>

#include "httplib.h"

#include "epiworld/service.hpp"

using namespace epiworld;

namespace {

json session_config(std::uint64_t seed = 5)
{
    return json{{"model", {{"case_noise_sd", 0.1}, {"hosp_noise_sd", 0.1}, {"survey_noise_sd", 0.02}}},
                {"truth", {{"beta0", 1.4}}},
                {"scenario", {{"seed", seed}, {"particles", 100}}},
                {"service", {{"debug", true}}}};
}

json uniform_dims(int level) { return json(std::vector<int>(kActionDims, level)); }

json step_body(int week, int level) { return json{{"action", {{"week", week}, {"dims", uniform_dims(level)}}}}; }

std::string create(Service& svc, std::uint64_t seed = 5)
{
    const auto r = svc.create_session(session_config(seed));
    REQUIRE(r.status == 201);
    return r.body.at("id").get<std::string>();
}

json candidates(std::initializer_list<int> levels, int weeks)
{
    json list = json::array();
    for (int level : levels) {
        json seq = json::array();
        for (int w = 0; w < weeks; ++w) {
            seq.push_back(uniform_dims(level));
        }
        list.push_back(seq);
    }
    return list;
}

void check_envelope(const json& body)
{
    CHECK(body.contains("config_hash"));
    CHECK(body.contains("seed_ledger"));
    CHECK(body.at("seed_ledger").is_array());
}

} // namespace

TEST_SUITE("service")
{
    TEST_CASE("create returns distinct ids and a week-0 belief")
    {
        Service svc;
        const auto a = svc.create_session(session_config());
        const auto b = svc.create_session(session_config());
        CHECK(a.status == 201);
        CHECK(a.body.at("id") != b.body.at("id"));
        CHECK(a.body.at("week") == 0);
        CHECK(a.body.at("belief").at("week") == 0);
        check_envelope(a.body);
        CHECK(svc.healthz().body.at("sessions") == 2);
    }

    TEST_CASE("invalid configs are rejected with details")
    {
        Service svc;
        json cfg = session_config();
        cfg["scenario"]["actions"] = json::array({{{"week", 0}, {"dims", std::vector<int>(kActionDims, 9)}}});
        const auto r = svc.create_session(cfg);
        CHECK(r.status == 422);
        CHECK(r.body.at("code") == "invalid_config");
        CHECK_FALSE(r.body.at("details").empty());
        json bad = session_config();
        bad["model"]["beta0"] = -1.0;
        CHECK(svc.create_session(bad).status == 422);
        CHECK(svc.create_session(json{{"bogus", json::object()}}).status == 422);
    }

    TEST_CASE("step advances the cursor, filters, and reports the ledger")
    {
        Service svc;
        const auto id = create(svc);
        const auto r = svc.step_session(id, step_body(0, 2));
        REQUIRE(r.status == 200);
        CHECK(r.body.at("week") == 1);
        CHECK(r.body.at("observation").at("week") == 1);
        CHECK(r.body.at("belief").at("week") == 1);
        CHECK(r.body.contains("truth"));
        check_envelope(r.body);
        CHECK(r.body.at("seed_ledger").size() >= 3);
        const auto s = svc.get_session(id);
        CHECK(s.body.at("week") == 1);
        // Bare dims default to the current week.
        CHECK(svc.step_session(id, json{{"action", uniform_dims(1)}}).body.at("week") == 2);
    }

    TEST_CASE("invalid or stale actions leave the cursor unchanged")
    {
        Service svc;
        const auto id = create(svc);
        const auto before = svc.state_hash(id);
        auto bad = step_body(0, 2);
        bad["action"]["dims"][4] = 7;
        const auto r = svc.step_session(id, bad);
        CHECK(r.status == 422);
        CHECK(r.body.at("code") == "invalid_action");
        CHECK_FALSE(r.body.at("details").empty());
        const auto stale = svc.step_session(id, step_body(3, 2));
        CHECK(stale.status == 422);
        CHECK(stale.body.at("code") == "week_mismatch");
        CHECK(svc.step_session(id, json::object()).status == 422);
        CHECK(svc.state_hash(id) == before);
        CHECK(svc.get_session(id).body.at("week") == 0);
    }

    TEST_CASE("idempotent replay returns the prior result without advancing")
    {
        Service svc;
        const auto id = create(svc);
        const auto first = svc.step_session(id, step_body(0, 1), "key-1");
        const auto hash = svc.state_hash(id);
        const auto again = svc.step_session(id, step_body(0, 1), "key-1");
        CHECK(again.status == 200);
        CHECK(again.body == first.body);
        CHECK(svc.state_hash(id) == hash);
        CHECK(svc.get_session(id).body.at("week") == 1);
        const auto conflict = svc.step_session(id, step_body(0, 3), "key-1");
        CHECK(conflict.status == 409);
        CHECK(conflict.body.at("code") == "idempotency_conflict");
        auto in_body = step_body(1, 1);
        in_body["idempotency_key"] = "key-2";
        const auto b1 = svc.step_session(id, in_body);
        const auto b2 = svc.step_session(id, in_body);
        CHECK(b1.body == b2.body);
        CHECK(svc.get_session(id).body.at("week") == 2);
    }

    TEST_CASE("unknown sessions give 404")
    {
        Service svc;
        CHECK(svc.get_session("nope").status == 404);
        CHECK(svc.step_session("nope", step_body(0, 1)).status == 404);
        CHECK(svc.rollout_candidates("nope", json{{"candidates", candidates({1}, 2)}}).status == 404);
        CHECK(svc.history("nope").status == 404);
        CHECK(svc.export_session("nope").status == 404);
    }

    TEST_CASE("rollouts are read-only and byte-identical on repeat")
    {
        Service svc;
        const auto id = create(svc);
        svc.step_session(id, step_body(0, 1));
        const auto before = svc.state_hash(id);
        const json body{{"candidates", candidates({0, 4, 2}, 4)}, {"samples", 4}};
        const auto a = svc.rollout_candidates(id, body);
        REQUIRE(a.status == 200);
        CHECK(svc.state_hash(id) == before);
        CHECK(a.body.at("state_hash") == before);
        const auto b = svc.rollout_candidates(id, body);
        CHECK(a.body.dump() == b.body.dump());
        REQUIRE(a.body.at("candidates").size() == 3);
        const auto& fc = a.body.at("candidates")[0].at("fan_chart").at("hosp_admissions_per_100k");
        CHECK(fc.at("weeks").size() == 4);
        CHECK(a.body.at("ranking").size() == 3);
        check_envelope(a.body);
    }

    TEST_CASE("rollouts: duplicates tie by index and H=0 gives an empty fan chart")
    {
        Service svc;
        const auto id = create(svc);
        const auto dup = svc.rollout_candidates(id, json{{"candidates", candidates({2, 2}, 3)}, {"samples", 3}});
        REQUIRE(dup.status == 200);
        const auto& c = dup.body.at("candidates");
        CHECK(c[0].at("metrics") == c[1].at("metrics"));
        CHECK(dup.body.at("ranking") == json::array({0, 1}));
        const auto empty = svc.rollout_candidates(id, json{{"candidates", json::array({json::array()})}, {"samples", 1}});
        REQUIRE(empty.status == 200);
        CHECK(empty.body.at("candidates")[0].at("rank") == 1);
        CHECK(empty.body.at("candidates")[0].at("fan_chart").at("hosp_admissions_per_100k").at("weeks").empty());
    }

    TEST_CASE("rollouts reject any invalid candidate without partial evaluation")
    {
        Service svc;
        const auto id = create(svc);
        json list = candidates({1, 2, 3}, 2);
        list[0][1][0] = 5;
        list[2][0][12] = -1;
        const auto r = svc.rollout_candidates(id, json{{"candidates", list}});
        CHECK(r.status == 422);
        CHECK(r.body.at("details").size() == 2);
        CHECK(svc.rollout_candidates(id, json{{"candidates", candidates({1}, 2)}, {"samples", 0}}).status == 422);
        CHECK(svc.rollout_candidates(id, json{{"candidates", json::array()}}).status == 422);
    }

    TEST_CASE("sessions are isolated under interleaving")
    {
        Service solo;
        const auto ref = create(solo, 9);
        std::vector<json> expected;
        for (int w = 0; w < 4; ++w) {
            expected.push_back(solo.step_session(ref, step_body(w, w % 5)).body);
        }

        Service svc;
        const auto a = create(svc, 9);
        const auto b = create(svc, 21);
        for (int w = 0; w < 4; ++w) {
            const auto ra = svc.step_session(a, step_body(w, w % 5));
            svc.step_session(b, step_body(w, 4));
            svc.rollout_candidates(b, json{{"candidates", candidates({1}, 2)}, {"samples", 2}});
            json got = ra.body;
            json want = expected[static_cast<std::size_t>(w)];
            got.erase("session");
            want.erase("session");
            CHECK(got == want);
        }
    }

    TEST_CASE("concurrent steps on different sessions match sequential results")
    {
        Service svc;
        const auto a = create(svc, 3);
        const auto b = create(svc, 4);
        std::thread ta([&] {
            for (int w = 0; w < 5; ++w) {
                svc.step_session(a, step_body(w, 1));
            }
        });
        std::thread tb([&] {
            for (int w = 0; w < 5; ++w) {
                svc.step_session(b, step_body(w, 3));
            }
        });
        ta.join();
        tb.join();
        Service ref;
        const auto ra = create(ref, 3);
        for (int w = 0; w < 5; ++w) {
            ref.step_session(ra, step_body(w, 1));
        }
        CHECK(svc.state_hash(a) == ref.state_hash(ra));
    }

    TEST_CASE("history and export reflect committed weeks")
    {
        Service svc;
        const auto id = create(svc);
        for (int w = 0; w < 3; ++w) {
            svc.step_session(id, step_body(w, 2));
        }
        const auto h = svc.history(id);
        CHECK(h.body.at("actions").size() == 3);
        CHECK(h.body.at("observations").size() == 3);
        CHECK(h.body.at("beliefs").size() == 4);
        CHECK(h.body.at("truth").size() == 3);
        const auto e = svc.export_session(id);
        CHECK(e.body.at("state").at("cursor") == 3);
        CHECK(e.body.at("config").contains("model"));
        CHECK(e.body.at("state_hash") == svc.state_hash(id));
    }

    TEST_CASE("debug off hides the latent truth")
    {
        Service svc;
        json cfg = session_config();
        cfg["service"]["debug"] = false;
        const auto id = svc.create_session(cfg).body.at("id").get<std::string>();
        CHECK_FALSE(svc.step_session(id, step_body(0, 1)).body.contains("truth"));
        CHECK_FALSE(svc.history(id).body.contains("truth"));
    }

    TEST_CASE("routing maps paths and methods onto handlers")
    {
        Service svc;
        const auto created = svc.handle("POST", "/sessions", session_config().dump());
        REQUIRE(created.status == 201);
        const std::string id = created.body.at("id");
        CHECK(svc.handle("GET", "/healthz", "").status == 200);
        CHECK(svc.handle("GET", "/sessions/" + id, "").status == 200);
        CHECK(svc.handle("POST", "/sessions/" + id + "/step", step_body(0, 1).dump(), "k").status == 200);
        CHECK(svc.handle("POST", "/sessions/" + id + "/step", step_body(0, 1).dump(), "k").body.at("week") == 1);
        CHECK(svc.handle("GET", "/sessions/" + id + "/history", "").status == 200);
        CHECK(svc.handle("GET", "/sessions/" + id + "/export", "").status == 200);
        CHECK(svc.handle("POST", "/sessions/" + id + "/rollouts",
                         json{{"candidates", candidates({1}, 1)}, {"samples", 1}}.dump())
                  .status == 200);
        CHECK(svc.handle("GET", "/sessions/" + id + "/step", "").status == 405);
        CHECK(svc.handle("GET", "/nowhere", "").status == 404);
        const auto bad = svc.handle("POST", "/sessions", "{not json");
        CHECK(bad.status == 400);
        CHECK(bad.body.at("code") == "invalid_json");
    }

    TEST_CASE("HTTP binding serves the same API")
    {
        Service svc;
        httplib::Server server;
        svc.bind(server);
        const int port = server.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        std::thread t([&] { server.listen_after_bind(); });
        server.wait_until_ready();
        httplib::Client client("127.0.0.1", port);
        const auto created = client.Post("/sessions", session_config().dump(), "application/json");
        REQUIRE(created);
        CHECK(created->status == 201);
        const std::string id = json::parse(created->body).at("id");
        httplib::Headers headers{{"Idempotency-Key", "abc"}};
        const auto s1 = client.Post("/sessions/" + id + "/step", headers, step_body(0, 2).dump(), "application/json");
        const auto s2 = client.Post("/sessions/" + id + "/step", headers, step_body(0, 2).dump(), "application/json");
        REQUIRE(s1);
        REQUIRE(s2);
        CHECK(s1->status == 200);
        CHECK(s1->body == s2->body);
        CHECK(s1->get_header_value("Access-Control-Allow-Origin") == "*");
        const auto missing = client.Get("/sessions/zzz");
        REQUIRE(missing);
        CHECK(missing->status == 404);
        CHECK(json::parse(missing->body).at("code") == "not_found");
        server.stop();
        t.join();
    }
}
