#include "doctest.h"

#include <sstream>

#include "epiworld/io.hpp"
#include "support.hpp"

using namespace epiworld;

namespace {

template <class T>
T round_trip(const T& v)
{
    const json j = v;
    return decode<T>(json::parse(j.dump()), "value");
}

} // namespace

TEST_SUITE("io")
{
    TEST_CASE("JSON round-trips for actions, states, params and observations")
    {
        RngStream rng(1, 1);
        for (int i = 0; i < 20; ++i) {
            const auto a = testing::random_action(rng, i);
            CHECK(round_trip(a) == a);
            const auto x = testing::random_state(rng, 2);
            CHECK(round_trip(x) == x);
            const auto p = testing::random_params(rng);
            CHECK(round_trip(p) == p);
        }
        const Observation o{3, 12.5, 4.25, 0.625};
        CHECK(round_trip(o) == o);
        const auto r = MisreportingRegime::pure(0.25);
        CHECK(round_trip(r) == r);
        PriorConfig prior;
        prior.R = 0.1;
        CHECK(round_trip(prior) == prior);
    }

    TEST_CASE("policy specs round-trip for every kind")
    {
        ThresholdPolicy t;
        t.rules.push_back({Feature::SurveyCompliance, Trigger::Below, 0.8, {1, 2}, 4});
        ReplayPolicy rp{{Action::uniform(2, 0), Action::uniform(3, 1)}};
        auto sm = SoftmaxPolicy::uniform(kActionDims, 0.5);
        sm.dims[3].weights[2][1] = 0.75;
        for (const PolicySpec& spec : {PolicySpec{t}, PolicySpec{rp}, PolicySpec{sm}}) {
            const json j = spec;
            CHECK(policy_from_json(json::parse(j.dump())) == spec);
        }
        CHECK_THROWS_AS(policy_from_json(json{{"kind", "oracle"}}), Error);
    }

    TEST_CASE("decoders reject missing, mistyped and unknown fields")
    {
        json a = Action::uniform(1, 0);
        a.erase("dims");
        CHECK_THROWS_AS(decode<Action>(a, "action"), Error);
        json p = ModelParams{};
        p["beta0"] = "fast";
        CHECK_THROWS_AS(decode<ModelParams>(p, "params"), Error);
        json q = ModelParams{};
        q["no_such_field"] = 1.0;
        try {
            decode<ModelParams>(q, "params");
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == "invalid_json");
            REQUIRE_FALSE(e.details().empty());
            CHECK(e.details()[0] == "no_such_field");
        }
    }

    TEST_CASE("CSV reader skips comments and reports ragged lines")
    {
        std::istringstream in("# config_hash=abc seed=1\nweek, value\n1, 2.5\n\n2,3\n");
        const auto t = read_csv(in);
        CHECK(t.header == std::vector<std::string>{"week", "value"});
        REQUIRE(t.rows.size() == 2);
        CHECK(t.rows[0][1] == "2.5");
        CHECK(t.line_numbers[1] == 5);
        std::istringstream ragged("a,b\n1\n");
        CHECK_THROWS_AS(read_csv(ragged), Error);
        std::istringstream empty("# only a comment\n");
        try {
            read_csv(empty);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == "missing_header");
        }
    }

    TEST_CASE("CSV cell parsing cites the field and line")
    {
        CHECK(parse_double("1e-3", "x", 2) == 1e-3);
        CHECK(parse_integer("-4", "x", 2) == -4);
        try {
            parse_double("abc", "hosp_per_100k", 7);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("line 7") != std::string::npos);
            CHECK(e.details()[0] == "hosp_per_100k");
        }
        CHECK_THROWS_AS(parse_integer("2.5", "week", 3), Error);
        std::istringstream missing("week,d0\n0,1\n");
        try {
            read_actions_csv(missing);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == "missing_column");
        }
    }

    TEST_CASE("actions, observations and triangles round-trip through CSV")
    {
        RngStream rng(2, 2);
        ActionSequence actions;
        std::vector<Observation> obs;
        for (int w = 0; w < 5; ++w) {
            actions.push_back(testing::random_action(rng, w));
            obs.push_back({w + 1, 100.0 * rng.uniform(), 10.0 * rng.uniform() / 3.0, rng.uniform()});
        }
        std::stringstream a;
        write_actions_csv(a, actions);
        CHECK(read_actions_csv(a) == actions);
        std::stringstream o;
        o << provenance_comment("0123", 7) << '\n';
        write_observations_csv(o, obs);
        CHECK(read_observations_csv(o) == obs);

        const RevisionTriangle tri({100, 250, 80}, {0.3, 0.6, 0.9, 1.0});
        std::stringstream t;
        write_triangle_csv(t, tri);
        const auto back = read_triangle_csv(t);
        REQUIRE(back.weeks() == tri.weeks());
        REQUIRE(back.max_lag() == tri.max_lag());
        for (std::size_t w = 0; w < tri.weeks(); ++w) {
            for (std::size_t k = 0; k <= tri.max_lag(); ++k) {
                CHECK(back.at(w, k) == tri.at(w, k));
            }
        }
    }

    TEST_CASE("formatted doubles round-trip exactly")
    {
        RngStream rng(3, 3);
        for (int i = 0; i < 1000; ++i) {
            const double v = rng.normal() * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
            CHECK(std::stod(format_double(v)) == v);
        }
    }

    TEST_CASE("content hash is FNV-1a 64")
    {
        CHECK(content_hash("") == "cbf29ce484222325");
        CHECK(content_hash("a") == "af63dc4c8601ec8c");
        CHECK(content_hash("abc") != content_hash("abd"));
        CHECK(provenance_comment("ff", 3) == "# config_hash=ff seed=3");
    }
}
