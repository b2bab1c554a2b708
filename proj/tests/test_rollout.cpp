#include "doctest.h"

#include <cmath>

#include "epiworld/rollout.hpp"
#include "support.hpp"

using namespace epiworld;

namespace {

InterventionPlan constant_plan(int level, int weeks)
{
    InterventionPlan plan;
    for (int w = 0; w < weeks; ++w) {
        plan.actions.push_back(Action::uniform(level, w));
    }
    return plan;
}

LatentState mid_epidemic()
{
    LatentState x;
    x.S = 0.85;
    x.E = 0.02;
    x.I = 0.03;
    x.R = 0.0995;
    x.Hosp = 0.0005;
    x.hosp_pipeline = {0.0001};
    x.compliance = 0.2;
    return x;
}

RolloutResult with_metrics(OutcomeMetrics m)
{
    RolloutResult r;
    r.metrics = m;
    return r;
}

} // namespace

TEST_SUITE("rollout")
{
    TEST_CASE("zero horizon gives empty trajectories and zero metrics")
    {
        const auto r = rollout(mid_epidemic(), InterventionPlan{}, ModelParams{}, MisreportingRegime::none(),
                               RngStream(1, 1));
        CHECK(r.trajectory.empty());
        CHECK(r.observations.empty());
        CHECK(r.metrics == OutcomeMetrics{});
    }

    TEST_CASE("a disease-free start accrues no infections")
    {
        LatentState x;
        x.S = 0.6;
        x.R = 0.4;
        ModelParams p;
        p.waning_rate = 0.3;
        const auto r = rollout(x, constant_plan(0, 20), p, MisreportingRegime::none(), RngStream(1, 1));
        CHECK(r.metrics.cumulative_infections == 0.0);
        CHECK(r.metrics.peak_hosp_per_100k == 0.0);
        CHECK(r.metrics.peak_week == 1);
    }

    TEST_CASE("full stringency beats no stringency from mid-epidemic")
    {
        ModelParams p;
        p.deterministic = true;
        const auto lo = rollout(mid_epidemic(), constant_plan(0, 6), p, MisreportingRegime::none(), RngStream(1, 1));
        const auto hi = rollout(mid_epidemic(), constant_plan(4, 6), p, MisreportingRegime::none(), RngStream(1, 1));
        CHECK(hi.metrics.cumulative_infections < lo.metrics.cumulative_infections);
    }

    TEST_CASE("invalid actions are rejected before simulating")
    {
        InterventionPlan plan = constant_plan(1, 3);
        plan.actions[2].dims[0] = 5;
        CHECK_THROWS_AS(rollout(mid_epidemic(), plan, ModelParams{}, MisreportingRegime::none(), RngStream(1, 1)),
                        Error);
    }

    TEST_CASE("every rollout state satisfies the invariants, vaccination included")
    {
        InterventionPlan plan = constant_plan(2, 30);
        plan.vaccination.assign(30, 0.02);
        const auto r = rollout(mid_epidemic(), plan, ModelParams{}, MisreportingRegime::none(), RngStream(3, 3));
        REQUIRE(r.trajectory.size() == 30);
        for (const auto& x : r.trajectory) {
            CHECK(check_invariants(x).empty());
        }
        CHECK(r.observations.back().week == 30);
    }

    TEST_CASE("metrics follow the latent admissions")
    {
        std::vector<LatentState> traj(4);
        const double adm[] = {10e-5, 40e-5, 35e-5, 5e-5};
        for (std::size_t w = 0; w < 4; ++w) {
            traj[w].new_admissions = adm[w];
            traj[w].new_infections = 0.01;
        }
        const auto m = compute_metrics(traj, 30.0);
        CHECK(m.peak_hosp_per_100k == doctest::Approx(40.0));
        CHECK(m.peak_week == 2);
        CHECK(m.icu_violation_weeks == 2);
        CHECK(m.end_hosp_per_100k == doctest::Approx(5.0));
        CHECK(m.cumulative_infections == doctest::Approx(0.04));
    }

    TEST_CASE("counterfactual: identical plans give bit-identical results")
    {
        const auto plan = constant_plan(2, 10);
        const auto pair = counterfactual_compare(mid_epidemic(), plan, plan, 3, ModelParams{},
                                                 MisreportingRegime::none(), 99);
        CHECK(pair.baseline.trajectory == pair.alternative.trajectory);
        CHECK(pair.baseline.observations == pair.alternative.observations);
    }

    TEST_CASE("counterfactual: prefixes agree exactly before divergence")
    {
        const auto base = constant_plan(1, 12);
        auto alt = base;
        for (std::size_t w = 5; w < alt.actions.size(); ++w) {
            alt.actions[w] = Action::uniform(4, static_cast<int>(w));
        }
        alt.vaccination.assign(12, 0.0);
        for (std::size_t w = 5; w < 12; ++w) {
            alt.vaccination[w] = 0.01;
        }
        const auto pair =
            counterfactual_compare(mid_epidemic(), base, alt, 5, ModelParams{}, MisreportingRegime::none(), 7);
        for (std::size_t w = 0; w < 5; ++w) {
            CHECK(pair.baseline.trajectory[w] == pair.alternative.trajectory[w]);
            CHECK(pair.baseline.observations[w] == pair.alternative.observations[w]);
        }
        CHECK_FALSE(pair.baseline.trajectory[5] == pair.alternative.trajectory[5]);
        CHECK_THROWS_AS(
            counterfactual_compare(mid_epidemic(), base, alt, 6, ModelParams{}, MisreportingRegime::none(), 7),
            Error);
    }

    TEST_CASE("counterfactual from a belief shares the sampled particle")
    {
        const Belief bel = init_belief(PriorConfig{}, 100, ModelParams{}, RngStream(1, 0));
        const auto base = constant_plan(1, 6);
        auto alt = base;
        alt.actions[4] = Action::uniform(3, 4);
        const auto pair =
            counterfactual_compare(bel, base, alt, 4, ModelParams{}, MisreportingRegime::none(), 11);
        for (std::size_t w = 0; w < 4; ++w) {
            CHECK(pair.baseline.trajectory[w] == pair.alternative.trajectory[w]);
        }
    }

    TEST_CASE("evaluation: single candidate ranks first")
    {
        const auto ranked = evaluate({{with_metrics({0.1, 5.0, 3, 0, 2.0})}}, RewardSpec{});
        REQUIRE(ranked.size() == 1);
        CHECK(ranked[0].rank == 1);
        CHECK(ranked[0].score == doctest::Approx(-2.0));
        CHECK_THROWS_AS(evaluate({}, RewardSpec{}), Error);
    }

    TEST_CASE("evaluation: ICU violations rank below feasible candidates")
    {
        const auto violating = with_metrics({0.1, 50.0, 3, 2, 0.0});
        const auto feasible = with_metrics({0.1, 10.0, 3, 0, 8.0});
        const auto ranked = evaluate({{violating}, {feasible}}, RewardSpec{});
        CHECK(ranked[0].index == 1);
        CHECK(ranked[1].index == 0);
        CHECK_FALSE(ranked[1].feasible);
        RewardSpec soft;
        soft.icu_hard_constraint = false;
        CHECK(evaluate({{violating}, {feasible}}, soft)[0].index == 0);
    }

    TEST_CASE("evaluation: ties are broken by index")
    {
        const auto m = with_metrics({0.1, 10.0, 3, 0, 4.0});
        const auto ranked = evaluate({{m}, {m}, {m}}, RewardSpec{});
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(ranked[i].index == i);
            CHECK(ranked[i].rank == i + 1);
        }
    }

    TEST_CASE("duplicate candidates under shared streams get identical metrics")
    {
        const Belief bel = init_belief(PriorConfig{}, 200, ModelParams{}, RngStream(1, 0));
        const auto plan = constant_plan(2, 8);
        std::vector<std::vector<RolloutResult>> results(2);
        for (auto& samples : results) {
            for (std::uint64_t k = 0; k < 8; ++k) {
                samples.push_back(rollout(bel, plan, ModelParams{}, MisreportingRegime::none(), RngStream(5, k)));
            }
        }
        const auto ranked = evaluate(results, RewardSpec{});
        CHECK(ranked[0].score == ranked[1].score);
        CHECK(ranked[0].index == 0);
    }

    TEST_CASE("reward weights must be finite")
    {
        RewardSpec r;
        r.peak_hosp = std::nan("");
        CHECK_THROWS_AS(validate_reward(r), Error);
    }

    TEST_CASE("fan chart quantiles interpolate order statistics")
    {
        const auto fc = fan_chart({{1.0, 10.0}, {2.0, 20.0}, {3.0, 30.0}, {4.0, 40.0}, {5.0, 50.0}}, {0.0, 0.5, 0.9});
        REQUIRE(fc.weeks.size() == 2);
        CHECK(fc.weeks[0][0] == 1.0);
        CHECK(fc.weeks[0][1] == 3.0);
        CHECK(fc.weeks[0][2] == doctest::Approx(4.6));
        CHECK(fc.weeks[1][1] == 30.0);
        CHECK(fan_chart({}).weeks.empty());
        CHECK(fan_chart({{}, {}}).weeks.empty());
    }

    TEST_CASE("Monte Carlo error of the mean peak shrinks like one over root K")
    {
        ModelParams p;
        p.n_sim = 2e4;
        p.hosp_noise_sd = 0.1;
        const Belief bel = init_belief(PriorConfig{}, 500, p, RngStream(2, 0));
        const auto plan = constant_plan(1, 12);
        auto spread_of_means = [&](std::size_t k) {
            std::vector<double> means;
            for (std::uint64_t rep = 0; rep < 40; ++rep) {
                double s = 0.0;
                for (std::uint64_t i = 0; i < k; ++i) {
                    s += rollout(bel, plan, p, MisreportingRegime::none(), RngStream(1000 + rep, i))
                             .metrics.peak_hosp_per_100k;
                }
                means.push_back(s / static_cast<double>(k));
            }
            double mu = 0.0;
            for (double m : means) {
                mu += m / static_cast<double>(means.size());
            }
            double var = 0.0;
            for (double m : means) {
                var += (m - mu) * (m - mu) / static_cast<double>(means.size() - 1);
            }
            return std::sqrt(var);
        };
        const double s16 = spread_of_means(16);
        const double s64 = spread_of_means(64);
        const double s256 = spread_of_means(256);
        CHECK(s16 / s64 == doctest::Approx(2.0).epsilon(0.5));
        CHECK(s64 / s256 == doctest::Approx(2.0).epsilon(0.5));
        CHECK(s16 / s256 == doctest::Approx(4.0).epsilon(0.5));
    }
}
