#include "doctest.h"

#include <cmath>

#include "epiworld/filter.hpp"
#include "epiworld/observation.hpp"
#include "hmm_toy.hpp"

using namespace epiworld;
using epiworld::testing::HmmToy;

namespace {

PriorConfig point_prior()
{
    PriorConfig p;
    p.I = {0.002, 0.002};
    p.E = {0.003, 0.003};
    p.compliance = {0.2, 0.2};
    p.transmissibility = {1.0, 1.0};
    return p;
}

double weight_sum(const Belief& b)
{
    double s = 0.0;
    for (double w : normalized_weights(b)) {
        s += w;
    }
    return s;
}

} // namespace

TEST_SUITE("filter")
{
    TEST_CASE("point prior with one particle reproduces the prior point")
    {
        const ModelParams p;
        const Belief b = init_belief(point_prior(), 1, p, RngStream(1, 1));
        REQUIRE(b.size() == 1);
        CHECK(b.particles[0] == prior_mean_state(point_prior(), p));
        CHECK(b.cum_loglik == 0.0);
        CHECK(b.week == 0);
    }

    TEST_CASE("init weights are uniform and draws are reproducible")
    {
        const ModelParams p;
        const Belief a = init_belief(PriorConfig{}, 1000, p, RngStream(5, 0));
        for (double w : normalized_weights(a)) {
            REQUIRE(w == doctest::Approx(1.0 / 1000));
        }
        const Belief b = init_belief(PriorConfig{}, 1000, p, RngStream(5, 0));
        CHECK(a.particles == b.particles);
        CHECK(ess(a) == doctest::Approx(1000.0));
        CHECK_THROWS_AS(init_belief(PriorConfig{}, 0, p, RngStream(5, 0)), Error);
        PriorConfig empty;
        empty.I = {0.01, 0.001};
        CHECK_THROWS_AS(init_belief(empty, 10, p, RngStream(5, 0)), Error);
    }

    TEST_CASE("effective sample size examples")
    {
        CHECK(ess_of({0.25, 0.25, 0.25, 0.25}) == doctest::Approx(4.0));
        CHECK(ess_of({1.0, 0.0, 0.0, 0.0}) == doctest::Approx(1.0));
        CHECK(ess_of({0.5, 0.5, 0.0, 0.0}) == doctest::Approx(2.0));
    }

    TEST_CASE("systematic resampling draws proportional counts")
    {
        const auto idx = systematic_resample({0.5, 0.25, 0.25, 0.0}, 0.1);
        REQUIRE(idx.size() == 4);
        CHECK(std::count(idx.begin(), idx.end(), 0u) == 2);
        CHECK(std::count(idx.begin(), idx.end(), 1u) == 1);
        CHECK(std::count(idx.begin(), idx.end(), 2u) == 1);
        CHECK(std::count(idx.begin(), idx.end(), 3u) == 0);
    }

    TEST_CASE("a consistent noise-free observation keeps the single particle at weight one")
    {
        ModelParams p;
        p.deterministic = true;
        const Belief b0 = init_belief(point_prior(), 1, p, RngStream(1, 1));
        const Action a = Action::uniform(1);
        const LatentState truth = step(b0.particles[0], a, p, RngStream(1, 2));
        const Observation o = observe(truth, a, MisreportingRegime::none(), p, RngStream(1, 3), 1);
        const Belief b1 = filter_step(b0, a, o, p, MisreportingRegime::none(), RngStream(9, 9));
        CHECK(b1.cum_loglik == 0.0);
        CHECK(normalized_weights(b1)[0] == 1.0);
        CHECK(b1.week == 1);
    }

    TEST_CASE("impossible observations are reported")
    {
        ModelParams p;
        p.deterministic = true;
        const Belief b0 = init_belief(point_prior(), 3, p, RngStream(1, 1));
        Observation o;
        o.week = 1;
        o.reported_cases_per_100k = 1e6;
        try {
            filter_step(b0, Action::uniform(0), o, p, MisreportingRegime::none(), RngStream(2, 2));
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == "observation_impossible");
            CHECK(std::string(e.what()).find("observation impossible under model") != std::string::npos);
        }
    }

    TEST_CASE("observation week must follow the belief week")
    {
        const ModelParams p;
        const Belief b0 = init_belief(PriorConfig{}, 10, p, RngStream(1, 1));
        Observation o;
        o.week = 3;
        CHECK_THROWS_AS(filter_step(b0, Action::uniform(0), o, p, MisreportingRegime::none(), RngStream(2, 2)), Error);
    }

    TEST_CASE("weights stay normalized and filtering is deterministic")
    {
        ModelParams p;
        p.case_noise_sd = 0.2;
        p.hosp_noise_sd = 0.2;
        p.survey_noise_sd = 0.05;
        LatentState truth = prior_mean_state(PriorConfig{}, p);
        Belief b = init_belief(PriorConfig{}, 500, p, RngStream(3, 0));
        Belief c = b;
        for (int t = 0; t < 15; ++t) {
            const Action a = Action::uniform(t % 5);
            truth = step(truth, a, p, RngStream(4, static_cast<std::uint64_t>(t)));
            const Observation o = observe(truth, a, MisreportingRegime::none(), p, RngStream(5, static_cast<std::uint64_t>(t)), t + 1);
            b = filter_step(b, a, o, p, MisreportingRegime::none(), RngStream(6, static_cast<std::uint64_t>(t)));
            c = filter_step(c, a, o, p, MisreportingRegime::none(), RngStream(6, static_cast<std::uint64_t>(t)));
            REQUIRE(weight_sum(b) == doctest::Approx(1.0).epsilon(1e-9));
            REQUIRE(std::isfinite(b.cum_loglik));
        }
        CHECK(b.particles == c.particles);
        CHECK(b.log_weights == c.log_weights);
        CHECK(b.cum_loglik == c.cum_loglik);
        const auto r = summarize(b, p);
        CHECK(r.week == 15);
        CHECK(r.I.q05 <= r.I.q95);
        CHECK(r.ess >= 1.0);
        CHECK(r.ess <= 500.0);
    }

    TEST_CASE("disabling every channel leaves weights uniform")
    {
        ModelParams p;
        Belief b = init_belief(PriorConfig{}, 50, p, RngStream(3, 0));
        Observation o;
        o.week = 1;
        FilterConfig cfg;
        cfg.channels = ObservationChannels{false, false, false};
        b = filter_step(b, Action::uniform(0), o, p, MisreportingRegime::none(), RngStream(1, 1), cfg);
        CHECK(b.cum_loglik == doctest::Approx(0.0));
        CHECK(ess(b) == doctest::Approx(50.0));
    }

    TEST_CASE("particle likelihood tracks the exact forward algorithm on a toy model")
    {
        const HmmToy toy;
        const auto ys = toy.simulate(20, RngStream(100, 0));
        const double exact = toy.exact_loglik(ys);
        const double pf = toy.particle_loglik(ys, 5000, RngStream(1, 0));
        CHECK(std::abs(pf - exact) < 0.1);
    }

    TEST_CASE("likelihood estimate is unbiased on the toy model")
    {
        const HmmToy toy;
        const auto ys = toy.simulate(5, RngStream(200, 0));
        const double exact = std::exp(toy.exact_loglik(ys));
        const int runs = 100;
        double sum = 0.0;
        double sum_sq = 0.0;
        for (int r = 0; r < runs; ++r) {
            const double v = std::exp(toy.particle_loglik(ys, 100, RngStream(300, static_cast<std::uint64_t>(r))));
            sum += v;
            sum_sq += v * v;
        }
        const double mean = sum / runs;
        const double se = std::sqrt((sum_sq / runs - mean * mean) / runs);
        CHECK(std::abs(mean - exact) <= 3.0 * se);
    }

    TEST_CASE("resampling preserves the likelihood and the weighted mean in expectation")
    {
        const HmmToy toy;
        const auto ys = toy.simulate(10, RngStream(400, 0));
        FilterSettings never{0.0};
        FilterSettings always{2.0};
        // The increment is computed before resampling, so the first step agrees exactly.
        const std::vector<double> first{ys[0]};
        CHECK(toy.particle_loglik(first, 200, RngStream(7, 0), never) ==
              toy.particle_loglik(first, 200, RngStream(7, 0), always));

        const std::vector<double> w{0.1, 0.4, 0.2, 0.3};
        const std::vector<double> f{1.0, -2.0, 5.0, 0.5};
        double target = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            target += w[i] * f[i];
        }
        const int reps = 100;
        double sum = 0.0;
        double sum_sq = 0.0;
        RngStream rng(8, 8);
        for (int r = 0; r < reps; ++r) {
            const auto idx = systematic_resample(w, rng.uniform());
            double m = 0.0;
            for (std::size_t i : idx) {
                m += f[i] / static_cast<double>(idx.size());
            }
            sum += m;
            sum_sq += m * m;
        }
        const double mean = sum / reps;
        const double se = std::sqrt(std::max(1e-30, (sum_sq / reps - mean * mean) / reps));
        CHECK(std::abs(mean - target) <= 3.0 * se + 1e-12);
    }
}
