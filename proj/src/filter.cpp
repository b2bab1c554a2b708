#include "epiworld/filter.hpp"

#include "epiworld/dynamics.hpp"

namespace epiworld {

void validate_prior(const PriorConfig& prior)
{
    std::vector<std::string> d;
    auto range = [&](const Range& r, const char* name, double lo, double hi) {
        if (!(r.lo <= r.hi)) {
            d.push_back(std::string(name) + " prior range is empty");
        } else if (r.lo < lo || r.hi > hi) {
            d.push_back(std::string(name) + " prior range leaves its domain");
        }
    };
    range(prior.I, "I", 0.0, 1.0);
    range(prior.E, "E", 0.0, 1.0);
    range(prior.compliance, "compliance", 0.0, 1.0);
    range(prior.transmissibility, "transmissibility", 1e-12, 1e12);
    if (prior.I.hi + prior.E.hi + prior.R > 1.0) {
        d.push_back("prior mass of E, I, R exceeds 1");
    }
    if (!(prior.R >= 0.0)) {
        d.push_back("R must be nonnegative");
    }
    if (!(prior.fatigue >= 0.0 && prior.fatigue <= 1.0) || !(prior.immunity >= 0.0 && prior.immunity <= 1.0)) {
        d.push_back("fatigue and immunity must lie in [0,1]");
    }
    if (!(prior.mixing_scale > 0.0 && prior.mixing_scale <= 2.0)) {
        d.push_back("mixing_scale must lie in (0,2]");
    }
    if (!(prior.season_phase >= 0.0 && prior.season_phase < 1.0)) {
        d.push_back("season_phase must lie in [0,1)");
    }
    if (!d.empty()) {
        throw Error("invalid_prior", "prior configuration is invalid", std::move(d));
    }
}

namespace {

LatentState make_state(const PriorConfig& prior, const ModelParams& p, double I, double E, double b, double m)
{
    LatentState x;
    x.I = I;
    x.E = E;
    x.R = prior.R;
    x.Hosp = 0.0;
    x.S = 1.0 - I - E - prior.R;
    x.hosp_pipeline.assign(static_cast<std::size_t>(std::max(0, p.hosp_lag)), 0.0);
    x.immunity = prior.immunity;
    x.mixing_scale = prior.mixing_scale;
    x.compliance = b;
    x.fatigue = prior.fatigue;
    x.transmissibility = m;
    x.season_phase = prior.season_phase;
    return x;
}

double mid(const Range& r) { return 0.5 * (r.lo + r.hi); }

double draw(const Range& r, RngStream& rng) { return r.lo + (r.hi - r.lo) * rng.uniform(); }

} // namespace

LatentState prior_mean_state(const PriorConfig& prior, const ModelParams& p)
{
    validate_prior(prior);
    return make_state(prior, p, mid(prior.I), mid(prior.E), mid(prior.compliance), mid(prior.transmissibility));
}

LatentState sample_prior(const PriorConfig& prior, const ModelParams& p, RngStream rng)
{
    validate_prior(prior);
    const double I = draw(prior.I, rng);
    const double E = draw(prior.E, rng);
    const double b = draw(prior.compliance, rng);
    const double m = draw(prior.transmissibility, rng);
    return make_state(prior, p, I, E, b, m);
}

Belief init_belief(const PriorConfig& prior, std::size_t particles, const ModelParams& p, const RngStream& rng)
{
    if (particles == 0) {
        throw Error("invalid_belief", "particle count must be >= 1");
    }
    validate_prior(prior);
    Belief bel;
    bel.particles.resize(particles);
    for (std::size_t i = 0; i < particles; ++i) {
        bel.particles[i] = sample_prior(prior, p, rng.derive(i));
    }
    bel.log_weights.assign(particles, -std::log(static_cast<double>(particles)));
    return bel;
}

Belief filter_step(const Belief& bel, const Action& a, const Observation& o, const ModelParams& p,
                   const MisreportingRegime& regime, const RngStream& rng, const FilterConfig& config,
                   const Exogenous& exo)
{
    if (o.week != bel.week + 1) {
        throw Error("week_mismatch", "observation week " + std::to_string(o.week) + " does not follow belief week " +
                                         std::to_string(bel.week));
    }
    validate_params(p);
    require_valid(a);
    return bootstrap_step(
        bel, [&](const LatentState& x, RngStream r) { return step(x, a, p, r, exo); },
        [&](const LatentState& x) { return observation_log_density(x, a, o, regime, p, config.channels); }, rng,
        config.settings);
}

double weighted_quantile(std::vector<std::pair<double, double>> vw, double q)
{
    if (vw.empty()) {
        return 0.0;
    }
    std::sort(vw.begin(), vw.end());
    double total = 0.0;
    for (const auto& [v, w] : vw) {
        total += w;
    }
    double cum = 0.0;
    for (const auto& [v, w] : vw) {
        cum += w;
        if (cum >= q * total) {
            return v;
        }
    }
    return vw.back().first;
}

BeliefReport summarize(const Belief& bel, const ModelParams& p)
{
    const auto w = normalized_weights(bel);
    auto quantiles = [&](auto&& field) {
        std::vector<std::pair<double, double>> vw(bel.size());
        Quantiles q;
        for (std::size_t i = 0; i < bel.size(); ++i) {
            vw[i] = {field(bel.particles[i]), w[i]};
            q.mean += w[i] * vw[i].first;
        }
        q.q05 = weighted_quantile(vw, 0.05);
        q.q95 = weighted_quantile(vw, 0.95);
        return q;
    };
    BeliefReport r;
    r.week = bel.week;
    r.I = quantiles([](const LatentState& x) { return x.I; });
    r.compliance = quantiles([](const LatentState& x) { return x.compliance; });
    r.transmissibility = quantiles([](const LatentState& x) { return x.transmissibility; });
    r.effective_R = quantiles([&](const LatentState& x) { return effective_R(x, p); });
    r.ess = ess_of(w);
    r.cum_loglik = bel.cum_loglik;
    return r;
}

} // namespace epiworld
