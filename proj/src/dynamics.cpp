#include "epiworld/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace epiworld {

BehaviorResponse behavior_response(const LatentState& x, const Action& a, const ModelParams& p)
{
    const double s = stringency(a);
    const double perceived_risk = std::min(1.0, x.I / p.risk_scale);
    BehaviorResponse r;
    r.next_compliance = clamp01(x.compliance + p.lambda_policy * s + p.lambda_risk * perceived_risk -
                                p.lambda_fatigue * x.fatigue);
    r.next_fatigue = clamp01(x.fatigue + p.fatigue_gain * s - p.fatigue_decay);
    r.effective_contact_multiplier = 1.0 - p.kappa * r.next_compliance;
    return r;
}

double effective_beta(const LatentState& x, const ModelParams& p, double contact_multiplier)
{
    const double season = 1.0 + p.season_amplitude * std::sin(2.0 * std::numbers::pi * x.season_phase);
    return p.beta0 * season * x.transmissibility * x.mixing_scale * contact_multiplier;
}

double effective_R(const LatentState& x, const ModelParams& p)
{
    if (p.gamma == 0.0) {
        throw Error("invalid_params", "effective_R is undefined for gamma = 0");
    }
    const double multiplier = 1.0 - p.kappa * x.compliance;
    return effective_beta(x, p, multiplier) / p.gamma * x.S;
}

LatentState vaccinate(const LatentState& x, double fraction)
{
    LatentState y = x;
    const double moved = x.S * clamp01(fraction);
    if (moved <= 0.0) {
        return y;
    }
    const double protected_mass = x.immunity * x.R + moved;
    y.S = x.S - moved;
    y.R = x.R + moved;
    y.immunity = y.R > 0.0 ? clamp01(protected_mass / y.R) : 1.0;
    return y;
}

namespace {

constexpr double kWeeksPerYear = 52.0;

/// Chain-binomial transfer out of a compartment holding `mass`.
class FlowSampler {
public:
    FlowSampler(const ModelParams& p, RngStream& rng) : p_(p), rng_(rng) {}

    double operator()(double mass, double prob)
    {
        prob = clamp01(prob);
        if (mass <= 0.0 || prob <= 0.0) {
            return 0.0;
        }
        if (p_.deterministic) {
            return mass * prob;
        }
        const auto n = static_cast<long long>(std::llround(mass * p_.n_sim));
        if (n <= 0) {
            return 0.0;
        }
        std::binomial_distribution<long long> dist(n, prob);
        return std::min(mass, static_cast<double>(dist(rng_)) / p_.n_sim);
    }

private:
    const ModelParams& p_;
    RngStream& rng_;
};

} // namespace

LatentState step(const LatentState& x0, const Action& a, const ModelParams& p, RngStream rng,
                 const Exogenous& exo)
{
    validate_params(p);
    require_valid(a);
    const LatentState x = exo.vaccination > 0.0 ? vaccinate(x0, exo.vaccination) : x0;
    FlowSampler flow(p, rng);

    const BehaviorResponse br = behavior_response(x, a, p);
    const double beta = effective_beta(x, p, br.effective_contact_multiplier);

    const double infections = flow(x.S, 1.0 - std::exp(-beta * x.I));
    const double onsets = flow(x.E, p.sigma);
    const double exits = flow(x.I, p.gamma);
    const double to_hospital = std::min(exits, flow(exits, p.ihr));
    const double recoveries = exits - to_hospital;
    const double in_hospital = x.hospitalized();
    const double discharges = flow(in_hospital, 1.0 / p.hosp_stay);
    const double protected_mass = x.immunity * x.R;
    const double unprotected = std::max(0.0, x.R - protected_mass);
    const double waning_prob = 1.0 - std::exp(-p.waning_rate);
    const double waned = flow(unprotected, waning_prob);

    LatentState y = x;
    y.S = x.S - infections + waned;
    y.E = x.E + infections - onsets;
    y.I = x.I + onsets - exits;
    y.R = x.R + recoveries + discharges - waned;
    y.Hosp = x.Hosp + to_hospital - discharges;
    y.new_infections = infections;

    const auto lag = static_cast<std::size_t>(p.hosp_lag);
    if (lag == 0) {
        y.hosp_pipeline.clear();
        y.new_admissions = to_hospital + x.pipeline_mass();
    } else {
        y.hosp_pipeline.resize(lag, 0.0);
        y.new_admissions = y.hosp_pipeline.front();
        y.hosp_pipeline.erase(y.hosp_pipeline.begin());
        y.hosp_pipeline.push_back(to_hospital);
    }

    const double still_protected = protected_mass * (1.0 - waning_prob) + recoveries + discharges;
    y.immunity = y.R > 0.0 ? clamp01(still_protected / y.R) : 1.0;

    y.compliance = br.next_compliance;
    y.fatigue = br.next_fatigue;

    if (!p.deterministic && p.jump_prob > 0.0 && rng.uniform() < p.jump_prob) {
        y.transmissibility = x.transmissibility * std::exp(p.jump_log_mean + p.jump_log_sd * rng.normal());
    }
    y.season_phase = std::fmod(x.season_phase + 1.0 / kWeeksPerYear, 1.0);
    return y;
}

} // namespace epiworld
