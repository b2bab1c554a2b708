#pragma once

#include <cmath>
#include <vector>

#include "epiworld/dynamics.hpp"

namespace epiworld::testing {

/// Random valid state with unit mass and a filled hospital pipeline.
inline LatentState random_state(RngStream& rng, int hosp_lag = 1)
{
    std::vector<double> parts(5);
    double total = 0.0;
    for (auto& v : parts) {
        v = rng.uniform() + 1e-3;
        total += v;
    }
    LatentState x;
    x.S = parts[0] / total;
    x.E = parts[1] / total * 0.2;
    x.I = parts[2] / total * 0.2;
    x.Hosp = parts[3] / total * 0.05;
    x.R = 1.0 - x.S - x.E - x.I - x.Hosp;
    x.hosp_pipeline.assign(static_cast<std::size_t>(hosp_lag), 0.0);
    for (auto& v : x.hosp_pipeline) {
        v = x.Hosp * 0.3 * rng.uniform() / static_cast<double>(hosp_lag);
    }
    x.immunity = rng.uniform();
    x.mixing_scale = 0.5 + rng.uniform();
    x.compliance = rng.uniform();
    x.fatigue = rng.uniform();
    x.transmissibility = 0.5 + rng.uniform();
    x.season_phase = rng.uniform();
    return x;
}

inline Action random_action(RngStream& rng, int week = 0)
{
    Action a;
    a.week = week;
    for (auto& d : a.dims) {
        d = static_cast<int>(rng() % (kMaxLevel + 1));
    }
    return a;
}

inline ModelParams random_params(RngStream& rng)
{
    ModelParams p;
    p.beta0 = 0.5 + 3.0 * rng.uniform();
    p.sigma = rng.uniform();
    p.gamma = 0.05 + 0.95 * rng.uniform();
    p.season_amplitude = 0.3 * rng.uniform();
    p.ihr = 0.1 * rng.uniform();
    p.hosp_lag = static_cast<int>(rng() % 4);
    p.hosp_stay = 1.0 + 5.0 * rng.uniform();
    p.waning_rate = 0.2 * rng.uniform();
    p.kappa = rng.uniform();
    p.jump_prob = 0.2 * rng.uniform();
    p.n_sim = 1e3 + 1e6 * rng.uniform();
    return p;
}

/// Behavior frozen at zero compliance so transmission is beta0-driven.
inline ModelParams inert_behavior(ModelParams p)
{
    p.kappa = 0.0;
    p.lambda_policy = 0.0;
    p.lambda_risk = 0.0;
    p.lambda_fatigue = 0.0;
    p.fatigue_gain = 0.0;
    p.fatigue_decay = 0.0;
    return p;
}

} // namespace epiworld::testing
