#pragma once

#include "epiworld/core.hpp"
#include "epiworld/rng.hpp"

namespace epiworld {

/// How a week's action and the current behavioral state translate into
/// contact reduction. Isolated so alternative response forms can be swapped.
struct BehaviorResponse {
    double effective_contact_multiplier = 1.0; ///< 1 - kappa * next_compliance
    double next_compliance = 0.0;
    double next_fatigue = 0.0;
};

BehaviorResponse behavior_response(const LatentState& x, const Action& a, const ModelParams& p);

/// Exogenous inputs applied alongside the action for one week.
struct Exogenous {
    double vaccination = 0.0; ///< fraction of S moved to protected R this week
};

/// One week of the controlled transition kernel. Pure in (x, a, p, rng).
LatentState step(const LatentState& x, const Action& a, const ModelParams& p, RngStream rng,
                 const Exogenous& exo = {});

/// Moves `fraction` of S into protected R. Conserves mass.
LatentState vaccinate(const LatentState& x, double fraction);

/// Transmission rate after season, regime, mixing, and the given contact multiplier.
double effective_beta(const LatentState& x, const ModelParams& p, double contact_multiplier);

/// (beta_eff / gamma) * S under current behavior and regime.
double effective_R(const LatentState& x, const ModelParams& p);

} // namespace epiworld
