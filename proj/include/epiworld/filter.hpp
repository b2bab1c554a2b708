#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "epiworld/core.hpp"
#include "epiworld/dynamics.hpp"
#include "epiworld/observation.hpp"
#include "epiworld/parallel.hpp"
#include "epiworld/rng.hpp"

namespace epiworld {

/// Weighted particle approximation of the filtering distribution, plus the
/// running log-likelihood estimate. Log-weights are kept normalized.
template <class State>
struct ParticleBelief {
    std::vector<State> particles;
    std::vector<double> log_weights;
    double cum_loglik = 0.0;
    int week = 0;

    std::size_t size() const noexcept { return particles.size(); }
};

inline double log_sum_exp(const std::vector<double>& v)
{
    const double m = v.empty() ? -std::numeric_limits<double>::infinity() : *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) {
        return m;
    }
    double s = 0.0;
    for (double x : v) {
        s += std::exp(x - m);
    }
    return m + std::log(s);
}

template <class State>
std::vector<double> normalized_weights(const ParticleBelief<State>& bel)
{
    std::vector<double> w(bel.log_weights.size());
    const double lse = log_sum_exp(bel.log_weights);
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(bel.log_weights[i] - lse);
    }
    return w;
}

inline double ess_of(const std::vector<double>& normalized)
{
    double s = 0.0;
    for (double w : normalized) {
        s += w * w;
    }
    return 1.0 / s;
}

template <class State>
double ess(const ParticleBelief<State>& bel)
{
    return ess_of(normalized_weights(bel));
}

/// Systematic resampling: one uniform offset, P evenly spaced pointers.
inline std::vector<std::size_t> systematic_resample(const std::vector<double>& normalized, double u0)
{
    const std::size_t n = normalized.size();
    std::vector<std::size_t> idx(n);
    double cumulative = normalized.empty() ? 0.0 : normalized[0];
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double u = (u0 + static_cast<double>(i)) / static_cast<double>(n);
        while (u > cumulative && j + 1 < n) {
            ++j;
            cumulative += normalized[j];
        }
        idx[i] = j;
    }
    return idx;
}

struct FilterSettings {
    double resample_threshold = 0.5; ///< resample when ESS < threshold * P
};

/// Stream keys used inside a filter step.
inline constexpr std::uint64_t kResampleStream = 0xfffffffffffffff0ULL;

/// One bootstrap filter step for any state-space model.
///
/// propagate(const State&, RngStream) -> State samples the transition;
/// loglik(const State&) -> double scores the new observation. Particle i
/// uses rng.derive(i), so results do not depend on thread count.
template <class State, class Propagate, class LogLik>
ParticleBelief<State> bootstrap_step(const ParticleBelief<State>& bel, Propagate&& propagate, LogLik&& loglik,
                                     const RngStream& rng, const FilterSettings& settings = {})
{
    const std::size_t n = bel.size();
    if (n == 0 || bel.log_weights.size() != n) {
        throw Error("invalid_belief", "belief must hold at least one particle with matching weights");
    }
    ParticleBelief<State> next;
    next.particles.resize(n);
    std::vector<double> ll(n);
    parallel_for(
        n,
        [&](std::size_t i) {
            next.particles[i] = propagate(bel.particles[i], rng.derive(i));
            ll[i] = loglik(next.particles[i]);
        },
        256);

    const double prior_lse = log_sum_exp(bel.log_weights);
    next.log_weights.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        next.log_weights[i] = (bel.log_weights[i] - prior_lse) + ll[i];
    }
    const double increment = log_sum_exp(next.log_weights);
    if (!std::isfinite(increment)) {
        throw Error("observation_impossible", "observation impossible under model: every particle has zero weight");
    }
    for (auto& lw : next.log_weights) {
        lw -= increment;
    }
    next.cum_loglik = bel.cum_loglik + increment;
    next.week = bel.week + 1;

    const auto w = normalized_weights(next);
    if (ess_of(w) < settings.resample_threshold * static_cast<double>(n)) {
        RngStream r = rng.derive(kResampleStream);
        const auto idx = systematic_resample(w, r.uniform());
        std::vector<State> resampled;
        resampled.reserve(n);
        for (std::size_t i : idx) {
            resampled.push_back(next.particles[i]);
        }
        next.particles = std::move(resampled);
        next.log_weights.assign(n, -std::log(static_cast<double>(n)));
    }
    return next;
}

// ---------------------------------------------------------------------------
// Epidemic instantiation

using Belief = ParticleBelief<LatentState>;

/// Uniform prior ranges over the initial state; other fields are fixed.
struct Range {
    double lo = 0.0;
    double hi = 0.0;
    friend bool operator==(const Range&, const Range&) = default;
};

struct PriorConfig {
    Range I{0.001, 0.005};
    Range E{0.001, 0.005};
    Range compliance{0.1, 0.3};
    Range transmissibility{0.9, 1.1};
    double R = 0.0;
    double fatigue = 0.0;
    double immunity = 1.0;
    double mixing_scale = 1.0;
    double season_phase = 0.0;

    friend bool operator==(const PriorConfig&, const PriorConfig&) = default;
};

void validate_prior(const PriorConfig& prior);

/// Prior midpoint as a single state (used for point priors and simulators).
LatentState prior_mean_state(const PriorConfig& prior, const ModelParams& p);
LatentState sample_prior(const PriorConfig& prior, const ModelParams& p, RngStream rng);

Belief init_belief(const PriorConfig& prior, std::size_t particles, const ModelParams& p, const RngStream& rng);

struct FilterConfig {
    ObservationChannels channels;
    FilterSettings settings;
};

/// `exo` is the known exogenous input applied alongside `a` (e.g. vaccination).
Belief filter_step(const Belief& bel, const Action& a, const Observation& o, const ModelParams& p,
                   const MisreportingRegime& regime, const RngStream& rng, const FilterConfig& config = {},
                   const Exogenous& exo = {});

/// Weighted posterior summaries for one week.
struct Quantiles {
    double mean = 0.0;
    double q05 = 0.0;
    double q95 = 0.0;
};

struct BeliefReport {
    int week = 0;
    Quantiles I;
    Quantiles compliance;
    Quantiles transmissibility;
    Quantiles effective_R;
    double ess = 0.0;
    double cum_loglik = 0.0;
};

double weighted_quantile(std::vector<std::pair<double, double>> value_weight, double q);
BeliefReport summarize(const Belief& bel, const ModelParams& p);

} // namespace epiworld
