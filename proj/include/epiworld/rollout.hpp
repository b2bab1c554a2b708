#pragma once

#include <cstdint>
#include <vector>

#include "epiworld/core.hpp"
#include "epiworld/filter.hpp"
#include "epiworld/observation.hpp"
#include "epiworld/rng.hpp"

namespace epiworld {

inline constexpr double kDefaultIcuCapacity = 30.0;

struct OutcomeMetrics {
    double cumulative_infections = 0.0; ///< population fraction infected over the horizon
    double peak_hosp_per_100k = 0.0;    ///< peak weekly admissions
    int peak_week = 0;                  ///< 1-based; 0 only when H = 0
    int icu_violation_weeks = 0;
    double end_hosp_per_100k = 0.0;

    friend bool operator==(const OutcomeMetrics&, const OutcomeMetrics&) = default;
};

/// Actions plus the exogenous vaccination schedule for the same weeks.
/// A short vaccination vector is padded with zeros.
struct InterventionPlan {
    ActionSequence actions;
    std::vector<double> vaccination;

    double vaccination_at(std::size_t week) const
    {
        return week < vaccination.size() ? vaccination[week] : 0.0;
    }
};

struct RolloutResult {
    std::vector<LatentState> trajectory;
    std::vector<Observation> observations;
    OutcomeMetrics metrics;
    InterventionPlan plan;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
};

struct RolloutOptions {
    double icu_capacity = kDefaultIcuCapacity; ///< weekly admissions per 100k
    int start_week = 0;
};

/// Open-loop rollout from a known state. Week w draws dynamics from
/// rng.derive(w).derive(0) and observations from rng.derive(w).derive(1),
/// so two plans sharing a prefix share its randomness.
RolloutResult rollout(const LatentState& start, const InterventionPlan& plan, const ModelParams& p,
                      const MisreportingRegime& regime, const RngStream& rng, const RolloutOptions& options = {});

/// Samples one particle by weight, then rolls out from it.
RolloutResult rollout(const Belief& start, const InterventionPlan& plan, const ModelParams& p,
                      const MisreportingRegime& regime, const RngStream& rng, RolloutOptions options = {});

OutcomeMetrics compute_metrics(const std::vector<LatentState>& trajectory, double icu_capacity);

std::size_t sample_particle(const Belief& bel, RngStream rng);

/// Paired rollouts under common random numbers. Plans must agree strictly
/// before `divergence_week`.
struct CounterfactualPair {
    RolloutResult baseline;
    RolloutResult alternative;
};

template <class Start>
CounterfactualPair counterfactual_compare(const Start& start, const InterventionPlan& baseline,
                                          const InterventionPlan& alternative, std::size_t divergence_week,
                                          const ModelParams& p, const MisreportingRegime& regime, std::uint64_t seed,
                                          const RolloutOptions& options = {});

void require_shared_prefix(const InterventionPlan& a, const InterventionPlan& b, std::size_t divergence_week);

// ---------------------------------------------------------------------------
// Evaluation

/// Linear reward over mean outcome metrics (higher is better), with the ICU
/// constraint optionally treated as hard.
struct RewardSpec {
    double cumulative_infections = 0.0;
    double peak_hosp = 0.0;
    double peak_week = 0.0;
    double icu_violation_weeks = 0.0;
    double end_hosp = -1.0; ///< terminal term
    bool icu_hard_constraint = true;

    friend bool operator==(const RewardSpec&, const RewardSpec&) = default;
};

void validate_reward(const RewardSpec& r);

struct MeanMetrics {
    double cumulative_infections = 0.0;
    double peak_hosp_per_100k = 0.0;
    double peak_week = 0.0;
    double icu_violation_weeks = 0.0;
    double end_hosp_per_100k = 0.0;
};

MeanMetrics mean_metrics(const std::vector<RolloutResult>& samples);
double score(const MeanMetrics& m, const RewardSpec& reward);

struct CandidateEvaluation {
    std::size_t index = 0;
    std::size_t rank = 0; ///< 1-based
    double score = 0.0;
    bool feasible = true;
    MeanMetrics metrics;
};

/// Ranks candidates: feasible before infeasible (when the constraint is
/// hard), then by score descending, then by index.
std::vector<CandidateEvaluation> evaluate(const std::vector<std::vector<RolloutResult>>& candidates,
                                          const RewardSpec& reward);

/// Orders precomputed (score, feasible) pairs with the same rule as evaluate.
std::vector<std::size_t> rank_order(const std::vector<double>& scores, const std::vector<bool>& feasible);

/// Per-week quantiles across samples of one series.
struct FanChart {
    std::vector<double> quantile_levels;
    std::vector<std::vector<double>> weeks; ///< weeks[w][q]
};

FanChart fan_chart(const std::vector<std::vector<double>>& sample_series,
                   const std::vector<double>& levels = {0.05, 0.25, 0.5, 0.75, 0.95});

std::vector<double> hosp_series(const RolloutResult& r);
std::vector<double> observed_hosp_series(const RolloutResult& r);

} // namespace epiworld
