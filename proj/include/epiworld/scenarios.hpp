#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "epiworld/config.hpp"

namespace epiworld {

/// Initial latent state of a scenario's true world.
LatentState initial_state(const ScenarioConfig& s, std::uint64_t seed);

/// Seed used when neither the config nor the caller provides one.
std::uint64_t scenario_seed(const ScenarioConfig& s, std::optional<std::uint64_t> override_seed);

// ---------------------------------------------------------------------------
// Misreporting

struct MisreportingRun {
    std::string regime; ///< "none", "mixed", "pure"
    MisreportingRegime spec;
    std::optional<int> weeks_to_control;
    ClosedLoopResult result;
};

struct MisreportingTable {
    std::vector<MisreportingRun> runs; ///< none, mixed, pure
    bool ordered = false;              ///< none <= mixed <= pure, none < pure ("never" is +inf)
};

/// None/Mixed/Pure regimes under one controller, all sharing `seed`.
MisreportingTable run_case_misreporting(const ScenarioConfig& base, const MisreportingCase& c, std::uint64_t seed);

/// Sorts "never" after every finite week.
bool weeks_le(const std::optional<int>& a, const std::optional<int>& b);
bool weeks_lt(const std::optional<int>& a, const std::optional<int>& b);

// ---------------------------------------------------------------------------
// Backfill

struct BackfillProfileResult {
    std::string name;
    std::vector<double> profile;
    RevisionTriangle triangle;
    std::vector<std::size_t> stabilization; ///< per event week
    double median_stabilization = 0.0;
};

struct BackfillTable {
    std::vector<long long> final_counts;
    std::vector<BackfillProfileResult> profiles;
};

/// Final weekly case counts from one rollout, triangles per profile, and
/// per-week stabilization times at `c.tol`.
BackfillTable run_case_backfill(const ScenarioConfig& base, const BackfillCase& c, std::uint64_t seed);

double median(std::vector<double> v);

// ---------------------------------------------------------------------------
// Counterfactual

enum class Verdict { LowerAndDelayed, NotLowerAndDelayed, NoDivergence };

std::string to_string(Verdict v);

struct CounterfactualReport {
    InterventionPlan baseline_plan;
    InterventionPlan counterfactual_plan;
    CounterfactualPair pair;
    std::size_t divergence_week = 0;
    bool prefix_identical = false; ///< trajectories bit-identical before divergence
    Verdict verdict = Verdict::NoDivergence;
};

/// Alternative peak is strictly lower and its peak week is not earlier.
Verdict counterfactual_verdict(const RolloutResult& baseline, const RolloutResult& alternative);

/// Baseline vaccinates from `vaccination_start`; the counterfactual starts
/// at `counterfactual_vaccination_start` and raises masking dims, both no
/// earlier than the divergence week.
std::pair<InterventionPlan, InterventionPlan> counterfactual_plans(const ScenarioConfig& base,
                                                                   const CounterfactualCase& c);

CounterfactualReport run_case_counterfactual(const ScenarioConfig& base, const CounterfactualCase& c,
                                             std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticRegion {
    ModelParams params;
    LatentState start;
    RolloutResult rollout; ///< ground-truth latents, actions, observations
};

struct SyntheticDataset {
    std::uint64_t seed = 0;
    std::vector<SyntheticRegion> regions;
};

/// Region r draws parameters, its start state, and a persistent random
/// action walk from derive_stream(seed, r); observations come from rollout().
SyntheticDataset gen_synthetic(const ScenarioConfig& base, const SyntheticCase& c, int n_regions, int weeks,
                               std::uint64_t seed);

// ---------------------------------------------------------------------------
// OxCGRT-format ingestion

struct IngestGap {
    std::string region;
    int week = 0;
};

struct IngestResult {
    std::map<std::string, ActionSequence> regions; ///< sorted by region name
    std::vector<IngestGap> gaps;                   ///< weeks filled from the previous week
    std::vector<std::string> warnings;
    std::vector<std::pair<double, double>> native_ranges; ///< per dim (min, max)
};

/// Columns: region, week, and one column per action name. Each indicator
/// column is min-max mapped onto 0..4 and rounded. Blank cells repeat the
/// previous week's level with a warning.
IngestResult ingest_oxcgrt(std::istream& csv, const std::array<std::string, kActionDims>& names);

// ---------------------------------------------------------------------------
// Policy evaluation preset

struct PolicyEvalRow {
    std::string policy;
    double alignment = 0.0;            ///< pooled over regions
    double hosp_reduction_mean = 0.0;  ///< mean of per-region reductions
    double hosp_reduction_pooled = 0.0;
    std::vector<double> region_alignment;
    std::vector<double> region_hosp_reduction;
};

struct PolicyEvalReport {
    SyntheticDataset dataset;
    std::vector<PolicyEvalRow> rows; ///< replay, threshold, softmax
};

/// Synthetic regions observed for `history_weeks`; each policy then runs
/// closed-loop for `horizon` weeks from the realized state and is compared
/// with the realized actions over the same window.
PolicyEvalReport run_policy_eval(const ScenarioConfig& base, const PolicyEvalCase& c, const SyntheticCase& synth,
                                 std::uint64_t seed);

} // namespace epiworld
