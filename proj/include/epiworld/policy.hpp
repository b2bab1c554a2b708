#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "epiworld/core.hpp"
#include "epiworld/filter.hpp"
#include "epiworld/rollout.hpp"

namespace epiworld {

/// What a policy sees when choosing the week's action.
struct InfoSummary {
    int week = 0;
    double mean_I = 0.0;
    double effective_R = 0.0;
    double survey_compliance = 0.0;
};

enum class Feature { Infected, EffectiveR, SurveyCompliance };
enum class Trigger { Above, Below };

std::string to_string(Feature f);
Feature parse_feature(const std::string& s);
std::string to_string(Trigger t);
Trigger parse_trigger(const std::string& s);

double feature_value(const InfoSummary& info, Feature f);

/// Raise `dims` to at least `level` when the feature crosses the threshold.
struct ThresholdRule {
    Feature feature = Feature::EffectiveR;
    Trigger trigger = Trigger::Above;
    double threshold = 1.0;
    std::vector<int> dims;
    int level = kMaxLevel;

    friend bool operator==(const ThresholdRule&, const ThresholdRule&) = default;
};

struct ThresholdPolicy {
    std::vector<int> base = std::vector<int>(kActionDims, 0);
    std::vector<ThresholdRule> rules;

    friend bool operator==(const ThresholdPolicy&, const ThresholdPolicy&) = default;
};

struct ReplayPolicy {
    ActionSequence table;

    friend bool operator==(const ReplayPolicy&, const ReplayPolicy&) = default;
};

/// Categorical over `levels` with logits = weights · features / temperature.
struct SoftmaxDim {
    std::vector<int> levels{0, 1, 2, 3, 4};
    std::vector<std::vector<double>> weights; ///< [level][feature]

    friend bool operator==(const SoftmaxDim&, const SoftmaxDim&) = default;
};

struct SoftmaxPolicy {
    std::vector<SoftmaxDim> dims;
    double temperature = 1.0;

    /// Zero weights (uniform categorical) over every level of every dim.
    static SoftmaxPolicy uniform(std::size_t n_dims = kActionDims, double temperature = 1.0);

    friend bool operator==(const SoftmaxPolicy&, const SoftmaxPolicy&) = default;
};

using PolicySpec = std::variant<ReplayPolicy, ThresholdPolicy, SoftmaxPolicy>;

std::string policy_kind(const PolicySpec& spec);
void validate_policy(const PolicySpec& spec);

inline constexpr std::size_t kPolicyFeatures = 4;

/// (1, infected per 100, effective_R, survey compliance).
std::vector<double> policy_features(const InfoSummary& info);

std::vector<double> softmax_probabilities(const SoftmaxDim& dim, const std::vector<double>& features,
                                          double temperature);

/// Samples one level index per dim.
std::vector<int> sample_softmax_levels(const SoftmaxPolicy& policy, const std::vector<double>& features,
                                       RngStream rng);

Action propose(const PolicySpec& spec, const InfoSummary& info, int week, RngStream rng);

// ---------------------------------------------------------------------------
// Metrics

/// Percentage of (week, dim) cells with an exact ordinal match.
double alignment(const ActionSequence& proposed, const ActionSequence& realized);

/// 100 * (start - end) / start.
double hosp_reduction(const std::vector<double>& series);
/// Mean of per-series reductions.
double hosp_reduction_mean_of_series(const std::vector<std::vector<double>>& series);
/// Reduction of the cross-series mean start and end values.
double hosp_reduction_pooled(const std::vector<std::vector<double>>& series);

// ---------------------------------------------------------------------------
// Closed-loop execution in the world model

enum class InfoSource {
    Latent,   ///< oracle access to the simulated state
    Observed, ///< naive estimates that take reports at face value
    Filtered, ///< posterior means from a particle filter over the analyst's model
};

std::string to_string(InfoSource s);
InfoSource parse_info_source(const std::string& s);

struct ClosedLoopOptions {
    int horizon = 6;
    InfoSource source = InfoSource::Latent;
    double icu_capacity = kDefaultIcuCapacity;
    int start_week = 0;
    std::vector<double> vaccination;
    // Filtered source only: the analyst's model.
    std::optional<ModelParams> analyst_params;
    MisreportingRegime analyst_regime;
    PriorConfig analyst_prior;
    std::size_t particles = 200;
    FilterConfig filter;
};

struct ClosedLoopResult {
    RolloutResult rollout;
    std::vector<InfoSummary> info;              ///< what the policy saw each week
    std::vector<std::vector<double>> features;  ///< policy_features(info[w])
    std::vector<double> true_effective_R;       ///< after each week's transition
};

/// Executes the policy week by week against the simulator. Week w uses
/// rng.derive(w).derive(k) with k = 0 dynamics, 1 observation, 2 policy,
/// 3 filter; dynamics and observation streams match open-loop rollout.
ClosedLoopResult run_closed_loop(const LatentState& start, const PolicySpec& policy, const ModelParams& truth,
                                 const MisreportingRegime& regime, const RngStream& rng,
                                 const ClosedLoopOptions& options);

/// First 1-based week with true effective_R < 1, if any.
std::optional<int> weeks_to_control(const ClosedLoopResult& r);

} // namespace epiworld
