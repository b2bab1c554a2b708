#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "epiworld/policy.hpp"
#include "epiworld/rollout.hpp"

namespace epiworld {

// ---------------------------------------------------------------------------
// Cross-entropy method over action sequences

struct CemConfig {
    std::size_t population = 64;
    std::size_t elites = 8;
    int iterations = 10;
    double smoothing = 0.7;       ///< weight on the elite frequencies when refitting
    double min_probability = 0.0; ///< floor applied before renormalizing
    std::size_t samples = 8;      ///< rollouts per candidate (cem_plan only)
};

void validate_cem(const CemConfig& c);

struct CandidateScore {
    double score = 0.0;
    bool feasible = true;
};

/// Orders scores the way `evaluate` ranks candidates.
bool better(const CandidateScore& a, const CandidateScore& b);

struct CemIteration {
    int iteration = 0;
    double best_ever = 0.0;
    bool best_ever_feasible = true;
    double elite_mean = 0.0;
    double population_mean = 0.0;
};

/// probs[week][dim][level]
using SequenceDistribution = std::vector<std::vector<std::array<double, kMaxLevel + 1>>>;

struct CemResult {
    ActionSequence best;
    CandidateScore best_score;
    std::vector<CemIteration> trace;
    std::vector<SequenceDistribution> distributions; ///< after each refit
};

using BatchEvaluator = std::function<std::vector<CandidateScore>(const std::vector<ActionSequence>&)>;

CemResult cem_optimize(std::size_t horizon, const CemConfig& config, const BatchEvaluator& evaluate_batch,
                       const RngStream& rng);

/// CEM with each candidate scored by `samples` belief-sampled rollouts under
/// common random numbers (sample k uses the same stream for every candidate).
CemResult cem_plan(const Belief& belief, std::size_t horizon, const CemConfig& config, const RewardSpec& reward,
                   const ModelParams& p, const MisreportingRegime& regime, std::uint64_t seed,
                   const RolloutOptions& options = {}, const std::vector<double>& vaccination = {});

// ---------------------------------------------------------------------------
// Group-relative policy gradient for softmax policies

inline constexpr double kAdvantageEpsilon = 1e-8;

/// One on-policy trajectory: per-week features and the chosen level per dim.
struct GroupSample {
    std::vector<std::vector<double>> features;
    std::vector<std::vector<int>> levels;
    double reward = 0.0;
};

/// A[i] = (R_i - mean R) / (std R + eps), population std.
std::vector<double> group_advantages(const std::vector<GroupSample>& group);

double log_prob(const SoftmaxPolicy& policy, const GroupSample& sample);

/// Σ_i A_i log π(actions_i); advantages are held fixed.
double grpo_surrogate(const SoftmaxPolicy& policy, const std::vector<GroupSample>& group,
                      const std::vector<double>& advantages);

/// Gradient of the surrogate, shaped [dim][level][feature].
using SoftmaxGradient = std::vector<std::vector<std::vector<double>>>;
SoftmaxGradient grpo_gradient(const SoftmaxPolicy& policy, const std::vector<GroupSample>& group,
                              const std::vector<double>& advantages);

SoftmaxPolicy grpo_step(const SoftmaxPolicy& policy, const std::vector<GroupSample>& group, double learning_rate);

struct GrpoConfig {
    std::size_t group_size = 16;
    int steps = 200;
    double learning_rate = 0.05;
};

struct GrpoResult {
    SoftmaxPolicy policy;
    std::vector<double> mean_reward; ///< per step, before the update
};

using GroupSampler = std::function<GroupSample(const SoftmaxPolicy&, const RngStream&)>;

/// Sample i of step s uses rng.derive(s).derive(i).
GrpoResult grpo_train(const SoftmaxPolicy& initial, const GroupSampler& sampler, const GrpoConfig& config,
                      const RngStream& rng);

/// Closed-loop world-model episodes from `start`, rewarded by `reward` over
/// the rollout's outcome metrics.
GroupSampler closed_loop_sampler(LatentState start, ModelParams truth, MisreportingRegime regime,
                                 ClosedLoopOptions options, RewardSpec reward);

// ---------------------------------------------------------------------------
// Iterative feedback for threshold policies

struct FeedbackRecord {
    ThresholdPolicy spec;
    double score = 0.0;
    std::string edit; ///< e.g. "rule 0 threshold down"; empty for evaluations
    bool accepted = false;
};

struct FeedbackResult {
    ThresholdPolicy spec;
    double score = 0.0;
    std::vector<FeedbackRecord> history;
};

using PolicyScorer = std::function<double(const ThresholdPolicy&)>;

/// Accept-if-better hill climbing over rule thresholds and levels, spending
/// at most `rule_budget` trial edits. The most recent accepted edit in
/// `history` is retried first.
FeedbackResult iterate_feedback(const ThresholdPolicy& spec, std::vector<FeedbackRecord> history, int rule_budget,
                                const PolicyScorer& scorer, const RngStream& rng, double threshold_step = 0.15);

} // namespace epiworld
