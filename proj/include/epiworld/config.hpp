#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "epiworld/calibrate.hpp"
#include "epiworld/io.hpp"
#include "epiworld/optimize.hpp"
#include "epiworld/policy.hpp"
#include "epiworld/rollout.hpp"

namespace epiworld {

/// Everything needed to simulate one region: model, truth, initial state,
/// interventions, and seeds.
struct ScenarioConfig {
    ModelParams params;                ///< the analyst's model
    std::optional<ModelParams> truth;  ///< held-out world; defaults to params
    MisreportingRegime regime;
    PriorConfig prior;
    bool sample_truth_init = false;    ///< otherwise the prior midpoint
    int horizon = 26;
    int start_week = 0;
    std::optional<std::uint64_t> seed;
    double icu_capacity = kDefaultIcuCapacity;
    std::size_t particles = 500;
    int base_level = 0;                ///< fills weeks the schedule leaves open
    ActionSequence actions;            ///< explicit schedule, weeks 0..
    std::vector<double> vaccination;   ///< per-week S -> R fraction
    FilterConfig filter;
    std::optional<PolicySpec> policy;
    InfoSource policy_source = InfoSource::Observed;

    const ModelParams& truth_params() const { return truth ? *truth : params; }
    /// Schedule padded to `weeks` with `base_level`, plus vaccination.
    InterventionPlan plan(int weeks) const;
    /// Throws Error{"invalid_config"} listing every invalid component.
    void validate() const;
};

struct MisreportingCase {
    double inflation = 0.25;
    double mixed_fraction = 0.5;
    ThresholdPolicy controller;        ///< reacts to reported compliance
    InfoSource source = InfoSource::Latent;
    int stochastic_seeds = 5;

    MisreportingCase();
};

struct BackfillCase {
    std::vector<std::pair<std::string, std::vector<double>>> profiles;
    double population = 1e6;
    double noise_sd = 0.05;
    double tol = 0.05;

    BackfillCase();
};

struct CounterfactualCase {
    int divergence_week = 2;
    int vaccination_start = 14;
    int counterfactual_vaccination_start = 2;
    double vaccination_rate = 0.005;
    int masking_level = kMaxLevel;
    std::vector<int> masking_dims{kMaskingDim};
};

struct PolicyEvalCase {
    int regions = 4;
    int history_weeks = 8; ///< realized weeks before the evaluation window
    int horizon = 6;
    int grpo_steps = 20;
    std::size_t group_size = 8;
};

struct SyntheticCase {
    int regions = 3;
    int weeks = 20;
    std::vector<std::pair<std::string, Range>> ranges; ///< per-region parameter draws
    double action_persistence = 0.8;

    SyntheticCase();
};

struct CalibrationSection {
    std::vector<FreeParameter> free;
    Optimizer optimizer = Optimizer::Grid;
    int restarts = 1;
    std::size_t particles = 500;
    double beta_kl = 1.0;
    int max_evaluations = 200;
};

struct PlanSection {
    int horizon = 8;
    CemConfig cem;
    RewardSpec reward;
    std::size_t particles = 200;
};

struct DataSection {
    std::string observations;
    std::string actions;
    std::string triangle;
};

struct ServiceSection {
    std::string host = "127.0.0.1";
    int port = 8080;
    bool debug = false; ///< expose latent truth in responses
};

struct Config {
    ScenarioConfig scenario;
    MisreportingCase misreporting;
    BackfillCase backfill;
    CounterfactualCase counterfactual;
    PolicyEvalCase policy_eval;
    SyntheticCase synthetic;
    CalibrationSection calibration;
    PlanSection plan;
    DataSection data;
    ServiceSection service;
    std::array<std::string, kActionDims> action_names;
    std::string base_dir = "."; ///< relative data paths resolve here

    Config();
    CalibrationConfig calibration_config() const;
    std::string resolve(const std::string& path) const;
};

/// Canonical JSON form; sections mirror the INI layout.
json to_json_value(const Config& c);
/// Throws Error{"invalid_config"} whose first detail is "section.key".
Config config_from_json(const json& j);

/// INI text: `[section]` headers, `key = value` lines, `;` or `#` comments.
/// Comma-separated values become lists. Errors cite line and field.
Config load_config_text(const std::string& text, const std::string& base_dir = ".");
Config load_config_file(const std::string& path);

/// Hash of the canonical JSON form.
std::string config_hash(const Config& c);

/// "survey_compliance below 0.8 4 [dim ...]"; no dims means all dims.
ThresholdRule parse_rule(const std::string& text);
/// "beta0 1.0 2.0 [grid_points]".
FreeParameter parse_free_parameter(const std::string& text);

} // namespace epiworld
