#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace epiworld {

inline constexpr std::size_t kActionDims = 13;
inline constexpr int kMaxLevel = 4;
inline constexpr double kPer100k = 1e5;
inline constexpr double kMassTolerance = 1e-9;

/// Base for every error the engine raises. `code` is a stable
/// machine-readable tag; `details` carries per-item diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message, std::vector<std::string> details = {})
        : std::runtime_error(message), code_(std::move(code)), details_(std::move(details))
    {
    }
    const std::string& code() const noexcept { return code_; }
    const std::vector<std::string>& details() const noexcept { return details_; }

private:
    std::string code_;
    std::vector<std::string> details_;
};

// ---------------------------------------------------------------------------
// Actions

/// One week of interventions: 13 ordinal indicators on the 0..4 scale.
struct Action {
    int week = 0;
    std::vector<int> dims = std::vector<int>(kActionDims, 0);

    static Action uniform(int level, int week = 0)
    {
        return Action{week, std::vector<int>(kActionDims, level)};
    }

    friend bool operator==(const Action&, const Action&) = default;
};

using ActionSequence = std::vector<Action>;

struct ActionViolation {
    enum class Kind { WrongArity, OutOfRange, NegativeWeek };
    Kind kind;
    std::size_t index = 0; ///< offending dim (OutOfRange only)
    int value = 0;         ///< offending value, or the arity / week

    std::string describe() const;
    friend bool operator==(const ActionViolation&, const ActionViolation&) = default;
};

/// Empty result means the action is valid.
std::vector<ActionViolation> validate_action(const Action& a);

/// Throws Error{"invalid_action"} listing every violation.
void require_valid(const Action& a);
void require_valid(const ActionSequence& seq);

/// Mean ordinal level scaled to [0, 1].
double stringency(const Action& a);

/// Default indicator names, one per dim (C1..C8, H1..H3, H6, H7 ordering).
const std::array<std::string_view, kActionDims>& default_dim_names();

inline constexpr int kTestingDim = 9;
inline constexpr int kMaskingDim = 11;

// ---------------------------------------------------------------------------
// Latent state

/// Hidden state of one region. Compartments are population fractions.
///
/// `hosp_pipeline` holds mass already committed to hospital but not yet
/// admitted (front = admitted next week). That mass is counted inside `Hosp`,
/// so S + E + I + R + Hosp stays 1.
struct LatentState {
    // epi
    double S = 1.0;
    double E = 0.0;
    double I = 0.0;
    double R = 0.0;
    double Hosp = 0.0;
    double new_infections = 0.0;
    double new_admissions = 0.0;
    std::vector<double> hosp_pipeline;
    // imm: fraction of R still protected
    double immunity = 1.0;
    // net
    double mixing_scale = 1.0;
    // beh
    double compliance = 0.0;
    double fatigue = 0.0;
    // reg
    double transmissibility = 1.0;
    double season_phase = 0.0;

    double mass() const noexcept { return S + E + I + R + Hosp; }
    double pipeline_mass() const noexcept;
    /// Patients physically in hospital (Hosp minus the pending pipeline).
    double hospitalized() const noexcept;

    friend bool operator==(const LatentState&, const LatentState&) = default;
};

/// Empty result means all LatentState invariants hold.
std::vector<std::string> check_invariants(const LatentState& x);

// ---------------------------------------------------------------------------
// Parameters

/// Transition and observation parameters. Rates are per week; sojourn
/// transitions are applied as per-week probabilities, so sigma and gamma
/// must lie in [0, 1].
struct ModelParams {
    // transmission
    double beta0 = 1.6;
    double sigma = 0.8;
    double gamma = 0.6;
    double season_amplitude = 0.0;
    // hospital
    double ihr = 0.01;
    int hosp_lag = 1;
    double hosp_stay = 1.5;
    // immunity
    double waning_rate = 0.0;
    // behavior
    double kappa = 0.7;
    double lambda_policy = 0.1;
    double lambda_risk = 0.01;
    double lambda_fatigue = 0.05;
    double risk_scale = 0.05;
    double fatigue_gain = 0.05;
    double fatigue_decay = 0.02;
    // regime shocks: m *= exp(N(jump_log_mean, jump_log_sd)) with prob jump_prob
    double jump_prob = 0.0;
    double jump_log_mean = 0.3;
    double jump_log_sd = 0.1;
    // observation
    double ascertainment = 0.3;
    double testing_gain = 0.5;
    int testing_dim = kTestingDim;
    double case_noise_sd = 0.0;
    double hosp_noise_sd = 0.0;
    double survey_noise_sd = 0.0;
    // simulation grain (chain-binomial population size); ignored when deterministic
    double n_sim = 1e6;
    bool deterministic = false;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Throws Error{"invalid_params"} with one detail per violated constraint.
void validate_params(const ModelParams& p);

/// Names accepted by set_param/get_param (config keys, calibration targets).
const std::vector<std::string>& param_names();
void set_param(ModelParams& p, std::string_view name, double value);
double get_param(const ModelParams& p, std::string_view name);

template <class T>
constexpr T clamp01(T v) noexcept
{
    return v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
}

} // namespace epiworld
