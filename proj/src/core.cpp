#include "epiworld/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace epiworld {

std::string ActionViolation::describe() const
{
    std::ostringstream os;
    switch (kind) {
    case Kind::WrongArity:
        os << "wrong arity: expected " << kActionDims << " dims, got " << value;
        break;
    case Kind::OutOfRange:
        os << "dim " << index << " = " << value << " outside 0.." << kMaxLevel;
        break;
    case Kind::NegativeWeek:
        os << "week " << value << " is negative";
        break;
    }
    return os.str();
}

std::vector<ActionViolation> validate_action(const Action& a)
{
    std::vector<ActionViolation> out;
    if (a.week < 0) {
        out.push_back({ActionViolation::Kind::NegativeWeek, 0, a.week});
    }
    if (a.dims.size() != kActionDims) {
        out.push_back({ActionViolation::Kind::WrongArity, 0, static_cast<int>(a.dims.size())});
    }
    for (std::size_t i = 0; i < a.dims.size(); ++i) {
        if (a.dims[i] < 0 || a.dims[i] > kMaxLevel) {
            out.push_back({ActionViolation::Kind::OutOfRange, i, a.dims[i]});
        }
    }
    return out;
}

void require_valid(const Action& a)
{
    auto violations = validate_action(a);
    if (violations.empty()) {
        return;
    }
    std::vector<std::string> details;
    for (const auto& v : violations) {
        details.push_back(v.describe());
    }
    throw Error("invalid_action", "action for week " + std::to_string(a.week) + " is invalid",
                std::move(details));
}

void require_valid(const ActionSequence& seq)
{
    std::vector<std::string> details;
    for (std::size_t t = 0; t < seq.size(); ++t) {
        for (const auto& v : validate_action(seq[t])) {
            details.push_back("step " + std::to_string(t) + ": " + v.describe());
        }
    }
    if (!details.empty()) {
        throw Error("invalid_action", "action sequence is invalid", std::move(details));
    }
}

double stringency(const Action& a)
{
    require_valid(a);
    const double sum = std::accumulate(a.dims.begin(), a.dims.end(), 0.0);
    return sum / (static_cast<double>(kActionDims) * kMaxLevel);
}

const std::array<std::string_view, kActionDims>& default_dim_names()
{
    static const std::array<std::string_view, kActionDims> names{
        "school_closing",       "workplace_closing",     "cancel_public_events",
        "gathering_limits",     "public_transport",      "stay_at_home",
        "internal_movement",    "international_travel",  "public_information",
        "testing_policy",       "contact_tracing",       "facial_coverings",
        "vaccination_policy"};
    return names;
}

double LatentState::pipeline_mass() const noexcept
{
    return std::accumulate(hosp_pipeline.begin(), hosp_pipeline.end(), 0.0);
}

double LatentState::hospitalized() const noexcept
{
    return std::max(0.0, Hosp - pipeline_mass());
}

std::vector<std::string> check_invariants(const LatentState& x)
{
    std::vector<std::string> out;
    auto nonneg = [&](double v, const char* name) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            out.push_back(std::string(name) + " must be finite and nonnegative");
        }
    };
    auto unit = [&](double v, const char* name) {
        if (!(v >= 0.0 && v <= 1.0)) {
            out.push_back(std::string(name) + " must lie in [0,1]");
        }
    };
    nonneg(x.S, "S");
    nonneg(x.E, "E");
    nonneg(x.I, "I");
    nonneg(x.R, "R");
    nonneg(x.Hosp, "Hosp");
    nonneg(x.new_infections, "new_infections");
    nonneg(x.new_admissions, "new_admissions");
    for (double v : x.hosp_pipeline) {
        nonneg(v, "hosp_pipeline");
    }
    if (std::abs(x.mass() - 1.0) > kMassTolerance) {
        out.push_back("population mass " + std::to_string(x.mass()) + " differs from 1");
    }
    if (x.pipeline_mass() > x.Hosp + kMassTolerance) {
        out.push_back("hosp_pipeline exceeds Hosp");
    }
    unit(x.immunity, "immunity");
    unit(x.compliance, "compliance");
    unit(x.fatigue, "fatigue");
    if (!(x.mixing_scale > 0.0 && x.mixing_scale <= 2.0)) {
        out.push_back("mixing_scale must lie in (0,2]");
    }
    if (!(x.transmissibility > 0.0) || !std::isfinite(x.transmissibility)) {
        out.push_back("transmissibility must be positive");
    }
    if (!(x.season_phase >= 0.0 && x.season_phase < 1.0)) {
        out.push_back("season_phase must lie in [0,1)");
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

struct DoubleField {
    std::string_view name;
    double ModelParams::*member;
};

constexpr DoubleField kDoubleFields[] = {
    {"beta0", &ModelParams::beta0},
    {"sigma", &ModelParams::sigma},
    {"gamma", &ModelParams::gamma},
    {"season_amplitude", &ModelParams::season_amplitude},
    {"ihr", &ModelParams::ihr},
    {"hosp_stay", &ModelParams::hosp_stay},
    {"waning_rate", &ModelParams::waning_rate},
    {"kappa", &ModelParams::kappa},
    {"lambda_policy", &ModelParams::lambda_policy},
    {"lambda_risk", &ModelParams::lambda_risk},
    {"lambda_fatigue", &ModelParams::lambda_fatigue},
    {"risk_scale", &ModelParams::risk_scale},
    {"fatigue_gain", &ModelParams::fatigue_gain},
    {"fatigue_decay", &ModelParams::fatigue_decay},
    {"jump_prob", &ModelParams::jump_prob},
    {"jump_log_mean", &ModelParams::jump_log_mean},
    {"jump_log_sd", &ModelParams::jump_log_sd},
    {"ascertainment", &ModelParams::ascertainment},
    {"testing_gain", &ModelParams::testing_gain},
    {"case_noise_sd", &ModelParams::case_noise_sd},
    {"hosp_noise_sd", &ModelParams::hosp_noise_sd},
    {"survey_noise_sd", &ModelParams::survey_noise_sd},
    {"n_sim", &ModelParams::n_sim},
};

int as_integer(std::string_view name, double value)
{
    if (std::nearbyint(value) != value) {
        throw Error("invalid_params", std::string(name) + " must be an integer");
    }
    return static_cast<int>(value);
}

} // namespace

const std::vector<std::string>& param_names()
{
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& f : kDoubleFields) {
            n.emplace_back(f.name);
        }
        n.emplace_back("hosp_lag");
        n.emplace_back("testing_dim");
        n.emplace_back("deterministic");
        return n;
    }();
    return names;
}

void set_param(ModelParams& p, std::string_view name, double value)
{
    for (const auto& f : kDoubleFields) {
        if (f.name == name) {
            p.*f.member = value;
            return;
        }
    }
    if (name == "hosp_lag") {
        p.hosp_lag = as_integer(name, value);
    } else if (name == "testing_dim") {
        p.testing_dim = as_integer(name, value);
    } else if (name == "deterministic") {
        p.deterministic = value != 0.0;
    } else {
        throw Error("unknown_param", "unknown model parameter '" + std::string(name) + "'");
    }
}

double get_param(const ModelParams& p, std::string_view name)
{
    for (const auto& f : kDoubleFields) {
        if (f.name == name) {
            return p.*f.member;
        }
    }
    if (name == "hosp_lag") {
        return p.hosp_lag;
    }
    if (name == "testing_dim") {
        return p.testing_dim;
    }
    if (name == "deterministic") {
        return p.deterministic ? 1.0 : 0.0;
    }
    throw Error("unknown_param", "unknown model parameter '" + std::string(name) + "'");
}

void validate_params(const ModelParams& p)
{
    std::vector<std::string> d;
    for (const auto& f : kDoubleFields) {
        if (!std::isfinite(p.*f.member)) {
            d.push_back(std::string(f.name) + " must be finite");
        }
    }
    auto nonneg = [&](double v, const char* name) {
        if (v < 0.0) {
            d.push_back(std::string(name) + " must be nonnegative");
        }
    };
    auto prob = [&](double v, const char* name) {
        if (!(v >= 0.0 && v <= 1.0)) {
            d.push_back(std::string(name) + " must lie in [0,1]");
        }
    };
    nonneg(p.beta0, "beta0");
    prob(p.sigma, "sigma");
    prob(p.gamma, "gamma");
    if (p.gamma == 0.0) {
        d.push_back("gamma = 0 gives an unbounded infectious sojourn");
    }
    prob(p.season_amplitude, "season_amplitude");
    prob(p.ihr, "ihr");
    if (p.hosp_lag < 0) {
        d.push_back("hosp_lag must be >= 0");
    }
    if (p.hosp_stay == 0.0) {
        d.push_back("hosp_stay = 0 gives a degenerate hospital sojourn");
    } else if (p.hosp_stay < 1.0) {
        d.push_back("hosp_stay must be >= 1 week");
    }
    nonneg(p.waning_rate, "waning_rate");
    prob(p.kappa, "kappa");
    nonneg(p.lambda_policy, "lambda_policy");
    nonneg(p.lambda_risk, "lambda_risk");
    nonneg(p.lambda_fatigue, "lambda_fatigue");
    if (!(p.risk_scale > 0.0)) {
        d.push_back("risk_scale must be positive");
    }
    nonneg(p.fatigue_gain, "fatigue_gain");
    nonneg(p.fatigue_decay, "fatigue_decay");
    prob(p.jump_prob, "jump_prob");
    nonneg(p.jump_log_sd, "jump_log_sd");
    if (!(p.ascertainment > 0.0 && p.ascertainment <= 1.0)) {
        d.push_back("ascertainment must lie in (0,1]");
    }
    nonneg(p.testing_gain, "testing_gain");
    if (p.testing_dim < 0 || p.testing_dim >= static_cast<int>(kActionDims)) {
        d.push_back("testing_dim must index one of the 13 action dims");
    }
    nonneg(p.case_noise_sd, "case_noise_sd");
    nonneg(p.hosp_noise_sd, "hosp_noise_sd");
    nonneg(p.survey_noise_sd, "survey_noise_sd");
    if (!(p.n_sim >= 1.0)) {
        d.push_back("n_sim must be >= 1");
    }
    if (!d.empty()) {
        throw Error("invalid_params", "model parameters are invalid", std::move(d));
    }
}

} // namespace epiworld
