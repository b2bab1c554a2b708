#include "epiworld/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "epiworld/dynamics.hpp"

namespace epiworld {

std::string to_string(Feature f)
{
    switch (f) {
    case Feature::Infected:
        return "infected";
    case Feature::EffectiveR:
        return "effective_R";
    case Feature::SurveyCompliance:
        return "survey_compliance";
    }
    return "effective_R";
}

Feature parse_feature(const std::string& s)
{
    if (s == "infected") {
        return Feature::Infected;
    }
    if (s == "effective_R") {
        return Feature::EffectiveR;
    }
    if (s == "survey_compliance") {
        return Feature::SurveyCompliance;
    }
    throw Error("invalid_policy", "unknown policy feature '" + s + "'");
}

std::string to_string(Trigger t) { return t == Trigger::Above ? "above" : "below"; }

Trigger parse_trigger(const std::string& s)
{
    if (s == "above") {
        return Trigger::Above;
    }
    if (s == "below") {
        return Trigger::Below;
    }
    throw Error("invalid_policy", "unknown trigger '" + s + "'");
}

double feature_value(const InfoSummary& info, Feature f)
{
    switch (f) {
    case Feature::Infected:
        return info.mean_I;
    case Feature::EffectiveR:
        return info.effective_R;
    case Feature::SurveyCompliance:
        return info.survey_compliance;
    }
    return 0.0;
}

SoftmaxPolicy SoftmaxPolicy::uniform(std::size_t n_dims, double temperature)
{
    SoftmaxPolicy p;
    p.temperature = temperature;
    SoftmaxDim d;
    d.weights.assign(d.levels.size(), std::vector<double>(kPolicyFeatures, 0.0));
    p.dims.assign(n_dims, d);
    return p;
}

std::string policy_kind(const PolicySpec& spec)
{
    return std::visit(
        [](const auto& s) -> std::string {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ReplayPolicy>) {
                return "replay";
            } else if constexpr (std::is_same_v<T, ThresholdPolicy>) {
                return "threshold";
            } else {
                return "softmax";
            }
        },
        spec);
}

namespace {

void validate_softmax(const SoftmaxPolicy& p, std::vector<std::string>& d)
{
    if (!(p.temperature > 0.0) || !std::isfinite(p.temperature)) {
        d.push_back("temperature must be positive and finite");
    }
    for (std::size_t j = 0; j < p.dims.size(); ++j) {
        const auto& dim = p.dims[j];
        const std::string where = "dim " + std::to_string(j) + ": ";
        if (dim.levels.empty()) {
            d.push_back(where + "no levels");
        }
        for (int l : dim.levels) {
            if (l < 0 || l > kMaxLevel) {
                d.push_back(where + "level " + std::to_string(l) + " outside 0..4");
            }
        }
        if (dim.weights.size() != dim.levels.size()) {
            d.push_back(where + "one weight row per level required");
        }
        for (const auto& row : dim.weights) {
            if (row.size() != kPolicyFeatures) {
                d.push_back(where + "weight rows must have " + std::to_string(kPolicyFeatures) + " entries");
            }
            for (double v : row) {
                if (!std::isfinite(v)) {
                    d.push_back(where + "logit weights must be finite");
                }
            }
        }
    }
}

} // namespace

void validate_policy(const PolicySpec& spec)
{
    std::vector<std::string> d;
    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ReplayPolicy>) {
                for (std::size_t t = 0; t < s.table.size(); ++t) {
                    for (const auto& v : validate_action(s.table[t])) {
                        d.push_back("table[" + std::to_string(t) + "]: " + v.describe());
                    }
                }
            } else if constexpr (std::is_same_v<T, ThresholdPolicy>) {
                Action base{0, s.base};
                for (const auto& v : validate_action(base)) {
                    d.push_back("base: " + v.describe());
                }
                for (std::size_t r = 0; r < s.rules.size(); ++r) {
                    const auto& rule = s.rules[r];
                    const std::string where = "rule " + std::to_string(r) + ": ";
                    if (!std::isfinite(rule.threshold)) {
                        d.push_back(where + "threshold must be finite");
                    }
                    if (rule.level < 0 || rule.level > kMaxLevel) {
                        d.push_back(where + "level outside 0..4");
                    }
                    for (int dim : rule.dims) {
                        if (dim < 0 || dim >= static_cast<int>(kActionDims)) {
                            d.push_back(where + "dim " + std::to_string(dim) + " out of range");
                        }
                    }
                }
            } else {
                validate_softmax(s, d);
            }
        },
        spec);
    if (!d.empty()) {
        throw Error("invalid_policy", "policy specification is invalid", std::move(d));
    }
}

std::vector<double> policy_features(const InfoSummary& info)
{
    return {1.0, 100.0 * info.mean_I, info.effective_R, info.survey_compliance};
}

std::vector<double> softmax_probabilities(const SoftmaxDim& dim, const std::vector<double>& features,
                                          double temperature)
{
    std::vector<double> logits(dim.levels.size());
    for (std::size_t l = 0; l < logits.size(); ++l) {
        logits[l] = std::inner_product(dim.weights[l].begin(), dim.weights[l].end(), features.begin(), 0.0) /
                    temperature;
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (auto& v : logits) {
        v = std::exp(v - m);
        total += v;
    }
    for (auto& v : logits) {
        v /= total;
    }
    return logits;
}

std::vector<int> sample_softmax_levels(const SoftmaxPolicy& policy, const std::vector<double>& features,
                                       RngStream rng)
{
    std::vector<int> out(policy.dims.size());
    for (std::size_t j = 0; j < policy.dims.size(); ++j) {
        const auto probs = softmax_probabilities(policy.dims[j], features, policy.temperature);
        const double u = rng.uniform();
        double cum = 0.0;
        std::size_t pick = probs.size() - 1;
        for (std::size_t l = 0; l < probs.size(); ++l) {
            cum += probs[l];
            if (u < cum) {
                pick = l;
                break;
            }
        }
        out[j] = policy.dims[j].levels[pick];
    }
    return out;
}

Action propose(const PolicySpec& spec, const InfoSummary& info, int week, RngStream rng)
{
    validate_policy(spec);
    return std::visit(
        [&](const auto& s) -> Action {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ReplayPolicy>) {
                if (week < 0 || static_cast<std::size_t>(week) >= s.table.size()) {
                    throw Error("horizon_exceeds_table",
                                "horizon exceeds table: week " + std::to_string(week) + " of " +
                                    std::to_string(s.table.size()));
                }
                Action a = s.table[static_cast<std::size_t>(week)];
                a.week = week;
                return a;
            } else if constexpr (std::is_same_v<T, ThresholdPolicy>) {
                Action a{week, s.base};
                for (const auto& rule : s.rules) {
                    const double v = feature_value(info, rule.feature);
                    const bool fire = rule.trigger == Trigger::Above ? v > rule.threshold : v < rule.threshold;
                    if (!fire) {
                        continue;
                    }
                    for (int d : rule.dims) {
                        auto& slot = a.dims[static_cast<std::size_t>(d)];
                        slot = std::max(slot, rule.level);
                    }
                }
                return a;
            } else {
                if (s.dims.size() != kActionDims) {
                    throw Error("invalid_policy", "softmax policy must cover all 13 dims to propose actions");
                }
                return Action{week, sample_softmax_levels(s, policy_features(info), rng)};
            }
        },
        spec);
}

// ---------------------------------------------------------------------------

double alignment(const ActionSequence& proposed, const ActionSequence& realized)
{
    if (proposed.size() != realized.size()) {
        throw Error("length_mismatch", "alignment needs sequences of equal length");
    }
    require_valid(proposed);
    require_valid(realized);
    if (proposed.empty()) {
        return 100.0;
    }
    std::size_t matches = 0;
    for (std::size_t t = 0; t < proposed.size(); ++t) {
        for (std::size_t d = 0; d < kActionDims; ++d) {
            matches += proposed[t].dims[d] == realized[t].dims[d] ? 1 : 0;
        }
    }
    return 100.0 * static_cast<double>(matches) / static_cast<double>(proposed.size() * kActionDims);
}

double hosp_reduction(const std::vector<double>& series)
{
    if (series.empty()) {
        throw Error("undefined_reduction", "undefined reduction: empty series");
    }
    if (!(series.front() > 0.0)) {
        throw Error("undefined_reduction", "undefined reduction: series starts at zero");
    }
    return 100.0 * (series.front() - series.back()) / series.front();
}

double hosp_reduction_mean_of_series(const std::vector<std::vector<double>>& series)
{
    if (series.empty()) {
        throw Error("undefined_reduction", "undefined reduction: no series");
    }
    double total = 0.0;
    for (const auto& s : series) {
        total += hosp_reduction(s);
    }
    return total / static_cast<double>(series.size());
}

double hosp_reduction_pooled(const std::vector<std::vector<double>>& series)
{
    if (series.empty()) {
        throw Error("undefined_reduction", "undefined reduction: no series");
    }
    double start = 0.0;
    double end = 0.0;
    for (const auto& s : series) {
        if (s.empty()) {
            throw Error("undefined_reduction", "undefined reduction: empty series");
        }
        start += s.front();
        end += s.back();
    }
    return hosp_reduction({start, end});
}

// ---------------------------------------------------------------------------

std::string to_string(InfoSource s)
{
    switch (s) {
    case InfoSource::Latent:
        return "latent";
    case InfoSource::Observed:
        return "observed";
    case InfoSource::Filtered:
        return "filtered";
    }
    return "latent";
}

InfoSource parse_info_source(const std::string& s)
{
    if (s == "latent") {
        return InfoSource::Latent;
    }
    if (s == "observed") {
        return InfoSource::Observed;
    }
    if (s == "filtered") {
        return InfoSource::Filtered;
    }
    throw Error("invalid_config", "unknown information source '" + s + "'");
}

ClosedLoopResult run_closed_loop(const LatentState& start, const PolicySpec& policy, const ModelParams& truth,
                                 const MisreportingRegime& regime, const RngStream& rng,
                                 const ClosedLoopOptions& options)
{
    validate_policy(policy);
    validate_params(truth);
    validate_regime(regime);
    if (options.horizon < 0) {
        throw Error("invalid_config", "horizon must be >= 0");
    }
    const ModelParams& analyst = options.analyst_params ? *options.analyst_params : truth;

    ClosedLoopResult out;
    out.rollout.seed = rng.seed();
    out.rollout.stream = rng.stream_id();
    out.rollout.plan.vaccination = options.vaccination;

    std::optional<Belief> belief;
    if (options.source == InfoSource::Filtered) {
        belief = init_belief(options.analyst_prior, options.particles, analyst, rng.derive(0xfffffff0ULL));
        belief->week = options.start_week;
    }

    // Before any report arrives the analyst knows the initial state except
    // for behavior, which is seen through the survey.
    InfoSummary info;
    info.week = options.start_week;
    info.mean_I = start.I;
    info.effective_R = effective_R(start, analyst);
    info.survey_compliance = misreport_survey(start.compliance, regime);
    double prev_incidence = start.new_infections;

    LatentState x = start;
    for (int w = 0; w < options.horizon; ++w) {
        const RngStream week = rng.derive(static_cast<std::uint64_t>(w));
        const int calendar = options.start_week + w;
        const Action a = propose(policy, info, w, week.derive(2));
        out.info.push_back(info);
        out.features.push_back(policy_features(info));

        const double vax = w < static_cast<int>(options.vaccination.size()) ? options.vaccination[w] : 0.0;
        x = step(x, a, truth, week.derive(0), Exogenous{vax});
        const Observation o = observe(x, a, regime, truth, week.derive(1), calendar + 1);
        out.rollout.plan.actions.push_back(a);
        out.rollout.trajectory.push_back(x);
        out.rollout.observations.push_back(o);
        out.true_effective_R.push_back(effective_R(x, truth));

        info = InfoSummary{};
        info.week = calendar + 1;
        info.survey_compliance = o.survey_compliance;
        switch (options.source) {
        case InfoSource::Latent:
            info.mean_I = x.I;
            info.effective_R = effective_R(x, truth);
            break;
        case InfoSource::Observed: {
            const double incidence = o.reported_cases_per_100k / (ascertainment_rate(a, analyst) * kPer100k);
            info.mean_I = incidence;
            info.effective_R = prev_incidence > 0.0 ? incidence / prev_incidence : 1.0;
            prev_incidence = incidence;
            break;
        }
        case InfoSource::Filtered: {
            *belief = filter_step(*belief, a, o, analyst, options.analyst_regime, week.derive(3), options.filter,
                                  Exogenous{vax});
            const auto report = summarize(*belief, analyst);
            info.mean_I = report.I.mean;
            info.effective_R = report.effective_R.mean;
            break;
        }
        }
    }
    out.rollout.metrics = compute_metrics(out.rollout.trajectory, options.icu_capacity);
    return out;
}

std::optional<int> weeks_to_control(const ClosedLoopResult& r)
{
    for (std::size_t w = 0; w < r.true_effective_R.size(); ++w) {
        if (r.true_effective_R[w] < 1.0) {
            return static_cast<int>(w) + 1;
        }
    }
    return std::nullopt;
}

} // namespace epiworld
