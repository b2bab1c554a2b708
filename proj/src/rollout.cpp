#include "epiworld/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "epiworld/dynamics.hpp"

namespace epiworld {

namespace {
constexpr std::uint64_t kPickStream = 0xfffffffffffffff1ULL;
} // namespace

OutcomeMetrics compute_metrics(const std::vector<LatentState>& trajectory, double icu_capacity)
{
    OutcomeMetrics m;
    for (std::size_t w = 0; w < trajectory.size(); ++w) {
        const auto& x = trajectory[w];
        const double hosp = x.new_admissions * kPer100k;
        m.cumulative_infections += x.new_infections;
        if (m.peak_week == 0 || hosp > m.peak_hosp_per_100k) {
            m.peak_hosp_per_100k = hosp;
            m.peak_week = static_cast<int>(w) + 1;
        }
        if (hosp > icu_capacity) {
            ++m.icu_violation_weeks;
        }
        m.end_hosp_per_100k = hosp;
    }
    return m;
}

RolloutResult rollout(const LatentState& start, const InterventionPlan& plan, const ModelParams& p,
                      const MisreportingRegime& regime, const RngStream& rng, const RolloutOptions& options)
{
    require_valid(plan.actions);
    validate_params(p);
    validate_regime(regime);
    RolloutResult r;
    r.plan = plan;
    r.seed = rng.seed();
    r.stream = rng.stream_id();
    const std::size_t horizon = plan.actions.size();
    r.trajectory.reserve(horizon);
    r.observations.reserve(horizon);
    LatentState x = start;
    for (std::size_t w = 0; w < horizon; ++w) {
        const RngStream week = rng.derive(w);
        const Action& a = plan.actions[w];
        x = step(x, a, p, week.derive(0), Exogenous{plan.vaccination_at(w)});
        r.observations.push_back(observe(x, a, regime, p, week.derive(1), options.start_week + static_cast<int>(w) + 1));
        r.trajectory.push_back(x);
    }
    r.metrics = compute_metrics(r.trajectory, options.icu_capacity);
    return r;
}

std::size_t sample_particle(const Belief& bel, RngStream rng)
{
    const auto w = normalized_weights(bel);
    const double u = rng.uniform();
    double cum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        cum += w[i];
        if (u < cum) {
            return i;
        }
    }
    return w.size() - 1;
}

RolloutResult rollout(const Belief& start, const InterventionPlan& plan, const ModelParams& p,
                      const MisreportingRegime& regime, const RngStream& rng, RolloutOptions options)
{
    require_valid(plan.actions);
    if (start.size() == 0) {
        throw Error("invalid_belief", "cannot roll out from an empty belief");
    }
    options.start_week = start.week;
    const std::size_t i = sample_particle(start, rng.derive(kPickStream));
    return rollout(start.particles[i], plan, p, regime, rng, options);
}

void require_shared_prefix(const InterventionPlan& a, const InterventionPlan& b, std::size_t d)
{
    std::vector<std::string> details;
    if (a.actions.size() != b.actions.size()) {
        details.push_back("plans have different horizons");
    }
    const std::size_t n = std::min({d, a.actions.size(), b.actions.size()});
    for (std::size_t w = 0; w < n; ++w) {
        if (a.actions[w].dims != b.actions[w].dims) {
            details.push_back("actions differ at week index " + std::to_string(w));
        }
        if (a.vaccination_at(w) != b.vaccination_at(w)) {
            details.push_back("vaccination differs at week index " + std::to_string(w));
        }
    }
    if (!details.empty()) {
        throw Error("prefix_mismatch", "plans must agree before the divergence week", std::move(details));
    }
}

template <class Start>
CounterfactualPair counterfactual_compare(const Start& start, const InterventionPlan& baseline,
                                          const InterventionPlan& alternative, std::size_t divergence_week,
                                          const ModelParams& p, const MisreportingRegime& regime, std::uint64_t seed,
                                          const RolloutOptions& options)
{
    require_valid(baseline.actions);
    require_valid(alternative.actions);
    require_shared_prefix(baseline, alternative, divergence_week);
    const RngStream rng = derive_stream(seed, 0);
    return {rollout(start, baseline, p, regime, rng, options), rollout(start, alternative, p, regime, rng, options)};
}

template CounterfactualPair counterfactual_compare<LatentState>(const LatentState&, const InterventionPlan&,
                                                                const InterventionPlan&, std::size_t,
                                                                const ModelParams&, const MisreportingRegime&,
                                                                std::uint64_t, const RolloutOptions&);
template CounterfactualPair counterfactual_compare<Belief>(const Belief&, const InterventionPlan&,
                                                           const InterventionPlan&, std::size_t, const ModelParams&,
                                                           const MisreportingRegime&, std::uint64_t,
                                                           const RolloutOptions&);

// ---------------------------------------------------------------------------

void validate_reward(const RewardSpec& r)
{
    for (double v : {r.cumulative_infections, r.peak_hosp, r.peak_week, r.icu_violation_weeks, r.end_hosp}) {
        if (!std::isfinite(v)) {
            throw Error("invalid_reward", "reward weights must be finite");
        }
    }
}

MeanMetrics mean_metrics(const std::vector<RolloutResult>& samples)
{
    MeanMetrics m;
    if (samples.empty()) {
        return m;
    }
    for (const auto& s : samples) {
        m.cumulative_infections += s.metrics.cumulative_infections;
        m.peak_hosp_per_100k += s.metrics.peak_hosp_per_100k;
        m.peak_week += s.metrics.peak_week;
        m.icu_violation_weeks += s.metrics.icu_violation_weeks;
        m.end_hosp_per_100k += s.metrics.end_hosp_per_100k;
    }
    const double n = static_cast<double>(samples.size());
    m.cumulative_infections /= n;
    m.peak_hosp_per_100k /= n;
    m.peak_week /= n;
    m.icu_violation_weeks /= n;
    m.end_hosp_per_100k /= n;
    return m;
}

double score(const MeanMetrics& m, const RewardSpec& r)
{
    return r.cumulative_infections * m.cumulative_infections + r.peak_hosp * m.peak_hosp_per_100k +
           r.peak_week * m.peak_week + r.icu_violation_weeks * m.icu_violation_weeks + r.end_hosp * m.end_hosp_per_100k;
}

std::vector<std::size_t> rank_order(const std::vector<double>& scores, const std::vector<bool>& feasible)
{
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (feasible[a] != feasible[b]) {
            return static_cast<bool>(feasible[a]);
        }
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return a < b;
    });
    return order;
}

std::vector<CandidateEvaluation> evaluate(const std::vector<std::vector<RolloutResult>>& candidates,
                                          const RewardSpec& reward)
{
    if (candidates.empty()) {
        throw Error("no_candidates", "evaluate needs at least one candidate");
    }
    validate_reward(reward);
    std::vector<CandidateEvaluation> evals(candidates.size());
    std::vector<double> scores(candidates.size());
    std::vector<bool> feasible(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        evals[i].index = i;
        evals[i].metrics = mean_metrics(candidates[i]);
        evals[i].score = score(evals[i].metrics, reward);
        evals[i].feasible = !reward.icu_hard_constraint || evals[i].metrics.icu_violation_weeks == 0.0;
        scores[i] = evals[i].score;
        feasible[i] = evals[i].feasible;
    }
    std::vector<CandidateEvaluation> ranked;
    ranked.reserve(evals.size());
    for (std::size_t i : rank_order(scores, feasible)) {
        ranked.push_back(evals[i]);
        ranked.back().rank = ranked.size();
    }
    return ranked;
}

FanChart fan_chart(const std::vector<std::vector<double>>& sample_series, const std::vector<double>& levels)
{
    FanChart fc;
    fc.quantile_levels = levels;
    if (sample_series.empty()) {
        return fc;
    }
    const std::size_t weeks = sample_series.front().size();
    for (std::size_t w = 0; w < weeks; ++w) {
        std::vector<double> col;
        col.reserve(sample_series.size());
        for (const auto& s : sample_series) {
            col.push_back(s.at(w));
        }
        std::sort(col.begin(), col.end());
        std::vector<double> qs;
        for (double q : levels) {
            // linear interpolation between order statistics
            const double pos = q * static_cast<double>(col.size() - 1);
            const auto lo = static_cast<std::size_t>(std::floor(pos));
            const std::size_t hi = std::min(lo + 1, col.size() - 1);
            const double frac = pos - static_cast<double>(lo);
            qs.push_back(col[lo] + frac * (col[hi] - col[lo]));
        }
        fc.weeks.push_back(std::move(qs));
    }
    return fc;
}

std::vector<double> hosp_series(const RolloutResult& r)
{
    std::vector<double> out;
    for (const auto& x : r.trajectory) {
        out.push_back(x.new_admissions * kPer100k);
    }
    return out;
}

std::vector<double> observed_hosp_series(const RolloutResult& r)
{
    std::vector<double> out;
    for (const auto& o : r.observations) {
        out.push_back(o.hosp_per_100k);
    }
    return out;
}

} // namespace epiworld
