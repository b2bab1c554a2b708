#include "epiworld/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "epiworld/parallel.hpp"

namespace epiworld {

void validate_cem(const CemConfig& c)
{
    std::vector<std::string> d;
    if (c.elites < 1) {
        d.push_back("elites must be >= 1");
    }
    if (c.population < c.elites) {
        d.push_back("population must be >= elites");
    }
    if (c.iterations < 1) {
        d.push_back("iterations must be >= 1");
    }
    if (!(c.smoothing > 0.0 && c.smoothing <= 1.0)) {
        d.push_back("smoothing must lie in (0,1]");
    }
    if (!(c.min_probability >= 0.0 && c.min_probability < 1.0 / (kMaxLevel + 1))) {
        d.push_back("min_probability must lie in [0, 0.2)");
    }
    if (c.samples < 1) {
        d.push_back("samples must be >= 1");
    }
    if (!d.empty()) {
        throw Error("invalid_config", "CEM configuration is invalid", std::move(d));
    }
}

bool better(const CandidateScore& a, const CandidateScore& b)
{
    if (a.feasible != b.feasible) {
        return a.feasible;
    }
    return a.score > b.score;
}

namespace {

constexpr std::size_t kLevels = kMaxLevel + 1;

int sample_level(const std::array<double, kLevels>& probs, double u)
{
    double cum = 0.0;
    for (std::size_t l = 0; l < kLevels; ++l) {
        cum += probs[l];
        if (u < cum) {
            return static_cast<int>(l);
        }
    }
    for (std::size_t l = kLevels; l-- > 0;) {
        if (probs[l] > 0.0) {
            return static_cast<int>(l);
        }
    }
    return kMaxLevel;
}

} // namespace

CemResult cem_optimize(std::size_t horizon, const CemConfig& config, const BatchEvaluator& evaluate_batch,
                       const RngStream& rng)
{
    validate_cem(config);
    CemResult result;
    if (horizon == 0) {
        result.best_score = {0.0, true};
        return result;
    }
    std::array<double, kLevels> uniform{};
    uniform.fill(1.0 / kLevels);
    SequenceDistribution dist(horizon, std::vector<std::array<double, kLevels>>(kActionDims, uniform));
    bool have_best = false;

    for (int it = 0; it < config.iterations; ++it) {
        const RngStream iter_rng = rng.derive(static_cast<std::uint64_t>(it));
        std::vector<ActionSequence> pop(config.population);
        for (std::size_t i = 0; i < config.population; ++i) {
            RngStream r = iter_rng.derive(i);
            pop[i].resize(horizon);
            for (std::size_t w = 0; w < horizon; ++w) {
                pop[i][w].week = static_cast<int>(w);
                for (std::size_t d = 0; d < kActionDims; ++d) {
                    pop[i][w].dims[d] = sample_level(dist[w][d], r.uniform());
                }
            }
        }
        const auto scores = evaluate_batch(pop);
        if (scores.size() != pop.size()) {
            throw Error("internal", "evaluator returned the wrong number of scores");
        }
        std::vector<double> s(scores.size());
        std::vector<bool> f(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i) {
            s[i] = scores[i].score;
            f[i] = scores[i].feasible;
        }
        const auto order = rank_order(s, f);
        if (!have_best || better(scores[order[0]], result.best_score)) {
            result.best = pop[order[0]];
            result.best_score = scores[order[0]];
            have_best = true;
        }

        CemIteration rec;
        rec.iteration = it;
        rec.best_ever = result.best_score.score;
        rec.best_ever_feasible = result.best_score.feasible;
        rec.population_mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
        for (std::size_t e = 0; e < config.elites; ++e) {
            rec.elite_mean += s[order[e]];
        }
        rec.elite_mean /= static_cast<double>(config.elites);
        result.trace.push_back(rec);

        // Refit each (week, dim) categorical to the elite frequencies.
        for (std::size_t w = 0; w < horizon; ++w) {
            for (std::size_t d = 0; d < kActionDims; ++d) {
                std::array<double, kLevels> freq{};
                for (std::size_t e = 0; e < config.elites; ++e) {
                    freq[static_cast<std::size_t>(pop[order[e]][w].dims[d])] += 1.0 / static_cast<double>(config.elites);
                }
                auto& p = dist[w][d];
                double total = 0.0;
                for (std::size_t l = 0; l < kLevels; ++l) {
                    p[l] = std::max(config.min_probability, config.smoothing * freq[l] + (1.0 - config.smoothing) * p[l]);
                    total += p[l];
                }
                for (auto& v : p) {
                    v /= total;
                }
            }
        }
        result.distributions.push_back(dist);
    }
    return result;
}

CemResult cem_plan(const Belief& belief, std::size_t horizon, const CemConfig& config, const RewardSpec& reward,
                   const ModelParams& p, const MisreportingRegime& regime, std::uint64_t seed,
                   const RolloutOptions& options, const std::vector<double>& vaccination)
{
    validate_cem(config);
    validate_reward(reward);
    validate_params(p);
    const RngStream root = derive_stream(seed, 0);
    BatchEvaluator batch = [&](const std::vector<ActionSequence>& pop) {
        std::vector<CandidateScore> out(pop.size());
        parallel_for(
            pop.size(),
            [&](std::size_t i) {
                std::vector<RolloutResult> samples;
                samples.reserve(config.samples);
                const InterventionPlan plan{pop[i], vaccination};
                for (std::size_t k = 0; k < config.samples; ++k) {
                    samples.push_back(rollout(belief, plan, p, regime, root.derive(1).derive(k), options));
                }
                const auto m = mean_metrics(samples);
                out[i].score = score(m, reward);
                out[i].feasible = !reward.icu_hard_constraint || m.icu_violation_weeks == 0.0;
            },
            1);
        return out;
    };
    return cem_optimize(horizon, config, batch, root.derive(2));
}

// ---------------------------------------------------------------------------

std::vector<double> group_advantages(const std::vector<GroupSample>& group)
{
    std::vector<double> a(group.size(), 0.0);
    if (group.empty()) {
        return a;
    }
    const auto [lo, hi] = std::minmax_element(group.begin(), group.end(),
                                              [](const auto& x, const auto& y) { return x.reward < y.reward; });
    if (lo->reward == hi->reward) {
        return a;
    }
    double mean = 0.0;
    for (const auto& g : group) {
        mean += g.reward;
    }
    mean /= static_cast<double>(group.size());
    double var = 0.0;
    for (const auto& g : group) {
        var += (g.reward - mean) * (g.reward - mean);
    }
    const double sd = std::sqrt(var / static_cast<double>(group.size()));
    for (std::size_t i = 0; i < group.size(); ++i) {
        a[i] = (group[i].reward - mean) / (sd + kAdvantageEpsilon);
    }
    return a;
}

namespace {

std::size_t level_index(const SoftmaxDim& dim, int level)
{
    const auto it = std::find(dim.levels.begin(), dim.levels.end(), level);
    if (it == dim.levels.end()) {
        throw Error("invalid_sample", "sampled level " + std::to_string(level) + " is not in the dim's support");
    }
    return static_cast<std::size_t>(it - dim.levels.begin());
}

void check_sample(const SoftmaxPolicy& policy, const GroupSample& s)
{
    if (s.features.size() != s.levels.size()) {
        throw Error("invalid_sample", "features and levels must cover the same weeks");
    }
    for (std::size_t w = 0; w < s.levels.size(); ++w) {
        if (s.levels[w].size() != policy.dims.size() || s.features[w].size() != kPolicyFeatures) {
            throw Error("invalid_sample", "sample shape does not match the policy");
        }
    }
}

} // namespace

double log_prob(const SoftmaxPolicy& policy, const GroupSample& sample)
{
    check_sample(policy, sample);
    double lp = 0.0;
    for (std::size_t w = 0; w < sample.levels.size(); ++w) {
        for (std::size_t j = 0; j < policy.dims.size(); ++j) {
            const auto probs = softmax_probabilities(policy.dims[j], sample.features[w], policy.temperature);
            lp += std::log(probs[level_index(policy.dims[j], sample.levels[w][j])]);
        }
    }
    return lp;
}

double grpo_surrogate(const SoftmaxPolicy& policy, const std::vector<GroupSample>& group,
                      const std::vector<double>& advantages)
{
    double total = 0.0;
    for (std::size_t i = 0; i < group.size(); ++i) {
        total += advantages.at(i) * log_prob(policy, group[i]);
    }
    return total;
}

SoftmaxGradient grpo_gradient(const SoftmaxPolicy& policy, const std::vector<GroupSample>& group,
                              const std::vector<double>& advantages)
{
    SoftmaxGradient g(policy.dims.size());
    for (std::size_t j = 0; j < policy.dims.size(); ++j) {
        g[j].assign(policy.dims[j].levels.size(), std::vector<double>(kPolicyFeatures, 0.0));
    }
    for (std::size_t i = 0; i < group.size(); ++i) {
        const double adv = advantages.at(i);
        if (adv == 0.0) {
            continue;
        }
        check_sample(policy, group[i]);
        for (std::size_t w = 0; w < group[i].levels.size(); ++w) {
            const auto& phi = group[i].features[w];
            for (std::size_t j = 0; j < policy.dims.size(); ++j) {
                const auto probs = softmax_probabilities(policy.dims[j], phi, policy.temperature);
                const std::size_t chosen = level_index(policy.dims[j], group[i].levels[w][j]);
                for (std::size_t l = 0; l < probs.size(); ++l) {
                    const double coef = adv * ((l == chosen ? 1.0 : 0.0) - probs[l]) / policy.temperature;
                    for (std::size_t k = 0; k < kPolicyFeatures; ++k) {
                        g[j][l][k] += coef * phi[k];
                    }
                }
            }
        }
    }
    return g;
}

SoftmaxPolicy grpo_step(const SoftmaxPolicy& policy, const std::vector<GroupSample>& group, double learning_rate)
{
    if (group.size() < 2) {
        throw Error("group_too_small", "group statistics need at least 2 samples");
    }
    validate_policy(policy);
    const auto adv = group_advantages(group);
    const auto g = grpo_gradient(policy, group, adv);
    SoftmaxPolicy next = policy;
    for (std::size_t j = 0; j < next.dims.size(); ++j) {
        for (std::size_t l = 0; l < next.dims[j].weights.size(); ++l) {
            for (std::size_t k = 0; k < kPolicyFeatures; ++k) {
                next.dims[j].weights[l][k] += learning_rate * g[j][l][k];
            }
        }
    }
    return next;
}

GrpoResult grpo_train(const SoftmaxPolicy& initial, const GroupSampler& sampler, const GrpoConfig& config,
                      const RngStream& rng)
{
    if (config.group_size < 2) {
        throw Error("group_too_small", "group statistics need at least 2 samples");
    }
    GrpoResult out;
    out.policy = initial;
    for (int s = 0; s < config.steps; ++s) {
        const RngStream step_rng = rng.derive(static_cast<std::uint64_t>(s));
        std::vector<GroupSample> group(config.group_size);
        const SoftmaxPolicy& current = out.policy;
        parallel_for(
            group.size(), [&](std::size_t i) { group[i] = sampler(current, step_rng.derive(i)); }, 1);
        double mean = 0.0;
        for (const auto& g : group) {
            mean += g.reward;
        }
        out.mean_reward.push_back(mean / static_cast<double>(group.size()));
        out.policy = grpo_step(out.policy, group, config.learning_rate);
    }
    return out;
}

GroupSampler closed_loop_sampler(LatentState start, ModelParams truth, MisreportingRegime regime,
                                 ClosedLoopOptions options, RewardSpec reward)
{
    return [=](const SoftmaxPolicy& policy, const RngStream& rng) {
        const auto run = run_closed_loop(start, PolicySpec{policy}, truth, regime, rng, options);
        GroupSample s;
        s.features = run.features;
        for (const auto& a : run.rollout.plan.actions) {
            s.levels.push_back(a.dims);
        }
        s.reward = score(mean_metrics({run.rollout}), reward);
        return s;
    };
}

// ---------------------------------------------------------------------------

namespace {

struct Edit {
    std::size_t rule = 0;
    int kind = 0; // 0 threshold up, 1 threshold down, 2 level up, 3 level down

    std::string describe() const
    {
        static const char* names[] = {"threshold up", "threshold down", "level up", "level down"};
        return "rule " + std::to_string(rule) + " " + names[kind];
    }
};

std::optional<Edit> parse_edit(const std::string& s)
{
    static const char* names[] = {"threshold up", "threshold down", "level up", "level down"};
    if (s.rfind("rule ", 0) != 0) {
        return std::nullopt;
    }
    const auto space = s.find(' ', 5);
    if (space == std::string::npos) {
        return std::nullopt;
    }
    Edit e;
    try {
        e.rule = std::stoul(s.substr(5, space - 5));
    } catch (...) {
        return std::nullopt;
    }
    const std::string rest = s.substr(space + 1);
    for (int k = 0; k < 4; ++k) {
        if (rest == names[k]) {
            e.kind = k;
            return e;
        }
    }
    return std::nullopt;
}

std::optional<ThresholdPolicy> apply_edit(const ThresholdPolicy& spec, const Edit& e, double step)
{
    if (e.rule >= spec.rules.size()) {
        return std::nullopt;
    }
    ThresholdPolicy out = spec;
    auto& rule = out.rules[e.rule];
    switch (e.kind) {
    case 0:
    case 1: {
        const double sign = e.kind == 0 ? 1.0 : -1.0;
        const double delta = rule.threshold != 0.0 ? std::abs(rule.threshold) * step : step;
        rule.threshold += sign * delta;
        break;
    }
    case 2:
        if (rule.level >= kMaxLevel) {
            return std::nullopt;
        }
        ++rule.level;
        break;
    default:
        if (rule.level <= 0) {
            return std::nullopt;
        }
        --rule.level;
        break;
    }
    return out;
}

} // namespace

FeedbackResult iterate_feedback(const ThresholdPolicy& spec, std::vector<FeedbackRecord> history, int rule_budget,
                                const PolicyScorer& scorer, const RngStream& rng, double threshold_step)
{
    if (history.empty()) {
        throw Error("empty_history", "iterate_feedback needs a non-empty evaluation history");
    }
    validate_policy(PolicySpec{spec});
    FeedbackResult out;
    out.spec = spec;
    out.history = std::move(history);
    if (rule_budget <= 0 || spec.rules.empty()) {
        out.score = out.history.back().score;
        return out;
    }
    out.score = scorer(spec);
    out.history.push_back({spec, out.score, "", true});

    std::optional<Edit> preferred;
    for (auto it = out.history.rbegin(); it != out.history.rend(); ++it) {
        if (it->accepted && !it->edit.empty()) {
            preferred = parse_edit(it->edit);
            break;
        }
    }

    RngStream r = rng;
    for (int trial = 0; trial < rule_budget; ++trial) {
        Edit e;
        if (preferred) {
            e = *preferred;
        } else {
            e.rule = static_cast<std::size_t>(r() % spec.rules.size());
            e.kind = static_cast<int>(r() % 4);
        }
        const auto candidate = apply_edit(out.spec, e, threshold_step);
        if (!candidate) {
            preferred.reset();
            continue;
        }
        const double s = scorer(*candidate);
        const bool accept = s > out.score;
        out.history.push_back({*candidate, s, e.describe(), accept});
        if (accept) {
            out.spec = *candidate;
            out.score = s;
            preferred = e;
        } else {
            preferred.reset();
        }
    }
    return out;
}

} // namespace epiworld
