#include "epiworld/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "epiworld/dynamics.hpp"
#include "epiworld/parallel.hpp"

namespace epiworld {

namespace {

constexpr std::uint64_t kTruthInitStream = 0x7472757468ULL; // "truth"
constexpr std::uint64_t kTriangleStream = 0x747269ULL;      // "tri"

RolloutOptions rollout_options(const ScenarioConfig& s)
{
    RolloutOptions o;
    o.icu_capacity = s.icu_capacity;
    o.start_week = s.start_week;
    return o;
}

} // namespace

LatentState initial_state(const ScenarioConfig& s, std::uint64_t seed)
{
    validate_prior(s.prior);
    return s.sample_truth_init ? sample_prior(s.prior, s.truth_params(), derive_stream(seed, kTruthInitStream))
                               : prior_mean_state(s.prior, s.truth_params());
}

std::uint64_t scenario_seed(const ScenarioConfig& s, std::optional<std::uint64_t> override_seed)
{
    if (override_seed) {
        return *override_seed;
    }
    if (s.seed) {
        return *s.seed;
    }
    throw Error("missing_seed", "a seed is required: pass --seed or set scenario.seed");
}

// ---------------------------------------------------------------------------

bool weeks_le(const std::optional<int>& a, const std::optional<int>& b)
{
    if (!b) {
        return true;
    }
    return a && *a <= *b;
}

bool weeks_lt(const std::optional<int>& a, const std::optional<int>& b)
{
    if (!a) {
        return false;
    }
    return !b || *a < *b;
}

MisreportingTable run_case_misreporting(const ScenarioConfig& base, const MisreportingCase& c, std::uint64_t seed)
{
    base.validate();
    const std::vector<std::pair<std::string, MisreportingRegime>> regimes{
        {"none", MisreportingRegime::none()},
        {"mixed", MisreportingRegime::mixed(c.mixed_fraction, c.inflation)},
        {"pure", MisreportingRegime::pure(c.inflation)}};
    for (const auto& [name, r] : regimes) {
        validate_regime(r);
    }

    ClosedLoopOptions opt;
    opt.horizon = base.horizon;
    opt.source = c.source;
    opt.icu_capacity = base.icu_capacity;
    opt.start_week = base.start_week;
    opt.vaccination = base.vaccination;
    opt.analyst_params = base.params;
    opt.analyst_regime = MisreportingRegime::none(); // the controller takes reports at face value
    opt.analyst_prior = base.prior;
    opt.particles = base.particles;
    opt.filter = base.filter;

    const LatentState start = initial_state(base, seed);
    const RngStream rng = derive_stream(seed, 0);
    const PolicySpec controller = c.controller;

    MisreportingTable table;
    table.runs.resize(regimes.size());
    parallel_for(
        regimes.size(),
        [&](std::size_t i) {
            auto& run = table.runs[i];
            run.regime = regimes[i].first;
            run.spec = regimes[i].second;
            run.result = run_closed_loop(start, controller, base.truth_params(), run.spec, rng, opt);
            run.weeks_to_control = weeks_to_control(run.result);
        },
        1);
    const auto& w = table.runs;
    table.ordered = weeks_le(w[0].weeks_to_control, w[1].weeks_to_control) &&
                    weeks_le(w[1].weeks_to_control, w[2].weeks_to_control) &&
                    weeks_lt(w[0].weeks_to_control, w[2].weeks_to_control);
    return table;
}

// ---------------------------------------------------------------------------

double median(std::vector<double> v)
{
    if (v.empty()) {
        return 0.0;
    }
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

BackfillTable run_case_backfill(const ScenarioConfig& base, const BackfillCase& c, std::uint64_t seed)
{
    base.validate();
    if (c.profiles.empty()) {
        throw Error("invalid_config", "backfill needs at least one profile");
    }
    if (!(c.population > 0.0)) {
        throw Error("invalid_config", "backfill population must be > 0");
    }
    const LatentState start = initial_state(base, seed);
    const auto r = rollout(start, base.plan(base.horizon), base.truth_params(), base.regime, derive_stream(seed, 0),
                           rollout_options(base));

    BackfillTable table;
    for (const auto& o : r.observations) {
        table.final_counts.push_back(std::llround(o.reported_cases_per_100k * c.population / kPer100k));
    }
    for (std::size_t i = 0; i < c.profiles.size(); ++i) {
        const auto& [name, profile] = c.profiles[i];
        RevisionTriangle tri = c.noise_sd > 0.0 ? RevisionTriangle::with_noise(table.final_counts, profile, c.noise_sd,
                                                                               derive_stream(seed, kTriangleStream + i))
                                                : RevisionTriangle(table.final_counts, profile);
        std::vector<std::size_t> stab;
        std::vector<double> as_double;
        for (std::size_t t = 0; t < tri.weeks(); ++t) {
            stab.push_back(tri.stabilization_time(t, c.tol));
            as_double.push_back(static_cast<double>(stab.back()));
        }
        const double med = median(as_double);
        table.profiles.push_back(BackfillProfileResult{name, profile, std::move(tri), std::move(stab), med});
    }
    return table;
}

// ---------------------------------------------------------------------------

std::string to_string(Verdict v)
{
    switch (v) {
    case Verdict::LowerAndDelayed:
        return "lower and delayed hospitalization peak";
    case Verdict::NotLowerAndDelayed:
        return "not lower and delayed";
    case Verdict::NoDivergence:
        return "no divergence";
    }
    return "no divergence";
}

Verdict counterfactual_verdict(const RolloutResult& baseline, const RolloutResult& alternative)
{
    if (baseline.trajectory == alternative.trajectory && baseline.observations == alternative.observations) {
        return Verdict::NoDivergence;
    }
    const auto& b = baseline.metrics;
    const auto& a = alternative.metrics;
    return a.peak_hosp_per_100k < b.peak_hosp_per_100k && a.peak_week >= b.peak_week ? Verdict::LowerAndDelayed
                                                                                     : Verdict::NotLowerAndDelayed;
}

std::pair<InterventionPlan, InterventionPlan> counterfactual_plans(const ScenarioConfig& base,
                                                                   const CounterfactualCase& c)
{
    if (c.divergence_week < 0) {
        throw Error("invalid_config", "divergence week must be >= 0");
    }
    if (c.masking_level < 0 || c.masking_level > kMaxLevel) {
        throw Error("invalid_config", "masking level must lie in 0..4");
    }
    for (int d : c.masking_dims) {
        if (d < 0 || d >= static_cast<int>(kActionDims)) {
            throw Error("invalid_config", "masking dim out of range", {std::to_string(d)});
        }
    }
    const int h = base.horizon;
    InterventionPlan baseline = base.plan(h);
    InterventionPlan alternative = baseline;
    for (int w = 0; w < h; ++w) {
        baseline.vaccination[w] = w >= c.vaccination_start ? c.vaccination_rate : baseline.vaccination[w];
        alternative.vaccination[w] =
            w >= c.divergence_week && w >= std::min(c.counterfactual_vaccination_start, c.vaccination_start)
                ? c.vaccination_rate
                : baseline.vaccination[w];
        if (w >= c.divergence_week) {
            for (int d : c.masking_dims) {
                auto& level = alternative.actions[w].dims[d];
                level = std::max(level, c.masking_level);
            }
        }
    }
    return {baseline, alternative};
}

CounterfactualReport run_case_counterfactual(const ScenarioConfig& base, const CounterfactualCase& c,
                                             std::uint64_t seed)
{
    base.validate();
    CounterfactualReport rep;
    std::tie(rep.baseline_plan, rep.counterfactual_plan) = counterfactual_plans(base, c);
    rep.divergence_week = static_cast<std::size_t>(c.divergence_week);
    const LatentState start = initial_state(base, seed);
    rep.pair = counterfactual_compare(start, rep.baseline_plan, rep.counterfactual_plan, rep.divergence_week,
                                      base.truth_params(), base.regime, seed, rollout_options(base));
    const auto n = std::min(rep.divergence_week, rep.pair.baseline.trajectory.size());
    rep.prefix_identical = true;
    for (std::size_t w = 0; w < n; ++w) {
        rep.prefix_identical = rep.prefix_identical &&
                               rep.pair.baseline.trajectory[w] == rep.pair.alternative.trajectory[w] &&
                               rep.pair.baseline.observations[w] == rep.pair.alternative.observations[w];
    }
    rep.verdict = counterfactual_verdict(rep.pair.baseline, rep.pair.alternative);
    return rep;
}

// ---------------------------------------------------------------------------

SyntheticDataset gen_synthetic(const ScenarioConfig& base, const SyntheticCase& c, int n_regions, int weeks,
                               std::uint64_t seed)
{
    if (n_regions < 1 || weeks < 1) {
        throw Error("invalid_config", "synthetic data needs n_regions >= 1 and weeks >= 1");
    }
    if (!(c.action_persistence >= 0.0 && c.action_persistence <= 1.0)) {
        throw Error("invalid_config", "action persistence must lie in [0, 1]");
    }
    base.validate();
    SyntheticDataset ds;
    ds.seed = seed;
    ds.regions.resize(static_cast<std::size_t>(n_regions));
    parallel_for(
        ds.regions.size(),
        [&](std::size_t r) {
            const RngStream region = derive_stream(seed, r);
            auto& out = ds.regions[r];
            out.params = base.truth_params();
            RngStream draw = region.derive(1);
            for (const auto& [name, range] : c.ranges) {
                set_param(out.params, name, range.lo + (range.hi - range.lo) * draw.uniform());
            }
            validate_params(out.params);
            out.start = sample_prior(base.prior, out.params, region.derive(2));

            RngStream walk = region.derive(3);
            InterventionPlan plan;
            std::vector<int> levels(kActionDims);
            for (auto& l : levels) {
                l = static_cast<int>(walk() % 3);
            }
            for (int w = 0; w < weeks; ++w) {
                if (w > 0) {
                    for (auto& l : levels) {
                        if (walk.uniform() >= c.action_persistence) {
                            l = std::clamp(l + (walk.uniform() < 0.5 ? -1 : 1), 0, kMaxLevel);
                        }
                    }
                }
                plan.actions.push_back(Action{base.start_week + w, levels});
            }
            plan.vaccination = base.vaccination;
            out.rollout = rollout(out.start, plan, out.params, base.regime, region.derive(4), rollout_options(base));
        },
        1);
    return ds;
}

// ---------------------------------------------------------------------------

IngestResult ingest_oxcgrt(std::istream& csv, const std::array<std::string, kActionDims>& names)
{
    const CsvTable t = read_csv(csv);
    std::vector<std::string> missing;
    for (const std::string& name : std::vector<std::string>{"region", "week"}) {
        if (!t.has_column(name)) {
            missing.push_back(name);
        }
    }
    for (const auto& name : names) {
        if (!t.has_column(name)) {
            missing.push_back(name);
        }
    }
    if (!missing.empty()) {
        throw Error("missing_column", "missing columns", missing);
    }
    const std::size_t c_region = t.column("region");
    const std::size_t c_week = t.column("week");
    std::array<std::size_t, kActionDims> c_dim{};
    for (std::size_t d = 0; d < kActionDims; ++d) {
        c_dim[d] = t.column(names[d]);
    }

    IngestResult out;
    constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
    struct Row {
        std::string region;
        int week;
        std::array<double, kActionDims> v;
        std::size_t line;
    };
    std::vector<Row> rows;
    std::array<double, kActionDims> lo;
    std::array<double, kActionDims> hi;
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    std::set<std::pair<std::string, int>> seen;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& cells = t.rows[r];
        const auto line = t.line_numbers[r];
        Row row{cells[c_region], static_cast<int>(parse_integer(cells[c_week], "week", line)), {}, line};
        if (row.region.empty()) {
            throw Error("invalid_csv", "line " + std::to_string(line) + ": field 'region' is empty", {"region"});
        }
        if (row.week < 0) {
            throw Error("invalid_csv", "line " + std::to_string(line) + ": field 'week' is negative", {"week"});
        }
        if (!seen.insert({row.region, row.week}).second) {
            throw Error("invalid_csv", "line " + std::to_string(line) + ": duplicate week for region " + row.region,
                        {row.region, std::to_string(row.week)});
        }
        for (std::size_t d = 0; d < kActionDims; ++d) {
            const auto& cell = cells[c_dim[d]];
            if (cell.empty()) {
                row.v[d] = kMissing;
                continue;
            }
            double v = parse_double(cell, names[d], line);
            if (v < 0.0) {
                out.warnings.push_back("line " + std::to_string(line) + ": " + names[d] + " = " + cell +
                                       " is negative; clamped to 0");
                v = 0.0;
            }
            row.v[d] = v;
            lo[d] = std::min(lo[d], v);
            hi[d] = std::max(hi[d], v);
        }
        rows.push_back(row);
    }
    for (std::size_t d = 0; d < kActionDims; ++d) {
        if (!(hi[d] > lo[d])) {
            if (std::isfinite(lo[d])) {
                out.warnings.push_back("column " + names[d] + " is constant; mapped to level 0");
            }
        }
        out.native_ranges.emplace_back(std::isfinite(lo[d]) ? lo[d] : 0.0, std::isfinite(hi[d]) ? hi[d] : 0.0);
    }
    auto level_of = [&](std::size_t d, double v) {
        if (!(hi[d] > lo[d])) {
            return 0;
        }
        return static_cast<int>(std::lround(kMaxLevel * (v - lo[d]) / (hi[d] - lo[d])));
    };

    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return a.region != b.region ? a.region < b.region : a.week < b.week;
    });
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Row& row = rows[i];
        auto& seq = out.regions[row.region];
        Action a{row.week, std::vector<int>(kActionDims, 0)};
        if (!seq.empty()) {
            const Action prev = seq.back();
            for (int w = prev.week + 1; w < row.week; ++w) {
                seq.push_back(Action{w, prev.dims});
                out.gaps.push_back(IngestGap{row.region, w});
            }
            a.dims = prev.dims;
        }
        for (std::size_t d = 0; d < kActionDims; ++d) {
            if (std::isnan(row.v[d])) {
                out.warnings.push_back("line " + std::to_string(row.line) + ": " + names[d] +
                                       " is blank; previous level kept");
                continue;
            }
            a.dims[d] = level_of(d, row.v[d]);
        }
        seq.push_back(std::move(a));
    }
    for (const auto& [region, seq] : out.regions) {
        require_valid(seq);
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

ThresholdPolicy eval_threshold_policy()
{
    ThresholdPolicy t;
    t.base = std::vector<int>(kActionDims, 1);
    t.rules.push_back(ThresholdRule{Feature::EffectiveR, Trigger::Above, 1.0, {0, 1, 2, 3, 4, 5, 6, 7}, 3});
    t.rules.push_back(ThresholdRule{Feature::SurveyCompliance, Trigger::Below, 0.5, {kMaskingDim}, kMaxLevel});
    return t;
}

std::vector<double> admissions_series(const LatentState& start, const RolloutResult& r)
{
    std::vector<double> s{start.new_admissions * kPer100k};
    for (const auto& x : r.trajectory) {
        s.push_back(x.new_admissions * kPer100k);
    }
    return s;
}

} // namespace

PolicyEvalReport run_policy_eval(const ScenarioConfig& base, const PolicyEvalCase& c, const SyntheticCase& synth,
                                 std::uint64_t seed)
{
    if (c.history_weeks < 1 || c.horizon < 1 || c.regions < 1) {
        throw Error("invalid_config", "policy evaluation needs regions, history_weeks, and horizon >= 1");
    }
    PolicyEvalReport rep;
    rep.dataset = gen_synthetic(base, synth, c.regions, c.history_weeks + c.horizon, seed);

    const auto h0 = static_cast<std::size_t>(c.history_weeks);
    const auto H = static_cast<std::size_t>(c.horizon);

    ClosedLoopOptions opt;
    opt.horizon = c.horizon;
    opt.source = InfoSource::Observed;
    opt.icu_capacity = base.icu_capacity;

    const auto& region0 = rep.dataset.regions.front();
    RewardSpec reward;
    GrpoConfig gc;
    gc.steps = c.grpo_steps;
    gc.group_size = std::max<std::size_t>(c.group_size, 2);
    const auto sampler = closed_loop_sampler(region0.rollout.trajectory[h0 - 1], region0.params, base.regime, opt, reward);
    const SoftmaxPolicy softmax =
        c.grpo_steps > 0 ? grpo_train(SoftmaxPolicy::uniform(), sampler, gc, derive_stream(seed, 0x67727030ULL)).policy
                         : SoftmaxPolicy::uniform();

    const std::vector<std::string> names{"replay", "threshold", "softmax"};
    for (const auto& name : names) {
        PolicyEvalRow row;
        row.policy = name;
        ActionSequence all_proposed;
        ActionSequence all_realized;
        std::vector<std::vector<double>> series;
        for (std::size_t r = 0; r < rep.dataset.regions.size(); ++r) {
            const auto& reg = rep.dataset.regions[r];
            const LatentState& start = reg.rollout.trajectory[h0 - 1];
            PolicySpec spec;
            if (name == "replay") {
                ActionSequence table(H, reg.rollout.plan.actions[h0 - 1]);
                spec = ReplayPolicy{table};
            } else if (name == "threshold") {
                spec = eval_threshold_policy();
            } else {
                spec = softmax;
            }
            ClosedLoopOptions o = opt;
            o.start_week = reg.rollout.plan.actions[h0 - 1].week + 1;
            const auto res = run_closed_loop(start, spec, reg.params, base.regime, derive_stream(seed, 0x6576ULL + r), o);
            ActionSequence realized(reg.rollout.plan.actions.begin() + static_cast<std::ptrdiff_t>(h0),
                                    reg.rollout.plan.actions.begin() + static_cast<std::ptrdiff_t>(h0 + H));
            row.region_alignment.push_back(alignment(res.rollout.plan.actions, realized));
            all_proposed.insert(all_proposed.end(), res.rollout.plan.actions.begin(), res.rollout.plan.actions.end());
            all_realized.insert(all_realized.end(), realized.begin(), realized.end());
            const auto s = admissions_series(start, res.rollout);
            series.push_back(s);
            row.region_hosp_reduction.push_back(s.front() > 0.0 ? hosp_reduction(s)
                                                                : std::numeric_limits<double>::quiet_NaN());
        }
        row.alignment = alignment(all_proposed, all_realized);
        std::vector<std::vector<double>> defined;
        for (std::size_t r = 0; r < series.size(); ++r) {
            if (series[r].front() > 0.0) {
                defined.push_back(series[r]);
            }
        }
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.hosp_reduction_mean = defined.empty() ? nan : hosp_reduction_mean_of_series(defined);
        row.hosp_reduction_pooled = defined.empty() ? nan : hosp_reduction_pooled(defined);
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

} // namespace epiworld
