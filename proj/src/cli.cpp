#include "epiworld/cli.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "epiworld/config.hpp"
#include "epiworld/dynamics.hpp"
#include "epiworld/scenarios.hpp"
#include "epiworld/service.hpp"

namespace fs = std::filesystem;

namespace epiworld {

namespace {

constexpr std::uint64_t kSimulateStream = 0;
constexpr std::uint64_t kBeliefStream = 0x62656c;  // "bel"
constexpr std::uint64_t kFilterStream = 0x666c74;  // "flt"
constexpr std::uint64_t kPlanStream = 0x706c6e;    // "pln"

const std::set<std::string> kSubcommands{"simulate", "filter", "calibrate", "plan", "case", "ingest", "serve"};
const std::set<std::string> kCases{"misreporting", "backfill", "counterfactual", "policy-eval", "synthetic"};

struct Invocation {
    std::string subcommand;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    bool deterministic = false;
    std::string case_name;
    std::string input;
    std::string host;
    int port = 0;
};

/// Writes artifacts into one directory, stamping each with provenance.
class Output {
public:
    Output(fs::path dir, std::string config_hash, std::uint64_t seed)
        : dir_(std::move(dir)), hash_(std::move(config_hash)), seed_(seed)
    {
        fs::create_directories(dir_);
    }

    void csv(const std::string& name, const std::function<void(std::ostream&)>& body) const
    {
        std::ostringstream os;
        os << provenance_comment(hash_, seed_) << '\n';
        body(os);
        write(name, os.str());
    }

    void json_file(const std::string& name, json j) const
    {
        j["config_hash"] = hash_;
        j["seed"] = seed_;
        write(name, j.dump(2) + "\n");
    }

private:
    void write(const std::string& name, const std::string& bytes) const
    {
        std::ofstream f(dir_ / name, std::ios::binary | std::ios::trunc);
        if (!f) {
            throw Error("io_error", "cannot write " + (dir_ / name).string());
        }
        f << bytes;
    }

    fs::path dir_;
    std::string hash_;
    std::uint64_t seed_;
};

void make_deterministic(Config& c)
{
    c.scenario.params.deterministic = true;
    if (c.scenario.truth) {
        c.scenario.truth->deterministic = true;
    }
}

/// Long-format plot rows: key columns, then series and value.
struct LongCsv {
    std::ostream& out;

    void header(const std::string& keys) { out << keys << ",series,value\n"; }
    void row(const std::string& keys, const std::string& series, double value)
    {
        out << keys << ',' << series << ',' << format_double(value) << '\n';
    }
};

std::string weeks_text(const std::optional<int>& w) { return w ? std::to_string(*w) : "never"; }

json weeks_json(const std::optional<int>& w) { return w ? json(*w) : json("never"); }

ClosedLoopOptions closed_loop_options(const ScenarioConfig& s)
{
    ClosedLoopOptions o;
    o.horizon = s.horizon;
    o.source = s.policy_source;
    o.icu_capacity = s.icu_capacity;
    o.start_week = s.start_week;
    o.vaccination = s.vaccination;
    o.analyst_params = s.params;
    o.analyst_regime = s.regime;
    o.analyst_prior = s.prior;
    o.particles = s.particles;
    o.filter = s.filter;
    return o;
}

RolloutOptions rollout_options(const ScenarioConfig& s)
{
    RolloutOptions o;
    o.icu_capacity = s.icu_capacity;
    o.start_week = s.start_week;
    return o;
}

/// Truth run of the scenario: the configured policy in closed loop, or the
/// configured schedule open loop.
RolloutResult simulate_truth(const ScenarioConfig& s, std::uint64_t seed)
{
    s.validate();
    const LatentState start = initial_state(s, seed);
    const RngStream rng = derive_stream(seed, kSimulateStream);
    if (s.policy) {
        return run_closed_loop(start, *s.policy, s.truth_params(), s.regime, rng, closed_loop_options(s)).rollout;
    }
    return rollout(start, s.plan(s.horizon), s.truth_params(), s.regime, rng, rollout_options(s));
}

void write_plot_series(LongCsv& plot, const std::string& keys_prefix, const RolloutResult& r, const ModelParams& p,
                       int start_week)
{
    for (std::size_t w = 0; w < r.trajectory.size(); ++w) {
        const auto& x = r.trajectory[w];
        const auto& o = r.observations[w];
        const std::string keys = keys_prefix + std::to_string(start_week + static_cast<int>(w) + 1);
        plot.row(keys, "latent_I", x.I);
        plot.row(keys, "latent_hosp_admissions_per_100k", x.new_admissions * kPer100k);
        plot.row(keys, "observed_hosp_per_100k", o.hosp_per_100k);
        plot.row(keys, "reported_cases_per_100k", o.reported_cases_per_100k);
        plot.row(keys, "true_compliance", x.compliance);
        plot.row(keys, "survey_compliance", o.survey_compliance);
        plot.row(keys, "effective_R", effective_R(x, p));
    }
}

json metadata(const Invocation& inv, const Config& c)
{
    return json{{"command", inv.subcommand}, {"deterministic", c.scenario.params.deterministic},
                {"config", to_json_value(c)}};
}

/// Actions and observations for filter, calibrate, and plan: data files
/// when configured, otherwise a simulated truth run.
CalibrationData load_or_simulate(const Config& c, std::uint64_t seed, std::string& source)
{
    CalibrationData d;
    if (!c.data.observations.empty()) {
        std::ifstream obs(c.resolve(c.data.observations));
        if (!obs) {
            throw Error("io_error", "cannot read observations file " + c.resolve(c.data.observations));
        }
        d.observations = read_observations_csv(obs);
        if (!c.data.actions.empty()) {
            std::ifstream act(c.resolve(c.data.actions));
            if (!act) {
                throw Error("io_error", "cannot read actions file " + c.resolve(c.data.actions));
            }
            d.actions = read_actions_csv(act);
        } else {
            d.actions = c.scenario.plan(static_cast<int>(d.observations.size())).actions;
        }
        if (d.actions.size() != d.observations.size()) {
            throw Error("length_mismatch", "actions and observations cover different numbers of weeks",
                        {std::to_string(d.actions.size()) + " actions", std::to_string(d.observations.size()) +
                                                                          " observations"});
        }
        d.vaccination = c.scenario.plan(static_cast<int>(d.observations.size())).vaccination;
        source = "files";
        return d;
    }
    const RolloutResult truth = simulate_truth(c.scenario, seed);
    d.actions = truth.plan.actions;
    d.observations = truth.observations;
    d.vaccination = truth.plan.vaccination;
    source = "simulated";
    return d;
}

std::vector<BeliefReport> run_filter(const Config& c, const CalibrationData& d, std::uint64_t seed, Belief& bel)
{
    const auto& s = c.scenario;
    bel = init_belief(s.prior, s.particles, s.params, derive_stream(seed, kBeliefStream));
    std::vector<BeliefReport> reports{summarize(bel, s.params)};
    for (std::size_t t = 0; t < d.observations.size(); ++t) {
        const double vax = t < d.vaccination.size() ? d.vaccination[t] : 0.0;
        bel = filter_step(bel, d.actions[t], d.observations[t], s.params, s.regime,
                          derive_stream(seed, kFilterStream).derive(t), s.filter, Exogenous{vax});
        reports.push_back(summarize(bel, s.params));
    }
    return reports;
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_simulate(const Invocation& inv, const Config& c, std::uint64_t seed, const Output& out)
{
    const RolloutResult r = simulate_truth(c.scenario, seed);
    out.csv("trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, r.trajectory, c.scenario.start_week); });
    out.csv("observations.csv", [&](std::ostream& os) { write_observations_csv(os, r.observations); });
    out.csv("actions.csv", [&](std::ostream& os) { write_actions_csv(os, r.plan.actions); });
    out.csv("metrics.csv", [&](std::ostream& os) {
        const auto& m = r.metrics;
        os << "cumulative_infections,peak_hosp_per_100k,peak_week,icu_violation_weeks,end_hosp_per_100k\n";
        os << format_double(m.cumulative_infections) << ',' << format_double(m.peak_hosp_per_100k) << ','
           << m.peak_week << ',' << m.icu_violation_weeks << ',' << format_double(m.end_hosp_per_100k) << '\n';
    });
    out.csv("plot.csv", [&](std::ostream& os) {
        LongCsv plot{os};
        plot.header("week");
        write_plot_series(plot, "", r, c.scenario.truth_params(), c.scenario.start_week);
    });
    json j = metadata(inv, c);
    j["metrics"] = r.metrics;
    j["policy"] = c.scenario.policy ? json(*c.scenario.policy) : json(nullptr);
    out.json_file("run.json", j);
}

void cmd_filter(const Invocation& inv, const Config& c, std::uint64_t seed, const Output& out)
{
    std::string source;
    const CalibrationData d = load_or_simulate(c, seed, source);
    Belief bel;
    const auto reports = run_filter(c, d, seed, bel);
    out.csv("belief.csv", [&](std::ostream& os) { write_belief_csv(os, reports); });
    out.csv("observations.csv", [&](std::ostream& os) { write_observations_csv(os, d.observations); });
    json j = metadata(inv, c);
    j["data_source"] = source;
    j["weeks"] = d.observations.size();
    j["final"] = reports.back();
    out.json_file("filter.json", j);
}

void cmd_calibrate(const Invocation& inv, const Config& c, std::uint64_t seed, const Output& out)
{
    std::string source;
    const CalibrationData d = load_or_simulate(c, seed, source);
    CalibrationConfig cc = c.calibration_config();
    const FitResult f = fit(d, cc, seed);
    out.csv("trace.csv", [&](std::ostream& os) {
        os << "evaluation,restart";
        for (const auto& fp : cc.free) {
            os << ',' << fp.name;
        }
        os << ",loglik\n";
        for (std::size_t i = 0; i < f.trace.size(); ++i) {
            const auto& t = f.trace[i];
            os << i << ',' << t.restart;
            for (double v : t.theta) {
                os << ',' << format_double(v);
            }
            os << ',' << format_double(t.value) << '\n';
        }
    });
    json j = metadata(inv, c);
    j["data_source"] = source;
    j["fit"] = f;
    json named = json::object();
    for (std::size_t i = 0; i < cc.free.size() && i < f.theta.size(); ++i) {
        named[cc.free[i].name] = f.theta[i];
    }
    j["estimate"] = named;
    if (source == "simulated") {
        json truth = json::object();
        for (const auto& fp : cc.free) {
            truth[fp.name] = get_param(c.scenario.truth_params(), fp.name);
        }
        j["truth"] = truth;
    }
    out.json_file("fit.json", j);
}

void cmd_plan(const Invocation& inv, const Config& c, std::uint64_t seed, const Output& out)
{
    const auto& s = c.scenario;
    Belief bel;
    std::string source = "prior";
    int start = s.start_week;
    if (!c.data.observations.empty()) {
        const CalibrationData d = load_or_simulate(c, seed, source);
        run_filter(c, d, seed, bel);
        start += static_cast<int>(d.observations.size());
    } else {
        bel = init_belief(s.prior, c.plan.particles, s.params, derive_stream(seed, kBeliefStream));
    }
    RolloutOptions opt = rollout_options(s);
    opt.start_week = start;
    std::vector<double> vax;
    for (int w = 0; w < c.plan.horizon; ++w) {
        const auto cal = static_cast<std::size_t>(start - s.start_week + w);
        vax.push_back(cal < s.vaccination.size() ? s.vaccination[cal] : 0.0);
    }
    const CemResult r = cem_plan(bel, static_cast<std::size_t>(c.plan.horizon), c.plan.cem, c.plan.reward, s.params,
                                 s.regime, derive_stream(seed, kPlanStream).key(), opt, vax);
    out.csv("best_actions.csv", [&](std::ostream& os) { write_actions_csv(os, r.best); });
    out.csv("cem_trace.csv", [&](std::ostream& os) {
        os << "iteration,best_ever,best_ever_feasible,elite_mean,population_mean\n";
        for (const auto& it : r.trace) {
            os << it.iteration << ',' << format_double(it.best_ever) << ',' << (it.best_ever_feasible ? 1 : 0) << ','
               << format_double(it.elite_mean) << ',' << format_double(it.population_mean) << '\n';
        }
    });
    json j = metadata(inv, c);
    j["belief_source"] = source;
    j["start_week"] = start;
    j["best"] = r.best;
    j["score"] = r.best_score.score;
    j["feasible"] = r.best_score.feasible;
    out.json_file("plan.json", j);
}

/// Repeats a case over consecutive seeds and reports how often it holds.
json seed_sweep(std::uint64_t seed, int count, const std::function<bool(std::uint64_t)>& holds)
{
    json runs = json::array();
    int passed = 0;
    for (int i = 0; i < count; ++i) {
        const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
        const bool ok = holds(s);
        passed += ok ? 1 : 0;
        runs.push_back(json{{"seed", s}, {"holds", ok}});
    }
    return json{{"runs", runs}, {"passed", passed}, {"total", count},
                {"pass_rate", count > 0 ? static_cast<double>(passed) / count : 0.0}};
}

void case_misreporting(const Invocation& inv, const Config& c, std::uint64_t seed, const Output& out)
{
    const auto table = run_case_misreporting(c.scenario, c.misreporting, seed);
    out.csv("misreporting_table.csv", [&](std::ostream& os) {
        os << "regime,over_report_fraction,inflation,weeks_to_control\n";
        for (const auto& run : table.runs) {
            os << run.regime << ',' << format_double(run.spec.over_report_fraction) << ','
               << format_double(run.spec.inflation) << ',' << weeks_text(run.weeks_to_control) << '\n';
        }
    });
    out.csv("misreporting_plot.csv", [&](std::ostream& os) {
        LongCsv plot{os};
        plot.header("regime,week");
        for (const auto& run : table.runs) {
            const auto& r = run.result;
            for (std::size_t w = 0; w < r.rollout.trajectory.size(); ++w) {
                const std::string keys =
                    run.regime + ',' + std::to_string(c.scenario.start_week + static_cast<int>(w) + 1);
                plot.row(keys, "true_effective_R", r.true_effective_R[w]);
                plot.row(keys, "true_compliance", r.rollout.trajectory[w].compliance);
                plot.row(keys, "survey_compliance", r.rollout.observations[w].survey_compliance);
                plot.row(keys, "stringency", stringency(r.rollout.plan.actions[w]));
            }
        }
    });
    json j = metadata(inv, c);
    j["case"] = "misreporting";
    j["claim"] = "weeks to effective_R < 1: none <= mixed <= pure, none < pure";
    j["holds"] = table.ordered;
    json weeks = json::object();
    for (const auto& run : table.runs) {
        weeks[run.regime] = weeks_json(run.weeks_to_control);
    }
    j["weeks_to_control"] = weeks;
    j["seeds"] = seed_sweep(seed, c.misreporting.stochastic_seeds, [&](std::uint64_t s) {
        return run_case_misreporting(c.scenario, c.misreporting, s).ordered;
    });
    out.json_file("misreporting_verdict.json", j);
}

void case_backfill(const Invocation& inv, const Config& c, std::uint64_t seed, const Output& out)
{
    const auto table = run_case_backfill(c.scenario, c.backfill, seed);
    auto holds = [](const BackfillTable& t) {
        const BackfillProfileResult* fast = nullptr;
        const BackfillProfileResult* slow = nullptr;
        for (const auto& p : t.profiles) {
            fast = p.name == "fast" ? &p : fast;
            slow = p.name == "slow" ? &p : slow;
        }
        return fast && slow && fast->median_stabilization < slow->median_stabilization;
    };
    bool resting_exact = true;
    for (const auto& p : table.profiles) {
        for (std::size_t t = 0; t < p.triangle.weeks(); ++t) {
            resting_exact = resting_exact && p.triangle.report_as_of(t, t + p.triangle.max_lag()) ==
                                                 p.triangle.final_count(t);
        }
    }
    out.csv("backfill_table.csv", [&](std::ostream& os) {
        os << "profile,event_week,final_count,stabilization_weeks\n";
        for (const auto& p : table.profiles) {
            for (std::size_t t = 0; t < p.triangle.weeks(); ++t) {
                os << p.name << ',' << t << ',' << p.triangle.final_count(t) << ',' << p.stabilization[t] << '\n';
            }
        }
    });
    out.csv("backfill_plot.csv", [&](std::ostream& os) {
        os << "profile,event_week,lag,series,value\n";
        for (const auto& p : table.profiles) {
            for (std::size_t t = 0; t < p.triangle.weeks(); ++t) {
                const double fin = static_cast<double>(p.triangle.final_count(t));
                for (std::size_t k = 0; k <= p.triangle.max_lag(); ++k) {
                    const std::string keys = p.name + ',' + std::to_string(t) + ',' + std::to_string(k);
                    const auto v = static_cast<double>(p.triangle.at(t, k));
                    os << keys << ",reported_count," << format_double(v) << '\n';
                    os << keys << ",fraction_of_final," << format_double(fin > 0 ? v / fin : 1.0) << '\n';
                }
            }
        }
    });
    json j = metadata(inv, c);
    j["case"] = "backfill";
    j["claim"] = "fast profile median stabilization strictly below slow profile";
    j["holds"] = holds(table);
    j["resting_counts_exact"] = resting_exact;
    json medians = json::object();
    for (const auto& p : table.profiles) {
        medians[p.name] = p.median_stabilization;
    }
    j["median_stabilization_weeks"] = medians;
    j["tol"] = c.backfill.tol;
    j["seeds"] = seed_sweep(seed, c.misreporting.stochastic_seeds,
                            [&](std::uint64_t s) { return holds(run_case_backfill(c.scenario, c.backfill, s)); });
    out.json_file("backfill_verdict.json", j);
}

void case_counterfactual(const Invocation& inv, const Config& c, std::uint64_t seed, const Output& out)
{
    const auto rep = run_case_counterfactual(c.scenario, c.counterfactual, seed);
    const std::pair<std::string, const RolloutResult*> arms[] = {{"baseline", &rep.pair.baseline},
                                                                 {"counterfactual", &rep.pair.alternative}};
    out.csv("counterfactual_table.csv", [&](std::ostream& os) {
        os << "plan,peak_hosp_per_100k,peak_week,cumulative_infections,icu_violation_weeks,end_hosp_per_100k\n";
        for (const auto& [name, r] : arms) {
            const auto& m = r->metrics;
            os << name << ',' << format_double(m.peak_hosp_per_100k) << ',' << m.peak_week << ','
               << format_double(m.cumulative_infections) << ',' << m.icu_violation_weeks << ','
               << format_double(m.end_hosp_per_100k) << '\n';
        }
    });
    out.csv("counterfactual_plot.csv", [&](std::ostream& os) {
        LongCsv plot{os};
        plot.header("plan,week");
        for (const auto& [name, r] : arms) {
            write_plot_series(plot, name + ",", *r, c.scenario.truth_params(), c.scenario.start_week);
            for (std::size_t w = 0; w < r->plan.actions.size(); ++w) {
                const std::string keys = name + ',' + std::to_string(c.scenario.start_week + static_cast<int>(w) + 1);
                plot.row(keys, "vaccination", r->plan.vaccination_at(w));
                plot.row(keys, "stringency", stringency(r->plan.actions[w]));
            }
        }
    });
    json j = metadata(inv, c);
    j["case"] = "counterfactual";
    j["claim"] = "counterfactual peak strictly lower and not earlier";
    j["verdict"] = to_string(rep.verdict);
    j["holds"] = rep.verdict == Verdict::LowerAndDelayed;
    j["prefix_identical"] = rep.prefix_identical;
    j["divergence_week"] = rep.divergence_week;
    j["baseline"] = rep.pair.baseline.metrics;
    j["counterfactual"] = rep.pair.alternative.metrics;
    j["seeds"] = seed_sweep(seed, c.misreporting.stochastic_seeds, [&](std::uint64_t s) {
        return run_case_counterfactual(c.scenario, c.counterfactual, s).verdict == Verdict::LowerAndDelayed;
    });
    out.json_file("counterfactual_verdict.json", j);
}

void case_policy_eval(const Invocation& inv, const Config& c, std::uint64_t seed, const Output& out)
{
    const auto rep = run_policy_eval(c.scenario, c.policy_eval, c.synthetic, seed);
    out.csv("policy_eval_table.csv", [&](std::ostream& os) {
        os << "policy,alignment,hosp_reduction_mean,hosp_reduction_pooled\n";
        for (const auto& row : rep.rows) {
            os << row.policy << ',' << format_double(row.alignment) << ',' << format_double(row.hosp_reduction_mean)
               << ',' << format_double(row.hosp_reduction_pooled) << '\n';
        }
    });
    out.csv("policy_eval_plot.csv", [&](std::ostream& os) {
        LongCsv plot{os};
        plot.header("policy,region");
        for (const auto& row : rep.rows) {
            for (std::size_t r = 0; r < row.region_alignment.size(); ++r) {
                plot.row(row.policy + ',' + std::to_string(r), "alignment", row.region_alignment[r]);
            }
            for (std::size_t r = 0; r < row.region_hosp_reduction.size(); ++r) {
                plot.row(row.policy + ',' + std::to_string(r), "hosp_reduction", row.region_hosp_reduction[r]);
            }
        }
    });
    json j = metadata(inv, c);
    j["case"] = "policy-eval";
    json rows = json::array();
    for (const auto& row : rep.rows) {
        rows.push_back(json{{"policy", row.policy},
                            {"alignment", row.alignment},
                            {"hosp_reduction_mean", row.hosp_reduction_mean},
                            {"hosp_reduction_pooled", row.hosp_reduction_pooled},
                            {"region_alignment", row.region_alignment},
                            {"region_hosp_reduction", row.region_hosp_reduction}});
    }
    j["rows"] = rows;
    out.json_file("policy_eval_verdict.json", j);
}

void case_synthetic(const Invocation& inv, const Config& c, std::uint64_t seed, const Output& out)
{
    const auto ds = gen_synthetic(c.scenario, c.synthetic, c.synthetic.regions, c.synthetic.weeks, seed);
    out.csv("synthetic_table.csv", [&](std::ostream& os) {
        os << "region";
        for (const auto& [name, range] : c.synthetic.ranges) {
            os << ',' << name;
        }
        os << ",peak_hosp_per_100k,peak_week\n";
        for (std::size_t r = 0; r < ds.regions.size(); ++r) {
            os << r;
            for (const auto& [name, range] : c.synthetic.ranges) {
                os << ',' << format_double(get_param(ds.regions[r].params, name));
            }
            const auto& m = ds.regions[r].rollout.metrics;
            os << ',' << format_double(m.peak_hosp_per_100k) << ',' << m.peak_week << '\n';
        }
    });
    out.csv("synthetic_observations.csv", [&](std::ostream& os) {
        os << "region,week,reported_cases_per_100k,hosp_per_100k,survey_compliance";
        for (std::size_t d = 0; d < kActionDims; ++d) {
            os << ",d" << d;
        }
        os << '\n';
        for (std::size_t r = 0; r < ds.regions.size(); ++r) {
            const auto& ro = ds.regions[r].rollout;
            for (std::size_t w = 0; w < ro.observations.size(); ++w) {
                const auto& o = ro.observations[w];
                os << r << ',' << o.week << ',' << format_double(o.reported_cases_per_100k) << ','
                   << format_double(o.hosp_per_100k) << ',' << format_double(o.survey_compliance);
                for (int v : ro.plan.actions[w].dims) {
                    os << ',' << v;
                }
                os << '\n';
            }
        }
    });
    out.csv("synthetic_plot.csv", [&](std::ostream& os) {
        LongCsv plot{os};
        plot.header("region,week");
        for (std::size_t r = 0; r < ds.regions.size(); ++r) {
            write_plot_series(plot, std::to_string(r) + ",", ds.regions[r].rollout, ds.regions[r].params,
                              c.scenario.start_week);
        }
    });
    json j = metadata(inv, c);
    j["case"] = "synthetic";
    j["regions"] = ds.regions.size();
    j["weeks"] = c.synthetic.weeks;
    out.json_file("synthetic_verdict.json", j);
}

void cmd_case(const Invocation& inv, const Config& c, std::uint64_t seed, const Output& out)
{
    if (inv.case_name == "misreporting") {
        case_misreporting(inv, c, seed, out);
    } else if (inv.case_name == "backfill") {
        case_backfill(inv, c, seed, out);
    } else if (inv.case_name == "counterfactual") {
        case_counterfactual(inv, c, seed, out);
    } else if (inv.case_name == "policy-eval") {
        case_policy_eval(inv, c, seed, out);
    } else {
        case_synthetic(inv, c, seed, out);
    }
}

void cmd_ingest(const Invocation& inv, const Config& c, std::uint64_t seed, const Output& out)
{
    std::ifstream in(inv.input, std::ios::binary);
    if (!in) {
        throw Error("io_error", "cannot read input file " + inv.input);
    }
    const IngestResult r = ingest_oxcgrt(in, c.action_names);
    out.csv("ingested_actions.csv", [&](std::ostream& os) {
        os << "region,week";
        for (std::size_t d = 0; d < kActionDims; ++d) {
            os << ",d" << d;
        }
        os << '\n';
        for (const auto& [region, seq] : r.regions) {
            for (const auto& a : seq) {
                os << region << ',' << a.week;
                for (int v : a.dims) {
                    os << ',' << v;
                }
                os << '\n';
            }
        }
    });
    json j = metadata(inv, c);
    json gaps = json::array();
    for (const auto& g : r.gaps) {
        gaps.push_back(json{{"region", g.region}, {"week", g.week}});
    }
    json ranges = json::array();
    for (std::size_t d = 0; d < r.native_ranges.size(); ++d) {
        ranges.push_back(json{{"name", c.action_names[d]},
                              {"min", r.native_ranges[d].first},
                              {"max", r.native_ranges[d].second}});
    }
    json regions = json::object();
    for (const auto& [region, seq] : r.regions) {
        regions[region] = seq.size();
    }
    j["regions"] = regions;
    j["gaps"] = gaps;
    j["warnings"] = r.warnings;
    j["native_ranges"] = ranges;
    (void)seed;
    out.json_file("ingest_report.json", j);
}

json error_json(const std::string& code, const std::string& message, const std::vector<std::string>& details)
{
    return json{{"error", {{"code", code}, {"message", message}, {"details", details}}}};
}

void report_error(const Invocation& inv, const json& err)
{
    std::cerr << err.dump() << '\n';
    std::error_code ec;
    fs::create_directories(inv.out, ec);
    if (!ec) {
        std::ofstream f(fs::path(inv.out) / "error.json", std::ios::binary | std::ios::trunc);
        f << err.dump(2) << '\n';
    }
}

} // namespace

std::string usage()
{
    return "usage: epiworld <subcommand> [--config FILE] [--seed N] [--out DIR] [--deterministic]\n"
           "subcommands:\n"
           "  simulate                 roll the true world forward over the scenario horizon\n"
           "  filter                   track the belief over observed or simulated data\n"
           "  calibrate                fit free model parameters by filter likelihood\n"
           "  plan                     search intervention sequences with the cross-entropy method\n"
           "  case --name NAME         misreporting | backfill | counterfactual | policy-eval | synthetic\n"
           "  ingest --input FILE      map an OxCGRT-format CSV onto 0..4 action levels\n"
           "  serve [--host H] [--port P]   run the session API\n"
           "environment: EPIWORLD_THREADS caps worker threads\n";
}

int run(int argc, const char* const* argv)
{
    if (argc < 2) {
        std::cerr << usage();
        return kExitUsage;
    }
    const std::string first = argv[1];
    if (first == "-h" || first == "--help") {
        std::cout << usage();
        return kExitOk;
    }
    if (!kSubcommands.count(first)) {
        std::cerr << "unknown subcommand '" << first << "'\n" << usage();
        return kExitUsage;
    }

    Invocation inv;
    inv.subcommand = first;
    CLI::App app{"epidemiological world-model engine", "epiworld"};
    app.fallthrough();
    app.require_subcommand(1, 1);
    app.add_option("--config", inv.config_path, "scenario config file (INI)");
    app.add_option("--seed", inv.seed, "master seed; overrides scenario.seed");
    app.add_option("--out", inv.out, "output directory");
    app.add_flag("--deterministic", inv.deterministic, "replace binomial draws by their means");
    for (const auto& name : kSubcommands) {
        auto* sub = app.add_subcommand(name);
        if (name == "case") {
            sub->add_option("--name", inv.case_name, "case study")->required()->check(CLI::IsMember(kCases));
        } else if (name == "ingest") {
            sub->add_option("--input", inv.input, "OxCGRT-format CSV")->required();
        } else if (name == "serve") {
            sub->add_option("--host", inv.host, "bind address");
            sub->add_option("--port", inv.port, "port");
        }
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << usage();
        return kExitUsage;
    }

    try {
        Config c = inv.config_path.empty() ? Config() : load_config_file(inv.config_path);
        if (inv.deterministic) {
            make_deterministic(c);
        }
        if (inv.subcommand == "serve") {
            Service service;
            const std::string host = inv.host.empty() ? c.service.host : inv.host;
            const int port = inv.port > 0 ? inv.port : c.service.port;
            std::cerr << "listening on " << host << ':' << port << '\n';
            if (!serve(service, host, port)) {
                throw Error("bind_failed", "cannot listen on " + host + ":" + std::to_string(port));
            }
            return kExitOk;
        }
        const std::uint64_t seed = inv.subcommand == "ingest" ? inv.seed.value_or(c.scenario.seed.value_or(0))
                                                              : scenario_seed(c.scenario, inv.seed);
        c.scenario.seed = seed;
        const Output out(inv.out, config_hash(c), seed);
        if (inv.subcommand == "simulate") {
            cmd_simulate(inv, c, seed, out);
        } else if (inv.subcommand == "filter") {
            cmd_filter(inv, c, seed, out);
        } else if (inv.subcommand == "calibrate") {
            cmd_calibrate(inv, c, seed, out);
        } else if (inv.subcommand == "plan") {
            cmd_plan(inv, c, seed, out);
        } else if (inv.subcommand == "case") {
            cmd_case(inv, c, seed, out);
        } else {
            cmd_ingest(inv, c, seed, out);
        }
        return kExitOk;
    } catch (const Error& e) {
        report_error(inv, error_json(e.code(), e.what(), e.details()));
    } catch (const std::exception& e) {
        report_error(inv, error_json("internal_error", e.what(), {}));
    }
    return kExitFailure;
}

} // namespace epiworld
