#include "epiworld/config.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace epiworld {

InterventionPlan ScenarioConfig::plan(int weeks) const
{
    InterventionPlan out;
    for (int w = 0; w < weeks; ++w) {
        Action a = w < static_cast<int>(actions.size()) ? actions[w] : Action::uniform(base_level);
        a.week = start_week + w;
        out.actions.push_back(std::move(a));
    }
    out.vaccination = vaccination;
    out.vaccination.resize(static_cast<std::size_t>(std::max(weeks, 0)), 0.0);
    return out;
}

void ScenarioConfig::validate() const
{
    std::vector<std::string> problems;
    auto collect = [&](const std::string& where, auto&& check) {
        try {
            check();
        } catch (const Error& e) {
            problems.push_back(where + ": " + e.what());
            for (const auto& d : e.details()) {
                problems.push_back(where + ": " + d);
            }
        }
    };
    collect("model", [&] { validate_params(params); });
    if (truth) {
        collect("truth", [&] { validate_params(*truth); });
    }
    collect("regime", [&] { validate_regime(regime); });
    collect("prior", [&] { validate_prior(prior); });
    collect("scenario.actions", [&] { require_valid(actions); });
    if (policy) {
        collect("policy", [&] { validate_policy(*policy); });
    }
    if (horizon < 0) {
        problems.push_back("scenario.horizon: must be >= 0");
    }
    if (start_week < 0) {
        problems.push_back("scenario.start_week: must be >= 0");
    }
    if (base_level < 0 || base_level > kMaxLevel) {
        problems.push_back("scenario.base_level: must lie in 0..4");
    }
    if (particles == 0) {
        problems.push_back("scenario.particles: must be >= 1");
    }
    if (!(icu_capacity >= 0.0)) {
        problems.push_back("scenario.icu_capacity: must be >= 0");
    }
    for (std::size_t w = 0; w < vaccination.size(); ++w) {
        if (!(vaccination[w] >= 0.0 && vaccination[w] <= 1.0)) {
            problems.push_back("scenario.vaccination: week " + std::to_string(w) + " outside [0, 1]");
        }
    }
    if (!problems.empty()) {
        throw Error("invalid_config", "invalid scenario configuration", problems);
    }
}

namespace {

std::vector<int> all_dims()
{
    std::vector<int> d(kActionDims);
    for (std::size_t i = 0; i < kActionDims; ++i) {
        d[i] = static_cast<int>(i);
    }
    return d;
}

} // namespace

MisreportingCase::MisreportingCase()
{
    controller.base = std::vector<int>(kActionDims, 1);
    controller.rules.push_back(ThresholdRule{Feature::SurveyCompliance, Trigger::Below, 0.8, all_dims(), kMaxLevel});
}

BackfillCase::BackfillCase() : profiles{{"fast", fast_profile()}, {"slow", slow_profile()}} {}

SyntheticCase::SyntheticCase()
    : ranges{{"beta0", {1.3, 1.9}}, {"ihr", {0.005, 0.02}}, {"kappa", {0.5, 0.8}}, {"ascertainment", {0.2, 0.5}}}
{
}

Config::Config()
{
    const auto& names = default_dim_names();
    for (std::size_t i = 0; i < kActionDims; ++i) {
        action_names[i] = std::string(names[i]);
    }
}

CalibrationConfig Config::calibration_config() const
{
    CalibrationConfig c;
    c.free = calibration.free;
    c.optimizer = calibration.optimizer;
    c.restarts = calibration.restarts;
    c.particles = calibration.particles;
    c.beta_kl = calibration.beta_kl;
    c.max_evaluations = calibration.max_evaluations;
    c.base = scenario.params;
    c.regime = scenario.regime;
    c.prior = scenario.prior;
    c.filter = scenario.filter;
    return c;
}

std::string Config::resolve(const std::string& path) const
{
    if (path.empty()) {
        return path;
    }
    const std::filesystem::path p(path);
    return p.is_absolute() ? path : (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

// ---------------------------------------------------------------------------
// Rule and free-parameter shorthands

namespace {

std::vector<std::string> tokens(const std::string& text)
{
    std::istringstream ss(text);
    std::vector<std::string> out;
    std::string t;
    while (ss >> t) {
        out.push_back(t);
    }
    return out;
}

double token_double(const std::string& t, const std::string& what)
{
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size()) {
        throw Error("invalid_config", what + ": '" + t + "' is not a number");
    }
    return v;
}

int token_int(const std::string& t, const std::string& what)
{
    int v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size()) {
        throw Error("invalid_config", what + ": '" + t + "' is not an integer");
    }
    return v;
}

} // namespace

ThresholdRule parse_rule(const std::string& text)
{
    const auto t = tokens(text);
    if (t.size() < 4) {
        throw Error("invalid_config", "rule needs '<feature> <above|below> <threshold> <level> [dims...]'");
    }
    ThresholdRule r;
    r.feature = parse_feature(t[0]);
    r.trigger = parse_trigger(t[1]);
    r.threshold = token_double(t[2], "rule threshold");
    r.level = token_int(t[3], "rule level");
    for (std::size_t i = 4; i < t.size(); ++i) {
        r.dims.push_back(token_int(t[i], "rule dim"));
    }
    if (r.dims.empty()) {
        r.dims = all_dims();
    }
    return r;
}

FreeParameter parse_free_parameter(const std::string& text)
{
    const auto t = tokens(text);
    if (t.size() != 3 && t.size() != 4) {
        throw Error("invalid_config", "free parameter needs '<name> <lower> <upper> [grid_points]'");
    }
    FreeParameter f;
    f.name = t[0];
    f.lower = token_double(t[1], "lower bound");
    f.upper = token_double(t[2], "upper bound");
    if (t.size() == 4) {
        const int n = token_int(t[3], "grid points");
        if (n < 1) {
            throw Error("invalid_config", "grid points must be >= 1");
        }
        f.grid_points = static_cast<std::size_t>(n);
    }
    return f;
}

// ---------------------------------------------------------------------------
// JSON form

namespace {

/// Typed access to one config section; unknown keys are rejected on finish().
class Section {
public:
    Section(const json& root, std::string name) : name_(std::move(name))
    {
        if (root.contains(name_)) {
            node_ = root.at(name_);
            if (!node_.is_object()) {
                fail("", "section must be an object");
            }
        } else {
            node_ = json::object();
        }
    }

    bool has(const std::string& key) const { return node_.contains(key); }

    [[noreturn]] void fail(const std::string& key, const std::string& message) const
    {
        const std::string field = key.empty() ? name_ : name_ + "." + key;
        throw Error("invalid_config", "field '" + field + "': " + message, {field});
    }

    const json& raw(const std::string& key)
    {
        used_.insert(key);
        return node_.at(key);
    }

    template <class F>
    auto guarded(const std::string& key, F&& f)
    {
        static const json kMissing;
        try {
            return f(has(key) ? raw(key) : kMissing);
        } catch (const Error& e) {
            if (!e.details().empty() && e.details().front().rfind(name_ + ".", 0) == 0) {
                throw;
            }
            fail(key, e.what());
        } catch (const std::exception& e) {
            fail(key, e.what());
        }
    }

    double number(const std::string& key, double fallback)
    {
        if (!has(key)) {
            return fallback;
        }
        const json& v = raw(key);
        if (!v.is_number()) {
            fail(key, "expected a number");
        }
        return v.get<double>();
    }

    long long integer(const std::string& key, long long fallback)
    {
        if (!has(key)) {
            return fallback;
        }
        const json& v = raw(key);
        if (!v.is_number_integer()) {
            fail(key, "expected an integer");
        }
        return v.get<long long>();
    }

    std::size_t count(const std::string& key, std::size_t fallback)
    {
        const long long v = integer(key, static_cast<long long>(fallback));
        if (v < 0) {
            fail(key, "must be >= 0");
        }
        return static_cast<std::size_t>(v);
    }

    std::uint64_t unsigned_integer(const std::string& key)
    {
        const json& v = raw(key);
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
            fail(key, "expected a non-negative integer");
        }
        return v.get<std::uint64_t>();
    }

    bool boolean(const std::string& key, bool fallback)
    {
        if (!has(key)) {
            return fallback;
        }
        const json& v = raw(key);
        if (!v.is_boolean()) {
            fail(key, "expected true or false");
        }
        return v.get<bool>();
    }

    std::string string(const std::string& key, const std::string& fallback)
    {
        if (!has(key)) {
            return fallback;
        }
        const json& v = raw(key);
        if (!v.is_string()) {
            fail(key, "expected a string");
        }
        return v.get<std::string>();
    }

    /// Accepts a scalar as a one-element list.
    std::vector<double> numbers(const std::string& key, std::vector<double> fallback)
    {
        if (!has(key)) {
            return fallback;
        }
        const json& v = raw(key);
        std::vector<double> out;
        for (const auto& item : v.is_array() ? v : json::array({v})) {
            if (!item.is_number()) {
                fail(key, "expected a list of numbers");
            }
            out.push_back(item.get<double>());
        }
        return out;
    }

    std::vector<int> integers(const std::string& key, std::vector<int> fallback)
    {
        if (!has(key)) {
            return fallback;
        }
        const json& v = raw(key);
        std::vector<int> out;
        for (const auto& item : v.is_array() ? v : json::array({v})) {
            if (!item.is_number_integer()) {
                fail(key, "expected a list of integers");
            }
            out.push_back(item.get<int>());
        }
        return out;
    }

    std::vector<std::string> strings(const std::string& key, std::vector<std::string> fallback)
    {
        if (!has(key)) {
            return fallback;
        }
        const json& v = raw(key);
        std::vector<std::string> out;
        for (const auto& item : v.is_array() ? v : json::array({v})) {
            if (!item.is_string()) {
                fail(key, "expected a list of strings");
            }
            out.push_back(item.get<std::string>());
        }
        return out;
    }

    Range range(const std::string& key, Range fallback)
    {
        if (!has(key)) {
            return fallback;
        }
        const auto v = numbers(key, {});
        if (v.size() != 2) {
            fail(key, "expected 'lo, hi'");
        }
        return {v[0], v[1]};
    }

    std::vector<std::string> keys() const
    {
        std::vector<std::string> out;
        for (const auto& [k, v] : node_.items()) {
            out.push_back(k);
        }
        return out;
    }

    void finish() const
    {
        for (const auto& [k, v] : node_.items()) {
            if (!used_.count(k)) {
                fail(k, "unknown field");
            }
        }
    }

private:
    std::string name_;
    json node_;
    std::set<std::string> used_;
};

void read_params(Section& s, ModelParams& p)
{
    for (const auto& key : s.keys()) {
        const auto& names = param_names();
        if (std::find(names.begin(), names.end(), key) == names.end()) {
            continue;
        }
        if (key == "deterministic") {
            p.deterministic = s.boolean(key, p.deterministic);
        } else {
            const double v = s.number(key, 0.0);
            s.guarded(key, [&](const json&) {
                set_param(p, key, v);
                return 0;
            });
        }
    }
}

json params_json(const ModelParams& p)
{
    json j;
    to_json(j, p);
    return j;
}

std::vector<ThresholdRule> read_rules(Section& s)
{
    std::vector<ThresholdRule> rules;
    std::vector<std::string> keys;
    for (const auto& k : s.keys()) {
        if (k.rfind("rule", 0) == 0) {
            keys.push_back(k);
        }
    }
    // rule1 < rule2 < rule10
    std::sort(keys.begin(), keys.end(), [](const std::string& a, const std::string& b) {
        return a.size() != b.size() ? a.size() < b.size() : a < b;
    });
    for (const auto& k : keys) {
        rules.push_back(s.guarded(k, [&](const json& v) {
            if (v.is_string()) {
                return parse_rule(v.get<std::string>());
            }
            ThresholdRule r;
            from_json(v, r);
            return r;
        }));
    }
    return rules;
}

void write_rules(json& section, const std::vector<ThresholdRule>& rules)
{
    for (std::size_t i = 0; i < rules.size(); ++i) {
        section["rule" + std::to_string(i + 1)] = rules[i];
    }
}

json action_table_json(const ActionSequence& seq) { return seq; }

} // namespace

json to_json_value(const Config& c)
{
    const auto& s = c.scenario;
    json j;
    j["model"] = params_json(s.params);
    if (s.truth) {
        j["truth"] = params_json(*s.truth);
    }
    j["regime"] = s.regime;
    j["prior"] = s.prior;
    j["prior"]["init"] = s.sample_truth_init ? "sample" : "mean";
    json scen{{"horizon", s.horizon},
              {"start_week", s.start_week},
              {"icu_capacity", s.icu_capacity},
              {"particles", s.particles},
              {"base_level", s.base_level},
              {"vaccination", s.vaccination}};
    if (s.seed) {
        scen["seed"] = *s.seed;
    }
    if (!s.actions.empty()) {
        scen["actions"] = action_table_json(s.actions);
    }
    j["scenario"] = scen;
    j["filter"] = json{{"cases", s.filter.channels.cases},
                       {"hosp", s.filter.channels.hosp},
                       {"survey", s.filter.channels.survey},
                       {"resample_threshold", s.filter.settings.resample_threshold}};
    if (s.policy) {
        json pol;
        to_json(pol, *s.policy);
        pol["source"] = to_string(s.policy_source);
        if (const auto* t = std::get_if<ThresholdPolicy>(&*s.policy)) {
            pol.erase("rules");
            write_rules(pol, t->rules);
        }
        j["policy"] = pol;
    }

    json mis{{"inflation", c.misreporting.inflation},
             {"mixed_fraction", c.misreporting.mixed_fraction},
             {"base", c.misreporting.controller.base},
             {"source", to_string(c.misreporting.source)},
             {"stochastic_seeds", c.misreporting.stochastic_seeds}};
    write_rules(mis, c.misreporting.controller.rules);
    j["misreporting"] = mis;

    json back{{"population", c.backfill.population}, {"noise_sd", c.backfill.noise_sd}, {"tol", c.backfill.tol}};
    json names = json::array();
    for (const auto& [name, profile] : c.backfill.profiles) {
        names.push_back(name);
        back["profile_" + name] = profile;
    }
    back["profiles"] = names;
    j["backfill"] = back;

    const auto& cf = c.counterfactual;
    j["counterfactual"] = json{{"divergence_week", cf.divergence_week},
                               {"vaccination_start", cf.vaccination_start},
                               {"counterfactual_vaccination_start", cf.counterfactual_vaccination_start},
                               {"vaccination_rate", cf.vaccination_rate},
                               {"masking_level", cf.masking_level},
                               {"masking_dims", cf.masking_dims}};
    const auto& pe = c.policy_eval;
    j["policy_eval"] = json{{"regions", pe.regions},
                            {"history_weeks", pe.history_weeks},
                            {"horizon", pe.horizon},
                            {"grpo_steps", pe.grpo_steps},
                            {"group_size", pe.group_size}};
    json syn{{"regions", c.synthetic.regions},
             {"weeks", c.synthetic.weeks},
             {"action_persistence", c.synthetic.action_persistence}};
    for (const auto& [name, r] : c.synthetic.ranges) {
        syn[name] = json::array({r.lo, r.hi});
    }
    j["synthetic"] = syn;

    json free = json::array();
    for (const auto& f : c.calibration.free) {
        free.push_back(
            json{{"name", f.name}, {"lower", f.lower}, {"upper", f.upper}, {"grid_points", f.grid_points}});
    }
    j["calibration"] = json{{"free", free},
                            {"optimizer", to_string(c.calibration.optimizer)},
                            {"restarts", c.calibration.restarts},
                            {"particles", c.calibration.particles},
                            {"beta_kl", c.calibration.beta_kl},
                            {"max_evaluations", c.calibration.max_evaluations}};
    json plan = c.plan.cem;
    plan["horizon"] = c.plan.horizon;
    plan["particles"] = c.plan.particles;
    j["plan"] = plan;
    j["reward"] = c.plan.reward;
    j["data"] = json{{"observations", c.data.observations}, {"actions", c.data.actions}, {"triangle", c.data.triangle}};
    j["service"] = json{{"host", c.service.host}, {"port", c.service.port}, {"debug", c.service.debug}};
    json an;
    for (std::size_t i = 0; i < kActionDims; ++i) {
        an["d" + std::to_string(i)] = c.action_names[i];
    }
    j["action_names"] = an;
    return j;
}

Config config_from_json(const json& j)
{
    if (!j.is_object()) {
        throw Error("invalid_config", "configuration must be an object");
    }
    static const std::set<std::string> known{"model",  "truth",   "regime",      "prior",   "scenario",
                                             "filter", "policy",  "misreporting", "backfill", "counterfactual",
                                             "policy_eval", "synthetic", "calibration", "plan", "reward",
                                             "data",   "service", "action_names"};
    for (const auto& [k, v] : j.items()) {
        if (!known.count(k)) {
            throw Error("invalid_config", "unknown section '" + k + "'", {k});
        }
    }

    Config c;
    auto& s = c.scenario;
    {
        Section sec(j, "model");
        read_params(sec, s.params);
        sec.finish();
    }
    if (j.contains("truth")) {
        Section sec(j, "truth");
        ModelParams t = s.params;
        read_params(sec, t);
        sec.finish();
        s.truth = t;
    }
    {
        Section sec(j, "regime");
        const auto tag = sec.string("tag", "none");
        s.regime.tag = sec.guarded("tag", [&](const json&) { return parse_regime_tag(tag); });
        const double default_fraction = s.regime.tag == MisreportingRegime::Tag::Pure ? 1.0 : 0.0;
        s.regime.over_report_fraction = sec.number("over_report_fraction", default_fraction);
        s.regime.inflation = sec.number("inflation", 0.0);
        sec.finish();
    }
    {
        Section sec(j, "prior");
        auto& p = s.prior;
        p.I = sec.range("I", p.I);
        p.E = sec.range("E", p.E);
        p.compliance = sec.range("compliance", p.compliance);
        p.transmissibility = sec.range("transmissibility", p.transmissibility);
        p.R = sec.number("R", p.R);
        p.fatigue = sec.number("fatigue", p.fatigue);
        p.immunity = sec.number("immunity", p.immunity);
        p.mixing_scale = sec.number("mixing_scale", p.mixing_scale);
        p.season_phase = sec.number("season_phase", p.season_phase);
        const auto init = sec.string("init", "mean");
        if (init != "mean" && init != "sample") {
            sec.fail("init", "expected 'mean' or 'sample'");
        }
        s.sample_truth_init = init == "sample";
        sec.finish();
    }
    {
        Section sec(j, "scenario");
        s.horizon = static_cast<int>(sec.integer("horizon", s.horizon));
        s.start_week = static_cast<int>(sec.integer("start_week", s.start_week));
        if (sec.has("seed")) {
            s.seed = sec.unsigned_integer("seed");
        }
        s.icu_capacity = sec.number("icu_capacity", s.icu_capacity);
        s.particles = sec.count("particles", s.particles);
        s.base_level = static_cast<int>(sec.integer("base_level", s.base_level));
        s.vaccination = sec.numbers("vaccination", {});
        if (sec.has("vaccination_rate")) {
            const double rate = sec.number("vaccination_rate", 0.0);
            const auto start = static_cast<int>(sec.integer("vaccination_start", 0));
            s.vaccination.assign(static_cast<std::size_t>(std::max(s.horizon, 0)), 0.0);
            for (int w = std::max(start, 0); w < s.horizon; ++w) {
                s.vaccination[w] = rate;
            }
        } else if (sec.has("vaccination_start")) {
            sec.fail("vaccination_start", "requires vaccination_rate");
        }
        if (sec.has("actions")) {
            s.actions = sec.guarded("actions", [&](const json& v) {
                ActionSequence seq;
                for (const auto& item : v) {
                    Action a;
                    from_json(item, a);
                    seq.push_back(a);
                }
                return seq;
            });
        }
        sec.finish();
    }
    {
        Section sec(j, "filter");
        auto& f = s.filter;
        f.channels.cases = sec.boolean("cases", f.channels.cases);
        f.channels.hosp = sec.boolean("hosp", f.channels.hosp);
        f.channels.survey = sec.boolean("survey", f.channels.survey);
        f.settings.resample_threshold = sec.number("resample_threshold", f.settings.resample_threshold);
        if (!(f.settings.resample_threshold >= 0.0 && f.settings.resample_threshold <= 1.0)) {
            sec.fail("resample_threshold", "must lie in [0, 1]");
        }
        sec.finish();
    }
    if (j.contains("policy")) {
        Section sec(j, "policy");
        const auto kind = sec.string("kind", "threshold");
        if (sec.has("source")) {
            const auto src = sec.string("source", "observed");
            s.policy_source = sec.guarded("source", [&](const json&) { return parse_info_source(src); });
        }
        if (kind == "threshold") {
            ThresholdPolicy t;
            t.base = sec.integers("base", t.base);
            if (sec.has("base_level")) {
                t.base.assign(kActionDims, static_cast<int>(sec.integer("base_level", 0)));
            }
            t.rules = read_rules(sec);
            s.policy = t;
        } else if (kind == "replay") {
            s.policy = ReplayPolicy{s.actions};
            if (sec.has("table")) {
                s.policy = sec.guarded("table", [&](const json& v) {
                    return policy_from_json(json{{"kind", "replay"}, {"table", v}});
                });
            }
        } else if (kind == "softmax") {
            SoftmaxPolicy sm = SoftmaxPolicy::uniform(kActionDims, sec.number("temperature", 1.0));
            if (sec.has("dims")) {
                sm = std::get<SoftmaxPolicy>(sec.guarded("dims", [&](const json& v) {
                    return policy_from_json(json{{"kind", "softmax"}, {"temperature", sm.temperature}, {"dims", v}});
                }));
            }
            s.policy = sm;
        } else {
            sec.fail("kind", "expected threshold, replay, or softmax");
        }
        sec.finish();
    }
    {
        Section sec(j, "misreporting");
        auto& m = c.misreporting;
        m.inflation = sec.number("inflation", m.inflation);
        m.mixed_fraction = sec.number("mixed_fraction", m.mixed_fraction);
        m.controller.base = sec.integers("base", m.controller.base);
        auto rules = read_rules(sec);
        if (!rules.empty()) {
            m.controller.rules = std::move(rules);
        }
        if (sec.has("source")) {
            const auto src = sec.string("source", "latent");
            m.source = sec.guarded("source", [&](const json&) { return parse_info_source(src); });
        }
        m.stochastic_seeds = static_cast<int>(sec.integer("stochastic_seeds", m.stochastic_seeds));
        sec.finish();
    }
    {
        Section sec(j, "backfill");
        auto& b = c.backfill;
        b.population = sec.number("population", b.population);
        b.noise_sd = sec.number("noise_sd", b.noise_sd);
        b.tol = sec.number("tol", b.tol);
        std::map<std::string, std::vector<double>> custom;
        for (const auto& k : sec.keys()) {
            if (k.rfind("profile_", 0) == 0) {
                custom[k.substr(8)] = sec.numbers(k, {});
            }
        }
        if (sec.has("profiles")) {
            b.profiles.clear();
            for (const auto& name : sec.strings("profiles", {})) {
                if (custom.count(name)) {
                    b.profiles.emplace_back(name, custom[name]);
                } else if (name == "fast") {
                    b.profiles.emplace_back(name, fast_profile());
                } else if (name == "slow") {
                    b.profiles.emplace_back(name, slow_profile());
                } else if (name == "none") {
                    b.profiles.emplace_back(name, no_delay_profile());
                } else {
                    sec.fail("profiles", "unknown profile '" + name + "'");
                }
            }
        }
        for (const auto& [name, profile] : b.profiles) {
            sec.guarded(custom.count(name) ? "profile_" + name : std::string("profiles"), [&](const json&) {
                validate_profile(profile);
                return 0;
            });
        }
        if (!(b.tol > 0.0 && b.tol <= 1.0)) {
            sec.fail("tol", "must lie in (0, 1]");
        }
        sec.finish();
    }
    {
        Section sec(j, "counterfactual");
        auto& cf = c.counterfactual;
        cf.divergence_week = static_cast<int>(sec.integer("divergence_week", cf.divergence_week));
        cf.vaccination_start = static_cast<int>(sec.integer("vaccination_start", cf.vaccination_start));
        cf.counterfactual_vaccination_start =
            static_cast<int>(sec.integer("counterfactual_vaccination_start", cf.counterfactual_vaccination_start));
        cf.vaccination_rate = sec.number("vaccination_rate", cf.vaccination_rate);
        cf.masking_level = static_cast<int>(sec.integer("masking_level", cf.masking_level));
        cf.masking_dims = sec.integers("masking_dims", cf.masking_dims);
        sec.finish();
    }
    {
        Section sec(j, "policy_eval");
        auto& pe = c.policy_eval;
        pe.regions = static_cast<int>(sec.integer("regions", pe.regions));
        pe.history_weeks = static_cast<int>(sec.integer("history_weeks", pe.history_weeks));
        pe.horizon = static_cast<int>(sec.integer("horizon", pe.horizon));
        pe.grpo_steps = static_cast<int>(sec.integer("grpo_steps", pe.grpo_steps));
        pe.group_size = sec.count("group_size", pe.group_size);
        sec.finish();
    }
    {
        Section sec(j, "synthetic");
        auto& sy = c.synthetic;
        sy.regions = static_cast<int>(sec.integer("regions", sy.regions));
        sy.weeks = static_cast<int>(sec.integer("weeks", sy.weeks));
        sy.action_persistence = sec.number("action_persistence", sy.action_persistence);
        const auto& names = param_names();
        for (const auto& k : sec.keys()) {
            if (std::find(names.begin(), names.end(), k) == names.end()) {
                continue;
            }
            const Range r = sec.range(k, {});
            auto it = std::find_if(sy.ranges.begin(), sy.ranges.end(), [&](const auto& e) { return e.first == k; });
            if (it != sy.ranges.end()) {
                it->second = r;
            } else {
                sy.ranges.emplace_back(k, r);
            }
        }
        sec.finish();
    }
    {
        Section sec(j, "calibration");
        auto& cal = c.calibration;
        if (sec.has("free")) {
            cal.free = sec.guarded("free", [&](const json& v) {
                std::vector<FreeParameter> out;
                for (const auto& item : v.is_array() ? v : json::array({v})) {
                    if (item.is_string()) {
                        out.push_back(parse_free_parameter(item.get<std::string>()));
                    } else {
                        FreeParameter f;
                        f.name = item.at("name").get<std::string>();
                        f.lower = item.at("lower").get<double>();
                        f.upper = item.at("upper").get<double>();
                        f.grid_points = item.value("grid_points", f.grid_points);
                        out.push_back(f);
                    }
                }
                return out;
            });
        }
        if (sec.has("optimizer")) {
            const auto o = sec.string("optimizer", "grid");
            cal.optimizer = sec.guarded("optimizer", [&](const json&) { return parse_optimizer(o); });
        }
        cal.restarts = static_cast<int>(sec.integer("restarts", cal.restarts));
        cal.particles = sec.count("particles", cal.particles);
        cal.beta_kl = sec.number("beta_kl", cal.beta_kl);
        cal.max_evaluations = static_cast<int>(sec.integer("max_evaluations", cal.max_evaluations));
        sec.finish();
    }
    {
        Section sec(j, "plan");
        auto& pl = c.plan;
        pl.horizon = static_cast<int>(sec.integer("horizon", pl.horizon));
        pl.particles = sec.count("particles", pl.particles);
        pl.cem.population = sec.count("population", pl.cem.population);
        pl.cem.elites = sec.count("elites", pl.cem.elites);
        pl.cem.iterations = static_cast<int>(sec.integer("iterations", pl.cem.iterations));
        pl.cem.smoothing = sec.number("smoothing", pl.cem.smoothing);
        pl.cem.min_probability = sec.number("min_probability", pl.cem.min_probability);
        pl.cem.samples = sec.count("samples", pl.cem.samples);
        sec.guarded(sec.has("population") ? "population" : (sec.has("elites") ? "elites" : "horizon"),
                    [&](const json&) {
                        validate_cem(pl.cem);
                        return 0;
                    });
        sec.finish();
    }
    {
        Section sec(j, "reward");
        auto& r = c.plan.reward;
        r.cumulative_infections = sec.number("cumulative_infections", r.cumulative_infections);
        r.peak_hosp = sec.number("peak_hosp", r.peak_hosp);
        r.peak_week = sec.number("peak_week", r.peak_week);
        r.icu_violation_weeks = sec.number("icu_violation_weeks", r.icu_violation_weeks);
        r.end_hosp = sec.number("end_hosp", r.end_hosp);
        r.icu_hard_constraint = sec.boolean("icu_hard_constraint", r.icu_hard_constraint);
        sec.finish();
    }
    {
        Section sec(j, "data");
        c.data.observations = sec.string("observations", "");
        c.data.actions = sec.string("actions", "");
        c.data.triangle = sec.string("triangle", "");
        sec.finish();
    }
    {
        Section sec(j, "service");
        c.service.host = sec.string("host", c.service.host);
        c.service.port = static_cast<int>(sec.integer("port", c.service.port));
        c.service.debug = sec.boolean("debug", c.service.debug);
        if (c.service.port < 0 || c.service.port > 65535) {
            sec.fail("port", "must lie in 0..65535");
        }
        sec.finish();
    }
    {
        Section sec(j, "action_names");
        for (std::size_t i = 0; i < kActionDims; ++i) {
            c.action_names[i] = sec.string("d" + std::to_string(i), c.action_names[i]);
        }
        sec.finish();
    }
    return c;
}

// ---------------------------------------------------------------------------
// INI form

namespace {

json typed_value(const std::string& raw)
{
    std::string v = raw;
    const auto b = v.find_first_not_of(" \t");
    const auto e = v.find_last_not_of(" \t");
    v = b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    if (v.find(',') != std::string::npos) {
        json arr = json::array();
        std::istringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            arr.push_back(typed_value(item));
        }
        return arr;
    }
    if (v == "true") {
        return true;
    }
    if (v == "false") {
        return false;
    }
    const char* first = v.data();
    const char* last = v.data() + v.size();
    long long i = 0;
    if (auto [p, ec] = std::from_chars(first, last, i); ec == std::errc() && p == last && !v.empty()) {
        return i;
    }
    unsigned long long u = 0;
    if (auto [p, ec] = std::from_chars(first, last, u); ec == std::errc() && p == last && !v.empty()) {
        return u;
    }
    double d = 0.0;
    if (auto [p, ec] = std::from_chars(first, last, d); ec == std::errc() && p == last && !v.empty()) {
        return d;
    }
    return v;
}

/// Maps "section.key" to its 1-based line for error messages.
std::map<std::string, std::size_t> line_index(const std::string& text)
{
    std::map<std::string, std::size_t> out;
    std::istringstream ss(text);
    std::string line;
    std::string section;
    std::size_t n = 0;
    while (std::getline(ss, line)) {
        ++n;
        const auto b = line.find_first_not_of(" \t");
        if (b == std::string::npos) {
            continue;
        }
        if (line[b] == '[') {
            const auto close = line.find(']', b);
            section = line.substr(b + 1, close == std::string::npos ? std::string::npos : close - b - 1);
            out.emplace(section, n);
            continue;
        }
        const auto eq = line.find('=', b);
        if (eq == std::string::npos) {
            continue;
        }
        std::string key = line.substr(b, eq - b);
        key.erase(key.find_last_not_of(" \t") + 1);
        out.emplace(section + "." + key, n);
    }
    return out;
}

std::string strip_comments(const std::string& text)
{
    std::istringstream ss(text);
    std::ostringstream out;
    std::string line;
    while (std::getline(ss, line)) {
        const auto b = line.find_first_not_of(" \t");
        if (b != std::string::npos && line[b] == '#') {
            line.clear();
        }
        out << line << '\n';
    }
    return out.str();
}

} // namespace

Config load_config_text(const std::string& text, const std::string& base_dir)
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(strip_comments(text));
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw Error("invalid_config", "config parse error at line " + std::to_string(e.line()) + ": " + e.message(),
                    {"line " + std::to_string(e.line())});
    }
    json j = json::object();
    for (const auto& [section, body] : tree) {
        if (!body.data().empty() && body.empty()) {
            throw Error("invalid_config", "key '" + section + "' appears outside any section", {section});
        }
        json sec = json::object();
        for (const auto& [key, value] : body) {
            sec[key] = typed_value(value.data());
        }
        j[section] = sec;
    }
    try {
        Config c = config_from_json(j);
        c.base_dir = base_dir;
        return c;
    } catch (const Error& e) {
        const auto lines = line_index(text);
        if (!e.details().empty()) {
            const auto it = lines.find(e.details().front());
            if (it != lines.end()) {
                throw Error(e.code(), std::string("config error at line ") + std::to_string(it->second) + ": " + e.what(),
                            e.details());
            }
        }
        throw;
    }
}

Config load_config_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("io_error", "cannot open config file '" + path + "'", {path});
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    const auto dir = std::filesystem::path(path).parent_path();
    return load_config_text(buf.str(), dir.empty() ? std::string(".") : dir.string());
}

std::string config_hash(const Config& c) { return content_hash(to_json_value(c).dump()); }

} // namespace epiworld
