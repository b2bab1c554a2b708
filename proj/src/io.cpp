#include "epiworld/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace epiworld {

namespace {

template <class T>
T field(const json& j, const char* key)
{
    if (!j.contains(key)) {
        throw Error("invalid_json", std::string("missing field '") + key + "'", {key});
    }
    try {
        return j.at(key).get<T>();
    } catch (const std::exception& e) {
        throw Error("invalid_json", std::string("field '") + key + "' has the wrong type", {key, e.what()});
    }
}

template <class T>
void optional_field(const json& j, const char* key, T& out)
{
    if (j.contains(key)) {
        out = field<T>(j, key);
    }
}

void require_object(const json& j, const std::string& what)
{
    if (!j.is_object()) {
        throw Error("invalid_json", what + " must be a JSON object");
    }
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& what)
{
    std::vector<std::string> unknown;
    for (const auto& [k, v] : j.items()) {
        if (!known.count(k)) {
            unknown.push_back(k);
        }
    }
    if (!unknown.empty()) {
        throw Error("invalid_json", what + " has unknown fields", unknown);
    }
}

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

Range range_from(const json& j, const char* key)
{
    const auto v = field<std::vector<double>>(j, key);
    if (v.size() != 2) {
        throw Error("invalid_json", std::string("field '") + key + "' must be [lo, hi]", {key});
    }
    return {v[0], v[1]};
}

} // namespace

void to_json(json& j, const Action& a) { j = json{{"week", a.week}, {"dims", a.dims}}; }

void from_json(const json& j, Action& a)
{
    require_object(j, "action");
    a.week = field<int>(j, "week");
    a.dims = field<std::vector<int>>(j, "dims");
}

void to_json(json& j, const LatentState& x)
{
    j = json{{"epi",
              {{"S", x.S},
               {"E", x.E},
               {"I", x.I},
               {"R", x.R},
               {"Hosp", x.Hosp},
               {"new_infections", x.new_infections},
               {"new_admissions", x.new_admissions},
               {"hosp_pipeline", x.hosp_pipeline}}},
             {"imm", {{"immunity", x.immunity}}},
             {"net", {{"mixing_scale", x.mixing_scale}}},
             {"beh", {{"compliance", x.compliance}, {"fatigue", x.fatigue}}},
             {"reg", {{"transmissibility", x.transmissibility}, {"season_phase", x.season_phase}}}};
}

void from_json(const json& j, LatentState& x)
{
    require_object(j, "latent state");
    const auto epi = field<json>(j, "epi");
    x.S = field<double>(epi, "S");
    x.E = field<double>(epi, "E");
    x.I = field<double>(epi, "I");
    x.R = field<double>(epi, "R");
    x.Hosp = field<double>(epi, "Hosp");
    x.new_infections = field<double>(epi, "new_infections");
    x.new_admissions = field<double>(epi, "new_admissions");
    x.hosp_pipeline = field<std::vector<double>>(epi, "hosp_pipeline");
    x.immunity = field<double>(field<json>(j, "imm"), "immunity");
    x.mixing_scale = field<double>(field<json>(j, "net"), "mixing_scale");
    const auto beh = field<json>(j, "beh");
    x.compliance = field<double>(beh, "compliance");
    x.fatigue = field<double>(beh, "fatigue");
    const auto reg = field<json>(j, "reg");
    x.transmissibility = field<double>(reg, "transmissibility");
    x.season_phase = field<double>(reg, "season_phase");
}

void to_json(json& j, const ModelParams& p)
{
    j = json::object();
    for (const auto& name : param_names()) {
        if (name == "hosp_lag" || name == "testing_dim") {
            j[name] = static_cast<int>(get_param(p, name));
        } else if (name == "deterministic") {
            j[name] = p.deterministic;
        } else {
            j[name] = get_param(p, name);
        }
    }
}

void from_json(const json& j, ModelParams& p)
{
    require_object(j, "model parameters");
    p = ModelParams{};
    std::vector<std::string> unknown;
    for (const auto& [k, v] : j.items()) {
        const auto& names = param_names();
        if (std::find(names.begin(), names.end(), k) == names.end()) {
            unknown.push_back(k);
            continue;
        }
        if (k == "deterministic") {
            if (!v.is_boolean()) {
                throw Error("invalid_json", "field 'deterministic' must be a boolean", {k});
            }
            p.deterministic = v.get<bool>();
        } else {
            if (!v.is_number()) {
                throw Error("invalid_json", "field '" + k + "' must be a number", {k});
            }
            set_param(p, k, v.get<double>());
        }
    }
    if (!unknown.empty()) {
        throw Error("invalid_json", "model parameters have unknown fields", unknown);
    }
}

void to_json(json& j, const MisreportingRegime& r)
{
    j = json{{"tag", to_string(r.tag)}, {"over_report_fraction", r.over_report_fraction}, {"inflation", r.inflation}};
}

void from_json(const json& j, MisreportingRegime& r)
{
    require_object(j, "regime");
    r.tag = parse_regime_tag(field<std::string>(j, "tag"));
    r.over_report_fraction = r.tag == MisreportingRegime::Tag::Pure ? 1.0 : 0.0;
    r.inflation = 0.0;
    optional_field(j, "over_report_fraction", r.over_report_fraction);
    optional_field(j, "inflation", r.inflation);
}

void to_json(json& j, const Observation& o)
{
    j = json{{"week", o.week},
             {"reported_cases_per_100k", o.reported_cases_per_100k},
             {"hosp_per_100k", o.hosp_per_100k},
             {"survey_compliance", o.survey_compliance}};
}

void from_json(const json& j, Observation& o)
{
    require_object(j, "observation");
    o.week = field<int>(j, "week");
    o.reported_cases_per_100k = field<double>(j, "reported_cases_per_100k");
    o.hosp_per_100k = field<double>(j, "hosp_per_100k");
    o.survey_compliance = field<double>(j, "survey_compliance");
}

void to_json(json& j, const PriorConfig& p)
{
    j = json{{"I", range_json(p.I)},
             {"E", range_json(p.E)},
             {"compliance", range_json(p.compliance)},
             {"transmissibility", range_json(p.transmissibility)},
             {"R", p.R},
             {"fatigue", p.fatigue},
             {"immunity", p.immunity},
             {"mixing_scale", p.mixing_scale},
             {"season_phase", p.season_phase}};
}

void from_json(const json& j, PriorConfig& p)
{
    require_object(j, "prior");
    reject_unknown(j, {"I", "E", "compliance", "transmissibility", "R", "fatigue", "immunity", "mixing_scale", "season_phase"},
                   "prior");
    p = PriorConfig{};
    if (j.contains("I")) p.I = range_from(j, "I");
    if (j.contains("E")) p.E = range_from(j, "E");
    if (j.contains("compliance")) p.compliance = range_from(j, "compliance");
    if (j.contains("transmissibility")) p.transmissibility = range_from(j, "transmissibility");
    optional_field(j, "R", p.R);
    optional_field(j, "fatigue", p.fatigue);
    optional_field(j, "immunity", p.immunity);
    optional_field(j, "mixing_scale", p.mixing_scale);
    optional_field(j, "season_phase", p.season_phase);
}

void to_json(json& j, const ObservationChannels& c)
{
    j = json{{"cases", c.cases}, {"hosp", c.hosp}, {"survey", c.survey}};
}

void from_json(const json& j, ObservationChannels& c)
{
    require_object(j, "channels");
    optional_field(j, "cases", c.cases);
    optional_field(j, "hosp", c.hosp);
    optional_field(j, "survey", c.survey);
}

void to_json(json& j, const RewardSpec& r)
{
    j = json{{"cumulative_infections", r.cumulative_infections},
             {"peak_hosp", r.peak_hosp},
             {"peak_week", r.peak_week},
             {"icu_violation_weeks", r.icu_violation_weeks},
             {"end_hosp", r.end_hosp},
             {"icu_hard_constraint", r.icu_hard_constraint}};
}

void from_json(const json& j, RewardSpec& r)
{
    require_object(j, "reward");
    r = RewardSpec{};
    optional_field(j, "cumulative_infections", r.cumulative_infections);
    optional_field(j, "peak_hosp", r.peak_hosp);
    optional_field(j, "peak_week", r.peak_week);
    optional_field(j, "icu_violation_weeks", r.icu_violation_weeks);
    optional_field(j, "end_hosp", r.end_hosp);
    optional_field(j, "icu_hard_constraint", r.icu_hard_constraint);
}

void to_json(json& j, const OutcomeMetrics& m)
{
    j = json{{"cumulative_infections", m.cumulative_infections},
             {"peak_hosp_per_100k", m.peak_hosp_per_100k},
             {"peak_week", m.peak_week},
             {"icu_violation_weeks", m.icu_violation_weeks},
             {"end_hosp_per_100k", m.end_hosp_per_100k}};
}

void to_json(json& j, const MeanMetrics& m)
{
    j = json{{"cumulative_infections", m.cumulative_infections},
             {"peak_hosp_per_100k", m.peak_hosp_per_100k},
             {"peak_week", m.peak_week},
             {"icu_violation_weeks", m.icu_violation_weeks},
             {"end_hosp_per_100k", m.end_hosp_per_100k}};
}

namespace {
json quantiles_json(const Quantiles& q) { return json{{"mean", q.mean}, {"q05", q.q05}, {"q95", q.q95}}; }
} // namespace

void to_json(json& j, const BeliefReport& r)
{
    j = json{{"week", r.week},
             {"I", quantiles_json(r.I)},
             {"compliance", quantiles_json(r.compliance)},
             {"transmissibility", quantiles_json(r.transmissibility)},
             {"effective_R", quantiles_json(r.effective_R)},
             {"ess", r.ess},
             {"cum_loglik", r.cum_loglik}};
}

void to_json(json& j, const ThresholdRule& r)
{
    j = json{{"feature", to_string(r.feature)},
             {"trigger", to_string(r.trigger)},
             {"threshold", r.threshold},
             {"dims", r.dims},
             {"level", r.level}};
}

void from_json(const json& j, ThresholdRule& r)
{
    require_object(j, "threshold rule");
    r.feature = parse_feature(field<std::string>(j, "feature"));
    r.trigger = parse_trigger(field<std::string>(j, "trigger"));
    r.threshold = field<double>(j, "threshold");
    r.dims = field<std::vector<int>>(j, "dims");
    r.level = field<int>(j, "level");
}

void to_json(json& j, const PolicySpec& spec)
{
    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ReplayPolicy>) {
                j = json{{"kind", "replay"}, {"table", s.table}};
            } else if constexpr (std::is_same_v<T, ThresholdPolicy>) {
                j = json{{"kind", "threshold"}, {"base", s.base}, {"rules", s.rules}};
            } else {
                json dims = json::array();
                for (const auto& d : s.dims) {
                    dims.push_back(json{{"levels", d.levels}, {"weights", d.weights}});
                }
                j = json{{"kind", "softmax"}, {"temperature", s.temperature}, {"dims", dims}};
            }
        },
        spec);
}

PolicySpec policy_from_json(const json& j)
{
    require_object(j, "policy");
    const auto kind = field<std::string>(j, "kind");
    if (kind == "replay") {
        return ReplayPolicy{field<ActionSequence>(j, "table")};
    }
    if (kind == "threshold") {
        ThresholdPolicy t;
        optional_field(j, "base", t.base);
        t.rules = field<std::vector<ThresholdRule>>(j, "rules");
        return t;
    }
    if (kind == "softmax") {
        SoftmaxPolicy s;
        s.temperature = field<double>(j, "temperature");
        for (const auto& d : field<json>(j, "dims")) {
            SoftmaxDim dim;
            dim.levels = field<std::vector<int>>(d, "levels");
            dim.weights = field<std::vector<std::vector<double>>>(d, "weights");
            s.dims.push_back(std::move(dim));
        }
        return s;
    }
    throw Error("invalid_json", "unknown policy kind '" + kind + "'", {"kind"});
}

void to_json(json& j, const CemConfig& c)
{
    j = json{{"population", c.population}, {"elites", c.elites},   {"iterations", c.iterations},
             {"smoothing", c.smoothing},   {"min_probability", c.min_probability}, {"samples", c.samples}};
}

void to_json(json& j, const FitResult& f)
{
    json trace = json::array();
    for (const auto& e : f.trace) {
        trace.push_back(json{{"theta", e.theta},
                             {"value", std::isfinite(e.value) ? json(e.value) : json("-inf")},
                             {"restart", e.restart}});
    }
    j = json{{"theta", f.theta}, {"value", f.value}, {"trace", trace}};
}

void to_json(json& j, const RolloutResult& r)
{
    json weeks = json::array();
    for (std::size_t w = 0; w < r.trajectory.size(); ++w) {
        const auto& x = r.trajectory[w];
        weeks.push_back(json{{"week", r.observations[w].week},
                             {"latent",
                              {{"S", x.S},
                               {"E", x.E},
                               {"I", x.I},
                               {"R", x.R},
                               {"Hosp", x.Hosp},
                               {"new_infections", x.new_infections},
                               {"hosp_admissions_per_100k", x.new_admissions * kPer100k},
                               {"compliance", x.compliance},
                               {"transmissibility", x.transmissibility}}},
                             {"observation", r.observations[w]},
                             {"action", r.plan.actions[w]},
                             {"vaccination", r.plan.vaccination_at(w)}});
    }
    j = json{{"weeks", weeks}, {"metrics", r.metrics}, {"seed", r.seed}, {"stream", r.stream}};
}

void to_json(json& j, const FanChart& f)
{
    j = json{{"quantiles", f.quantile_levels}, {"weeks", f.weeks}};
}

// ---------------------------------------------------------------------------

std::size_t CsvTable::column(const std::string& name) const
{
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        throw Error("missing_column", "missing column '" + name + "'", {name});
    }
    return static_cast<std::size_t>(it - header.begin());
}

bool CsvTable::has_column(const std::string& name) const
{
    return std::find(header.begin(), header.end(), name) != header.end();
}

namespace {

std::vector<std::string> split_line(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') {
        cells.emplace_back();
    }
    return cells;
}

} // namespace

CsvTable read_csv(std::istream& in)
{
    CsvTable t;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line[0] == '#') {
            continue;
        }
        auto cells = split_line(line);
        if (!have_header) {
            t.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != t.header.size()) {
            throw Error("invalid_csv", "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                                          " cells, header has " + std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(cells));
        t.line_numbers.push_back(line_no);
    }
    if (!have_header) {
        throw Error("missing_header", "missing header: CSV input is empty");
    }
    return t;
}

CsvTable read_csv_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("io_error", "cannot open '" + path + "'");
    }
    return read_csv(in);
}

double parse_double(const std::string& cell, const std::string& name, std::size_t line)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) {
            throw std::invalid_argument(cell);
        }
        return v;
    } catch (const std::exception&) {
        throw Error("invalid_csv", "line " + std::to_string(line) + ": field '" + name + "' is not a number", {name});
    }
}

long long parse_integer(const std::string& cell, const std::string& name, std::size_t line)
{
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw Error("invalid_csv", "line " + std::to_string(line) + ": field '" + name + "' is not an integer", {name});
    }
    return v;
}

std::string format_double(double v)
{
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

std::string provenance_comment(const std::string& config_hash, std::uint64_t seed)
{
    return "# config_hash=" + config_hash + " seed=" + std::to_string(seed);
}

void write_actions_csv(std::ostream& out, const ActionSequence& actions)
{
    out << "week";
    for (std::size_t d = 0; d < kActionDims; ++d) {
        out << ",d" << d;
    }
    out << '\n';
    for (const auto& a : actions) {
        out << a.week;
        for (int v : a.dims) {
            out << ',' << v;
        }
        out << '\n';
    }
}

ActionSequence read_actions_csv(std::istream& in)
{
    const auto t = read_csv(in);
    const std::size_t week_col = t.column("week");
    std::vector<std::size_t> dim_cols;
    for (std::size_t d = 0; d < kActionDims; ++d) {
        dim_cols.push_back(t.column("d" + std::to_string(d)));
    }
    ActionSequence out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        Action a;
        a.week = static_cast<int>(parse_integer(t.rows[r][week_col], "week", t.line_numbers[r]));
        for (std::size_t d = 0; d < kActionDims; ++d) {
            a.dims[d] = static_cast<int>(parse_integer(t.rows[r][dim_cols[d]], t.header[dim_cols[d]], t.line_numbers[r]));
        }
        out.push_back(std::move(a));
    }
    return out;
}

void write_observations_csv(std::ostream& out, const std::vector<Observation>& obs)
{
    out << "week,reported_cases_per_100k,hosp_per_100k,survey_compliance\n";
    for (const auto& o : obs) {
        out << o.week << ',' << format_double(o.reported_cases_per_100k) << ',' << format_double(o.hosp_per_100k)
            << ',' << format_double(o.survey_compliance) << '\n';
    }
}

std::vector<Observation> read_observations_csv(std::istream& in)
{
    const auto t = read_csv(in);
    const auto cw = t.column("week");
    const auto cc = t.column("reported_cases_per_100k");
    const auto ch = t.column("hosp_per_100k");
    const auto cs = t.column("survey_compliance");
    std::vector<Observation> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto line = t.line_numbers[r];
        Observation o;
        o.week = static_cast<int>(parse_integer(t.rows[r][cw], "week", line));
        o.reported_cases_per_100k = parse_double(t.rows[r][cc], "reported_cases_per_100k", line);
        o.hosp_per_100k = parse_double(t.rows[r][ch], "hosp_per_100k", line);
        o.survey_compliance = parse_double(t.rows[r][cs], "survey_compliance", line);
        out.push_back(o);
    }
    return out;
}

void write_triangle_csv(std::ostream& out, const RevisionTriangle& tri)
{
    out << "event_week,lag,count\n";
    for (std::size_t t = 0; t < tri.weeks(); ++t) {
        for (std::size_t k = 0; k <= tri.max_lag(); ++k) {
            out << t << ',' << k << ',' << tri.at(t, k) << '\n';
        }
    }
}

RevisionTriangle read_triangle_csv(std::istream& in)
{
    const auto t = read_csv(in);
    const auto cw = t.column("event_week");
    const auto cl = t.column("lag");
    const auto cc = t.column("count");
    std::vector<std::vector<long long>> rows;
    long long max_week = -1;
    long long max_lag = -1;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto line = t.line_numbers[r];
        rows.push_back({parse_integer(t.rows[r][cw], "event_week", line), parse_integer(t.rows[r][cl], "lag", line),
                        parse_integer(t.rows[r][cc], "count", line)});
        max_week = std::max(max_week, rows.back()[0]);
        max_lag = std::max(max_lag, rows.back()[1]);
    }
    if (rows.empty()) {
        throw Error("invalid_triangle", "triangle CSV has no rows");
    }
    return RevisionTriangle::from_rows(static_cast<std::size_t>(max_week + 1), static_cast<std::size_t>(max_lag), rows);
}

void write_belief_csv(std::ostream& out, const std::vector<BeliefReport>& reports)
{
    out << "week,I_mean,I_q05,I_q95,compliance_mean,compliance_q05,compliance_q95,"
           "transmissibility_mean,transmissibility_q05,transmissibility_q95,"
           "effective_R_mean,effective_R_q05,effective_R_q95,ess,cum_loglik\n";
    for (const auto& r : reports) {
        out << r.week;
        for (const auto* q : {&r.I, &r.compliance, &r.transmissibility, &r.effective_R}) {
            out << ',' << format_double(q->mean) << ',' << format_double(q->q05) << ',' << format_double(q->q95);
        }
        out << ',' << format_double(r.ess) << ',' << format_double(r.cum_loglik) << '\n';
    }
}

void write_trajectory_csv(std::ostream& out, const std::vector<LatentState>& trajectory, int start_week)
{
    out << "week,S,E,I,R,Hosp,new_infections,hosp_admissions_per_100k,immunity,mixing_scale,compliance,fatigue,"
           "transmissibility,season_phase\n";
    for (std::size_t w = 0; w < trajectory.size(); ++w) {
        const auto& x = trajectory[w];
        out << start_week + static_cast<int>(w) + 1;
        for (double v : {x.S, x.E, x.I, x.R, x.Hosp, x.new_infections, x.new_admissions * kPer100k, x.immunity,
                         x.mixing_scale, x.compliance, x.fatigue, x.transmissibility, x.season_phase}) {
            out << ',' << format_double(v);
        }
        out << '\n';
    }
}

std::string content_hash(const std::string& bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace epiworld
