#include "epiworld/observation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace epiworld {

std::string to_string(MisreportingRegime::Tag tag)
{
    switch (tag) {
    case MisreportingRegime::Tag::None:
        return "none";
    case MisreportingRegime::Tag::Mixed:
        return "mixed";
    case MisreportingRegime::Tag::Pure:
        return "pure";
    }
    return "none";
}

MisreportingRegime::Tag parse_regime_tag(const std::string& s)
{
    if (s == "none" || s == "None") {
        return MisreportingRegime::Tag::None;
    }
    if (s == "mixed" || s == "Mixed") {
        return MisreportingRegime::Tag::Mixed;
    }
    if (s == "pure" || s == "Pure") {
        return MisreportingRegime::Tag::Pure;
    }
    throw Error("invalid_regime", "unknown misreporting regime '" + s + "'");
}

void validate_regime(const MisreportingRegime& r)
{
    std::vector<std::string> d;
    if (!(r.over_report_fraction >= 0.0 && r.over_report_fraction <= 1.0)) {
        d.push_back("over_report_fraction must lie in [0,1]");
    }
    if (!(r.inflation >= 0.0 && r.inflation <= 1.0)) {
        d.push_back("inflation must lie in [0,1]");
    }
    if (r.tag == MisreportingRegime::Tag::None && r.over_report_fraction != 0.0) {
        d.push_back("regime none requires over_report_fraction = 0");
    }
    if (r.tag == MisreportingRegime::Tag::Pure && r.over_report_fraction != 1.0) {
        d.push_back("regime pure requires over_report_fraction = 1");
    }
    if (!d.empty()) {
        throw Error("invalid_regime", "misreporting regime is invalid", std::move(d));
    }
}

double misreport_survey(double b, const MisreportingRegime& regime)
{
    if (regime.tag == MisreportingRegime::Tag::None) {
        return b;
    }
    const double fr = regime.over_report_fraction;
    return (1.0 - fr) * b + fr * std::min(1.0, b + regime.inflation);
}

double ascertainment_rate(const Action& a_prev, const ModelParams& p)
{
    require_valid(a_prev);
    const double testing = static_cast<double>(a_prev.dims.at(static_cast<std::size_t>(p.testing_dim))) / kMaxLevel;
    return clamp01(p.ascertainment * (1.0 + p.testing_gain * testing));
}

namespace {

double sample_truncated_normal(double mean, double sd, RngStream& rng)
{
    if (sd <= 0.0) {
        return clamp01(mean);
    }
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const double v = mean + sd * rng.normal();
        if (v >= 0.0 && v <= 1.0) {
            return v;
        }
    }
    return clamp01(mean);
}

bool point_mass_match(double observed, double mean)
{
    return std::abs(observed - mean) <= 1e-9 * std::max(1.0, std::abs(mean));
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

} // namespace

Observation observe(const LatentState& x, const Action& a_prev, const MisreportingRegime& regime,
                    const ModelParams& p, RngStream rng, int week)
{
    const double rho = ascertainment_rate(a_prev, p);
    // Draw all noise terms unconditionally so channels stay aligned across settings.
    const double z_cases = rng.normal();
    const double z_hosp = rng.normal();
    Observation o;
    o.week = week;
    o.reported_cases_per_100k = x.new_infections * rho * kPer100k * std::exp(p.case_noise_sd * z_cases);
    o.hosp_per_100k = x.new_admissions * kPer100k * std::exp(p.hosp_noise_sd * z_hosp);
    o.survey_compliance = sample_truncated_normal(misreport_survey(x.compliance, regime), p.survey_noise_sd, rng);
    return o;
}

double lognormal_log_density(double observed, double mean, double sd)
{
    if (observed < 0.0) {
        return -std::numeric_limits<double>::infinity();
    }
    const double lo = std::log(observed + kCountFloor);
    const double lm = std::log(mean + kCountFloor);
    if (sd <= 0.0) {
        return point_mass_match(lo, lm) ? 0.0 : -std::numeric_limits<double>::infinity();
    }
    const double z = (lo - lm) / sd;
    return -0.5 * z * z - std::log(sd * std::sqrt(2.0 * std::numbers::pi)) - lo;
}

double truncated_normal_log_density(double observed, double mean, double sd)
{
    if (observed < 0.0 || observed > 1.0) {
        return -std::numeric_limits<double>::infinity();
    }
    if (sd <= 0.0) {
        return point_mass_match(observed, clamp01(mean)) ? 0.0 : -std::numeric_limits<double>::infinity();
    }
    const double z = (observed - mean) / sd;
    const double mass = normal_cdf((1.0 - mean) / sd) - normal_cdf(-mean / sd);
    if (!(mass > 0.0)) {
        return -std::numeric_limits<double>::infinity();
    }
    return -0.5 * z * z - std::log(sd * std::sqrt(2.0 * std::numbers::pi)) - std::log(mass);
}

double observation_log_density(const LatentState& x, const Action& a_prev, const Observation& o,
                               const MisreportingRegime& regime, const ModelParams& p,
                               const ObservationChannels& channels)
{
    double ll = 0.0;
    if (channels.cases) {
        const double mean = x.new_infections * ascertainment_rate(a_prev, p) * kPer100k;
        ll += lognormal_log_density(o.reported_cases_per_100k, mean, p.case_noise_sd);
    }
    if (channels.hosp) {
        ll += lognormal_log_density(o.hosp_per_100k, x.new_admissions * kPer100k, p.hosp_noise_sd);
    }
    if (channels.survey) {
        ll += truncated_normal_log_density(o.survey_compliance, misreport_survey(x.compliance, regime),
                                           p.survey_noise_sd);
    }
    return ll;
}

// ---------------------------------------------------------------------------

void validate_profile(const std::vector<double>& c)
{
    if (c.empty()) {
        throw Error("invalid_profile", "maturity profile is empty");
    }
    std::vector<std::string> d;
    for (std::size_t k = 0; k < c.size(); ++k) {
        if (!(c[k] > 0.0 && c[k] <= 1.0)) {
            d.push_back("c[" + std::to_string(k) + "] must lie in (0,1]");
        }
        if (k > 0 && c[k] < c[k - 1]) {
            d.push_back("c must be non-decreasing at lag " + std::to_string(k));
        }
    }
    if (c.back() != 1.0) {
        d.push_back("c[K_max] must equal 1");
    }
    if (!d.empty()) {
        throw Error("invalid_profile", "maturity profile is invalid", std::move(d));
    }
}

RevisionTriangle::RevisionTriangle(std::vector<long long> final_counts, std::vector<double> profile)
    : profile_(std::move(profile))
{
    validate_profile(profile_);
    max_lag_ = profile_.size() - 1;
    counts_.reserve(final_counts.size());
    for (long long f : final_counts) {
        if (f < 0) {
            throw Error("invalid_triangle", "final counts must be nonnegative");
        }
        std::vector<long long> row(profile_.size());
        for (std::size_t k = 0; k < profile_.size(); ++k) {
            row[k] = std::llround(static_cast<double>(f) * profile_[k]);
        }
        counts_.push_back(std::move(row));
    }
}

RevisionTriangle RevisionTriangle::with_noise(std::vector<long long> final_counts, std::vector<double> profile,
                                              double noise_sd, RngStream rng)
{
    RevisionTriangle tri(std::move(final_counts), std::move(profile));
    if (noise_sd <= 0.0) {
        return tri;
    }
    for (auto& row : tri.counts_) {
        const long long fin = row.back();
        for (std::size_t k = 0; k + 1 < row.size(); ++k) {
            const double noisy = static_cast<double>(row[k]) * std::exp(noise_sd * rng.normal());
            row[k] = std::min(fin, std::llround(noisy));
        }
    }
    return tri;
}

RevisionTriangle RevisionTriangle::from_rows(std::size_t weeks, std::size_t max_lag,
                                             const std::vector<std::vector<long long>>& rows)
{
    RevisionTriangle tri;
    tri.max_lag_ = max_lag;
    tri.counts_.assign(weeks, std::vector<long long>(max_lag + 1, -1));
    for (const auto& r : rows) {
        if (r.size() != 3) {
            throw Error("invalid_triangle", "triangle rows must be (event_week, lag, count)");
        }
        if (r[0] < 0 || static_cast<std::size_t>(r[0]) >= weeks || r[1] < 0 ||
            static_cast<std::size_t>(r[1]) > max_lag || r[2] < 0) {
            throw Error("invalid_triangle", "triangle row out of range");
        }
        tri.counts_[static_cast<std::size_t>(r[0])][static_cast<std::size_t>(r[1])] = r[2];
    }
    std::vector<std::string> missing;
    for (std::size_t t = 0; t < weeks; ++t) {
        for (std::size_t k = 0; k <= max_lag; ++k) {
            if (tri.counts_[t][k] < 0) {
                missing.push_back("(" + std::to_string(t) + ", " + std::to_string(k) + ")");
            }
        }
    }
    if (!missing.empty()) {
        throw Error("invalid_triangle", "triangle has missing cells", std::move(missing));
    }
    // Empirical profile: pooled ratio of each lag to the resting count.
    std::vector<double> num(max_lag + 1, 0.0);
    double den = 0.0;
    for (const auto& row : tri.counts_) {
        den += static_cast<double>(row.back());
        for (std::size_t k = 0; k <= max_lag; ++k) {
            num[k] += static_cast<double>(row[k]);
        }
    }
    tri.profile_.resize(max_lag + 1, 1.0);
    if (den > 0.0) {
        for (std::size_t k = 0; k <= max_lag; ++k) {
            tri.profile_[k] = num[k] / den;
        }
    }
    return tri;
}

long long RevisionTriangle::at(std::size_t t, std::size_t k) const
{
    if (t >= counts_.size() || k > max_lag_) {
        throw Error("out_of_range", "triangle cell (" + std::to_string(t) + ", " + std::to_string(k) + ") out of range");
    }
    return counts_[t][k];
}

long long RevisionTriangle::final_count(std::size_t t) const { return at(t, max_lag_); }

long long RevisionTriangle::report_as_of(std::size_t t, std::size_t s) const
{
    if (s < t) {
        throw Error("future_knowledge", "as-of week " + std::to_string(s) + " precedes event week " + std::to_string(t));
    }
    return at(t, std::min(s - t, max_lag_));
}

std::size_t RevisionTriangle::stabilization_time(std::size_t t, double tol) const
{
    if (!(tol > 0.0 && tol <= 1.0)) {
        throw Error("invalid_tolerance", "stabilization tolerance must lie in (0,1]");
    }
    const long long fin = final_count(t);
    if (fin == 0) {
        return 0;
    }
    const double band = tol * static_cast<double>(fin);
    std::size_t k_star = max_lag_;
    for (std::size_t k = max_lag_ + 1; k-- > 0;) {
        if (std::abs(static_cast<double>(counts_[t][k] - fin)) <= band) {
            k_star = k;
        } else {
            break;
        }
    }
    return k_star;
}

const std::vector<double>& fast_profile()
{
    static const std::vector<double> c{0.9, 1.0, 1.0, 1.0};
    return c;
}

const std::vector<double>& slow_profile()
{
    static const std::vector<double> c{0.3, 0.6, 0.9, 1.0};
    return c;
}

std::vector<double> no_delay_profile(std::size_t max_lag) { return std::vector<double>(max_lag + 1, 1.0); }

} // namespace epiworld
