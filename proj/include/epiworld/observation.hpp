#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "epiworld/core.hpp"
#include "epiworld/rng.hpp"

namespace epiworld {

/// One week of surveillance.
struct Observation {
    int week = 0;
    double reported_cases_per_100k = 0.0;
    double hosp_per_100k = 0.0;
    double survey_compliance = 0.0;

    friend bool operator==(const Observation&, const Observation&) = default;
};

/// How survey respondents over-report their own compliance.
struct MisreportingRegime {
    enum class Tag { None, Mixed, Pure };
    Tag tag = Tag::None;
    double over_report_fraction = 0.0;
    double inflation = 0.0;

    static MisreportingRegime none() { return {}; }
    static MisreportingRegime mixed(double fraction, double inflation)
    {
        return {Tag::Mixed, fraction, inflation};
    }
    static MisreportingRegime pure(double inflation) { return {Tag::Pure, 1.0, inflation}; }

    friend bool operator==(const MisreportingRegime&, const MisreportingRegime&) = default;
};

std::string to_string(MisreportingRegime::Tag tag);
MisreportingRegime::Tag parse_regime_tag(const std::string& s);
void validate_regime(const MisreportingRegime& r);

/// Reported compliance: (1 - fr) * b + fr * min(1, b + inflation).
double misreport_survey(double true_compliance, const MisreportingRegime& regime);

/// Case ascertainment under the previous week's testing level.
double ascertainment_rate(const Action& a_prev, const ModelParams& p);

/// Draws o_t given x_t and the action in force during the week.
Observation observe(const LatentState& x, const Action& a_prev, const MisreportingRegime& regime,
                    const ModelParams& p, RngStream rng, int week = 0);

/// Which channels contribute to the observation density.
struct ObservationChannels {
    bool cases = true;
    bool hosp = true;
    bool survey = true;

    friend bool operator==(const ObservationChannels&, const ObservationChannels&) = default;
};

inline constexpr double kCountFloor = 1e-6;

/// log Omega(o | x, a_prev). A channel with zero noise is a point mass: it
/// contributes 0 when o matches its mean and -inf otherwise.
double observation_log_density(const LatentState& x, const Action& a_prev, const Observation& o,
                               const MisreportingRegime& regime, const ModelParams& p,
                               const ObservationChannels& channels = {});

double lognormal_log_density(double observed, double mean, double sd);
double truncated_normal_log_density(double observed, double mean, double sd);

// ---------------------------------------------------------------------------
// Reporting delays

/// Counts for each event week as known at each reporting lag.
///
/// Immutable once built. The maturity profile c is non-decreasing with
/// c.back() == 1, so r[t][K_max] is the resting count.
class RevisionTriangle {
public:
    /// Noise-free construction: r[t][k] = round(final[t] * c[k]).
    RevisionTriangle(std::vector<long long> final_counts, std::vector<double> profile);

    /// Intermediate lags perturbed by lognormal noise (sd `noise_sd`); the
    /// last lag always equals the final count.
    static RevisionTriangle with_noise(std::vector<long long> final_counts, std::vector<double> profile,
                                       double noise_sd, RngStream rng);

    /// Builds from explicit rows; every (event_week, lag) cell must be present.
    static RevisionTriangle from_rows(std::size_t weeks, std::size_t max_lag,
                                      const std::vector<std::vector<long long>>& rows);

    std::size_t weeks() const noexcept { return counts_.size(); }
    std::size_t max_lag() const noexcept { return max_lag_; }
    long long at(std::size_t event_week, std::size_t lag) const;
    long long final_count(std::size_t event_week) const;
    const std::vector<double>& profile() const noexcept { return profile_; }

    long long report_as_of(std::size_t event_week, std::size_t as_of_week) const;
    std::size_t stabilization_time(std::size_t event_week, double tol) const;

private:
    RevisionTriangle() = default;
    std::vector<std::vector<long long>> counts_;
    std::vector<double> profile_;
    std::size_t max_lag_ = 0;
};

void validate_profile(const std::vector<double>& profile);

/// Shipped illustrative maturity profiles.
const std::vector<double>& fast_profile();
const std::vector<double>& slow_profile();
std::vector<double> no_delay_profile(std::size_t max_lag = 0);

} // namespace epiworld
