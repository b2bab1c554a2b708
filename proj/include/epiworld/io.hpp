#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "epiworld/calibrate.hpp"
#include "epiworld/core.hpp"
#include "epiworld/filter.hpp"
#include "epiworld/observation.hpp"
#include "epiworld/optimize.hpp"
#include "epiworld/policy.hpp"
#include "epiworld/rollout.hpp"

namespace epiworld {

using json = nlohmann::json;

// JSON codecs. Decoders raise Error{"invalid_json"} with the offending field.
void to_json(json& j, const Action& a);
void from_json(const json& j, Action& a);
void to_json(json& j, const LatentState& x);
void from_json(const json& j, LatentState& x);
void to_json(json& j, const ModelParams& p);
void from_json(const json& j, ModelParams& p);
void to_json(json& j, const MisreportingRegime& r);
void from_json(const json& j, MisreportingRegime& r);
void to_json(json& j, const Observation& o);
void from_json(const json& j, Observation& o);
void to_json(json& j, const PriorConfig& p);
void from_json(const json& j, PriorConfig& p);
void to_json(json& j, const ObservationChannels& c);
void from_json(const json& j, ObservationChannels& c);
void to_json(json& j, const RewardSpec& r);
void from_json(const json& j, RewardSpec& r);
void to_json(json& j, const OutcomeMetrics& m);
void to_json(json& j, const MeanMetrics& m);
void to_json(json& j, const BeliefReport& r);
void to_json(json& j, const ThresholdRule& r);
void from_json(const json& j, ThresholdRule& r);
void to_json(json& j, const PolicySpec& p);
PolicySpec policy_from_json(const json& j);
void to_json(json& j, const CemConfig& c);
void to_json(json& j, const FitResult& f);
void to_json(json& j, const RolloutResult& r);
void to_json(json& j, const FanChart& f);

/// Decodes `j` into T, translating library exceptions into Error{"invalid_json"}.
template <class T>
T decode(const json& j, const std::string& what)
{
    try {
        return j.get<T>();
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error("invalid_json", "could not decode " + what, {e.what()});
    }
}

// ---------------------------------------------------------------------------
// CSV

/// Parsed CSV: header plus rows of raw cells. Lines starting with '#' are
/// provenance comments and are skipped.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers; ///< source line of each row

    std::size_t column(const std::string& name) const;
    bool has_column(const std::string& name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

double parse_double(const std::string& cell, const std::string& field, std::size_t line);
long long parse_integer(const std::string& cell, const std::string& field, std::size_t line);

/// Shortest-round-trip decimal form of a double.
std::string format_double(double v);

/// Provenance line written at the top of every CSV artifact.
std::string provenance_comment(const std::string& config_hash, std::uint64_t seed);

void write_actions_csv(std::ostream& out, const ActionSequence& actions);
ActionSequence read_actions_csv(std::istream& in);

void write_observations_csv(std::ostream& out, const std::vector<Observation>& obs);
std::vector<Observation> read_observations_csv(std::istream& in);

void write_triangle_csv(std::ostream& out, const RevisionTriangle& tri);
RevisionTriangle read_triangle_csv(std::istream& in);

void write_belief_csv(std::ostream& out, const std::vector<BeliefReport>& reports);
void write_trajectory_csv(std::ostream& out, const std::vector<LatentState>& trajectory, int start_week = 0);

/// 64-bit FNV-1a, hex encoded; used to stamp artifacts with their config.
std::string content_hash(const std::string& bytes);

} // namespace epiworld
