#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "epiworld/filter.hpp"

namespace epiworld {

enum class Optimizer { Grid, NelderMead };

std::string to_string(Optimizer o);
Optimizer parse_optimizer(const std::string& s);

struct FreeParameter {
    std::string name;
    double lower = 0.0;
    double upper = 0.0;
    std::size_t grid_points = 11; ///< grid optimizer only
};

/// World-model fitting setup. The objective is the bootstrap particle
/// filter's log-likelihood estimate; `beta_kl` is carried for the general
/// variational form and does not enter the bootstrap bound.
struct CalibrationConfig {
    std::vector<FreeParameter> free;
    Optimizer optimizer = Optimizer::Grid;
    int restarts = 1;
    std::size_t particles = 500;
    double beta_kl = 1.0;
    int max_evaluations = 200; ///< per Nelder-Mead restart
    ModelParams base;
    MisreportingRegime regime;
    PriorConfig prior;
    FilterConfig filter;
};

void validate_calibration(const CalibrationConfig& c);

/// Actions applied during weeks 1..T and the observations at their ends.
struct CalibrationData {
    ActionSequence actions;
    std::vector<Observation> observations;
    std::vector<double> vaccination; ///< optional; missing weeks are 0
};

ModelParams apply_theta(const CalibrationConfig& c, const std::vector<double>& theta);

/// Filter log-likelihood under theta. Randomness comes only from `seed`, so
/// different theta values share common random numbers. Returns -inf when an
/// observation is impossible under the model.
double objective(const CalibrationData& data, const std::vector<double>& theta, const CalibrationConfig& config,
                 std::uint64_t seed);

struct TraceEntry {
    std::vector<double> theta;
    double value = 0.0;
    int restart = 0;
};

struct FitResult {
    std::vector<double> theta;
    double value = 0.0;
    std::vector<TraceEntry> trace;
};

FitResult fit(const CalibrationData& data, const CalibrationConfig& config, std::uint64_t seed);

} // namespace epiworld
