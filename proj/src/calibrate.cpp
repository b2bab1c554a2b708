#include "epiworld/calibrate.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "epiworld/parallel.hpp"

namespace epiworld {

std::string to_string(Optimizer o) { return o == Optimizer::Grid ? "grid" : "nelder-mead"; }

Optimizer parse_optimizer(const std::string& s)
{
    if (s == "grid") {
        return Optimizer::Grid;
    }
    if (s == "nelder-mead" || s == "nelder_mead") {
        return Optimizer::NelderMead;
    }
    throw Error("invalid_config", "unknown optimizer '" + s + "'");
}

void validate_calibration(const CalibrationConfig& c)
{
    std::vector<std::string> d;
    if (c.free.empty()) {
        d.push_back("at least one free parameter is required");
    }
    const auto& names = param_names();
    for (const auto& f : c.free) {
        if (std::find(names.begin(), names.end(), f.name) == names.end()) {
            d.push_back("unknown parameter '" + f.name + "'");
        }
        if (!std::isfinite(f.lower) || !std::isfinite(f.upper)) {
            d.push_back(f.name + ": bounds must be finite");
        } else if (f.lower > f.upper) {
            d.push_back(f.name + ": lower bound exceeds upper bound");
        }
        if (f.grid_points < 1) {
            d.push_back(f.name + ": grid_points must be >= 1");
        }
    }
    if (c.restarts < 1) {
        d.push_back("restarts must be >= 1");
    }
    if (c.particles < 1) {
        d.push_back("particles must be >= 1");
    }
    if (!(c.beta_kl > 0.0)) {
        d.push_back("beta_kl must be positive");
    }
    if (c.max_evaluations < 1) {
        d.push_back("max_evaluations must be >= 1");
    }
    if (!d.empty()) {
        throw Error("invalid_config", "calibration configuration is invalid", std::move(d));
    }
}

ModelParams apply_theta(const CalibrationConfig& c, const std::vector<double>& theta)
{
    if (theta.size() != c.free.size()) {
        throw Error("invalid_theta", "theta has " + std::to_string(theta.size()) + " entries, expected " +
                                         std::to_string(c.free.size()));
    }
    ModelParams p = c.base;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        if (theta[i] < c.free[i].lower || theta[i] > c.free[i].upper) {
            throw Error("invalid_theta", c.free[i].name + " outside its bounds");
        }
        set_param(p, c.free[i].name, theta[i]);
    }
    return p;
}

double objective(const CalibrationData& data, const std::vector<double>& theta, const CalibrationConfig& config,
                 std::uint64_t seed)
{
    if (data.actions.size() != data.observations.size()) {
        throw Error("invalid_data", "actions and observations must have equal length");
    }
    const ModelParams p = apply_theta(config, theta);
    validate_params(p);
    if (data.observations.empty()) {
        return 0.0;
    }
    const RngStream root = derive_stream(seed, 0);
    Belief bel = init_belief(config.prior, config.particles, p, root.derive(0));
    bel.week = data.observations.front().week - 1;
    try {
        for (std::size_t t = 0; t < data.observations.size(); ++t) {
            bel = filter_step(bel, data.actions[t], data.observations[t], p, config.regime, root.derive(1).derive(t),
                              config.filter, Exogenous{t < data.vaccination.size() ? data.vaccination[t] : 0.0});
        }
    } catch (const Error& e) {
        if (e.code() == "observation_impossible") {
            return -std::numeric_limits<double>::infinity();
        }
        throw;
    }
    return bel.cum_loglik;
}

namespace {

std::uint64_t restart_seed(std::uint64_t seed, int restart)
{
    return restart == 0 ? seed : mix_keys(seed, static_cast<std::uint64_t>(restart));
}

std::vector<std::vector<double>> grid_points(const CalibrationConfig& c)
{
    std::vector<std::vector<double>> axes;
    for (const auto& f : c.free) {
        std::vector<double> axis;
        const std::size_t n = f.lower == f.upper ? 1 : f.grid_points;
        for (std::size_t i = 0; i < n; ++i) {
            axis.push_back(n == 1 ? (f.lower == f.upper ? f.lower : 0.5 * (f.lower + f.upper))
                                  : f.lower + (f.upper - f.lower) * static_cast<double>(i) / static_cast<double>(n - 1));
        }
        axes.push_back(std::move(axis));
    }
    std::vector<std::vector<double>> points{{}};
    for (const auto& axis : axes) {
        std::vector<std::vector<double>> next;
        for (const auto& prefix : points) {
            for (double v : axis) {
                auto p = prefix;
                p.push_back(v);
                next.push_back(std::move(p));
            }
        }
        points = std::move(next);
    }
    return points;
}

struct NelderMeadContext {
    const CalibrationData* data;
    const CalibrationConfig* config;
    std::uint64_t seed;
    int restart;
    std::vector<TraceEntry>* trace;
};

constexpr double kImpossiblePenalty = 1e12;

double nm_cost(const gsl_vector* v, void* raw)
{
    auto* ctx = static_cast<NelderMeadContext*>(raw);
    const auto& free = ctx->config->free;
    std::vector<double> theta(free.size());
    double outside = 0.0;
    for (std::size_t i = 0; i < free.size(); ++i) {
        const double x = gsl_vector_get(v, i);
        theta[i] = std::clamp(x, free[i].lower, free[i].upper);
        const double width = std::max(free[i].upper - free[i].lower, 1e-12);
        outside += std::pow((x - theta[i]) / width, 2);
    }
    const double value = objective(*ctx->data, theta, *ctx->config, ctx->seed);
    ctx->trace->push_back({theta, value, ctx->restart});
    const double cost = std::isfinite(value) ? -value : kImpossiblePenalty;
    return cost + 1e6 * outside;
}

std::vector<TraceEntry> run_nelder_mead(const CalibrationData& data, const CalibrationConfig& config,
                                        std::uint64_t seed, int restart)
{
    std::vector<TraceEntry> trace;
    const std::size_t n = config.free.size();
    NelderMeadContext ctx{&data, &config, seed, restart, &trace};
    gsl_multimin_function fn{&nm_cost, n, &ctx};

    RngStream start_rng = derive_stream(seed, 1000 + static_cast<std::uint64_t>(restart));
    gsl_vector* x = gsl_vector_alloc(n);
    gsl_vector* step = gsl_vector_alloc(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& f = config.free[i];
        const double u = restart == 0 ? 0.5 : start_rng.uniform();
        gsl_vector_set(x, i, f.lower + u * (f.upper - f.lower));
        gsl_vector_set(step, i, std::max(0.1 * (f.upper - f.lower), 1e-9));
    }
    gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
    gsl_multimin_fminimizer_set(s, &fn, x, step);
    double min_width = std::numeric_limits<double>::infinity();
    for (const auto& f : config.free) {
        min_width = std::min(min_width, std::max(f.upper - f.lower, 1e-12));
    }
    while (static_cast<int>(trace.size()) < config.max_evaluations) {
        if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) {
            break;
        }
        if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-4 * min_width) == GSL_SUCCESS) {
            break;
        }
    }
    gsl_multimin_fminimizer_free(s);
    gsl_vector_free(step);
    gsl_vector_free(x);
    return trace;
}

} // namespace

FitResult fit(const CalibrationData& data, const CalibrationConfig& config, std::uint64_t seed)
{
    validate_calibration(config);
    FitResult result;
    if (config.optimizer == Optimizer::Grid) {
        const auto points = grid_points(config);
        const auto restarts = static_cast<std::size_t>(config.restarts);
        result.trace.resize(points.size() * restarts);
        parallel_for(
            result.trace.size(),
            [&](std::size_t k) {
                const std::size_t i = k / restarts;
                const int r = static_cast<int>(k % restarts);
                result.trace[k] = {points[i], objective(data, points[i], config, restart_seed(seed, r)), r};
            },
            1);
    } else {
        gsl_set_error_handler_off();
        std::vector<std::vector<TraceEntry>> per_restart(static_cast<std::size_t>(config.restarts));
        parallel_for(
            per_restart.size(),
            [&](std::size_t r) { per_restart[r] = run_nelder_mead(data, config, seed, static_cast<int>(r)); }, 1);
        for (auto& t : per_restart) {
            result.trace.insert(result.trace.end(), t.begin(), t.end());
        }
    }
    const TraceEntry* best = nullptr;
    for (const auto& e : result.trace) {
        if (std::isfinite(e.value) && (best == nullptr || e.value > best->value)) {
            best = &e;
        }
    }
    if (best == nullptr) {
        throw Error("calibration_failed", "every objective evaluation was -inf");
    }
    result.theta = best->theta;
    result.value = best->value;
    return result;
}

} // namespace epiworld
