#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "epiworld/filter.hpp"

namespace epiworld::testing {

/// Three-state hidden Markov model with Gaussian emissions. The exact
/// forward recursion serves as the likelihood oracle for the particle filter.
struct HmmToy {
    std::array<double, 3> initial{0.5, 0.3, 0.2};
    std::array<std::array<double, 3>, 3> transition{{{0.8, 0.15, 0.05}, {0.1, 0.8, 0.1}, {0.05, 0.15, 0.8}}};
    std::array<double, 3> means{-1.5, 0.0, 1.5};
    double sd = 1.0;

    double emission_log_density(int state, double y) const
    {
        const double z = (y - means[static_cast<std::size_t>(state)]) / sd;
        return -0.5 * z * z - std::log(sd * std::sqrt(2.0 * std::numbers::pi));
    }

    static int draw(const std::array<double, 3>& probs, RngStream& rng)
    {
        const double u = rng.uniform();
        double cum = 0.0;
        for (int k = 0; k < 2; ++k) {
            cum += probs[static_cast<std::size_t>(k)];
            if (u < cum) {
                return k;
            }
        }
        return 2;
    }

    /// x_0 ~ initial; x_t ~ transition(x_{t-1}); y_t ~ N(means[x_t], sd) for t = 1..T.
    std::vector<double> simulate(int steps, RngStream rng) const
    {
        int s = draw(initial, rng);
        std::vector<double> ys;
        for (int t = 0; t < steps; ++t) {
            s = draw(transition[static_cast<std::size_t>(s)], rng);
            ys.push_back(means[static_cast<std::size_t>(s)] + sd * rng.normal());
        }
        return ys;
    }

    /// Exact log p(y_1..y_T) by the forward algorithm.
    double exact_loglik(const std::vector<double>& ys) const
    {
        std::array<double, 3> alpha = initial;
        double ll = 0.0;
        for (double y : ys) {
            std::array<double, 3> next{};
            for (std::size_t i = 0; i < 3; ++i) {
                for (std::size_t j = 0; j < 3; ++j) {
                    next[j] += alpha[i] * transition[i][j];
                }
            }
            double c = 0.0;
            for (std::size_t j = 0; j < 3; ++j) {
                next[j] *= std::exp(emission_log_density(static_cast<int>(j), y));
                c += next[j];
            }
            for (auto& v : next) {
                v /= c;
            }
            ll += std::log(c);
            alpha = next;
        }
        return ll;
    }

    /// Bootstrap particle filter log-likelihood estimate.
    double particle_loglik(const std::vector<double>& ys, std::size_t particles, const RngStream& rng,
                           const FilterSettings& settings = {}) const
    {
        ParticleBelief<int> bel;
        bel.particles.resize(particles);
        const RngStream init = rng.derive(0);
        for (std::size_t i = 0; i < particles; ++i) {
            RngStream r = init.derive(i);
            bel.particles[i] = draw(initial, r);
        }
        bel.log_weights.assign(particles, -std::log(static_cast<double>(particles)));
        for (std::size_t t = 0; t < ys.size(); ++t) {
            const double y = ys[t];
            bel = bootstrap_step(
                bel,
                [&](int s, RngStream r) { return draw(transition[static_cast<std::size_t>(s)], r); },
                [&](int s) { return emission_log_density(s, y); }, rng.derive(t + 1), settings);
        }
        return bel.cum_loglik;
    }
};

} // namespace epiworld::testing
