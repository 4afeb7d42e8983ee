// SPDX-License-Identifier: Apache-2.0
//
// Shared oracles and random draws for the test programs.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "immunepd/plant.hpp"

namespace immunepd::testing {

/// Uniform draws from a fixed seed, so every failure reproduces.
class Draw {
public:
    explicit Draw(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

    LumpedParams lumped() { return {uniform(0.1, 20.0), uniform(0.0, 5.0), uniform(0.0, 5.0)}; }
    NominalParams nominal() { return {uniform(0.1, 20.0), uniform(0.0, 5.0)}; }
    PlantState state() { return {uniform(-M_PI, M_PI), uniform(-10.0, 10.0)}; }

    PhysicalParams physical() {
        PhysicalParams p;
        p.J_c = uniform(0.0, 2.0);
        p.m = uniform(0.0, 3.0);
        p.r = uniform(0.0, 1.0);
        p.B = uniform(0.0, 1.0);
        p.g = 9.81;
        p.J_m = uniform(0.1, 2.0);
        p.B_m = uniform(0.0, 1.0);
        p.j = uniform(0.5, 10.0);
        p.R = uniform(0.1, 5.0);
        p.k_t = uniform(0.1, 2.0);
        p.k_v = uniform(0.0, 2.0);
        return p;
    }

private:
    std::mt19937_64 rng_;
};

/// Closed-form solution of a2 th'' + a1 th' = v for constant v and a1 > 0.
inline PlantState linear_plant_solution(const PlantState& s0, double v, double a2, double a1, double t) {
    const double c = a1 / a2;
    const double w_inf = v / a1;
    const double decay = std::exp(-c * t);
    return {s0.theta + w_inf * t + (s0.theta_dot - w_inf) * (1.0 - decay) / c,
            w_inf + (s0.theta_dot - w_inf) * decay};
}

/// Global error at t_end of RK4 against linear_plant_solution.
inline double linear_plant_error(const LumpedParams& lp, const PlantState& s0, double v, double t_end, double dt) {
    const int n = static_cast<int>(std::lround(t_end / dt));
    PlantState s = s0;
    for (int k = 0; k < n; ++k) s = step(s, v, lp, dt);
    const PlantState exact = linear_plant_solution(s0, v, lp.a2, lp.a1, t_end);
    return std::hypot(s.theta - exact.theta, s.theta_dot - exact.theta_dot);
}

/// Critically damped error with lambda = K_D / 2 and e'(0) = 0.
inline double critically_damped_error(double e0, double lambda, double t) {
    return e0 * (1.0 + lambda * t) * std::exp(-lambda * t);
}

}  // namespace immunepd::testing
