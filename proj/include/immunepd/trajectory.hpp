// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

namespace immunepd {

/// Desired position with its first two derivatives.
struct Reference {
    double pos = 0.0;
    double vel = 0.0;
    double acc = 0.0;
};

/// Twice continuously differentiable desired trajectory, closed form in t.
struct Trajectory {
    enum class Kind { Sinusoid, SmoothStep, Constant };

    Kind kind = Kind::Sinusoid;
    double amplitude = 1.0;  ///< sinusoid [rad]
    double omega = 1.0;      ///< sinusoid [rad/s]
    double start = 0.0;      ///< smooth step initial value [rad]
    double target = 1.0;     ///< smooth step final value [rad]
    double rise_time = 1.0;  ///< smooth step duration [s]
    double value = 0.0;      ///< constant [rad]

    bool operator==(const Trajectory&) const = default;

    static Trajectory sinusoid(double amplitude, double omega) {
        Trajectory t;
        t.kind = Kind::Sinusoid;
        t.amplitude = amplitude;
        t.omega = omega;
        return t;
    }
    static Trajectory smooth_step(double start, double target, double rise_time) {
        Trajectory t;
        t.kind = Kind::SmoothStep;
        t.start = start;
        t.target = target;
        t.rise_time = rise_time;
        return t;
    }
    static Trajectory constant(double value) {
        Trajectory t;
        t.kind = Kind::Constant;
        t.value = value;
        return t;
    }
};

inline void validate(const Trajectory& traj) {
    if (traj.kind == Trajectory::Kind::SmoothStep && !(traj.rise_time > 0.0))
        throw std::domain_error("trajectory: rise_time must be > 0");
}

inline std::string_view to_string(Trajectory::Kind kind) {
    switch (kind) {
        case Trajectory::Kind::Sinusoid: return "sinusoid";
        case Trajectory::Kind::SmoothStep: return "smooth-step";
        case Trajectory::Kind::Constant: return "constant";
    }
    return "?";
}

inline Trajectory::Kind parse_trajectory_kind(std::string_view name) {
    if (name == "sinusoid") return Trajectory::Kind::Sinusoid;
    if (name == "smooth-step") return Trajectory::Kind::SmoothStep;
    if (name == "constant") return Trajectory::Kind::Constant;
    throw std::invalid_argument("unknown trajectory kind '" + std::string(name) +
                                "' (expected sinusoid, smooth-step or constant)");
}

inline Reference eval_trajectory(const Trajectory& traj, double t) {
    if (t < 0.0) throw std::domain_error("eval_trajectory: t must be >= 0");
    switch (traj.kind) {
        case Trajectory::Kind::Sinusoid: {
            const double A = traj.amplitude;
            const double w = traj.omega;
            return {A * std::sin(w * t), A * w * std::cos(w * t), -A * w * w * std::sin(w * t)};
        }
        case Trajectory::Kind::SmoothStep: {
            // Quintic blend 10 tau^3 - 15 tau^4 + 6 tau^5: zero slope and
            // curvature at both ends.
            const double span = traj.target - traj.start;
            const double Tr = traj.rise_time;
            if (t >= Tr) return {traj.target, 0.0, 0.0};
            const double tau = t / Tr;
            const double tau2 = tau * tau;
            const double tau3 = tau2 * tau;
            const double blend = tau3 * (10.0 - 15.0 * tau + 6.0 * tau2);
            const double dblend = 30.0 * tau2 * (1.0 - 2.0 * tau + tau2);
            const double ddblend = 60.0 * tau * (1.0 - 3.0 * tau + 2.0 * tau2);
            return {traj.start + span * blend, span * dblend / Tr, span * ddblend / (Tr * Tr)};
        }
        case Trajectory::Kind::Constant:
            return {traj.value, 0.0, 0.0};
    }
    return {};
}

}  // namespace immunepd
