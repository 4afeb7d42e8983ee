// SPDX-License-Identifier: Apache-2.0
//
// DC actuating mechanism: a DC motor driving a load link through a gearbox.
// The electrical and mechanical parts reduce to the second-order model
//
//   a2 * theta'' + a1 * theta' + a0 * cos(theta) = v
//
// whose linear part (a2_hat, a1_hat) is the nominal model; everything the
// nominal model misses is lumped into the equivalent disturbance d.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace immunepd {

/// Raised when the integrator produces a non-finite state.
class StepFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Physical motor-and-link constants (SI units).
///
/// `L` is carried for completeness only. The reduced model neglects the
/// armature inductance, so it never enters the dynamics.
struct PhysicalParams {
    double J_c = 0.0;  ///< load-link inertia [kg m^2]
    double m = 0.0;    ///< point mass at the end of the link [kg]
    double r = 0.0;    ///< arm length [m]
    double B = 0.0;    ///< load viscous friction [N m s/rad]
    double g = 9.81;   ///< gravitational acceleration [m/s^2]
    double J_m = 1.0;  ///< motor inertia [kg m^2]
    double B_m = 0.0;  ///< motor viscous friction [N m s/rad]
    double j = 1.0;    ///< gear ratio, theta_m = j * theta
    double R = 1.0;    ///< armature resistance [Ohm]
    double L = 0.0;    ///< armature inductance [H] (unused)
    double k_t = 1.0;  ///< torque constant [N m/A]
    double k_v = 0.0;  ///< back-EMF constant [V s/rad]

    bool operator==(const PhysicalParams&) const = default;
};

/// Reduced coefficients of the second-order model.
struct LumpedParams {
    double a2 = 7.6;     ///< theta'' coefficient [V s^2/rad]
    double a1 = 0.0234;  ///< theta' coefficient [V s/rad]
    double a0 = 0.26;    ///< gravity coefficient [V]

    bool operator==(const LumpedParams&) const = default;
};

/// Nominal (linear, disturbance-free) estimates of a2 and a1.
struct NominalParams {
    double a2_hat = 7.6;
    double a1_hat = 0.0234;

    bool operator==(const NominalParams&) const = default;
};

struct PlantState {
    double theta = 0.0;      ///< [rad]
    double theta_dot = 0.0;  ///< [rad/s]

    bool operator==(const PlantState&) const = default;

    [[nodiscard]] bool finite() const { return std::isfinite(theta) && std::isfinite(theta_dot); }
};

/// Intermediate mechanical quantities produced while lumping.
struct LumpBreakdown {
    double J = 0.0;    ///< J_c + m r^2
    double J_e = 0.0;  ///< J_m + J / j^2
    double B_e = 0.0;  ///< B_m + B / j^2
    LumpedParams lumped;
};

inline void validate(const PhysicalParams& p) {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw std::domain_error(std::string("unphysical parameters: ") + what);
    };
    require(p.J_c >= 0.0, "J_c must be >= 0");
    require(p.m >= 0.0, "m must be >= 0");
    require(p.r >= 0.0, "r must be >= 0");
    require(p.J_m > 0.0, "J_m must be > 0");
    require(p.j > 0.0, "j must be > 0");
    require(p.R > 0.0, "R must be > 0");
    require(p.k_t > 0.0, "k_t must be > 0");
    require(p.k_v >= 0.0, "k_v must be >= 0");
    require(p.B >= 0.0, "B must be >= 0");
    require(p.B_m >= 0.0, "B_m must be >= 0");
    require(p.L >= 0.0, "L must be >= 0");
}

inline void validate(const LumpedParams& lp) {
    if (!(lp.a2 > 0.0)) throw std::domain_error("lumped parameters: a2 must be > 0");
    if (!(lp.a1 >= 0.0)) throw std::domain_error("lumped parameters: a1 must be >= 0");
    if (!(lp.a0 >= 0.0)) throw std::domain_error("lumped parameters: a0 must be >= 0");
}

inline void validate(const NominalParams& np) {
    if (!(np.a2_hat > 0.0)) throw std::domain_error("nominal parameters: a2_hat must be > 0");
    if (!std::isfinite(np.a1_hat)) throw std::domain_error("nominal parameters: a1_hat must be finite");
}

/// Reflect the load link through the gearbox and fold in the armature circuit.
inline LumpBreakdown lump_breakdown(const PhysicalParams& p) {
    validate(p);
    LumpBreakdown out;
    out.J = p.J_c + p.m * p.r * p.r;
    out.J_e = p.J_m + out.J / (p.j * p.j);
    out.B_e = p.B_m + p.B / (p.j * p.j);
    out.lumped.a2 = p.j * out.J_e * p.R / p.k_t;
    out.lumped.a1 = p.j * (out.B_e * p.R + p.k_v * p.k_t) / p.k_t;
    out.lumped.a0 = p.R * p.m * p.g * p.r / (p.j * p.k_t);
    return out;
}

inline LumpedParams lump(const PhysicalParams& p) { return lump_breakdown(p).lumped; }

/// The nominal model that matches the plant's linear part exactly.
inline NominalParams exact_nominal(const LumpedParams& lp) { return {lp.a2, lp.a1}; }

/// theta'' = (v - a1 theta' - a0 cos theta) / a2
inline double dynamics_rhs(const PlantState& s, double v, const LumpedParams& lp) {
    return (v - lp.a1 * s.theta_dot - lp.a0 * std::cos(s.theta)) / lp.a2;
}

/// d = (a2 - a2_hat) theta'' + (a1 - a1_hat) theta' + a0 cos theta
inline double equivalent_disturbance(double theta_ddot, double theta_dot, double theta,
                                     const LumpedParams& lp, const NominalParams& np) {
    return (lp.a2 - np.a2_hat) * theta_ddot + (lp.a1 - np.a1_hat) * theta_dot +
           lp.a0 * std::cos(theta);
}

/// One classical RK4 step with the voltage held over the interval.
inline PlantState step(const PlantState& s, double v, const LumpedParams& lp, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be > 0");

    auto deriv = [&](const PlantState& x) -> PlantState {
        return {x.theta_dot, dynamics_rhs(x, v, lp)};
    };
    auto offset = [](const PlantState& x, const PlantState& k, double h) -> PlantState {
        return {x.theta + h * k.theta, x.theta_dot + h * k.theta_dot};
    };

    const PlantState k1 = deriv(s);
    const PlantState k2 = deriv(offset(s, k1, 0.5 * dt));
    const PlantState k3 = deriv(offset(s, k2, 0.5 * dt));
    const PlantState k4 = deriv(offset(s, k3, dt));

    PlantState next{
        s.theta + dt / 6.0 * (k1.theta + 2.0 * k2.theta + 2.0 * k3.theta + k4.theta),
        s.theta_dot + dt / 6.0 * (k1.theta_dot + 2.0 * k2.theta_dot + 2.0 * k3.theta_dot + k4.theta_dot),
    };
    if (!next.finite()) throw StepFailure("plant state became non-finite (unstable loop or dt too large)");
    return next;
}

/// First integral of the unforced, frictionless plant (a1 = 0, v = 0):
/// a2 theta'^2 / 2 + a0 sin(theta).
inline double unforced_first_integral(const PlantState& s, const LumpedParams& lp) {
    return 0.5 * lp.a2 * s.theta_dot * s.theta_dot + lp.a0 * std::sin(s.theta);
}

}  // namespace immunepd
