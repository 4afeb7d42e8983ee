// SPDX-License-Identifier: Apache-2.0
//
// Immune feedback laws. The helper T-cell term stimulates the control
// action, the suppressor T-cell term inhibits it:
//
//   u = P_h(e) [1 - f_h(e) f_s(u')]      (general scalar form)
//   u = u_h - u_s                          (PD-type form)
#pragma once

#include <cmath>
#include <concepts>
#include <stdexcept>

#include "immunepd/plant.hpp"

namespace immunepd {

/// Feedback coefficients of the helper term.
struct Gains {
    double K_P = 100.0;  ///< [1/s^2]
    double K_D = 20.0;   ///< [1/s]

    bool operator==(const Gains&) const = default;
};

inline void validate(const Gains& g) {
    if (!(g.K_P > 0.0)) throw std::domain_error("gains: K_P must be > 0");
    if (!(g.K_D > 0.0)) throw std::domain_error("gains: K_D must be > 0");
}

/// Everything the tracking law reads at one control instant.
struct ControlSample {
    double e = 0.0;           ///< theta_d - theta [rad]
    double e_dot = 0.0;       ///< theta_d' - theta' [rad/s]
    double u_dot = 0.0;       ///< control rate [V/s]
    double theta_dot = 0.0;   ///< measured plant velocity [rad/s]
    double theta_dd_d = 0.0;  ///< desired acceleration [rad/s^2]
};

/// Scalar immune law. `helper_inverse` must be the inverse of `helper` on the
/// range being evaluated; nothing here checks that.
template <typename Helper, typename HelperInverse, typename Suppressor>
    requires std::invocable<Helper, double> && std::invocable<HelperInverse, double> &&
             std::invocable<Suppressor, double>
double general_immune_law(Helper&& helper, HelperInverse&& helper_inverse, Suppressor&& suppressor,
                          double e, double u_dot) {
    return helper(e) * (1.0 - helper_inverse(e) * suppressor(u_dot));
}

inline double helper_pd(double e, double e_dot, const Gains& g) { return g.K_P * e + g.K_D * e_dot; }

inline double immune_combine(double u_helper, double u_suppressor) { return u_helper - u_suppressor; }

/// Helper output of the tracking law: nominal inverse dynamics driven by a
/// PD-corrected reference acceleration. The a1_hat term uses the measured
/// velocity, not the error rate.
inline double tracking_helper(const ControlSample& cs, const NominalParams& np, const Gains& g) {
    return np.a2_hat * (cs.theta_dd_d + g.K_D * cs.e_dot + g.K_P * cs.e) + np.a1_hat * cs.theta_dot;
}

inline constexpr double kCriticalDampingRelTol = 1e-9;

/// K_D^2 == 4 K_P (double real pole at -K_D/2) up to a relative tolerance.
inline bool check_critical_damping(const Gains& g) {
    if (!(g.K_P > 0.0) || !(g.K_D > 0.0)) return false;
    return std::abs(g.K_D * g.K_D - 4.0 * g.K_P) <= kCriticalDampingRelTol * 4.0 * g.K_P;
}

struct ImmunePidBaselineParams {
    double K0 = 1.0;     ///< base gain
    double eta = 0.3;    ///< suppression strength, in [0, 1)
    double sigma = 1.0;  ///< width of the suppression bump [V/s]
    double Kp_i = 760.0;
    double Ki_i = 760.0;
    double Kd_i = 152.0;

    bool operator==(const ImmunePidBaselineParams&) const = default;
};

inline void validate(const ImmunePidBaselineParams& p) {
    if (!(p.K0 > 0.0)) throw std::domain_error("baseline: K0 must be > 0");
    if (!(p.eta >= 0.0 && p.eta < 1.0)) throw std::domain_error("baseline: eta must lie in [0, 1)");
    if (!(p.sigma > 0.0)) throw std::domain_error("baseline: sigma must be > 0");
}

/// f(x) = 1 - exp(-x^2 / sigma^2); even, f(0) = 0, tends to 1.
inline double suppression_bump(double x, double sigma) { return 1.0 - std::exp(-(x * x) / (sigma * sigma)); }

/// Immune PID used as the comparison baseline.
///
///   u(k) = K0 [1 - eta f(u'(k-1))] u_pid(k)
///
/// with a rectangle-rule integral, a backward-difference derivative and
/// u'(k-1) = (u(k-1) - u(k-2)) / dt. Owns its history, so one instance
/// serves exactly one episode.
class ImmunePidBaseline {
public:
    ImmunePidBaseline(ImmunePidBaselineParams params, double dt) : params_(params), dt_(dt) {
        validate(params_);
        if (!(dt_ > 0.0)) throw std::invalid_argument("baseline: dt must be > 0");
    }

    /// Helper (stimulating) and suppressing parts of one baseline output.
    struct Output {
        double helper = 0.0;       ///< K0 u_pid
        double suppression = 0.0;  ///< K0 eta f(u') u_pid
        double u = 0.0;            ///< helper - suppression
    };

    Output update(double e) {
        integral_ += e * dt_;
        const double derivative = has_prev_e_ ? (e - prev_e_) / dt_ : 0.0;
        const double u_pid = params_.Kp_i * e + params_.Ki_i * integral_ + params_.Kd_i * derivative;

        const double u_rate = (u_prev_ - u_prev2_) / dt_;
        Output out;
        out.helper = params_.K0 * u_pid;
        out.suppression = out.helper * params_.eta * suppression_bump(u_rate, params_.sigma);
        out.u = immune_combine(out.helper, out.suppression);

        prev_e_ = e;
        has_prev_e_ = true;
        u_prev2_ = u_prev_;
        u_prev_ = out.u;
        return out;
    }

    /// 1 - eta f(rate), always in (1 - eta, 1].
    [[nodiscard]] double suppression_factor(double u_rate) const {
        return 1.0 - params_.eta * suppression_bump(u_rate, params_.sigma);
    }

    [[nodiscard]] const ImmunePidBaselineParams& params() const { return params_; }

private:
    ImmunePidBaselineParams params_;
    double dt_;
    double integral_ = 0.0;
    double prev_e_ = 0.0;
    bool has_prev_e_ = false;
    double u_prev_ = 0.0;
    double u_prev2_ = 0.0;
};

}  // namespace immunepd
