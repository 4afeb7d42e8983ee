// SPDX-License-Identifier: Apache-2.0
//
// Closed-loop episodes of the tracking controller on the DC actuating
// mechanism, and the metrics used to compare them.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "immunepd/immune_control.hpp"
#include "immunepd/plant.hpp"
#include "immunepd/recurrent_net.hpp"
#include "immunepd/trajectory.hpp"

namespace immunepd {

enum class Controller {
    NeuralImmunePd,     ///< helper + recurrent suppressor
    ImmunePidBaseline,  ///< reconstructed immune PID
    PdOnly,             ///< helper alone
    OracleCompensation  ///< helper + exact disturbance cancellation
};

inline std::string_view to_string(Controller c) {
    switch (c) {
        case Controller::NeuralImmunePd: return "neural-immune-pd";
        case Controller::ImmunePidBaseline: return "immune-pid-baseline";
        case Controller::PdOnly: return "pd-only";
        case Controller::OracleCompensation: return "oracle-compensation";
    }
    return "?";
}

inline Controller parse_controller(std::string_view name) {
    for (auto c : {Controller::NeuralImmunePd, Controller::ImmunePidBaseline, Controller::PdOnly,
                   Controller::OracleCompensation})
        if (name == to_string(c)) return c;
    throw std::invalid_argument("unknown controller '" + std::string(name) +
                                "' (expected neural-immune-pd, immune-pid-baseline, pd-only or oracle-compensation)");
}

/// Factors applied to (e, e', v') before they enter the input cells.
///
/// Tracking errors are 1e-4 .. 1e-2 rad, so the defaults lift them to O(1)
/// where the learning rate acts at a useful pace. An unset v' factor means
/// dt: the cell then receives the voltage increment, since raw v' closes a
/// loop of gain ~2 a |w| / dt through the network.
struct NetInputScaling {
    double e = 1e4;
    double e_dot = 1e3;
    std::optional<double> u_dot;

    bool operator==(const NetInputScaling&) const = default;
};

struct EpisodeConfig {
    double t0 = 0.0;
    double tf = 10.0;
    double dt = 1e-3;
    PlantState initial;
    Trajectory trajectory = Trajectory::sinusoid(1.0, 1.0);
    Controller controller = Controller::NeuralImmunePd;
    bool suppressor = true;  ///< false turns neural-immune-pd into pd-only
    ImmunePidBaselineParams baseline;
    NetInputScaling input_scaling;

    bool operator==(const EpisodeConfig&) const = default;

    /// Number of control periods; validates that (tf - t0) / dt is integral.
    [[nodiscard]] std::size_t steps() const {
        if (!(dt > 0.0)) throw std::domain_error("episode: dt must be > 0");
        if (!(tf > t0)) throw std::domain_error("episode: tf must be > t0");
        if (t0 < 0.0) throw std::domain_error("episode: t0 must be >= 0");
        const double ratio = (tf - t0) / dt;
        const double rounded = std::round(ratio);
        if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio))
            throw std::domain_error("episode: (tf - t0) / dt must be a positive integer");
        return static_cast<std::size_t>(rounded);
    }
};

/// One logged control instant.
struct LogRow {
    double t = 0.0;
    double theta_d = 0.0;
    double theta = 0.0;
    double e = 0.0;
    double e_dot = 0.0;
    double v = 0.0;
    double v_h = 0.0;
    double v_s = 0.0;
    double E = 0.0;
    double d = 0.0;

    bool operator==(const LogRow&) const = default;
};

/// Rows 0 .. n for an episode of n periods. Row k < n holds the control
/// applied over [t_k, t_k + dt); row n is evaluated but not applied.
struct EpisodeLog {
    std::vector<LogRow> rows;

    /// E(1) .. E(n): the error that follows each applied control.
    [[nodiscard]] std::vector<double> error_series() const {
        std::vector<double> E;
        if (rows.size() < 2) return E;
        E.reserve(rows.size() - 1);
        for (std::size_t k = 1; k < rows.size(); ++k) E.push_back(rows[k].E);
        return E;
    }
};

/// Runs one closed-loop episode.
///
/// Per step: the reference is evaluated in closed form, e and e' come from
/// states, v' is the backward difference of the two previously applied
/// voltages (zero for the first two steps, so v_s never depends on itself),
/// then v = v_h - v_s is held over the period while RK4 advances the plant.
///
/// `net` is required for neural-immune-pd with the suppressor on. When
/// `net_trace` is non-null it receives the network states x(0) .. x(n).
inline EpisodeLog run_episode(const EpisodeConfig& cfg, const LumpedParams& lp, const NominalParams& np,
                              const Gains& g, const SuppressorNet* net = nullptr,
                              std::vector<NetState>* net_trace = nullptr) {
    validate(lp);
    validate(np);
    validate(g);
    validate(cfg.trajectory);
    const std::size_t n = cfg.steps();

    const bool neural = cfg.controller == Controller::NeuralImmunePd && cfg.suppressor;
    if (neural) {
        if (net == nullptr) throw std::invalid_argument("run_episode: neural-immune-pd needs a suppressor network");
        validate(net->topology);
        check_shape(net->topology, net->weights);
    }
    const NetInput input_scale{cfg.input_scaling.e, cfg.input_scaling.e_dot,
                               cfg.input_scaling.u_dot.value_or(cfg.dt)};
    for (double f : {input_scale.e, input_scale.e_dot, input_scale.u_dot})
        if (!std::isfinite(f)) throw std::domain_error("episode: input scaling factors must be finite");
    std::optional<ImmunePidBaseline> baseline;
    if (cfg.controller == Controller::ImmunePidBaseline) baseline.emplace(cfg.baseline, cfg.dt);

    NetState net_state;
    if (neural) {
        net_state = NetState::zero(net->topology);
        if (net_trace != nullptr) {
            net_trace->clear();
            net_trace->reserve(n + 1);
            net_trace->push_back(net_state);
        }
    }

    EpisodeLog log;
    log.rows.reserve(n + 1);
    PlantState state = cfg.initial;
    if (!state.finite()) throw std::domain_error("episode: initial state must be finite");

    for (std::size_t k = 0; k <= n; ++k) {
        LogRow row;
        row.t = cfg.t0 + static_cast<double>(k) * cfg.dt;
        const Reference ref = eval_trajectory(cfg.trajectory, row.t);
        row.theta_d = ref.pos;
        row.theta = state.theta;
        row.e = ref.pos - state.theta;
        row.e_dot = ref.vel - state.theta_dot;
        row.E = immune_error(row.e, row.e_dot, g);

        const double v_dot = k >= 2 ? (log.rows[k - 1].v - log.rows[k - 2].v) / cfg.dt : 0.0;
        const ControlSample cs{row.e, row.e_dot, v_dot, state.theta_dot, ref.acc};

        switch (cfg.controller) {
            case Controller::NeuralImmunePd:
                row.v_h = tracking_helper(cs, np, g);
                if (neural) {
                    net_state = forward_step(net->topology, net->weights, net_state,
                                             {row.e * input_scale.e, row.e_dot * input_scale.e_dot,
                                              v_dot * input_scale.u_dot});
                    row.v_s = suppressor_output(net->topology, net_state);
                    if (net_trace != nullptr && k < n) net_trace->push_back(net_state);
                }
                break;
            case Controller::PdOnly:
                row.v_h = tracking_helper(cs, np, g);
                break;
            case Controller::OracleCompensation: {
                // The acceleration the nominal model would produce from v_h.
                // Substituting it makes the cancellation exact at t_k: with
                // v = v_h - v_s the plant obeys a2_hat th'' + a1_hat th' = v_h - v_s - d,
                // so the ideal suppressor output is -d.
                row.v_h = tracking_helper(cs, np, g);
                const double accel = (row.v_h - np.a1_hat * state.theta_dot) / np.a2_hat;
                row.v_s = -equivalent_disturbance(accel, state.theta_dot, state.theta, lp, np);
                break;
            }
            case Controller::ImmunePidBaseline: {
                const auto out = baseline->update(row.e);
                row.v_h = out.helper;
                row.v_s = out.suppression;
                break;
            }
        }
        row.v = immune_combine(row.v_h, row.v_s);
        row.d = equivalent_disturbance(dynamics_rhs(state, row.v, lp), state.theta_dot, state.theta, lp, np);
        log.rows.push_back(row);

        if (k < n) state = step(state, row.v, lp, cfg.dt);
    }
    return log;
}

struct Metrics {
    double rmse = 0.0;       ///< [rad]
    double max_abs_e = 0.0;  ///< [rad]
    double settle_time = 0.0;  ///< [s], +inf if never settled

    bool operator==(const Metrics&) const = default;
};

inline constexpr double kSettleFraction = 0.02;

inline Metrics metrics(const EpisodeLog& log) {
    if (log.rows.empty()) throw std::invalid_argument("metrics: empty episode log");
    Metrics m;
    double sum_sq = 0.0;
    double peak_ref = 0.0;
    for (const auto& row : log.rows) {
        sum_sq += row.e * row.e;
        m.max_abs_e = std::max(m.max_abs_e, std::abs(row.e));
        peak_ref = std::max(peak_ref, std::abs(row.theta_d));
    }
    m.rmse = std::sqrt(sum_sq / static_cast<double>(log.rows.size()));

    const double band = kSettleFraction * std::max(peak_ref, 1e-9);
    // Walk back to the last sample outside the band.
    std::size_t first_inside = log.rows.size();
    while (first_inside > 0 && std::abs(log.rows[first_inside - 1].e) < band) --first_inside;
    m.settle_time = first_inside == log.rows.size() ? std::numeric_limits<double>::infinity()
                                                    : log.rows[first_inside].t;
    return m;
}

// CSV serialization; 17 significant digits round-trips doubles.

inline constexpr std::string_view kEpisodeCsvHeader = "t,theta_d,theta,e,e_dot,v,v_h,v_s,E,d";

inline void write_episode_csv(std::ostream& out, const EpisodeLog& log) {
    const auto old_precision = out.precision(17);
    out << kEpisodeCsvHeader << '\n';
    for (const auto& r : log.rows)
        out << r.t << ',' << r.theta_d << ',' << r.theta << ',' << r.e << ',' << r.e_dot << ',' << r.v << ','
            << r.v_h << ',' << r.v_s << ',' << r.E << ',' << r.d << '\n';
    out.precision(old_precision);
}

}  // namespace immunepd
