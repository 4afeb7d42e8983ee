// SPDX-License-Identifier: Apache-2.0
//
// Episode-level training of the suppressor network and the controller
// comparison built on top of it.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "immunepd/episode.hpp"
#include "immunepd/recurrent_net.hpp"

namespace immunepd {

struct TrainOptions {
    NetTopology topology;
    int epochs = 50;
    double eta = 1e-3;
    std::uint64_t seed = 0;
    double init_scale = 0.1;
    /// Multiplies E(k) before it is injected into the backward pass.
    double error_sign = 1.0;
};

inline void validate(const TrainOptions& opts) {
    validate(opts.topology);
    if (opts.epochs < 1) throw std::domain_error("train: epochs must be >= 1");
    if (!(opts.eta >= 0.0)) throw std::domain_error("train: eta must be >= 0");
    if (!(opts.init_scale >= 0.0)) throw std::domain_error("train: init_scale must be >= 0");
    if (opts.error_sign != 1.0 && opts.error_sign != -1.0) throw std::domain_error("train: error_sign must be +1 or -1");
}

struct EpochRecord {
    int epoch = 0;
    double J = 0.0;
    double rmse = 0.0;
    double max_abs_e = 0.0;

    bool operator==(const EpochRecord&) const = default;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;  ///< 0 .. epochs; the last one is evaluation only
    SuppressorNet net;                ///< weights after the last update
    EpisodeLog final_log;             ///< episode of the last recorded epoch
    bool diverged = false;
};

inline constexpr double kDivergenceFactor = 1e6;

/// One gradient step from a recorded episode: backward pass over the log
/// followed by the weight update.
inline NetWeights train_step(const SuppressorNet& net, const EpisodeLog& log, std::span<const NetState> trace,
                             double eta, double error_sign) {
    std::vector<double> E = log.error_series();
    for (double& v : E) v *= error_sign;
    const auto deltas = bptt_deltas(net.topology, net.weights, trace, E);
    return apply_update(net.weights, weight_gradient(deltas, trace), eta);
}

/// Repeats the same episode, updating the weights after each run:
/// initialise, run the episode feeding (e, e', v') to the network, collect
/// the immune errors, back-propagate them through time and take one
/// gradient step. Epoch `epochs` is a final evaluation without update.
/// Stops early (diverged = true) when J grows past 1e6 times J(0).
inline TrainReport train(const EpisodeConfig& cfg, const LumpedParams& lp, const NominalParams& np, const Gains& g,
                         const TrainOptions& opts) {
    validate(opts);
    EpisodeConfig episode = cfg;
    episode.controller = Controller::NeuralImmunePd;
    episode.suppressor = true;

    TrainReport report;
    report.net = {opts.topology, init_weights(opts.topology, opts.init_scale, opts.seed)};

    std::vector<NetState> trace;
    for (int l = 0; l <= opts.epochs; ++l) {
        EpisodeLog log = run_episode(episode, lp, np, g, &report.net, &trace);
        const Metrics m = metrics(log);
        const double J = cost(log.error_series());
        report.epochs.push_back({l, J, m.rmse, m.max_abs_e});
        report.final_log = std::move(log);

        const double J0 = report.epochs.front().J;
        if (!std::isfinite(J) || (J0 > 0.0 && J > kDivergenceFactor * J0)) {
            report.diverged = true;
            break;
        }
        if (l == opts.epochs) break;
        report.net.weights = train_step(report.net, report.final_log, trace, opts.eta, opts.error_sign);
    }
    return report;
}

inline constexpr std::string_view kTrainCsvHeader = "epoch,J,rmse,max_abs_e";

inline void write_train_csv(std::ostream& out, const TrainReport& report) {
    const auto old_precision = out.precision(17);
    out << kTrainCsvHeader << '\n';
    for (const auto& r : report.epochs) out << r.epoch << ',' << r.J << ',' << r.rmse << ',' << r.max_abs_e << '\n';
    out.precision(old_precision);
}

/// A controller plus whatever it needs to run.
struct ControllerChoice {
    Controller kind = Controller::NeuralImmunePd;
    const SuppressorNet* net = nullptr;
    ImmunePidBaselineParams baseline;
    std::string label;
};

struct ComparisonSide {
    std::string label;
    Metrics metrics;
    EpisodeLog log;
};

struct Comparison {
    ComparisonSide left;
    ComparisonSide right;

    /// Label of the lower-RMSE side; "tie" when equal.
    [[nodiscard]] std::string better() const {
        if (left.metrics.rmse < right.metrics.rmse) return left.label;
        if (right.metrics.rmse < left.metrics.rmse) return right.label;
        return "tie";
    }
};

inline ComparisonSide run_side(const EpisodeConfig& cfg, const LumpedParams& lp, const NominalParams& np,
                               const Gains& g, const ControllerChoice& choice) {
    EpisodeConfig episode = cfg;
    episode.controller = choice.kind;
    episode.suppressor = true;
    episode.baseline = choice.baseline;
    ComparisonSide side;
    side.label = choice.label.empty() ? std::string(to_string(choice.kind)) : choice.label;
    side.log = run_episode(episode, lp, np, g, choice.net);
    side.metrics = metrics(side.log);
    return side;
}

/// Runs both controllers on the same trajectory and initial state.
inline Comparison compare(const EpisodeConfig& cfg, const LumpedParams& lp, const NominalParams& np, const Gains& g,
                          const ControllerChoice& left, const ControllerChoice& right) {
    return {run_side(cfg, lp, np, g, left), run_side(cfg, lp, np, g, right)};
}

struct BaselineGrid {
    std::vector<double> K0{0.5, 1.0, 2.0, 5.0};
    std::vector<double> eta{0.0, 0.3, 0.6};
    std::vector<double> sigma{0.1, 1.0, 10.0};
};

struct TunedBaseline {
    ImmunePidBaselineParams params;
    Metrics metrics;
};

/// Exhaustive search over the grid (inner PID gains taken from `inner`),
/// keeping the lowest-RMSE setting. Unstable settings are skipped.
inline TunedBaseline tune_baseline(const EpisodeConfig& cfg, const LumpedParams& lp, const NominalParams& np,
                                   const Gains& g, const ImmunePidBaselineParams& inner,
                                   const BaselineGrid& grid = {}) {
    TunedBaseline best;
    best.metrics.rmse = std::numeric_limits<double>::infinity();
    bool found = false;
    for (double K0 : grid.K0)
        for (double eta : grid.eta)
            for (double sigma : grid.sigma) {
                ImmunePidBaselineParams p = inner;
                p.K0 = K0;
                p.eta = eta;
                p.sigma = sigma;
                Metrics m;
                try {
                    m = run_side(cfg, lp, np, g, {Controller::ImmunePidBaseline, nullptr, p, {}}).metrics;
                } catch (const StepFailure&) {
                    continue;
                }
                if (m.rmse < best.metrics.rmse) {
                    best = {p, m};
                    found = true;
                }
            }
    if (!found) throw StepFailure("tune_baseline: every grid point was numerically unstable");
    return best;
}

inline constexpr std::string_view kSummaryCsvHeader = "method,rmse,max_abs_e,settle_time,better";

inline void write_summary_csv(std::ostream& out, const Comparison& cmp) {
    const auto old_precision = out.precision(17);
    const std::string winner = cmp.better();
    out << kSummaryCsvHeader << '\n';
    for (const auto* side : {&cmp.left, &cmp.right})
        out << side->label << ',' << side->metrics.rmse << ',' << side->metrics.max_abs_e << ','
            << side->metrics.settle_time << ',' << (side->label == winner ? 1 : 0) << '\n';
    out.precision(old_precision);
}

}  // namespace immunepd
