// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference check of the backward pass.
//
// Within one epoch the input sequence and the error sequence are treated as
// exogenous data. The cost that the backward pass differentiates is then
//
//   J(W') = 1/2 sum_k (E(k) + x_o(k; W') - x_o(k; W))^2,
//
// i.e. the error reacts one-for-one to a change of the network output. At
// W' = W it equals the ordinary half sum of squares, and its gradient is
// what bptt_deltas + weight_gradient compute. The oracle below re-runs the
// network in extended precision with its own loop so it shares no code with
// forward_step.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "immunepd/recurrent_net.hpp"

namespace immunepd {

struct TeacherForcedEpisode {
    NetTopology topology;
    NetWeights weights;
    std::vector<NetInput> inputs;  ///< u(0) .. u(n-1)
    std::vector<double> errors;    ///< E(1) .. E(n)
};

/// Random episode for gradient checks; weights and data in [-1, 1] scaled.
inline TeacherForcedEpisode random_teacher_forced_episode(const NetTopology& topo, int steps, std::uint64_t seed,
                                                          double weight_scale = 0.5) {
    TeacherForcedEpisode ep;
    ep.topology = topo;
    ep.weights = init_weights(topo, weight_scale, seed);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    auto sym = [&rng] { return 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0; };
    ep.inputs.resize(static_cast<std::size_t>(steps));
    ep.errors.resize(static_cast<std::size_t>(steps));
    for (auto& in : ep.inputs) in = {sym(), sym(), sym()};
    for (auto& e : ep.errors) e = sym();
    return ep;
}

/// Forward pass recorded for the backward pass: x(0) .. x(n).
inline std::vector<NetState> record_forward(const NetTopology& topo, const NetWeights& W,
                                            std::span<const NetInput> inputs) {
    std::vector<NetState> states;
    states.reserve(inputs.size() + 1);
    states.push_back(NetState::zero(topo));
    for (const auto& in : inputs) states.push_back(forward_step(topo, W, states.back(), in));
    return states;
}

/// Gradient of the teacher-forced cost via the backward recursion.
inline Eigen::MatrixXd bptt_gradient(const TeacherForcedEpisode& ep, const BpttOptions& opts = {}) {
    const auto states = record_forward(ep.topology, ep.weights, ep.inputs);
    const auto deltas = bptt_deltas(ep.topology, ep.weights, states, ep.errors, opts);
    return weight_gradient(deltas, states);
}

namespace detail {

using Wide = long double;
using WideMatrix = Eigen::Matrix<Wide, Eigen::Dynamic, Eigen::Dynamic>;

// Output-cell sequence x_o(1) .. x_o(n), evaluated element by element.
inline std::vector<Wide> oracle_outputs(const NetTopology& topo, const WideMatrix& W,
                                        std::span<const NetInput> inputs) {
    const int n = topo.cells();
    std::vector<Wide> x(static_cast<std::size_t>(n), 0.0L), next(x.size());
    std::vector<Wide> out;
    out.reserve(inputs.size());
    for (const auto& in : inputs) {
        for (int j = 0; j < n; ++j) {
            Wide s = 0.0L;
            for (int i = 0; i < n; ++i) s += W(j, i) * x[static_cast<std::size_t>(i)];
            if (j < kInputCells) {
                next[static_cast<std::size_t>(j)] = j == 0 ? in.e : (j == 1 ? in.e_dot : in.u_dot);
            } else if (j < topo.hidden_end()) {
                const Wide z = std::exp(-static_cast<Wide>(topo.T) * s);
                next[static_cast<std::size_t>(j)] = (1.0L - z) / (1.0L + z);
            } else {
                next[static_cast<std::size_t>(j)] = static_cast<Wide>(topo.a) * s;
            }
        }
        std::swap(x, next);
        out.push_back(x[static_cast<std::size_t>(topo.output_index())]);
    }
    return out;
}

}  // namespace detail

/// Central finite differences of the teacher-forced cost, fourth-order
/// stencil [-J(w+2h) + 8J(w+h) - 8J(w-h) + J(w-2h)] / 12h. Input rows are
/// left at zero (their weights never influence the output).
///
/// Extended precision and the fourth-order stencil keep the oracle's own
/// error near 1e-15, well below gradients at the 1e-8 comparison floor.
inline Eigen::MatrixXd finite_difference_gradient(const TeacherForcedEpisode& ep, double h = 1e-4) {
    using detail::Wide;
    const int n = ep.topology.cells();
    detail::WideMatrix W = ep.weights.cast<Wide>();
    const auto reference = detail::oracle_outputs(ep.topology, W, ep.inputs);

    auto cost_at = [&](int j, int i, Wide offset) {
        detail::WideMatrix Wp = W;
        Wp(j, i) += offset;
        const auto outs = detail::oracle_outputs(ep.topology, Wp, ep.inputs);
        Wide acc = 0.0L;
        for (std::size_t k = 0; k < outs.size(); ++k) {
            const Wide err = static_cast<Wide>(ep.errors[k]) + outs[k] - reference[k];
            acc += err * err;
        }
        return 0.5L * acc;
    };

    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
    const Wide step = h;
    for (int j = kInputCells; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const Wide diff = -cost_at(j, i, 2 * step) + 8 * cost_at(j, i, step) - 8 * cost_at(j, i, -step) +
                              cost_at(j, i, -2 * step);
            G(j, i) = static_cast<double>(diff / (12.0L * step));
        }
    }
    return G;
}

inline constexpr double kGradientFloor = 1e-8;

/// max |g - g_fd| / max(|g|, |g_fd|) over elements where |g| > floor.
inline double max_relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric,
                                 double floor = kGradientFloor) {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < analytic.rows(); ++j) {
        for (Eigen::Index i = 0; i < analytic.cols(); ++i) {
            const double g = analytic(j, i);
            const double f = numeric(j, i);
            if (std::abs(g) <= floor && std::abs(f) <= floor) continue;
            const double rel = std::abs(g - f) / std::max(std::abs(g), std::abs(f));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

struct GradcheckResult {
    int p = 0;
    std::uint64_t seed = 0;
    double max_rel_error = 0.0;
};

inline GradcheckResult gradcheck(const NetTopology& topo, int steps, std::uint64_t seed,
                                 const BpttOptions& opts = {}) {
    const auto ep = random_teacher_forced_episode(topo, steps, seed);
    return {topo.p, seed, max_relative_error(bptt_gradient(ep, opts), finite_difference_gradient(ep))};
}

}  // namespace immunepd
