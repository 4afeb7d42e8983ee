// SPDX-License-Identifier: Apache-2.0
//
// Fully recurrent network that produces the suppressor output
// v_s = f_N(e, e', v').
//
// Cell layout (N = 4 + p cells):
//   [0, 3)       input cells   (e, e', v'), pass-through
//   [3, 3 + p)   hidden cells  bipolar sigmoid (1 - exp(-T s)) / (1 + exp(-T s))
//   N - 1        output cell   linear, a * s
//
// Every non-input cell sees the previous outputs of all cells:
//   s_j(k+1) = sum_i w_ji x_i(k).
// Training is per-episode batch gradient descent; deltas run backwards in
// time from the last step with the immune error E(k) injected at the output
// cell.
#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "immunepd/immune_control.hpp"

namespace immunepd {

inline constexpr int kInputCells = 3;

struct NetTopology {
    int p = 6;       ///< hidden cells
    double T = 1.0;  ///< sigmoid steepness
    double a = 0.01;  ///< output gain

    bool operator==(const NetTopology&) const = default;

    [[nodiscard]] int cells() const { return kInputCells + p + 1; }
    [[nodiscard]] int hidden_begin() const { return kInputCells; }
    [[nodiscard]] int hidden_end() const { return kInputCells + p; }
    [[nodiscard]] int output_index() const { return kInputCells + p; }
};

inline void validate(const NetTopology& topo) {
    if (topo.p < 1) throw std::domain_error("topology: p must be a positive integer");
    if (!(topo.T > 0.0)) throw std::domain_error("topology: T must be > 0");
    if (!(topo.a > 0.0)) throw std::domain_error("topology: a must be > 0");
}

/// W(j, i) is the weight from cell i's output to cell j's net input.
/// Rows of input cells are kept at zero.
using NetWeights = Eigen::MatrixXd;

struct NetInput {
    double e = 0.0;
    double e_dot = 0.0;
    double u_dot = 0.0;
};

struct NetState {
    Eigen::VectorXd x;  ///< cell outputs
    Eigen::VectorXd s;  ///< net inputs that produced x

    static NetState zero(const NetTopology& topo) {
        return {Eigen::VectorXd::Zero(topo.cells()), Eigen::VectorXd::Zero(topo.cells())};
    }
};

inline void check_shape(const NetTopology& topo, const NetWeights& W) {
    const int n = topo.cells();
    if (W.rows() != n || W.cols() != n) {
        std::ostringstream msg;
        msg << "weight matrix is " << W.rows() << "x" << W.cols() << ", topology needs " << n << "x" << n;
        throw std::invalid_argument(msg.str());
    }
}

inline double bipolar_sigmoid(double s, double T) {
    // (1 - e^{-Ts}) / (1 + e^{-Ts}) overflows to inf / inf for large -Ts.
    return std::tanh(T * s / 2.0);
}

inline NetState forward_step(const NetTopology& topo, const NetWeights& W, const NetState& prev,
                             const NetInput& in) {
    check_shape(topo, W);
    if (prev.x.size() != topo.cells()) throw std::invalid_argument("forward_step: state size mismatch");

    NetState next;
    next.s.noalias() = W * prev.x;
    next.s(0) = in.e;
    next.s(1) = in.e_dot;
    next.s(2) = in.u_dot;

    next.x.resize(topo.cells());
    next.x.head<kInputCells>() = next.s.head<kInputCells>();
    for (int j = topo.hidden_begin(); j < topo.hidden_end(); ++j) next.x(j) = bipolar_sigmoid(next.s(j), topo.T);
    const int o = topo.output_index();
    next.x(o) = topo.a * next.s(o);
    return next;
}

inline double suppressor_output(const NetTopology& topo, const NetState& state) {
    return state.x(topo.output_index());
}

/// E(k) = K_D e'(k) + K_P e(k); the same combination as the PD helper.
inline double immune_error(double e, double e_dot, const Gains& g) { return helper_pd(e, e_dot, g); }

/// J = 1/2 sum E(k)^2
inline double cost(std::span<const double> E) {
    if (E.empty()) throw std::invalid_argument("cost: empty error series");
    double acc = 0.0;
    for (double v : E) acc += v * v;
    return 0.5 * acc;
}

/// Test hooks for the backward pass.
struct BpttOptions {
    /// Replaces the hidden derivative (T/2)(1 - x^2) with T(1 - x^2).
    bool corrupt_hidden_derivative = false;
};

/// Activation derivatives evaluated from stored outputs.
inline Eigen::VectorXd activation_derivative(const NetTopology& topo, const Eigen::VectorXd& x,
                                             const BpttOptions& opts = {}) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(topo.cells());
    const double scale = opts.corrupt_hidden_derivative ? topo.T : 0.5 * topo.T;
    for (int j = topo.hidden_begin(); j < topo.hidden_end(); ++j) d(j) = scale * (1.0 - x(j) * x(j));
    d(topo.output_index()) = topo.a;
    return d;
}

/// Backward delta recursion.
///
/// `states` holds x(0) .. x(n) recorded by the forward pass, `E` holds
/// E(1) .. E(n). Returns delta(1) .. delta(n), index k-1 for delta(k):
///
///   delta(n) = F(n) b(n)
///   delta(k) = F(k) [b(k) + W^T delta(k+1)]
///
/// where b(k) carries E(k) at the output cell and F(k) is the diagonal of
/// activation derivatives at step k (zero for input cells).
inline std::vector<Eigen::VectorXd> bptt_deltas(const NetTopology& topo, const NetWeights& W,
                                                std::span<const NetState> states, std::span<const double> E,
                                                const BpttOptions& opts = {}) {
    check_shape(topo, W);
    if (E.empty()) throw std::invalid_argument("bptt_deltas: empty error series");
    if (states.size() != E.size() + 1) {
        std::ostringstream msg;
        msg << "bptt_deltas: " << states.size() << " states for " << E.size()
            << " error samples (need one more state than errors)";
        throw std::invalid_argument(msg.str());
    }

    const std::size_t n = E.size();
    const int o = topo.output_index();
    std::vector<Eigen::VectorXd> deltas(n);

    Eigen::VectorXd carry = Eigen::VectorXd::Zero(topo.cells());
    for (std::size_t k = n; k >= 1; --k) {
        carry(o) += E[k - 1];
        Eigen::VectorXd delta = activation_derivative(topo, states[k].x, opts).cwiseProduct(carry);
        carry.noalias() = W.transpose() * delta;
        deltas[k - 1] = std::move(delta);
    }
    return deltas;
}

/// G(j, i) = sum_k delta_j(k+1) x_i(k)
inline Eigen::MatrixXd weight_gradient(std::span<const Eigen::VectorXd> deltas, std::span<const NetState> states) {
    if (deltas.empty()) throw std::invalid_argument("weight_gradient: empty delta sequence");
    if (states.size() != deltas.size() + 1) throw std::invalid_argument("weight_gradient: sequences are misaligned");

    const Eigen::Index n = deltas.front().size();
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t k = 0; k < deltas.size(); ++k) {
        if (deltas[k].size() != n || states[k].x.size() != n)
            throw std::invalid_argument("weight_gradient: inconsistent cell counts");
        G.noalias() += deltas[k] * states[k].x.transpose();
    }
    G.topRows<kInputCells>().setZero();
    return G;
}

inline NetWeights apply_update(const NetWeights& W, const Eigen::MatrixXd& G, double eta) {
    if (!(eta >= 0.0)) throw std::invalid_argument("apply_update: learning rate must be >= 0");
    if (G.rows() != W.rows() || G.cols() != W.cols()) throw std::invalid_argument("apply_update: shape mismatch");
    NetWeights next = W - eta * G;
    next.topRows<kInputCells>().setZero();
    return next;
}

/// Uniform in [-scale, scale] on non-input rows, deterministic for a seed.
inline NetWeights init_weights(const NetTopology& topo, double scale, std::uint64_t seed) {
    validate(topo);
    if (!(scale >= 0.0)) throw std::invalid_argument("init_weights: scale must be >= 0");
    std::mt19937_64 rng(seed);
    // 53 random mantissa bits; avoids library-dependent distribution code.
    auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

    const int n = topo.cells();
    NetWeights W = NetWeights::Zero(n, n);
    for (int j = kInputCells; j < n; ++j)
        for (int i = 0; i < n; ++i) W(j, i) = scale * (2.0 * unit() - 1.0);
    return W;
}

// Checkpoint: "N p T a" then N rows of N values, round-trip precision.

inline void write_checkpoint(std::ostream& out, const NetTopology& topo, const NetWeights& W) {
    check_shape(topo, W);
    const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
    out << topo.cells() << ' ' << topo.p << ' ' << topo.T << ' ' << topo.a << '\n';
    for (Eigen::Index j = 0; j < W.rows(); ++j) {
        for (Eigen::Index i = 0; i < W.cols(); ++i) out << (i ? " " : "") << W(j, i);
        out << '\n';
    }
    out.precision(old_precision);
}

struct SuppressorNet {
    NetTopology topology;
    NetWeights weights;
};

inline SuppressorNet read_checkpoint(std::istream& in) {
    SuppressorNet cp;
    int n = 0;
    if (!(in >> n >> cp.topology.p >> cp.topology.T >> cp.topology.a))
        throw std::runtime_error("checkpoint: malformed header (expected 'N p T a')");
    validate(cp.topology);
    if (n != cp.topology.cells()) throw std::runtime_error("checkpoint: N does not equal 4 + p");
    cp.weights.resize(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            if (!(in >> cp.weights(j, i))) throw std::runtime_error("checkpoint: truncated weight matrix");
    if (!cp.weights.topRows<kInputCells>().isZero(0.0))
        throw std::runtime_error("checkpoint: input-cell rows must be zero");
    return cp;
}

}  // namespace immunepd
