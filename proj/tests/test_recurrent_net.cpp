// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "immunepd/gradcheck.hpp"
#include "immunepd/recurrent_net.hpp"
#include "support.hpp"

using namespace immunepd;
using immunepd::testing::Draw;

namespace {

NetTopology topology(int p, double T = 1.0, double a = 0.01) {
    NetTopology t;
    t.p = p;
    t.T = T;
    t.a = a;
    return t;
}

NetWeights random_weights(const NetTopology& topo, Draw& draw, double scale) {
    NetWeights W = NetWeights::Zero(topo.cells(), topo.cells());
    for (int j = kInputCells; j < topo.cells(); ++j)
        for (int i = 0; i < topo.cells(); ++i) W(j, i) = draw.uniform(-scale, scale);
    return W;
}

}  // namespace

TEST(Topology, CellLayout) {
    const NetTopology t = topology(3);
    EXPECT_EQ(t.cells(), 7);
    EXPECT_EQ(t.hidden_begin(), 3);
    EXPECT_EQ(t.hidden_end(), 6);
    EXPECT_EQ(t.output_index(), 6);
    EXPECT_THROW(validate(topology(0)), std::domain_error);
}

TEST(ForwardStep, ZeroWeightsSilenceEveryNonInputCell) {
    const NetTopology t = topology(4);
    const NetWeights W = NetWeights::Zero(t.cells(), t.cells());
    Draw draw(31);
    NetState x = NetState::zero(t);
    for (int k = 0; k < 30; ++k) {
        const NetInput in{draw.uniform(-5, 5), draw.uniform(-5, 5), draw.uniform(-5, 5)};
        x = forward_step(t, W, x, in);
        EXPECT_EQ(x.x(0), in.e);
        EXPECT_EQ(x.x(1), in.e_dot);
        EXPECT_EQ(x.x(2), in.u_dot);
        EXPECT_TRUE(x.x.tail(t.p + 1).isZero(0.0));
        EXPECT_EQ(suppressor_output(t, x), 0.0);
    }
}

TEST(ForwardStep, SinglePathThroughHiddenAndOutputCells) {
    const NetTopology t = topology(1, 2.0, 0.5);
    NetWeights W = NetWeights::Zero(5, 5);
    W(3, 0) = 1.0;  // e -> hidden
    W(4, 3) = 1.0;  // hidden -> output

    NetState x = NetState::zero(t);
    EXPECT_EQ(suppressor_output(t, x), 0.0);
    x = forward_step(t, W, x, {1.0, 0.0, 0.0});
    x = forward_step(t, W, x, {0.0, 0.0, 0.0});
    EXPECT_DOUBLE_EQ(x.s(3), 1.0);
    EXPECT_NEAR(x.x(3), 0.7615942, 1e-7);
    EXPECT_NEAR(x.x(3), std::tanh(1.0), 1e-15);
    x = forward_step(t, W, x, {0.0, 0.0, 0.0});
    EXPECT_NEAR(suppressor_output(t, x), 0.3807971, 1e-7);
}

TEST(ForwardStep, LinearOutputCell) {
    const NetTopology t = topology(1, 1.0, 0.5);
    NetWeights W = NetWeights::Zero(5, 5);
    W(4, 0) = 2.0;
    NetState x = forward_step(t, W, NetState::zero(t), {1.0, 0.0, 0.0});
    x = forward_step(t, W, x, {});
    EXPECT_DOUBLE_EQ(x.s(4), 2.0);
    EXPECT_DOUBLE_EQ(suppressor_output(t, x), 1.0);
}

TEST(ForwardStep, HiddenOutputsStayInsideUnitInterval) {
    Draw draw(32);
    for (int trial = 0; trial < 50; ++trial) {
        const NetTopology t = topology(draw.integer(1, 6), draw.uniform(0.1, 3.0), draw.uniform(0.01, 1.0));
        const NetWeights W = random_weights(t, draw, 2.0);
        NetState x = NetState::zero(t);
        for (int k = 0; k < 30; ++k) {
            x = forward_step(t, W, x, {draw.uniform(-10, 10), draw.uniform(-10, 10), draw.uniform(-10, 10)});
            for (int j = t.hidden_begin(); j < t.hidden_end(); ++j) {
                EXPECT_LE(std::abs(x.x(j)), 1.0);
                // tanh only rounds to +-1 once its argument passes about 19.
                if (std::abs(t.T * x.s(j) / 2.0) < 18.0) {
                    EXPECT_LT(std::abs(x.x(j)), 1.0);
                }
            }
        }
    }
}

TEST(ForwardStep, RejectsShapeMismatch) {
    const NetTopology t = topology(2);
    EXPECT_THROW(forward_step(t, NetWeights::Zero(5, 5), NetState::zero(t), {}), std::invalid_argument);
    EXPECT_THROW(forward_step(t, NetWeights::Zero(6, 6), NetState::zero(topology(1)), {}), std::invalid_argument);
}

TEST(BipolarSigmoid, IsHalfAngleTanh) {
    Draw draw(33);
    for (int i = 0; i < 100; ++i) {
        const double s = draw.uniform(-5, 5);
        const double T = draw.uniform(0.1, 4);
        EXPECT_NEAR(bipolar_sigmoid(s, T), std::tanh(T * s / 2.0), 1e-15);
    }
}

TEST(ImmuneError, Examples) {
    const Gains g{100.0, 20.0};
    EXPECT_EQ(immune_error(0.0, 0.0, g), 0.0);
    EXPECT_DOUBLE_EQ(immune_error(0.02, 0.01, g), 2.2);
    Draw draw(34);
    for (int i = 0; i < 50; ++i) {
        const double e = draw.uniform(-1, 1), ed = draw.uniform(-1, 1);
        EXPECT_EQ(immune_error(e, ed, g), helper_pd(e, ed, g));
    }
}

TEST(Cost, Examples) {
    EXPECT_EQ(cost(std::vector<double>{0.0, 0.0, 0.0}), 0.0);
    EXPECT_DOUBLE_EQ(cost(std::vector<double>{1.0, 1.0}), 1.0);
    EXPECT_DOUBLE_EQ(cost(std::vector<double>{2.2}), 2.42);
    EXPECT_THROW(cost(std::vector<double>{}), std::invalid_argument);
}

TEST(BpttDeltas, ZeroErrorGivesZeroDeltas) {
    const NetTopology t = topology(3);
    auto ep = random_teacher_forced_episode(t, 15, 7);
    std::fill(ep.errors.begin(), ep.errors.end(), 0.0);
    const auto states = record_forward(t, ep.weights, ep.inputs);
    for (const auto& d : bptt_deltas(t, ep.weights, states, ep.errors)) EXPECT_TRUE(d.isZero(0.0));
}

TEST(BpttDeltas, SingleStepEpisode) {
    const NetTopology t = topology(3, 1.0, 0.25);
    const auto ep = random_teacher_forced_episode(t, 1, 8);
    const auto states = record_forward(t, ep.weights, ep.inputs);
    const auto deltas = bptt_deltas(t, ep.weights, states, ep.errors);
    ASSERT_EQ(deltas.size(), 1u);
    for (int j = 0; j < t.cells(); ++j)
        EXPECT_EQ(deltas[0](j), j == t.output_index() ? 0.25 * ep.errors[0] : 0.0);
}

TEST(BpttDeltas, RecursionByHand) {
    // Two steps on a 5-cell net, written out with scalar arithmetic.
    const NetTopology t = topology(1, 1.5, 0.3);
    Draw draw(36);
    const NetWeights W = random_weights(t, draw, 0.8);
    const std::vector<NetInput> inputs{{0.4, -0.2, 0.1}, {-0.3, 0.5, 0.2}};
    const std::vector<double> E{0.7, -1.1};
    const auto states = record_forward(t, W, inputs);
    const auto deltas = bptt_deltas(t, W, states, E);

    const double h1 = states[1].x(3);
    const double d2_out = 0.3 * E[1];
    const double d2_hid = 0.0;
    const double carry_out = E[0] + W(4, 4) * d2_out + W(3, 4) * d2_hid;
    const double carry_hid = W(4, 3) * d2_out + W(3, 3) * d2_hid;
    EXPECT_NEAR(deltas[1](4), d2_out, 1e-15);
    EXPECT_EQ(deltas[1](3), 0.0);
    EXPECT_NEAR(deltas[0](4), 0.3 * carry_out, 1e-15);
    EXPECT_NEAR(deltas[0](3), 0.75 * (1.0 - h1 * h1) * carry_hid, 1e-15);
    for (int j = 0; j < kInputCells; ++j) EXPECT_EQ(deltas[0](j), 0.0);
}

TEST(BpttDeltas, LengthMismatchThrows) {
    const NetTopology t = topology(2);
    const auto ep = random_teacher_forced_episode(t, 5, 9);
    const auto states = record_forward(t, ep.weights, ep.inputs);
    std::vector<double> E(ep.errors);
    E.pop_back();
    EXPECT_THROW(bptt_deltas(t, ep.weights, states, E), std::invalid_argument);
}

TEST(WeightGradient, Examples) {
    const NetTopology t = topology(1);
    std::vector<Eigen::VectorXd> deltas{Eigen::VectorXd::Zero(5)};
    std::vector<NetState> states(2, NetState::zero(t));
    states[0].x(1) = 3.0;
    EXPECT_TRUE(weight_gradient(deltas, states).isZero(0.0));

    deltas[0](4) = 2.0;
    const Eigen::MatrixXd G = weight_gradient(deltas, states);
    EXPECT_EQ(G(4, 1), 6.0);
    EXPECT_EQ(G.cwiseAbs().sum(), 6.0);
}

TEST(WeightGradient, InputRowsAreZero) {
    const auto ep = random_teacher_forced_episode(topology(4), 12, 10);
    const Eigen::MatrixXd G = bptt_gradient(ep);
    EXPECT_TRUE(G.topRows(kInputCells).isZero(0.0));
    EXPECT_FALSE(G.bottomRows(5).isZero(0.0));
}

TEST(WeightGradient, MisalignedSequencesThrow) {
    std::vector<Eigen::VectorXd> deltas(2, Eigen::VectorXd::Zero(5));
    std::vector<NetState> states(2, NetState::zero(topology(1)));
    EXPECT_THROW(weight_gradient(deltas, states), std::invalid_argument);
}

TEST(ApplyUpdate, Examples) {
    const NetTopology t = topology(1);
    Draw draw(37);
    const NetWeights W = random_weights(t, draw, 1.0);
    Eigen::MatrixXd G = Eigen::MatrixXd::Random(5, 5);
    EXPECT_EQ(apply_update(W, G, 0.0), W);
    EXPECT_EQ(apply_update(W, Eigen::MatrixXd::Zero(5, 5), 0.7), W);

    G.setZero();
    G(4, 1) = 6.0;
    EXPECT_DOUBLE_EQ(apply_update(NetWeights::Zero(5, 5), G, 0.1)(4, 1), -0.6);
    EXPECT_THROW(apply_update(W, G, -0.1), std::invalid_argument);
}

TEST(ApplyUpdate, InputRowsStayZeroThroughManyUpdates) {
    const NetTopology t = topology(3);
    NetWeights W = init_weights(t, 0.3, 5);
    Draw draw(38);
    for (int k = 0; k < 200; ++k) {
        Eigen::MatrixXd G(t.cells(), t.cells());
        for (int j = 0; j < t.cells(); ++j)
            for (int i = 0; i < t.cells(); ++i) G(j, i) = draw.uniform(-1, 1);
        W = apply_update(W, G, draw.uniform(0, 0.1));
        ASSERT_TRUE(W.topRows(kInputCells).isZero(0.0));
    }
}

TEST(InitWeights, DeterministicShapeAndRange) {
    const NetTopology t = topology(3);
    const NetWeights A = init_weights(t, 0.2, 42);
    EXPECT_EQ(A, init_weights(t, 0.2, 42));
    EXPECT_NE(A, init_weights(t, 0.2, 43));
    EXPECT_EQ(A.rows(), 7);
    EXPECT_EQ(A.cols(), 7);
    EXPECT_TRUE(A.topRows(3).isZero(0.0));
    EXPECT_LE(A.cwiseAbs().maxCoeff(), 0.2);
    for (int j = 3; j < 7; ++j) EXPECT_FALSE(A.row(j).isZero(0.0));
    EXPECT_TRUE(init_weights(t, 0.0, 42).isZero(0.0));
}

TEST(Checkpoint, RoundTripIsExact) {
    const NetTopology t = topology(5, 1.3, 0.07);
    const NetWeights W = init_weights(t, 0.9, 3);
    std::stringstream buf;
    write_checkpoint(buf, t, W);
    std::string header;
    std::getline(buf, header);
    EXPECT_EQ(header.substr(0, 4), "9 5 ");
    buf.seekg(0);
    const SuppressorNet back = read_checkpoint(buf);
    EXPECT_EQ(back.topology, t);
    EXPECT_EQ(back.weights, W);
}

TEST(Checkpoint, MalformedInputsAreRejected) {
    std::istringstream bad_header("x y z");
    EXPECT_THROW(read_checkpoint(bad_header), std::runtime_error);
    std::istringstream wrong_n("6 3 1 0.01\n");
    EXPECT_THROW(read_checkpoint(wrong_n), std::runtime_error);
    std::istringstream truncated("5 1 1 0.01\n0 0 0 0 0\n");
    EXPECT_THROW(read_checkpoint(truncated), std::runtime_error);

    std::ostringstream full;
    NetWeights W = NetWeights::Zero(5, 5);
    W(0, 2) = 1.0;
    const NetTopology t = topology(1);
    write_checkpoint(full, t, W);
    std::istringstream input_row(full.str());
    EXPECT_THROW(read_checkpoint(input_row), std::runtime_error);
}

// Gradient against finite differences on random teacher-forced episodes.
TEST(Gradcheck, RandomTopologiesAndLengths) {
    Draw draw(39);
    for (int trial = 0; trial < 24; ++trial) {
        const int p = std::vector<int>{1, 3, 5}[static_cast<std::size_t>(trial % 3)];
        const int steps = draw.integer(5, 30);
        const NetTopology t = topology(p, draw.uniform(0.5, 2.0), draw.uniform(0.05, 1.0));
        const auto seed = static_cast<std::uint64_t>(draw.integer(0, 1 << 30));
        const auto ep = random_teacher_forced_episode(t, steps, seed);
        const double err = max_relative_error(bptt_gradient(ep), finite_difference_gradient(ep));
        EXPECT_LT(err, 1e-5) << "p=" << p << " steps=" << steps << " seed=" << seed;
    }
}

TEST(Gradcheck, DefaultTopologyAndSingleHiddenCell) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        EXPECT_LT(gradcheck(NetTopology{}, 20, seed).max_rel_error, 1e-5);
        EXPECT_LT(gradcheck(topology(1), 20, seed).max_rel_error, 1e-5);
    }
}

TEST(Gradcheck, CorruptedDerivativeIsCaught) {
    EXPECT_GT(gradcheck(topology(3), 20, 0, BpttOptions{true}).max_rel_error, 1e-2);
}

TEST(Gradcheck, FiniteDifferencesOfAQuadraticAreExact) {
    // Sanity of the oracle itself: one step through a linear output cell
    // gives J(w) = (E + a w x - a w0 x)^2 / 2, whose derivative is known.
    const NetTopology t = topology(1, 1.0, 0.5);
    TeacherForcedEpisode ep;
    ep.topology = t;
    ep.weights = NetWeights::Zero(5, 5);
    ep.weights(4, 0) = 0.3;
    ep.inputs = {{0.8, 0.0, 0.0}, {0.0, 0.0, 0.0}};
    ep.errors = {0.0, 1.7};
    const Eigen::MatrixXd G = finite_difference_gradient(ep);
    EXPECT_NEAR(G(4, 0), 1.7 * 0.5 * 0.8, 1e-12);
}

TEST(Training, TeacherForcedUpdatesAreBitReproducible) {
    auto run = [] {
        auto ep = random_teacher_forced_episode(topology(4), 25, 77);
        for (int epoch = 0; epoch < 20; ++epoch) ep.weights = apply_update(ep.weights, bptt_gradient(ep), 1e-2);
        return ep.weights;
    };
    const NetWeights a = run();
    const NetWeights b = run();
    EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())), 0);
    EXPECT_TRUE(a.topRows(kInputCells).isZero(0.0));
}
