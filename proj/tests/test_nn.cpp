#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "latresp/nn.hpp"

using namespace latresp;

namespace {

Mlp random_mlp(std::uint64_t seed, std::size_t in, std::vector<std::size_t> hidden, std::size_t out,
               Activation act, Activation out_act) {
    Rng rng = Rng::at(seed, "init", 0);
    Mlp net = make_mlp(in, hidden, out, act, out_act, rng);
    // nonzero biases so the bias gradients are exercised
    for (auto& l : net.layers)
        for (auto& b : l.bias) b = 0.3 * rng.normal();
    return net;
}

double mlp_objective(const Mlp& net, const std::vector<double>& x, const std::vector<double>& c) {
    const auto y = predict(net, x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += c[i] * y[i] + 0.5 * y[i] * y[i];
    return s;
}

}  // namespace

TEST(Matrix, MatvecAndMatmulAgree) {
    Matrix a(2, 3);
    a.data = {1, 2, 3, 4, 5, 6};
    Matrix b(3, 1);
    b.data = {1, 0, -1};
    const auto mv = matvec(a, b.data);
    const auto mm = matmul(a, b);
    EXPECT_EQ(mv, (std::vector<double>{-2, -2}));
    EXPECT_EQ(mm.data, mv);
    EXPECT_EQ(transpose(transpose(a)), a);
    EXPECT_THROW(matvec(a, std::vector<double>{1, 2}), DimensionError);
}

TEST(Activation, EluMatchesExpm1OnNegativeSide) {
    EXPECT_DOUBLE_EQ(elu(-1.0), std::expm1(-1.0));
    EXPECT_DOUBLE_EQ(elu(2.5), 2.5);
    EXPECT_DOUBLE_EQ(elu(0.0), 0.0);
    EXPECT_DOUBLE_EQ(activate(Activation::Sigmoid, 0.0), 0.5);
    EXPECT_DOUBLE_EQ(activate_derivative(Activation::Elu, -1.0), std::exp(-1.0));
    EXPECT_DOUBLE_EQ(activate_derivative(Activation::Sigmoid, 0.0), 0.25);
}

TEST(Activation, NamesRoundTrip) {
    for (auto a : {Activation::Elu, Activation::Sigmoid, Activation::Identity})
        EXPECT_EQ(activation_from_string(to_string(a)), a);
    EXPECT_THROW(activation_from_string("relu6"), std::exception);
}

TEST(Mlp, ForwardMatchesPredict) {
    const Mlp net = random_mlp(3, 4, {8, 8}, 2, Activation::Elu, Activation::Identity);
    const std::vector<double> x{0.1, -0.4, 1.2, 0.0};
    EXPECT_EQ(forward(net, x).output, predict(net, x));
}

TEST(Mlp, WrongInputLengthRejected) {
    const Mlp net = random_mlp(3, 4, {8}, 2, Activation::Elu, Activation::Identity);
    EXPECT_THROW(predict(net, std::vector<double>{1.0}), DimensionError);
}

TEST(Mlp, InconsistentLayersRejected) {
    Mlp net = random_mlp(3, 4, {8}, 2, Activation::Elu, Activation::Identity);
    net.layers[1].weight = Matrix(2, 5);
    EXPECT_THROW(net.validate(), DimensionError);
}

TEST(Backward, GradientsMatchFiniteDifferences) {
    const std::vector<std::pair<Activation, Activation>> acts{
        {Activation::Elu, Activation::Identity}, {Activation::Sigmoid, Activation::Sigmoid},
        {Activation::Elu, Activation::Sigmoid}};
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const auto [act, out_act] = acts[seed % acts.size()];
        Mlp net = random_mlp(seed, 3, {7, 5}, 4, act, out_act);
        Rng rng = Rng::at(seed, "test", 0);
        const auto x = rng.normal_vector(3);
        const auto c = rng.normal_vector(4);

        const auto fr = forward(net, x);
        std::vector<double> dy(4);
        for (std::size_t i = 0; i < 4; ++i) dy[i] = c[i] + fr.output[i];
        const MlpGradients g = backward(net, fr.tape, dy);
        std::vector<double> analytic;
        g.gather(analytic);

        std::vector<double> p;
        gather_parameters(net, p);
        const auto numeric = testutil::fd_gradient(
            [&](const std::vector<double>& q) {
                Mlp m = net;
                scatter_parameters(m, q);
                return mlp_objective(m, x, c);
            },
            p);
        EXPECT_LT(testutil::max_relative_error(analytic, numeric), 1e-5) << "seed " << seed;

        const auto dx = testutil::fd_gradient([&](const std::vector<double>& xx) { return mlp_objective(net, xx, c); },
                                              x);
        EXPECT_LT(testutil::max_relative_error(g.input, dx), 1e-5) << "seed " << seed;
    }
}

TEST(Backward, StaleTapeRejected) {
    Mlp net = random_mlp(1, 3, {4}, 2, Activation::Elu, Activation::Identity);
    const auto fr = forward(net, std::vector<double>{1, 2, 3});
    Mlp other = net;
    EXPECT_THROW(backward(other, fr.tape, std::vector<double>{1, 1}), DimensionError);
    Mlp reshaped = net;
    reshaped.layers[0].weight = Matrix(4, 5);
    Tape moved = fr.tape;
    moved.owner = &reshaped;
    EXPECT_THROW(backward(reshaped, moved, std::vector<double>{1, 1}), DimensionError);
}

TEST(Parameters, GatherScatterRoundTrip) {
    Mlp net = random_mlp(5, 3, {4, 4}, 2, Activation::Elu, Activation::Identity);
    std::vector<double> p;
    gather_parameters(net, p);
    EXPECT_EQ(p.size(), net.parameter_count());
    Mlp copy = net;
    for (auto& v : p) v *= 2.0;
    EXPECT_EQ(scatter_parameters(copy, p), p.size());
    EXPECT_DOUBLE_EQ(copy.layers[0].weight(0, 0), 2.0 * net.layers[0].weight(0, 0));
    EXPECT_THROW(scatter_parameters(copy, std::vector<double>(3)), DimensionError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    // after one step mhat = g and vhat = g^2, so the update is lr * g / (|g| + eps)
    std::vector<double> p{1.0, -2.0, 0.5};
    const std::vector<double> g{0.3, -4.0, 1e-3};
    AdamState s;
    s.lr = 0.01;
    adam_step(p, g, s);
    EXPECT_EQ(s.step, 1u);
    EXPECT_NEAR(p[0], 1.0 - 0.01 * 0.3 / (0.3 + 1e-8), 1e-15);
    EXPECT_NEAR(p[1], -2.0 + 0.01 * 4.0 / (4.0 + 1e-8), 1e-15);
    EXPECT_NEAR(p[2], 0.5 - 0.01 * 1e-3 / (1e-3 + 1e-8), 1e-15);
}

TEST(Adam, ScriptedSequenceMatchesRecurrence) {
    const std::vector<std::vector<double>> grads{{1.0, -0.5}, {0.2, 0.1}, {-0.7, 0.0}, {0.4, 2.0}};
    std::vector<double> p{0.0, 1.0};
    AdamState s;
    s.lr = 0.1;

    // reference recurrence written out independently
    double q[2] = {0.0, 1.0}, m[2] = {0, 0}, v[2] = {0, 0};
    double b1t = 1.0, b2t = 1.0;
    for (const auto& g : grads) {
        adam_step(p, g, s);
        b1t *= 0.9;
        b2t *= 0.999;
        for (int i = 0; i < 2; ++i) {
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
            q[i] -= 0.1 * (m[i] / (1 - b1t)) / (std::sqrt(v[i] / (1 - b2t)) + 1e-8);
        }
        EXPECT_NEAR(p[0], q[0], 1e-12);
        EXPECT_NEAR(p[1], q[1], 1e-12);
    }
    EXPECT_EQ(s.step, grads.size());
}

TEST(Adam, NonFiniteGradientRejected) {
    std::vector<double> p{1.0, 2.0};
    AdamState s;
    EXPECT_THROW(adam_step(p, std::vector<double>{1.0, NAN}, s), NumericalError);
    EXPECT_EQ(s.step, 0u);
    EXPECT_EQ(p, (std::vector<double>{1.0, 2.0}));
}

TEST(Jacobian, LinearMapIsExact) {
    Matrix a(2, 3);
    a.data = {1, -2, 0.5, 3, 0, -1};
    const auto j = numerical_jacobian([&](std::span<const double> x) { return matvec(a, x); },
                                      std::vector<double>{0.3, 0.1, -0.2});
    for (std::size_t i = 0; i < a.data.size(); ++i) EXPECT_NEAR(j.data[i], a.data[i], 1e-10);
}

TEST(Jacobian, NonFiniteOutputNamesColumn) {
    try {
        numerical_jacobian(
            [](std::span<const double> x) { return std::vector<double>{x[0], x[1] > 0.5 ? INFINITY : x[1]}; },
            std::vector<double>{0.0, 0.5});
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("column 1"), std::string::npos);
    }
}
