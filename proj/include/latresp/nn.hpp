#pragma once

// Minimal dense feed-forward networks with exact reverse-mode gradients and Adam.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "latresp/errors.hpp"
#include "latresp/rng.hpp"

namespace latresp {

/// Row-major dense matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

inline std::vector<double> matvec(const Matrix& m, std::span<const double> x) {
    require_dim(x.size(), m.cols, "matvec");
    std::vector<double> y(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* w = m.data.data() + r * m.cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) acc += w[c] * x[c];
        y[r] = acc;
    }
    return y;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw DimensionError("matmul: inner dimensions differ");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
        }
    return out;
}

inline Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
    return out;
}

enum class Activation { Elu, Sigmoid, Identity };

inline std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::Elu: return "elu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Identity: return "identity";
    }
    return "identity";
}

inline Activation activation_from_string(std::string_view s) {
    if (s == "elu") return Activation::Elu;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "identity") return Activation::Identity;
    throw DataError("unknown activation '" + std::string(s) + "'");
}

/// ELU with alpha = 1.
inline double elu(double x) noexcept { return x > 0.0 ? x : std::expm1(x); }

inline double activate(Activation a, double x) noexcept {
    switch (a) {
        case Activation::Elu: return elu(x);
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Activation::Identity: return x;
    }
    return x;
}

/// Derivative expressed through the pre-activation `x`.
inline double activate_derivative(Activation a, double x) noexcept {
    switch (a) {
        case Activation::Elu: return x > 0.0 ? 1.0 : std::exp(x);
        case Activation::Sigmoid: {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 - s);
        }
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}

struct DenseLayer {
    Matrix weight;  // out x in
    std::vector<double> bias;
    Activation activation = Activation::Identity;

    std::size_t in_dim() const noexcept { return weight.cols; }
    std::size_t out_dim() const noexcept { return weight.rows; }

    bool operator==(const DenseLayer&) const = default;
};

struct Mlp {
    std::vector<DenseLayer> layers;

    std::size_t in_dim() const noexcept { return layers.empty() ? 0 : layers.front().in_dim(); }
    std::size_t out_dim() const noexcept { return layers.empty() ? 0 : layers.back().out_dim(); }

    std::size_t parameter_count() const noexcept {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.weight.data.size() + l.bias.size();
        return n;
    }

    /// Throws DimensionError if consecutive layers do not chain.
    void validate() const {
        for (std::size_t k = 0; k < layers.size(); ++k) {
            const auto& l = layers[k];
            if (l.bias.size() != l.out_dim())
                throw DimensionError("layer " + std::to_string(k) + ": bias length != weight rows");
            if (l.weight.data.size() != l.weight.rows * l.weight.cols)
                throw DimensionError("layer " + std::to_string(k) + ": weight storage size mismatch");
            if (k + 1 < layers.size() && l.out_dim() != layers[k + 1].in_dim())
                throw DimensionError("layer " + std::to_string(k) + " output does not match next input");
        }
    }

    bool operator==(const Mlp&) const = default;
};

/// Glorot-uniform weights, zero biases.
inline Mlp make_mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                    Activation hidden_act, Activation out_act, Rng& rng) {
    Mlp net;
    std::size_t prev = in;
    auto add = [&](std::size_t width, Activation act) {
        DenseLayer l;
        l.weight = Matrix(width, prev);
        const double limit = std::sqrt(6.0 / static_cast<double>(prev + width));
        for (auto& w : l.weight.data) w = rng.uniform(-limit, limit);
        l.bias.assign(width, 0.0);
        l.activation = act;
        net.layers.push_back(std::move(l));
        prev = width;
    };
    for (auto h : hidden) add(h, hidden_act);
    add(out, out_act);
    return net;
}

/// Activation record of one forward pass.
struct Tape {
    const Mlp* owner = nullptr;
    std::vector<std::vector<double>> inputs;       // input to layer k
    std::vector<std::vector<double>> preactivations;
};

struct ForwardResult {
    std::vector<double> output;
    Tape tape;
};

/// Forward pass without recording.
inline std::vector<double> predict(const Mlp& net, std::span<const double> x) {
    require_dim(x.size(), net.in_dim(), "mlp input");
    std::vector<double> cur(x.begin(), x.end());
    std::vector<double> next;
    for (const auto& l : net.layers) {
        next.assign(l.out_dim(), 0.0);
        for (std::size_t r = 0; r < l.out_dim(); ++r) {
            const double* w = l.weight.data.data() + r * l.weight.cols;
            double acc = l.bias[r];
            for (std::size_t c = 0; c < l.weight.cols; ++c) acc += w[c] * cur[c];
            next[r] = activate(l.activation, acc);
        }
        cur.swap(next);
    }
    return cur;
}

inline ForwardResult forward(const Mlp& net, std::span<const double> x) {
    require_dim(x.size(), net.in_dim(), "mlp input");
    ForwardResult res;
    res.tape.owner = &net;
    res.tape.inputs.reserve(net.layers.size());
    res.tape.preactivations.reserve(net.layers.size());
    std::vector<double> cur(x.begin(), x.end());
    for (const auto& l : net.layers) {
        std::vector<double> pre(l.out_dim());
        for (std::size_t r = 0; r < l.out_dim(); ++r) {
            const double* w = l.weight.data.data() + r * l.weight.cols;
            double acc = l.bias[r];
            for (std::size_t c = 0; c < l.weight.cols; ++c) acc += w[c] * cur[c];
            pre[r] = acc;
        }
        std::vector<double> post(pre.size());
        for (std::size_t r = 0; r < pre.size(); ++r) post[r] = activate(l.activation, pre[r]);
        res.tape.inputs.push_back(std::move(cur));
        res.tape.preactivations.push_back(std::move(pre));
        cur = std::move(post);
    }
    res.output = std::move(cur);
    return res;
}

struct MlpGradients {
    std::vector<Matrix> weight;
    std::vector<std::vector<double>> bias;
    std::vector<double> input;

    static MlpGradients zeros_like(const Mlp& net) {
        MlpGradients g;
        for (const auto& l : net.layers) {
            g.weight.emplace_back(l.out_dim(), l.in_dim());
            g.bias.emplace_back(l.out_dim(), 0.0);
        }
        g.input.assign(net.in_dim(), 0.0);
        return g;
    }

    /// Appends all parameter gradients in the same order as gather_parameters.
    void gather(std::vector<double>& out) const {
        for (std::size_t k = 0; k < weight.size(); ++k) {
            out.insert(out.end(), weight[k].data.begin(), weight[k].data.end());
            out.insert(out.end(), bias[k].begin(), bias[k].end());
        }
    }
};

/// Accumulates parameter gradients into `acc`; returns dL/dx.
inline std::vector<double> backward_accumulate(const Mlp& net, const Tape& tape,
                                               std::span<const double> dy, MlpGradients& acc) {
    if (tape.owner != &net || tape.inputs.size() != net.layers.size() ||
        tape.preactivations.size() != net.layers.size())
        throw DimensionError("backward: tape was not produced by this network");
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        if (tape.inputs[k].size() != net.layers[k].in_dim() ||
            tape.preactivations[k].size() != net.layers[k].out_dim())
            throw DimensionError("backward: stale tape (layer shapes changed)");
    }
    require_dim(dy.size(), net.out_dim(), "backward dL/dy");
    if (acc.weight.size() != net.layers.size()) acc = MlpGradients::zeros_like(net);

    std::vector<double> grad(dy.begin(), dy.end());
    for (std::size_t k = net.layers.size(); k-- > 0;) {
        const auto& l = net.layers[k];
        const auto& pre = tape.preactivations[k];
        const auto& in = tape.inputs[k];
        for (std::size_t r = 0; r < grad.size(); ++r) grad[r] *= activate_derivative(l.activation, pre[r]);

        auto& gw = acc.weight[k];
        auto& gb = acc.bias[k];
        std::vector<double> gin(l.in_dim(), 0.0);
        for (std::size_t r = 0; r < l.out_dim(); ++r) {
            const double g = grad[r];
            gb[r] += g;
            if (g == 0.0) continue;
            double* gwr = gw.data.data() + r * gw.cols;
            const double* w = l.weight.data.data() + r * l.weight.cols;
            for (std::size_t c = 0; c < l.in_dim(); ++c) {
                gwr[c] += g * in[c];
                gin[c] += g * w[c];
            }
        }
        grad.swap(gin);
    }
    return grad;
}

inline MlpGradients backward(const Mlp& net, const Tape& tape, std::span<const double> dy) {
    MlpGradients g = MlpGradients::zeros_like(net);
    g.input = backward_accumulate(net, tape, dy, g);
    return g;
}

inline void gather_parameters(const Mlp& net, std::vector<double>& out) {
    for (const auto& l : net.layers) {
        out.insert(out.end(), l.weight.data.begin(), l.weight.data.end());
        out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
}

/// Inverse of gather_parameters; returns the number of values consumed.
inline std::size_t scatter_parameters(Mlp& net, std::span<const double> flat) {
    std::size_t pos = 0;
    for (auto& l : net.layers) {
        const std::size_t nw = l.weight.data.size();
        const std::size_t nb = l.bias.size();
        if (pos + nw + nb > flat.size()) throw DimensionError("scatter_parameters: buffer too short");
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), nw, l.weight.data.begin());
        pos += nw;
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), nb, l.bias.begin());
        pos += nb;
    }
    return pos;
}

struct AdamState {
    std::uint64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    bool operator==(const AdamState&) const = default;
};

/// One Adam update in place. Moment buffers are sized on first use.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& s) {
    require_dim(grads.size(), params.size(), "adam_step gradients");
    if (s.m.empty() && s.v.empty()) {
        s.m.assign(params.size(), 0.0);
        s.v.assign(params.size(), 0.0);
    }
    require_dim(s.m.size(), params.size(), "adam_step first moment");
    require_dim(s.v.size(), params.size(), "adam_step second moment");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i]))
            throw NumericalError("adam_step: non-finite gradient at parameter " + std::to_string(i) +
                                 " (step " + std::to_string(s.step + 1) + ")");
    }
    ++s.step;
    const double t = static_cast<double>(s.step);
    const double c1 = 1.0 - std::pow(s.beta1, t);
    const double c2 = 1.0 - std::pow(s.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
        s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
        const double mhat = s.m[i] / c1;
        const double vhat = s.v[i] / c2;
        params[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
}

/// Central-difference Jacobian; entry (i, j) = d f_i / d x_j.
template <typename F>
Matrix numerical_jacobian(F&& f, std::span<const double> x, double h = 1e-4) {
    if (!(h > 0.0)) throw std::invalid_argument("numerical_jacobian: step must be positive");
    std::vector<double> xp(x.begin(), x.end());
    Matrix jac;
    for (std::size_t j = 0; j < x.size(); ++j) {
        xp[j] = x[j] + h;
        const std::vector<double> fp = f(std::span<const double>(xp));
        xp[j] = x[j] - h;
        const std::vector<double> fm = f(std::span<const double>(xp));
        xp[j] = x[j];
        if (j == 0) jac = Matrix(fp.size(), x.size());
        if (fp.size() != jac.rows || fm.size() != jac.rows)
            throw DimensionError("numerical_jacobian: output length changed between evaluations");
        for (std::size_t i = 0; i < jac.rows; ++i) {
            if (!std::isfinite(fp[i]) || !std::isfinite(fm[i]))
                throw NumericalError("numerical_jacobian: non-finite output in column " + std::to_string(j));
            jac(i, j) = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    return jac;
}

}  // namespace latresp
