#pragma once

// Gaussian VAE: encoder mean / log-sigma heads, deterministic decoder,
// beta-weighted ELBO with exact gradients, and a seeded training loop.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "latresp/errors.hpp"
#include "latresp/nn.hpp"
#include "latresp/rng.hpp"

namespace latresp {

inline constexpr double kLogSigmaMin = -6.0;
inline constexpr double kLogSigmaMax = 3.0;

inline double clamp_log_sigma(double ls) noexcept { return std::clamp(ls, kLogSigmaMin, kLogSigmaMax); }

/// Per-dimension affine standardization applied in front of the encoder and
/// inverted after the decoder. Empty vectors mean identity.
struct Normalizer {
    std::vector<double> mean;
    std::vector<double> scale;

    bool empty() const noexcept { return mean.empty(); }

    std::vector<double> forward(std::span<const double> x) const {
        std::vector<double> out(x.begin(), x.end());
        if (empty()) return out;
        require_dim(x.size(), mean.size(), "normalizer input");
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - mean[i]) / scale[i];
        return out;
    }

    std::vector<double> inverse(std::span<const double> x) const {
        std::vector<double> out(x.begin(), x.end());
        if (empty()) return out;
        require_dim(x.size(), mean.size(), "normalizer output");
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * scale[i] + mean[i];
        return out;
    }

    bool operator==(const Normalizer&) const = default;
};

/// Zero-mean / unit-variance statistics per column. Constant columns keep scale 1.
inline Normalizer fit_normalizer(const Matrix& obs) {
    Normalizer n;
    n.mean.assign(obs.cols, 0.0);
    n.scale.assign(obs.cols, 1.0);
    if (obs.rows == 0) return n;
    const double count = static_cast<double>(obs.rows);
    for (std::size_t r = 0; r < obs.rows; ++r)
        for (std::size_t c = 0; c < obs.cols; ++c) n.mean[c] += obs(r, c);
    for (auto& m : n.mean) m /= count;
    std::vector<double> var(obs.cols, 0.0);
    for (std::size_t r = 0; r < obs.rows; ++r)
        for (std::size_t c = 0; c < obs.cols; ++c) {
            const double dlt = obs(r, c) - n.mean[c];
            var[c] += dlt * dlt;
        }
    for (std::size_t c = 0; c < obs.cols; ++c) {
        const double sd = std::sqrt(var[c] / count);
        n.scale[c] = sd > 1e-12 ? sd : 1.0;
    }
    return n;
}

struct VaeModel {
    Mlp encoder;  // obs_dim -> 2 * latent_dim (mu, log sigma)
    Mlp decoder;  // latent_dim -> obs_dim
    std::size_t latent_dim = 0;
    std::size_t obs_dim = 0;
    double beta = 1.0;
    std::uint64_t seed = 0;
    Normalizer normalizer;

    void validate() const {
        encoder.validate();
        decoder.validate();
        if (encoder.in_dim() != obs_dim) throw DimensionError("encoder input != obs_dim");
        if (encoder.out_dim() != 2 * latent_dim) throw DimensionError("encoder output != 2 * latent_dim");
        if (decoder.in_dim() != latent_dim) throw DimensionError("decoder input != latent_dim");
        if (decoder.out_dim() != obs_dim) throw DimensionError("decoder output != obs_dim");
        if (!normalizer.empty() &&
            (normalizer.mean.size() != obs_dim || normalizer.scale.size() != obs_dim))
            throw DimensionError("normalizer size != obs_dim");
        if (!(beta >= 0.0)) throw DataError("beta must be >= 0");
    }

    bool operator==(const VaeModel&) const = default;
};

struct Posterior {
    std::vector<double> mu;
    std::vector<double> log_sigma;

    double sigma(std::size_t j) const { return std::exp(clamp_log_sigma(log_sigma[j])); }
};

struct TrainConfig {
    std::size_t steps = 5000;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    double beta = 0.05;
    std::uint64_t seed = 0;
    std::size_t latent_dim = 2;
    std::vector<std::size_t> hidden{32, 32, 32, 32};
    double beta1 = 0.9;
    double beta2 = 0.999;

    static TrainConfig helix_preset() {
        TrainConfig c;
        c.batch_size = 256;
        return c;
    }
    static TrainConfig factor_preset() {
        TrainConfig c;
        c.steps = 3000;
        c.beta = 1.0;
        c.latent_dim = 8;
        c.hidden = {32, 32};
        return c;
    }
};

/// Fresh model with Glorot weights drawn from the "init" stream of `cfg.seed`.
inline VaeModel make_vae(std::size_t obs_dim, const TrainConfig& cfg, Normalizer normalizer = {}) {
    if (cfg.latent_dim == 0 || obs_dim == 0) throw DimensionError("make_vae: zero dimension");
    Rng enc_rng = Rng::at(cfg.seed, "init", 0);
    Rng dec_rng = Rng::at(cfg.seed, "init", 1);
    VaeModel m;
    m.encoder = make_mlp(obs_dim, cfg.hidden, 2 * cfg.latent_dim, Activation::Elu, Activation::Identity, enc_rng);
    m.decoder = make_mlp(cfg.latent_dim, cfg.hidden, obs_dim, Activation::Elu, Activation::Identity, dec_rng);
    m.latent_dim = cfg.latent_dim;
    m.obs_dim = obs_dim;
    m.beta = cfg.beta;
    m.seed = cfg.seed;
    m.normalizer = std::move(normalizer);
    m.validate();
    return m;
}

/// Single-layer linear encoder/decoder pair:
///   mu = enc_map * x + enc_bias, log sigma = log_sigma (constant),
///   x_hat = dec_map * z + dec_bias.
inline VaeModel make_linear_vae(const Matrix& enc_map, std::vector<double> enc_bias, const Matrix& dec_map,
                                std::vector<double> dec_bias, double log_sigma = 0.0) {
    const std::size_t d = enc_map.rows;
    const std::size_t obs = enc_map.cols;
    if (dec_map.rows != obs || dec_map.cols != d) throw DimensionError("make_linear_vae: decoder shape");
    if (enc_bias.empty()) enc_bias.assign(d, 0.0);
    if (dec_bias.empty()) dec_bias.assign(obs, 0.0);
    require_dim(enc_bias.size(), d, "encoder bias");
    require_dim(dec_bias.size(), obs, "decoder bias");

    DenseLayer enc;
    enc.weight = Matrix(2 * d, obs);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < obs; ++c) enc.weight(r, c) = enc_map(r, c);
    enc.bias.assign(2 * d, log_sigma);
    std::copy(enc_bias.begin(), enc_bias.end(), enc.bias.begin());
    enc.activation = Activation::Identity;

    DenseLayer dec{dec_map, std::move(dec_bias), Activation::Identity};

    VaeModel m;
    m.encoder.layers.push_back(std::move(enc));
    m.decoder.layers.push_back(std::move(dec));
    m.latent_dim = d;
    m.obs_dim = obs;
    m.validate();
    return m;
}

inline VaeModel make_identity_pair(std::size_t d) {
    return make_linear_vae(Matrix::identity(d), {}, Matrix::identity(d), {});
}

inline Posterior encode(const VaeModel& model, std::span<const double> x) {
    require_dim(x.size(), model.obs_dim, "encode input");
    const auto out = predict(model.encoder, model.normalizer.forward(x));
    const auto d = static_cast<std::ptrdiff_t>(model.latent_dim);
    return Posterior{{out.begin(), out.begin() + d}, {out.begin() + d, out.end()}};
}

inline std::vector<double> decode(const VaeModel& model, std::span<const double> z) {
    require_dim(z.size(), model.latent_dim, "decode input");
    return model.normalizer.inverse(predict(model.decoder, z));
}

/// z = mu + sigma * noise.
inline std::vector<double> reparameterize(const Posterior& post, std::span<const double> noise) {
    require_dim(noise.size(), post.mu.size(), "reparameterize noise");
    std::vector<double> z(post.mu.size());
    for (std::size_t j = 0; j < z.size(); ++j) z[j] = post.mu[j] + post.sigma(j) * noise[j];
    return z;
}

/// KL(N(mu, sigma^2) || N(0, I)) in closed form.
inline double kl_divergence(const Posterior& post) {
    double kl = 0.0;
    for (std::size_t j = 0; j < post.mu.size(); ++j) {
        const double ls = clamp_log_sigma(post.log_sigma[j]);
        const double s2 = std::exp(2.0 * ls);
        kl += post.mu[j] * post.mu[j] + s2 - 1.0 - 2.0 * ls;
    }
    return 0.5 * kl;
}

/// Flat parameter vector: encoder parameters followed by decoder parameters.
inline std::vector<double> parameters(const VaeModel& m) {
    std::vector<double> p;
    p.reserve(m.encoder.parameter_count() + m.decoder.parameter_count());
    gather_parameters(m.encoder, p);
    gather_parameters(m.decoder, p);
    return p;
}

inline void set_parameters(VaeModel& m, std::span<const double> flat) {
    require_dim(flat.size(), m.encoder.parameter_count() + m.decoder.parameter_count(), "set_parameters");
    const std::size_t used = scatter_parameters(m.encoder, flat);
    scatter_parameters(m.decoder, flat.subspan(used));
}

struct ElboResult {
    double loss = 0.0;            // mean over batch of recon + beta * kl
    double reconstruction = 0.0;  // mean of 0.5 * ||x - x_hat||^2 (standardized space)
    double kl = 0.0;              // mean KL
    std::vector<double> gradient; // d loss / d parameters(), same layout
};

/// Negative beta-ELBO over the rows `batch` of `obs`, with one noise row per sample.
/// Reconstruction is measured in the model's standardized observation space.
inline ElboResult elbo_loss(const VaeModel& model, const Matrix& obs, std::span<const std::size_t> batch,
                            const Matrix& noise) {
    if (batch.empty()) throw DataError("elbo_loss: empty batch");
    require_dim(obs.cols, model.obs_dim, "elbo_loss observations");
    require_dim(noise.rows, batch.size(), "elbo_loss noise rows");
    require_dim(noise.cols, model.latent_dim, "elbo_loss noise cols");

    const std::size_t d = model.latent_dim;
    MlpGradients genc = MlpGradients::zeros_like(model.encoder);
    MlpGradients gdec = MlpGradients::zeros_like(model.decoder);
    ElboResult res;
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    std::vector<double> dz(d), denc(2 * d), dxhat(model.obs_dim);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const std::size_t row = batch[b];
        if (row >= obs.rows) throw DimensionError("elbo_loss: batch index out of range");
        const auto xn = model.normalizer.forward(obs.row(row));
        auto enc = forward(model.encoder, xn);
        std::vector<double> z(d), sigma(d);
        for (std::size_t j = 0; j < d; ++j) {
            sigma[j] = std::exp(clamp_log_sigma(enc.output[d + j]));
            z[j] = enc.output[j] + sigma[j] * noise(b, j);
        }
        auto dec = forward(model.decoder, z);

        double rec = 0.0;
        for (std::size_t i = 0; i < model.obs_dim; ++i) {
            const double diff = dec.output[i] - xn[i];
            rec += diff * diff;
            dxhat[i] = diff * inv_n;
        }
        rec *= 0.5;
        double kl = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double ls = clamp_log_sigma(enc.output[d + j]);
            kl += enc.output[j] * enc.output[j] + sigma[j] * sigma[j] - 1.0 - 2.0 * ls;
        }
        kl *= 0.5;
        res.reconstruction += rec * inv_n;
        res.kl += kl * inv_n;

        const auto dz_dec = backward_accumulate(model.decoder, dec.tape, dxhat, gdec);
        for (std::size_t j = 0; j < d; ++j) {
            const double mu = enc.output[j];
            const double raw_ls = enc.output[d + j];
            denc[j] = dz_dec[j] + model.beta * mu * inv_n;
            const bool clamped = raw_ls < kLogSigmaMin || raw_ls > kLogSigmaMax;
            denc[d + j] = clamped ? 0.0
                                  : dz_dec[j] * sigma[j] * noise(b, j) +
                                        model.beta * (sigma[j] * sigma[j] - 1.0) * inv_n;
        }
        backward_accumulate(model.encoder, enc.tape, denc, genc);
    }
    res.loss = res.reconstruction + model.beta * res.kl;
    if (!std::isfinite(res.loss)) throw NumericalError("elbo_loss: non-finite loss");
    res.gradient.reserve(model.encoder.parameter_count() + model.decoder.parameter_count());
    genc.gather(res.gradient);
    gdec.gather(res.gradient);
    return res;
}

/// Raised when training produces a non-finite loss; carries the trace up to that point.
class TrainingDiverged : public NumericalError {
  public:
    TrainingDiverged(std::size_t step, std::vector<double> trace)
        : NumericalError("training diverged at step " + std::to_string(step)), step_(step),
          trace_(std::move(trace)) {}

    std::size_t step() const noexcept { return step_; }
    const std::vector<double>& trace() const noexcept { return trace_; }

  private:
    std::size_t step_;
    std::vector<double> trace_;
};

struct TrainResult {
    VaeModel model;
    std::vector<double> loss_trace;
    AdamState optimizer;
};

/// Batch indices and noise for a given global step; a pure function of (seed, step).
inline void draw_batch(std::uint64_t seed, std::uint64_t step, std::size_t n_rows, std::size_t batch_size,
                       std::size_t latent_dim, std::vector<std::size_t>& batch, Matrix& noise) {
    Rng rng = Rng::at(seed, "train", step);
    batch.resize(batch_size);
    if (batch_size == n_rows) {
        for (std::size_t i = 0; i < n_rows; ++i) batch[i] = i;
    } else {
        // partial Fisher-Yates over an index permutation
        std::vector<std::size_t> perm(n_rows);
        for (std::size_t i = 0; i < n_rows; ++i) perm[i] = i;
        for (std::size_t i = 0; i < batch_size; ++i) {
            const std::size_t j = i + rng.index(n_rows - i);
            std::swap(perm[i], perm[j]);
            batch[i] = perm[i];
        }
    }
    noise = Matrix(batch_size, latent_dim);
    for (auto& v : noise.data) v = rng.normal();
}

/// Continues training from `optimizer` (pass a default AdamState for a fresh run).
inline TrainResult train(VaeModel model, const Matrix& obs, const TrainConfig& cfg, AdamState optimizer = {}) {
    model.validate();
    require_dim(obs.cols, model.obs_dim, "train observations");
    TrainResult res;
    if (cfg.steps == 0) {
        res.model = std::move(model);
        res.optimizer = std::move(optimizer);
        return res;
    }
    if (obs.rows == 0) throw DataError("train: empty dataset");
    if (cfg.batch_size == 0 || cfg.batch_size > obs.rows)
        throw DataError("train: batch_size must be in [1, N]");
    if (optimizer.step == 0) {
        optimizer.lr = cfg.lr;
        optimizer.beta1 = cfg.beta1;
        optimizer.beta2 = cfg.beta2;
    }

    auto params = parameters(model);
    std::vector<std::size_t> batch;
    Matrix noise;
    res.loss_trace.reserve(cfg.steps);
    for (std::size_t s = 0; s < cfg.steps; ++s) {
        const std::uint64_t global_step = optimizer.step;
        draw_batch(cfg.seed, global_step, obs.rows, cfg.batch_size, model.latent_dim, batch, noise);
        ElboResult r;
        try {
            r = elbo_loss(model, obs, batch, noise);
            adam_step(params, r.gradient, optimizer);
        } catch (const NumericalError&) {
            throw TrainingDiverged(global_step, std::move(res.loss_trace));
        }
        set_parameters(model, params);
        res.loss_trace.push_back(r.loss);
    }
    res.model = std::move(model);
    res.optimizer = std::move(optimizer);
    return res;
}

/// Mean over rows and dimensions of (decode(encode(x).mu) - x)^2, in data units.
inline double reconstruction_mse(const VaeModel& model, const Matrix& obs) {
    if (obs.rows == 0) return 0.0;
    double acc = 0.0;
    for (std::size_t r = 0; r < obs.rows; ++r) {
        const auto xhat = decode(model, encode(model, obs.row(r)).mu);
        for (std::size_t c = 0; c < obs.cols; ++c) {
            const double diff = xhat[c] - obs(r, c);
            acc += diff * diff;
        }
    }
    return acc / static_cast<double>(obs.rows * obs.cols);
}

}  // namespace latresp
