#pragma once

// Latent response analysis: the decode-then-encode response function h = f o g,
// its residual field u(z) = h(z) - z, single-coordinate interventions, the
// latent and conditioned response matrices, the causal disentanglement score,
// the first-order expansion diagnostic and a linear responsibility baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latresp/csv.hpp"
#include "latresp/data.hpp"
#include "latresp/errors.hpp"
#include "latresp/nn.hpp"
#include "latresp/parallel.hpp"
#include "latresp/rng.hpp"
#include "latresp/vae.hpp"

namespace latresp {

/// h(z): encoder mean of the decoded point.
inline std::vector<double> latent_response(const VaeModel& model, std::span<const double> z) {
    return encode(model, decode(model, z)).mu;
}

/// u(z) = h(z) - z.
inline std::vector<double> response_field(const VaeModel& model, std::span<const double> z) {
    auto u = latent_response(model, z);
    for (std::size_t j = 0; j < u.size(); ++j) u[j] -= z[j];
    return u;
}

inline double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

/// z with coordinate j replaced by `value`.
inline std::vector<double> intervene(std::span<const double> z, std::size_t j, double value) {
    if (j >= z.size())
        throw DimensionError("intervene: dimension " + std::to_string(j) + " out of range [0, " +
                             std::to_string(z.size()) + ")");
    std::vector<double> out(z.begin(), z.end());
    out[j] = value;
    return out;
}

enum class InterventionSource { Prior, AggregatePosterior };

inline std::string_view to_string(InterventionSource s) {
    return s == InterventionSource::Prior ? "prior" : "aggregate-posterior";
}

inline InterventionSource intervention_source_from_string(std::string_view s) {
    if (s == "prior") return InterventionSource::Prior;
    if (s == "aggregate-posterior" || s == "posterior") return InterventionSource::AggregatePosterior;
    throw DataError("unknown intervention source '" + std::string(s) + "'");
}

struct ResponseMatrix {
    Matrix entries;  // d x d, entry (j, k): response of dim k to interventions on dim j
    std::size_t sample_count = 0;
    InterventionSource source = InterventionSource::Prior;
    std::uint64_t seed = 0;
};

struct McOptions {
    std::size_t samples = 10000;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

namespace detail {

/// One sample from q(Z | x): mu + sigma * noise.
inline std::vector<double> posterior_draw(const VaeModel& model, std::span<const double> x, Rng& rng) {
    const auto post = encode(model, x);
    return reparameterize(post, rng.normal_vector(model.latent_dim));
}

}  // namespace detail

/// Monte-Carlo estimate of M_jk = sqrt(1/2 E|h_k(z with z_j <- z~_j) - h_k(z)|^2), z ~ N(0, I).
/// `data` is required for the aggregate-posterior source.
inline ResponseMatrix response_matrix(const VaeModel& model, const McOptions& opt,
                                      InterventionSource source = InterventionSource::Prior,
                                      const Dataset* data = nullptr) {
    if (opt.samples == 0) throw DataError("response_matrix: need at least one sample");
    if (source == InterventionSource::AggregatePosterior && (data == nullptr || data->size() == 0))
        throw DataError("response_matrix: aggregate-posterior source needs a dataset");
    const std::size_t d = model.latent_dim;
    std::vector<double> contrib(opt.samples * d * d, 0.0);
    parallel_for(opt.samples, opt.workers, [&](std::size_t i) {
        Rng rng = Rng::at(opt.seed, "mc", i);
        const auto z = rng.normal_vector(d);
        const auto hz = latent_response(model, z);
        std::vector<double> tilde;
        if (source == InterventionSource::Prior) {
            tilde = rng.normal_vector(d);
        } else {
            tilde.resize(d);
            for (std::size_t j = 0; j < d; ++j) {
                const std::size_t row = rng.index(data->size());
                tilde[j] = detail::posterior_draw(model, data->observations.row(row), rng)[j];
            }
        }
        double* out = contrib.data() + i * d * d;
        for (std::size_t j = 0; j < d; ++j) {
            const auto hd = latent_response(model, intervene(z, j, tilde[j]));
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = hd[k] - hz[k];
                out[j * d + k] = 0.5 * diff * diff;
            }
        }
    });
    ResponseMatrix m;
    m.entries = Matrix(d, d);
    for (std::size_t i = 0; i < opt.samples; ++i)
        for (std::size_t c = 0; c < d * d; ++c) m.entries.data[c] += contrib[i * d * d + c];
    for (auto& v : m.entries.data) v = std::sqrt(v / static_cast<double>(opt.samples));
    m.sample_count = opt.samples;
    m.source = source;
    m.seed = opt.seed;
    return m;
}

// ---------------------------------------------------------------- conditioned matrix

/// Rows grouped by their labels on every factor except `free_factor`.
/// Continuous factors (cardinality 0) are binned into `continuous_bins` equal-width bins.
struct Strata {
    std::size_t free_factor = 0;
    std::vector<std::vector<double>> keys;
    std::vector<std::vector<std::size_t>> rows;
};

inline std::vector<double> stratum_key(const Dataset& ds, std::size_t row, std::size_t free_factor,
                                       std::size_t continuous_bins, const std::vector<std::pair<double, double>>& ranges) {
    std::vector<double> key;
    for (std::size_t c = 0; c < ds.factor_count(); ++c) {
        if (c == free_factor) continue;
        double y = ds.labels(row, c);
        const bool continuous = ds.cardinalities.empty() || ds.cardinalities[c] == 0;
        if (continuous && continuous_bins > 0 && !ds.cardinalities.empty()) {
            const auto [lo, hi] = ranges[c];
            const double width = (hi - lo) / static_cast<double>(continuous_bins);
            y = width > 0 ? std::min(std::floor((y - lo) / width), static_cast<double>(continuous_bins - 1)) : 0.0;
        }
        key.push_back(y);
    }
    return key;
}

inline Strata stratify(const Dataset& ds, std::size_t free_factor, std::size_t continuous_bins = 10) {
    if (!ds.has_labels()) throw DataError("conditioned analysis needs a labeled dataset");
    if (free_factor >= ds.factor_count()) throw DimensionError("stratify: factor index out of range");
    std::vector<std::pair<double, double>> ranges(ds.factor_count(), {0.0, 0.0});
    for (std::size_t c = 0; c < ds.factor_count(); ++c) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t r = 0; r < ds.size(); ++r) {
            lo = std::min(lo, ds.labels(r, c));
            hi = std::max(hi, ds.labels(r, c));
        }
        ranges[c] = {lo, hi};
    }
    std::map<std::vector<double>, std::vector<std::size_t>> groups;
    for (std::size_t r = 0; r < ds.size(); ++r)
        groups[stratum_key(ds, r, free_factor, continuous_bins, ranges)].push_back(r);
    Strata s;
    s.free_factor = free_factor;
    for (auto& [k, rows] : groups) {
        s.keys.push_back(k);
        s.rows.push_back(std::move(rows));
    }
    return s;
}

/// How encoded observations become latent points in the conditioned estimator.
enum class LatentSampling { Mean, Draw };

inline std::string_view to_string(LatentSampling s) { return s == LatentSampling::Mean ? "mean" : "draw"; }

inline LatentSampling latent_sampling_from_string(std::string_view s) {
    if (s == "mean") return LatentSampling::Mean;
    if (s == "draw") return LatentSampling::Draw;
    throw DataError("unknown latent sampling '" + std::string(s) + "'");
}

struct ConditionedResponseMatrix {
    Matrix entries;                       // d* x d
    std::vector<std::size_t> cell_counts; // d* x d, row-major
    std::vector<std::size_t> strata_counts;
    std::uint64_t seed = 0;
    LatentSampling sampling = LatentSampling::Mean;
};

/// Monte-Carlo estimate of M*_cj = sqrt(1/2 E|h_j(z with z_j <- z~_j) - h_j(z)|^2), where for
/// each draw a stratum of Y_{-c} is chosen, and both the base point z and the intervention
/// value z~_j come from observations in that stratum (Y_c free), either as encoder means
/// or as posterior draws. Draws are split evenly across strata.
inline ConditionedResponseMatrix conditioned_response_matrix(const VaeModel& model, const Dataset& ds,
                                                             const McOptions& opt, std::size_t continuous_bins = 10,
                                                             LatentSampling sampling = LatentSampling::Mean) {
    if (!ds.has_labels()) throw DataError("conditioned response matrix needs a labeled dataset");
    if (opt.samples == 0) throw DataError("conditioned_response_matrix: need at least one sample");
    require_dim(ds.obs_dim(), model.obs_dim, "dataset observations");
    const std::size_t d = model.latent_dim;
    const std::size_t nf = ds.factor_count();
    ConditionedResponseMatrix out;
    out.entries = Matrix(nf, d);
    out.cell_counts.assign(nf * d, opt.samples);
    out.seed = opt.seed;
    out.sampling = sampling;
    auto embed = [&](std::size_t row, Rng& rng) {
        const auto x = ds.observations.row(row);
        return sampling == LatentSampling::Mean ? encode(model, x).mu : detail::posterior_draw(model, x, rng);
    };

    for (std::size_t c = 0; c < nf; ++c) {
        const Strata strata = stratify(ds, c, continuous_bins);
        for (std::size_t s = 0; s < strata.rows.size(); ++s) {
            if (strata.rows[s].empty()) {
                FactorAssignment a(nf);
                for (std::size_t k = 0, p = 0; k < nf; ++k)
                    if (k != c) a[k] = strata.keys[s][p++];
                throw DataError("empty stratum for factor " + std::to_string(c) + " at " + describe(a));
            }
        }
        out.strata_counts.push_back(strata.rows.size());
        std::vector<double> contrib(opt.samples * d, 0.0);
        parallel_for(opt.samples, opt.workers, [&](std::size_t i) {
            Rng rng = Rng::at(mix_key(opt.seed, c), "cond-mc", i);
            const auto& rows = strata.rows[i % strata.rows.size()];
            const std::size_t base_row = rows[rng.index(rows.size())];
            const auto z = embed(base_row, rng);
            const auto hz = latent_response(model, z);
            for (std::size_t j = 0; j < d; ++j) {
                const std::size_t row = rows[rng.index(rows.size())];
                const double tilde = embed(row, rng)[j];
                const auto hd = latent_response(model, intervene(z, j, tilde));
                const double diff = hd[j] - hz[j];
                contrib[i * d + j] = 0.5 * diff * diff;
            }
        });
        for (std::size_t j = 0; j < d; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < opt.samples; ++i) acc += contrib[i * d + j];
            out.entries(c, j) = std::sqrt(acc / static_cast<double>(opt.samples));
        }
    }
    return out;
}

// ---------------------------------------------------------------- CDS

struct CdsScore {
    double raw = 0.0;       // in [1/d*, 1]
    double rescaled = 0.0;  // (raw - 1/d*) / (1 - 1/d*), in [0, 1]
    std::size_t retained_columns = 0;
};

/// Column-max concentration of a factor x latent matrix. All-zero columns are skipped.
inline CdsScore cds(const Matrix& m) {
    if (m.rows < 2) throw DataError("cds: need at least two factors");
    double num = 0.0, den = 0.0;
    CdsScore s;
    for (std::size_t j = 0; j < m.cols; ++j) {
        double col_max = 0.0, col_sum = 0.0;
        for (std::size_t c = 0; c < m.rows; ++c) {
            const double v = m(c, j);
            if (v < 0.0 || !std::isfinite(v)) throw DataError("cds: entries must be finite and nonnegative");
            col_max = std::max(col_max, v);
            col_sum += v;
        }
        if (col_sum == 0.0) continue;
        num += col_max;
        den += col_sum;
        ++s.retained_columns;
    }
    if (den == 0.0) throw DataError("cds: all-zero matrix has no defined score");
    s.raw = num / den;
    const double floor = 1.0 / static_cast<double>(m.rows);
    s.rescaled = std::clamp((s.raw - floor) / (1.0 - floor), 0.0, 1.0);
    return s;
}

inline CdsScore cds(const ConditionedResponseMatrix& m) { return cds(m.entries); }

// ---------------------------------------------------------------- response distribution

enum class NoiseMode { Encoder, None };

struct ResponseSamples {
    std::vector<double> base;
    std::vector<std::vector<double>> draws;
    std::vector<double> mean;
    std::vector<double> variance;  // unbiased, per dimension (0 when n = 1)
};

/// Draws z^ ~ q(Z^ | g(z)) with the encoder's own scale (or none).
inline ResponseSamples sample_response_distribution(const VaeModel& model, std::span<const double> z,
                                                    std::size_t n, NoiseMode mode, std::uint64_t seed) {
    require_dim(z.size(), model.latent_dim, "response distribution base point");
    if (n == 0) throw DataError("sample_response_distribution: n must be >= 1");
    const std::size_t d = model.latent_dim;
    const Posterior post = encode(model, decode(model, z));
    ResponseSamples out;
    out.base.assign(z.begin(), z.end());
    out.draws.reserve(n);
    out.mean.assign(d, 0.0);
    out.variance.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = Rng::at(seed, "response", i);
        std::vector<double> draw = post.mu;
        if (mode == NoiseMode::Encoder) draw = reparameterize(post, rng.normal_vector(d));
        for (std::size_t j = 0; j < d; ++j) out.mean[j] += draw[j];
        out.draws.push_back(std::move(draw));
    }
    for (auto& m : out.mean) m /= static_cast<double>(n);
    if (n > 1) {
        for (const auto& dr : out.draws)
            for (std::size_t j = 0; j < d; ++j) out.variance[j] += (dr[j] - out.mean[j]) * (dr[j] - out.mean[j]);
        for (auto& v : out.variance) v /= static_cast<double>(n - 1);
    }
    return out;
}

// ---------------------------------------------------------------- expansion diagnostic

/// First-order decomposition of s^ = h(s + u) around an observation x:
///   s^ ~ s + J_f(x) (g(s) - x) + J_f(x) J_g(s) u.
struct ExpansionReport {
    std::vector<double> s;
    std::vector<double> s_hat;
    std::vector<double> term1;
    std::vector<double> term2;
    std::vector<double> term3;
    std::vector<double> residual;
    double residual_norm = 0.0;
    std::vector<double> epsilon;  // g(s + u) - x
    double epsilon_norm = 0.0;
};

inline ExpansionReport expansion_diagnostic(const VaeModel& model, std::span<const double> x,
                                            std::span<const double> u, double h = 1e-4) {
    require_dim(x.size(), model.obs_dim, "expansion observation");
    require_dim(u.size(), model.latent_dim, "expansion noise");
    ExpansionReport r;
    r.s = encode(model, x).mu;
    std::vector<double> z(r.s);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] += u[j];
    const auto x_hat = decode(model, z);
    r.s_hat = encode(model, x_hat).mu;

    const Matrix jf = numerical_jacobian([&](std::span<const double> p) { return encode(model, p).mu; }, x, h);
    const Matrix jg = numerical_jacobian([&](std::span<const double> p) { return decode(model, p); },
                                         std::span<const double>(r.s), h);
    auto gs = decode(model, r.s);
    for (std::size_t i = 0; i < gs.size(); ++i) gs[i] -= x[i];
    r.term1 = r.s;
    r.term2 = matvec(jf, gs);
    r.term3 = matvec(jf, matvec(jg, u));
    r.residual.resize(r.s.size());
    for (std::size_t j = 0; j < r.s.size(); ++j) r.residual[j] = r.s_hat[j] - (r.term1[j] + r.term2[j] + r.term3[j]);
    r.residual_norm = norm2(r.residual);
    r.epsilon = x_hat;
    for (std::size_t i = 0; i < x.size(); ++i) r.epsilon[i] -= x[i];
    r.epsilon_norm = norm2(r.epsilon);
    return r;
}

// ---------------------------------------------------------------- responsibility baseline

struct ResponsibilityMatrix {
    Matrix entries;  // d* x d, rows sum to 1 (or 0 for degenerate factors)
    std::vector<std::string> warnings;
    double lambda = 0.0;
};

namespace detail {

/// Coordinate-descent lasso on standardized columns: min 1/(2n)|y - Xw|^2 + lambda |w|_1.
inline std::vector<double> lasso(const Matrix& x, std::span<const double> y, double lambda,
                                 std::size_t max_iter = 2000, double tol = 1e-10) {
    const std::size_t n = x.rows, p = x.cols;
    std::vector<double> w(p, 0.0), resid(y.begin(), y.end()), col_sq(p, 0.0);
    for (std::size_t j = 0; j < p; ++j)
        for (std::size_t i = 0; i < n; ++i) col_sq[j] += x(i, j) * x(i, j) / static_cast<double>(n);
    for (std::size_t it = 0; it < max_iter; ++it) {
        double max_delta = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            if (col_sq[j] == 0.0) continue;
            double rho = 0.0;
            for (std::size_t i = 0; i < n; ++i) rho += x(i, j) * (resid[i] + x(i, j) * w[j]);
            rho /= static_cast<double>(n);
            const double shrunk = std::copysign(std::max(std::abs(rho) - lambda, 0.0), rho) / col_sq[j];
            const double delta = shrunk - w[j];
            if (delta != 0.0) {
                for (std::size_t i = 0; i < n; ++i) resid[i] -= x(i, j) * delta;
                w[j] = shrunk;
                max_delta = std::max(max_delta, std::abs(delta));
            }
        }
        if (max_delta < tol) break;
    }
    return w;
}

inline void standardize_column(std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(v.size()));
    for (double& x : v) x = sd > 1e-12 ? (x - mean) / sd : 0.0;
}

}  // namespace detail

/// Simplified responsibility matrix: for each factor, an L1-regularized linear
/// predictor from standardized encoder means; entry (c, j) is |w_j| normalized
/// over j. Discrete factors are one-hot encoded and |w| summed over classes.
/// This is a linear stand-in for a DCI-style analysis, not a reference implementation.
inline ResponsibilityMatrix responsibility_matrix(const VaeModel& model, const Dataset& ds, double lambda = 0.01) {
    if (!ds.has_labels()) throw DataError("responsibility matrix needs a labeled dataset");
    if (ds.size() < 2) throw DataError("responsibility matrix needs at least two rows");
    require_dim(ds.obs_dim(), model.obs_dim, "dataset observations");
    const std::size_t d = model.latent_dim, n = ds.size();
    Matrix feats(n, d);
    for (std::size_t r = 0; r < n; ++r) {
        const auto mu = encode(model, ds.observations.row(r)).mu;
        std::copy(mu.begin(), mu.end(), feats.row(r).begin());
    }
    for (std::size_t j = 0; j < d; ++j) {
        std::vector<double> col(n);
        for (std::size_t r = 0; r < n; ++r) col[r] = feats(r, j);
        detail::standardize_column(col);
        for (std::size_t r = 0; r < n; ++r) feats(r, j) = col[r];
    }
    ResponsibilityMatrix out;
    out.lambda = lambda;
    out.entries = Matrix(ds.factor_count(), d);
    for (std::size_t c = 0; c < ds.factor_count(); ++c) {
        std::vector<std::vector<double>> targets;
        const std::size_t k = ds.cardinalities.empty() ? 0 : ds.cardinalities[c];
        if (k > 2) {
            for (std::size_t level = 0; level < k; ++level) {
                std::vector<double> t(n);
                for (std::size_t r = 0; r < n; ++r) t[r] = ds.labels(r, c) == static_cast<double>(level) ? 1.0 : 0.0;
                targets.push_back(std::move(t));
            }
        } else {
            std::vector<double> t(n);
            for (std::size_t r = 0; r < n; ++r) t[r] = ds.labels(r, c);
            targets.push_back(std::move(t));
        }
        std::vector<double> importance(d, 0.0);
        bool degenerate = true;
        for (auto& t : targets) {
            const double first = t.front();
            if (std::all_of(t.begin(), t.end(), [&](double v) { return v == first; })) continue;
            degenerate = false;
            detail::standardize_column(t);
            const auto w = detail::lasso(feats, t, lambda);
            for (std::size_t j = 0; j < d; ++j) importance[j] += std::abs(w[j]);
        }
        double total = 0.0;
        for (double v : importance) total += v;
        if (degenerate || total == 0.0) {
            out.warnings.push_back("factor " + std::to_string(c) + " is constant or unpredictable; row set to zero");
            continue;
        }
        for (std::size_t j = 0; j < d; ++j) out.entries(c, j) = importance[j] / total;
    }
    return out;
}

// ---------------------------------------------------------------- export

/// CSV with a header row of column names and a leading name column.
inline void write_matrix_csv(const std::string& path, const Matrix& m, const std::vector<std::string>& row_names,
                             const std::vector<std::string>& col_names, const std::string& corner = "") {
    require_dim(row_names.size(), m.rows, "matrix row names");
    require_dim(col_names.size(), m.cols, "matrix column names");
    auto f = csv::open_out(path);
    f << corner;
    for (const auto& c : col_names) f << ',' << c;
    f << '\n';
    for (std::size_t r = 0; r < m.rows; ++r) {
        f << row_names[r];
        for (std::size_t c = 0; c < m.cols; ++c) f << ',' << csv::format(m(r, c));
        f << '\n';
    }
    if (!f) throw DataError("write failed for '" + path + "'");
}

inline std::vector<std::string> dim_names(std::size_t d, const std::string& prefix = "z") {
    std::vector<std::string> out;
    for (std::size_t j = 0; j < d; ++j) out.push_back(prefix + std::to_string(j));
    return out;
}

}  // namespace latresp
