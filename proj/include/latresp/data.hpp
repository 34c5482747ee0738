#pragma once

// Synthetic datasets with known ground-truth factors and their CSV format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latresp/csv.hpp"
#include "latresp/errors.hpp"
#include "latresp/nn.hpp"
#include "latresp/rng.hpp"

namespace latresp {

/// Observations plus optional factor labels. A cardinality of 0 marks a
/// continuous factor.
struct Dataset {
    Matrix observations;  // N x D
    Matrix labels;        // N x d*, or 0 x 0 when unlabeled
    std::vector<std::size_t> cardinalities;

    std::size_t size() const noexcept { return observations.rows; }
    std::size_t obs_dim() const noexcept { return observations.cols; }
    std::size_t factor_count() const noexcept { return labels.cols; }
    bool has_labels() const noexcept { return labels.cols > 0; }

    void validate() const {
        if (has_labels() && labels.rows != observations.rows)
            throw DataError("labels have " + std::to_string(labels.rows) + " rows, observations " +
                            std::to_string(observations.rows));
        if (!cardinalities.empty()) {
            if (cardinalities.size() != labels.cols) throw DataError("cardinality count != factor count");
            for (std::size_t r = 0; r < labels.rows; ++r)
                for (std::size_t c = 0; c < labels.cols; ++c) {
                    const std::size_t k = cardinalities[c];
                    if (k == 0) continue;
                    const double y = labels(r, c);
                    if (y < 0 || y >= static_cast<double>(k) || y != std::floor(y))
                        throw DataError("label (" + std::to_string(r) + ", " + std::to_string(c) +
                                        ") outside cardinality " + std::to_string(k));
                }
        }
    }

    bool operator==(const Dataset&) const = default;
};

// ---------------------------------------------------------------- helix

struct HelixConfig {
    double a1 = 1.0;
    double a2 = 1.0;
    double a3 = 1.0;
    double omega = 1.0;
    double sigma = 0.1;
    std::size_t n = 1024;
    std::uint64_t seed = 0;
};

/// Noise-free point on strand `strand` (0 or 1) at position t.
inline std::vector<double> helix_point(const HelixConfig& cfg, double t, int strand) {
    const double phase = std::numbers::pi * (cfg.omega * t + strand);
    return {cfg.a1 * std::cos(phase), cfg.a2 * std::sin(phase), cfg.a3 * t};
}

/// Double helix in R^3; labels are (t, strand).
inline Dataset gen_helix(const HelixConfig& cfg) {
    if (cfg.n == 0) throw DataError("gen_helix: n must be positive");
    if (!(cfg.sigma >= 0.0)) throw DataError("gen_helix: sigma must be >= 0");
    Dataset ds;
    ds.observations = Matrix(cfg.n, 3);
    ds.labels = Matrix(cfg.n, 2);
    ds.cardinalities = {0, 2};
    for (std::size_t i = 0; i < cfg.n; ++i) {
        Rng rng = Rng::at(cfg.seed, "data", i);
        const double t = rng.uniform(-1.0, 1.0);
        const int strand = rng.uniform() < 0.5 ? 1 : 0;
        auto x = helix_point(cfg, t, strand);
        for (std::size_t c = 0; c < 3; ++c) {
            const double eps = rng.normal();
            ds.observations(i, c) = x[c] + cfg.sigma * eps;
        }
        ds.labels(i, 0) = t;
        ds.labels(i, 1) = strand;
    }
    return ds;
}

/// Euclidean distance from `x` to the nearest point of either noise-free strand.
inline double helix_distance(const HelixConfig& cfg, std::span<const double> x) {
    require_dim(x.size(), 3, "helix_distance");
    auto dist2 = [&](double t, int strand) {
        const auto p = helix_point(cfg, t, strand);
        double s = 0.0;
        for (std::size_t c = 0; c < 3; ++c) s += (p[c] - x[c]) * (p[c] - x[c]);
        return s;
    };
    double best = std::numeric_limits<double>::infinity();
    for (int strand = 0; strand < 2; ++strand) {
        constexpr int kCoarse = 400;
        double best_t = -1.0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int k = 0; k <= kCoarse; ++k) {
            const double t = -1.0 + 2.0 * k / kCoarse;
            const double dd = dist2(t, strand);
            if (dd < best_d) {
                best_d = dd;
                best_t = t;
            }
        }
        // golden-section refinement around the coarse minimum
        double lo = std::max(-1.0, best_t - 2.0 / kCoarse);
        double hi = std::min(1.0, best_t + 2.0 / kCoarse);
        const double g = (std::sqrt(5.0) - 1.0) / 2.0;
        for (int it = 0; it < 60; ++it) {
            const double m1 = hi - g * (hi - lo);
            const double m2 = lo + g * (hi - lo);
            if (dist2(m1, strand) < dist2(m2, strand)) hi = m2; else lo = m1;
        }
        best = std::min({best, best_d, dist2(0.5 * (lo + hi), strand)});
    }
    return std::sqrt(best);
}

// ---------------------------------------------------------------- factors

struct FactorConfig {
    std::vector<std::size_t> cardinalities{6, 6, 6};
    std::size_t obs_dim = 16;
    std::size_t code_dim = 1;
    std::size_t hidden_width = 16;  // 0 selects a purely linear mixing map
    std::uint64_t embed_seed = 0;
    double sigma = 0.0;
    bool ordinal = true;  // sort each factor's levels along the first code coordinate
};

/// The fixed random generative process behind gen_factors.
struct FactorProcess {
    std::vector<Matrix> codes;  // per factor: cardinality x code_dim
    Matrix w1;                  // hidden x (d* * code_dim), or D x (d* * code_dim) when linear
    std::vector<double> b1;
    Matrix w2;                  // D x hidden (empty when linear)
    std::size_t code_dim = 0;

    std::vector<double> concat_codes(std::span<const std::size_t> levels) const {
        std::vector<double> c;
        c.reserve(codes.size() * code_dim);
        for (std::size_t f = 0; f < codes.size(); ++f) {
            const auto r = codes[f].row(levels[f]);
            c.insert(c.end(), r.begin(), r.end());
        }
        return c;
    }

    std::vector<double> observe(std::span<const std::size_t> levels) const {
        require_dim(levels.size(), codes.size(), "factor tuple");
        for (std::size_t f = 0; f < levels.size(); ++f)
            if (levels[f] >= codes[f].rows) throw DimensionError("factor level out of range");
        const auto c = concat_codes(levels);
        auto h = matvec(w1, c);
        if (w2.rows == 0) return h;
        for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::tanh(h[i] + b1[i]);
        return matvec(w2, h);
    }
};

inline FactorProcess make_factor_process(const FactorConfig& cfg) {
    if (cfg.cardinalities.size() < 2) throw DataError("factor dataset needs at least 2 factors");
    for (auto k : cfg.cardinalities)
        if (k < 2) throw DataError("every factor cardinality must be >= 2");
    if (cfg.obs_dim == 0 || cfg.code_dim == 0) throw DataError("factor dataset: zero dimension");
    FactorProcess p;
    p.code_dim = cfg.code_dim;
    for (std::size_t f = 0; f < cfg.cardinalities.size(); ++f) {
        Rng rng = Rng::at(cfg.embed_seed, "codes", f);
        Matrix m(cfg.cardinalities[f], cfg.code_dim);
        for (auto& v : m.data) v = rng.normal();
        if (cfg.ordinal) {
            std::vector<std::size_t> order(m.rows);
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return m(a, 0) < m(b, 0); });
            Matrix sorted(m.rows, m.cols);
            for (std::size_t i = 0; i < order.size(); ++i)
                std::copy_n(m.row(order[i]).begin(), m.cols, sorted.row(i).begin());
            m = std::move(sorted);
        }
        p.codes.push_back(std::move(m));
    }
    const std::size_t in = cfg.cardinalities.size() * cfg.code_dim;
    Rng rng = Rng::at(cfg.embed_seed, "mixing", 0);
    const std::size_t first_out = cfg.hidden_width == 0 ? cfg.obs_dim : cfg.hidden_width;
    p.w1 = Matrix(first_out, in);
    for (auto& v : p.w1.data) v = rng.normal() / std::sqrt(static_cast<double>(in));
    if (cfg.hidden_width > 0) {
        p.b1.resize(cfg.hidden_width);
        for (auto& v : p.b1) v = 0.5 * rng.normal();
        p.w2 = Matrix(cfg.obs_dim, cfg.hidden_width);
        for (auto& v : p.w2.data) v = rng.normal() / std::sqrt(static_cast<double>(cfg.hidden_width));
    }
    return p;
}

/// Every factor combination once, last factor varying fastest.
inline Dataset gen_factors(const FactorConfig& cfg) {
    const FactorProcess proc = make_factor_process(cfg);
    std::size_t n = 1;
    for (auto k : cfg.cardinalities) n *= k;
    const std::size_t nf = cfg.cardinalities.size();
    Dataset ds;
    ds.observations = Matrix(n, cfg.obs_dim);
    ds.labels = Matrix(n, nf);
    ds.cardinalities = cfg.cardinalities;
    std::vector<std::size_t> levels(nf, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t rem = i;
        for (std::size_t f = nf; f-- > 0;) {
            levels[f] = rem % cfg.cardinalities[f];
            rem /= cfg.cardinalities[f];
        }
        auto x = proc.observe(levels);
        if (cfg.sigma > 0.0) {
            Rng rng = Rng::at(cfg.embed_seed, "noise", i);
            for (auto& v : x) v += cfg.sigma * rng.normal();
        }
        std::copy(x.begin(), x.end(), ds.observations.row(i).begin());
        for (std::size_t f = 0; f < nf; ++f) ds.labels(i, f) = static_cast<double>(levels[f]);
    }
    return ds;
}

// ---------------------------------------------------------------- conditioning

using FactorAssignment = std::vector<std::optional<double>>;

inline std::string describe(const FactorAssignment& a) {
    std::string s = "(";
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (i) s += ", ";
        s += a[i] ? csv::format(*a[i]) : std::string("*");
    }
    return s + ")";
}

/// Rows whose labels equal every fixed coordinate of `fixed`.
inline std::vector<std::size_t> matching_rows(const Dataset& ds, const FactorAssignment& fixed) {
    if (!ds.has_labels()) throw DataError("dataset has no labels");
    require_dim(fixed.size(), ds.factor_count(), "factor assignment");
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < ds.size(); ++r) {
        bool ok = true;
        for (std::size_t c = 0; c < fixed.size() && ok; ++c)
            if (fixed[c] && ds.labels(r, c) != *fixed[c]) ok = false;
        if (ok) rows.push_back(r);
    }
    return rows;
}

/// Uniform draws (with replacement) over rows matching `fixed`; returns row indices.
inline std::vector<std::size_t> sample_conditioned(const Dataset& ds, const FactorAssignment& fixed,
                                                   std::size_t count, Rng& rng) {
    const auto rows = matching_rows(ds, fixed);
    if (rows.empty()) throw DataError("no rows match factor assignment " + describe(fixed));
    std::vector<std::size_t> out(count);
    for (auto& o : out) o = rows[rng.index(rows.size())];
    return out;
}

/// Seeded shuffle split into (first, second) with `fraction` of rows in the first part.
inline std::pair<Dataset, Dataset> shuffle_split(const Dataset& ds, double fraction, std::uint64_t seed) {
    std::vector<std::size_t> perm(ds.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    Rng rng = Rng::at(seed, "split");
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    const auto cut = static_cast<std::size_t>(std::round(fraction * static_cast<double>(ds.size())));
    auto take = [&](std::size_t from, std::size_t to) {
        Dataset out;
        out.cardinalities = ds.cardinalities;
        out.observations = Matrix(to - from, ds.obs_dim());
        if (ds.has_labels()) out.labels = Matrix(to - from, ds.factor_count());
        for (std::size_t i = from; i < to; ++i) {
            std::copy_n(ds.observations.row(perm[i]).begin(), ds.obs_dim(), out.observations.row(i - from).begin());
            if (ds.has_labels())
                std::copy_n(ds.labels.row(perm[i]).begin(), ds.factor_count(), out.labels.row(i - from).begin());
        }
        return out;
    };
    return {take(0, cut), take(cut, ds.size())};
}

// ---------------------------------------------------------------- CSV

/// Header `x1..xD[,y1..yK]`; an optional leading `# cardinalities=` comment.
inline void write_csv(const std::string& path, const Dataset& ds) {
    ds.validate();
    auto f = csv::open_out(path);
    if (!ds.cardinalities.empty()) {
        f << "# cardinalities=";
        for (std::size_t i = 0; i < ds.cardinalities.size(); ++i) f << (i ? "," : "") << ds.cardinalities[i];
        f << '\n';
    }
    for (std::size_t c = 0; c < ds.obs_dim(); ++c) f << (c ? "," : "") << 'x' << c + 1;
    for (std::size_t c = 0; c < ds.factor_count(); ++c) f << ",y" << c + 1;
    f << '\n';
    std::vector<double> row;
    for (std::size_t r = 0; r < ds.size(); ++r) {
        row.assign(ds.observations.row(r).begin(), ds.observations.row(r).end());
        if (ds.has_labels()) row.insert(row.end(), ds.labels.row(r).begin(), ds.labels.row(r).end());
        f << csv::join(row) << '\n';
    }
    if (!f) throw DataError("write failed for '" + path + "'");
}

inline Dataset read_csv(const std::string& path) {
    auto f = csv::open_in(path);
    std::string line;
    std::size_t line_no = 0;
    Dataset ds;
    std::size_t nx = 0, ny = 0;
    bool have_header = false;
    std::vector<double> xs, ys;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            constexpr std::string_view key = "# cardinalities=";
            if (std::string_view(line).starts_with(key)) {
                for (auto tok : csv::split(std::string_view(line).substr(key.size()))) {
                    double v;
                    if (!csv::parse(tok, v) || v < 0) throw DataError(path + ":" + std::to_string(line_no) + ": bad cardinality");
                    ds.cardinalities.push_back(static_cast<std::size_t>(v));
                }
            }
            continue;
        }
        const auto cells = csv::split(line);
        if (!have_header) {
            for (auto c : cells) {
                if (c.starts_with("x") && ny == 0) ++nx;
                else if (c.starts_with("y")) ++ny;
                else throw DataError(path + ":" + std::to_string(line_no) + ": unexpected header column '" + std::string(c) + "'");
            }
            if (nx == 0) throw DataError(path + ":" + std::to_string(line_no) + ": header has no x columns");
            have_header = true;
            continue;
        }
        if (cells.size() != nx + ny)
            throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(nx + ny) +
                            " fields, got " + std::to_string(cells.size()));
        for (std::size_t i = 0; i < cells.size(); ++i) {
            double v;
            if (!csv::parse(cells[i], v))
                throw DataError(path + ":" + std::to_string(line_no) + ": malformed number '" + std::string(cells[i]) + "'");
            (i < nx ? xs : ys).push_back(v);
        }
    }
    if (!have_header) throw DataError(path + ": missing header row");
    const std::size_t n = xs.size() / nx;
    ds.observations = Matrix(n, nx);
    ds.observations.data = std::move(xs);
    if (ny > 0) {
        ds.labels = Matrix(n, ny);
        ds.labels.data = std::move(ys);
    }
    ds.validate();
    return ds;
}

}  // namespace latresp
