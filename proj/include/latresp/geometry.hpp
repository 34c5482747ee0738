#pragma once

// Response maps on 2D latent slices: grid evaluation of u(z), finite-difference
// divergence and mean curvature H = -1/2 div(u / |u|), and CSV/PGM export.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "latresp/csv.hpp"
#include "latresp/errors.hpp"
#include "latresp/parallel.hpp"
#include "latresp/response.hpp"
#include "latresp/vae.hpp"

namespace latresp {

/// Square grid over latent coordinates (dim_x, dim_y); other coordinates come from `anchor`.
struct SliceSpec {
    std::size_t dim_x = 0;
    std::size_t dim_y = 1;
    std::vector<double> anchor;  // full latent vector
    double lo = -3.0;
    double hi = 3.0;
    std::size_t resolution = 64;

    void validate(std::size_t latent_dim) const {
        if (dim_x == dim_y) throw DimensionError("slice dims must be distinct");
        if (dim_x >= latent_dim || dim_y >= latent_dim)
            throw DimensionError("slice dims must lie in [0, " + std::to_string(latent_dim) + ")");
        if (!anchor.empty()) require_dim(anchor.size(), latent_dim, "slice anchor");
        if (!(lo < hi)) throw DimensionError("slice range needs lo < hi");
        if (resolution < 3) throw DimensionError("slice resolution must be >= 3");
    }

    double step() const noexcept { return (hi - lo) / static_cast<double>(resolution - 1); }
    double coordinate(std::size_t i) const noexcept { return lo + static_cast<double>(i) * step(); }

    /// Full latent vector of node (ix, iy).
    std::vector<double> node(std::size_t ix, std::size_t iy, std::size_t latent_dim) const {
        std::vector<double> z = anchor.empty() ? std::vector<double>(latent_dim, 0.0) : anchor;
        z[dim_x] = coordinate(ix);
        z[dim_y] = coordinate(iy);
        return z;
    }

    bool contains(double x, double y) const noexcept { return x >= lo && x <= hi && y >= lo && y <= hi; }

    /// Nearest node to slice coordinates (x, y), clamped to the grid.
    std::pair<std::size_t, std::size_t> nearest(double x, double y) const noexcept {
        auto idx = [&](double v) {
            const double f = std::round((v - lo) / step());
            return static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(resolution - 1)));
        };
        return {idx(x), idx(y)};
    }
};

/// u(z) sampled on a slice. Matrices are indexed (iy, ix).
struct ResponseGrid {
    SliceSpec spec;
    std::size_t latent_dim = 0;
    Matrix ux;    // slice component along dim_x
    Matrix uy;    // slice component along dim_y
    Matrix norm;  // full-dimensional |u|
};

enum class MapKind { Divergence, MeanCurvature, Norm };

inline std::string_view to_string(MapKind k) {
    switch (k) {
        case MapKind::Divergence: return "divergence";
        case MapKind::MeanCurvature: return "mean_curvature";
        case MapKind::Norm: return "norm";
    }
    return "norm";
}

struct ScalarMap {
    MapKind kind = MapKind::Norm;
    SliceSpec spec;
    Matrix values;                  // (iy, ix)
    std::vector<std::uint8_t> singular;  // same layout; 1 = flagged

    std::size_t singular_count() const {
        return static_cast<std::size_t>(std::count(singular.begin(), singular.end(), 1));
    }
    std::pair<double, double> extrema() const {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (double v : values.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        return {lo, hi};
    }
};

inline ResponseGrid eval_grid(const VaeModel& model, SliceSpec spec, std::size_t workers = 1) {
    spec.validate(model.latent_dim);
    if (spec.anchor.empty()) spec.anchor.assign(model.latent_dim, 0.0);
    const std::size_t r = spec.resolution;
    ResponseGrid g;
    g.spec = spec;
    g.latent_dim = model.latent_dim;
    g.ux = Matrix(r, r);
    g.uy = Matrix(r, r);
    g.norm = Matrix(r, r);
    parallel_for(r * r, workers, [&](std::size_t idx) {
        const std::size_t iy = idx / r, ix = idx % r;
        const auto u = response_field(model, spec.node(ix, iy, model.latent_dim));
        g.ux(iy, ix) = u[spec.dim_x];
        g.uy(iy, ix) = u[spec.dim_y];
        g.norm(iy, ix) = norm2(u);
    });
    return g;
}

namespace detail {

/// d/dx of f (indexed (iy, ix)) along ix: central inside, one-sided on borders.
inline double diff_x(const Matrix& f, std::size_t iy, std::size_t ix, double h) {
    const std::size_t r = f.cols;
    if (ix == 0) return (f(iy, 1) - f(iy, 0)) / h;
    if (ix == r - 1) return (f(iy, r - 1) - f(iy, r - 2)) / h;
    return (f(iy, ix + 1) - f(iy, ix - 1)) / (2.0 * h);
}

inline double diff_y(const Matrix& f, std::size_t iy, std::size_t ix, double h) {
    const std::size_t r = f.rows;
    if (iy == 0) return (f(1, ix) - f(0, ix)) / h;
    if (iy == r - 1) return (f(r - 1, ix) - f(r - 2, ix)) / h;
    return (f(iy + 1, ix) - f(iy - 1, ix)) / (2.0 * h);
}

inline Matrix planar_divergence(const Matrix& fx, const Matrix& fy, double h) {
    Matrix out(fx.rows, fx.cols);
    for (std::size_t iy = 0; iy < fx.rows; ++iy)
        for (std::size_t ix = 0; ix < fx.cols; ++ix) out(iy, ix) = diff_x(fx, iy, ix, h) + diff_y(fy, iy, ix, h);
    return out;
}

}  // namespace detail

/// Divergence of the slice components of u; off-slice components are ignored.
inline ScalarMap divergence(const ResponseGrid& grid) {
    ScalarMap m;
    m.kind = MapKind::Divergence;
    m.spec = grid.spec;
    m.values = detail::planar_divergence(grid.ux, grid.uy, grid.spec.step());
    m.singular.assign(m.values.data.size(), 0);
    return m;
}

/// H = -1/2 div(u / max(|u|, eps)); nodes with |u| < eps are flagged singular.
inline ScalarMap mean_curvature(const ResponseGrid& grid, double eps = 1e-3) {
    if (!(eps > 0.0)) throw DimensionError("mean_curvature: eps must be positive");
    const std::size_t r = grid.spec.resolution;
    Matrix nx(r, r), ny(r, r);
    ScalarMap m;
    m.kind = MapKind::MeanCurvature;
    m.spec = grid.spec;
    m.singular.assign(r * r, 0);
    for (std::size_t i = 0; i < r * r; ++i) {
        const double len = grid.norm.data[i];
        const double denom = std::max(len, eps);
        nx.data[i] = grid.ux.data[i] / denom;
        ny.data[i] = grid.uy.data[i] / denom;
        if (len < eps) m.singular[i] = 1;
    }
    m.values = detail::planar_divergence(nx, ny, grid.spec.step());
    for (auto& v : m.values.data) v *= -0.5;
    return m;
}

inline ScalarMap norm_map(const ResponseGrid& grid) {
    ScalarMap m;
    m.kind = MapKind::Norm;
    m.spec = grid.spec;
    m.values = grid.norm;
    m.singular.assign(m.values.data.size(), 0);
    return m;
}

// ---------------------------------------------------------------- export

/// Comment header with axis metadata, then R rows (iy ascending) of R values (ix ascending).
inline void write_map_csv(const std::string& path, const ScalarMap& m) {
    auto f = csv::open_out(path);
    const auto [lo, hi] = m.extrema();
    f << "# kind=" << to_string(m.kind) << '\n';
    f << "# dims=" << m.spec.dim_x << ',' << m.spec.dim_y << '\n';
    f << "# range=" << csv::format(m.spec.lo) << ',' << csv::format(m.spec.hi) << '\n';
    f << "# resolution=" << m.spec.resolution << '\n';
    f << "# anchor=" << csv::join(m.spec.anchor) << '\n';
    f << "# min=" << csv::format(lo) << '\n';
    f << "# max=" << csv::format(hi) << '\n';
    f << "# singular=" << m.singular_count() << '\n';
    f << "# rows: dim " << m.spec.dim_y << " ascending; columns: dim " << m.spec.dim_x << " ascending\n";
    for (std::size_t iy = 0; iy < m.values.rows; ++iy) {
        for (std::size_t ix = 0; ix < m.values.cols; ++ix) f << (ix ? "," : "") << csv::format(m.values(iy, ix));
        f << '\n';
    }
    if (!f) throw DataError("write failed for '" + path + "'");
}

/// Reads a map written by write_map_csv (singular flags are not stored).
inline ScalarMap read_map_csv(const std::string& path) {
    auto f = csv::open_in(path);
    ScalarMap m;
    std::string line;
    std::vector<double> values;
    std::size_t line_no = 0, width = 0;
    auto fail = [&](const std::string& why) { return DataError(path + ":" + std::to_string(line_no) + ": " + why); };
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line.front() == '#') {
            const std::string_view body = std::string_view(line).substr(2);
            const auto eq = body.find('=');
            if (eq == std::string_view::npos) continue;
            const auto key = body.substr(0, eq);
            const auto val = body.substr(eq + 1);
            std::vector<double> nums;
            if (key != "kind") {
                for (auto tok : csv::split(val)) {
                    double v;
                    if (tok.empty()) continue;
                    if (!csv::parse(tok, v)) throw fail("bad header value");
                    nums.push_back(v);
                }
            }
            if (key == "kind") {
                if (val == "divergence") m.kind = MapKind::Divergence;
                else if (val == "mean_curvature") m.kind = MapKind::MeanCurvature;
                else m.kind = MapKind::Norm;
            } else if (key == "dims" && nums.size() == 2) {
                m.spec.dim_x = static_cast<std::size_t>(nums[0]);
                m.spec.dim_y = static_cast<std::size_t>(nums[1]);
            } else if (key == "range" && nums.size() == 2) {
                m.spec.lo = nums[0];
                m.spec.hi = nums[1];
            } else if (key == "resolution" && nums.size() == 1) {
                m.spec.resolution = static_cast<std::size_t>(nums[0]);
            } else if (key == "anchor") {
                m.spec.anchor = nums;
            }
            continue;
        }
        const auto cells = csv::split(line);
        if (width == 0) width = cells.size();
        if (cells.size() != width) throw fail("ragged row");
        for (auto c : cells) {
            double v;
            if (!csv::parse(c, v)) throw fail("malformed number");
            values.push_back(v);
        }
    }
    if (width == 0 || values.size() != width * width || width != m.spec.resolution)
        throw DataError(path + ": map is not " + std::to_string(m.spec.resolution) + " x " +
                        std::to_string(m.spec.resolution));
    m.values = Matrix(width, width);
    m.values.data = std::move(values);
    m.singular.assign(width * width, 0);
    return m;
}

/// Binary P5, values mapped affinely from [min, max] onto [0, 255]; singular nodes are 0.
/// Image row 0 is the highest dim_y coordinate.
inline void write_map_pgm(const std::string& path, const ScalarMap& m) {
    const std::size_t r = m.values.rows;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < m.values.data.size(); ++i) {
        if (m.singular[i]) continue;
        lo = std::min(lo, m.values.data[i]);
        hi = std::max(hi, m.values.data[i]);
    }
    std::vector<unsigned char> pixels(r * r, 0);
    for (std::size_t iy = 0; iy < r; ++iy)
        for (std::size_t ix = 0; ix < r; ++ix) {
            const std::size_t src = iy * r + ix;
            const std::size_t dst = (r - 1 - iy) * r + ix;
            if (m.singular[src]) continue;
            const double t = hi > lo ? (m.values.data[src] - lo) / (hi - lo) : 0.5;
            pixels[dst] = static_cast<unsigned char>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
        }
    auto f = csv::open_out(path, true);
    f << "P5\n" << r << ' ' << r << "\n255\n";
    f.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!f) throw DataError("write failed for '" + path + "'");
}

/// Node coordinates plus slice and full-norm response, one row per node.
inline void write_field_csv(const std::string& path, const ResponseGrid& g) {
    auto f = csv::open_out(path);
    f << "z" << g.spec.dim_x << ",z" << g.spec.dim_y << ",u" << g.spec.dim_x << ",u" << g.spec.dim_y << ",norm\n";
    const std::size_t r = g.spec.resolution;
    for (std::size_t iy = 0; iy < r; ++iy)
        for (std::size_t ix = 0; ix < r; ++ix)
            f << csv::join({g.spec.coordinate(ix), g.spec.coordinate(iy), g.ux(iy, ix), g.uy(iy, ix), g.norm(iy, ix)})
              << '\n';
    if (!f) throw DataError("write failed for '" + path + "'");
}

}  // namespace latresp
