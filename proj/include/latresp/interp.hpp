#pragma once

// Latent interpolation: straight segments and shortest paths over the
// mean-curvature map that prefer high-curvature (on-manifold) regions.

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "latresp/csv.hpp"
#include "latresp/errors.hpp"
#include "latresp/geometry.hpp"
#include "latresp/vae.hpp"

namespace latresp {

enum class PathMethod { Straight, CurvatureGuided };

inline std::string_view to_string(PathMethod m) { return m == PathMethod::Straight ? "straight" : "curvature"; }

struct LatentPath {
    std::vector<std::vector<double>> waypoints;
    double cost = 0.0;
    PathMethod method = PathMethod::Straight;
};

inline LatentPath straight_path(std::span<const double> a, std::span<const double> b, std::size_t count) {
    require_dim(b.size(), a.size(), "straight_path endpoint");
    if (count < 2) throw DimensionError("straight_path: need at least 2 waypoints");
    LatentPath p;
    p.method = PathMethod::Straight;
    for (std::size_t i = 0; i < count; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(count - 1);
        std::vector<double> w(a.size());
        for (std::size_t j = 0; j < a.size(); ++j) w[j] = i + 1 == count ? b[j] : a[j] + t * (b[j] - a[j]);
        p.waypoints.push_back(std::move(w));
    }
    double len = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) len += (b[j] - a[j]) * (b[j] - a[j]);
    p.cost = std::sqrt(len);
    return p;
}

/// Node sequence (ix, iy) and total cost of a grid path.
struct GridPath {
    std::vector<std::pair<std::size_t, std::size_t>> nodes;
    double cost = 0.0;
};

/// Cost of the edge between adjacent nodes p and q: |p - q| * (w(p) + w(q)) / 2.
inline double grid_edge_cost(const Matrix& weights, double step, std::size_t ax, std::size_t ay, std::size_t bx,
                             std::size_t by) {
    const double len = (ax != bx && ay != by) ? std::sqrt(2.0) * step : step;
    return len * 0.5 * (weights(ay, ax) + weights(by, bx));
}

/// Exact single-pair shortest path on the 8-connected grid (Dijkstra). Ties in the
/// queue are resolved by the smaller row-major node index, so output is deterministic.
inline GridPath grid_shortest_path(const Matrix& weights, double step, std::pair<std::size_t, std::size_t> start,
                                   std::pair<std::size_t, std::size_t> goal) {
    const std::size_t w = weights.cols, h = weights.rows;
    if (start.first >= w || start.second >= h || goal.first >= w || goal.second >= h)
        throw DimensionError("grid_shortest_path: node outside grid");
    for (double v : weights.data)
        if (!(v >= 0.0) || !std::isfinite(v)) throw NumericalError("grid_shortest_path: weights must be finite and >= 0");
    const std::size_t n = w * h;
    const auto id = [w](std::size_t x, std::size_t y) { return y * w + x; };
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> prev(n, n);
    std::vector<char> done(n, 0);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    const std::size_t src = id(start.first, start.second), dst = id(goal.first, goal.second);
    dist[src] = 0.0;
    queue.emplace(0.0, src);
    while (!queue.empty()) {
        const auto [du, u] = queue.top();
        queue.pop();
        if (done[u]) continue;
        done[u] = 1;
        if (u == dst) break;
        const std::size_t ux = u % w, uy = u / w;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0) continue;
                const auto vx = static_cast<std::ptrdiff_t>(ux) + dx;
                const auto vy = static_cast<std::ptrdiff_t>(uy) + dy;
                if (vx < 0 || vy < 0 || vx >= static_cast<std::ptrdiff_t>(w) || vy >= static_cast<std::ptrdiff_t>(h))
                    continue;
                const std::size_t v = id(static_cast<std::size_t>(vx), static_cast<std::size_t>(vy));
                if (done[v]) continue;
                const double nd = du + grid_edge_cost(weights, step, ux, uy, static_cast<std::size_t>(vx),
                                                      static_cast<std::size_t>(vy));
                if (nd < dist[v]) {
                    dist[v] = nd;
                    prev[v] = u;
                    queue.emplace(nd, v);
                }
            }
    }
    GridPath path;
    path.cost = dist[dst];
    for (std::size_t v = dst; v != n; v = prev[v]) {
        path.nodes.emplace_back(v % w, v / w);
        if (v == src) break;
    }
    std::reverse(path.nodes.begin(), path.nodes.end());
    return path;
}

/// Node weights exp(-gamma * H^), with H clipped at the 99th-percentile magnitude.
inline Matrix curvature_weights(const ScalarMap& curvature, double gamma) {
    if (!(gamma >= 0.0)) throw DimensionError("curvature weights: gamma must be >= 0");
    std::vector<double> mags;
    mags.reserve(curvature.values.data.size());
    for (double v : curvature.values.data) mags.push_back(std::abs(v));
    const std::size_t k = std::min(mags.size() - 1, static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(mags.size()))) - 1);
    std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k), mags.end());
    const double cap = mags[k];
    Matrix w(curvature.values.rows, curvature.values.cols);
    for (std::size_t i = 0; i < w.data.size(); ++i)
        w.data[i] = std::exp(-gamma * std::clamp(curvature.values.data[i], -cap, cap));
    return w;
}

/// Shortest grid path between the nodes nearest to a and b, with the exact endpoints
/// prepended/appended. Off-slice coordinates are blended linearly from a to b.
inline LatentPath curvature_path(const ScalarMap& curvature, std::span<const double> a, std::span<const double> b,
                                 double gamma = 2.0) {
    require_dim(b.size(), a.size(), "curvature_path endpoint");
    const SliceSpec& spec = curvature.spec;
    const std::size_t d = a.size();
    if (spec.dim_x >= d || spec.dim_y >= d) throw DimensionError("curvature_path: map dims exceed latent size");
    for (auto p : {a, b}) {
        if (!spec.contains(p[spec.dim_x], p[spec.dim_y]))
            throw DimensionError("curvature_path: endpoint (" + csv::format(p[spec.dim_x]) + ", " +
                                 csv::format(p[spec.dim_y]) + ") outside map range [" + csv::format(spec.lo) + ", " +
                                 csv::format(spec.hi) + "]");
    }
    if (std::equal(a.begin(), a.end(), b.begin())) {
        LatentPath trivial;
        trivial.method = PathMethod::CurvatureGuided;
        trivial.waypoints = {std::vector<double>(a.begin(), a.end()), std::vector<double>(b.begin(), b.end())};
        return trivial;
    }
    const Matrix weights = curvature_weights(curvature, gamma);
    const auto start = spec.nearest(a[spec.dim_x], a[spec.dim_y]);
    const auto goal = spec.nearest(b[spec.dim_x], b[spec.dim_y]);
    const GridPath gp = grid_shortest_path(weights, spec.step(), start, goal);

    LatentPath path;
    path.method = PathMethod::CurvatureGuided;
    path.cost = gp.cost;
    path.waypoints.emplace_back(a.begin(), a.end());
    const std::size_t m = gp.nodes.size();
    for (std::size_t i = 0; i < m; ++i) {
        const double t = static_cast<double>(i + 1) / static_cast<double>(m + 1);
        std::vector<double> z(d);
        for (std::size_t j = 0; j < d; ++j) z[j] = a[j] + t * (b[j] - a[j]);
        z[spec.dim_x] = spec.coordinate(gp.nodes[i].first);
        z[spec.dim_y] = spec.coordinate(gp.nodes[i].second);
        path.waypoints.push_back(std::move(z));
    }
    path.waypoints.emplace_back(b.begin(), b.end());
    return path;
}

inline double euclidean_length(const LatentPath& p) {
    double len = 0.0;
    for (std::size_t i = 1; i < p.waypoints.size(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < p.waypoints[i].size(); ++j) {
            const double dd = p.waypoints[i][j] - p.waypoints[i - 1][j];
            s += dd * dd;
        }
        len += std::sqrt(s);
    }
    return len;
}

struct AmbientMetrics {
    double total_length = 0.0;
    double max_jump = 0.0;
    std::vector<std::vector<double>> decoded;
    std::vector<double> jumps;  // jumps[i] = |x_i - x_{i-1}|, jumps[0] = 0
};

inline AmbientMetrics ambient_metrics(const VaeModel& model, const LatentPath& path) {
    AmbientMetrics m;
    for (const auto& z : path.waypoints) m.decoded.push_back(decode(model, z));
    m.jumps.assign(m.decoded.size(), 0.0);
    for (std::size_t i = 1; i < m.decoded.size(); ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < m.decoded[i].size(); ++c) {
            const double dd = m.decoded[i][c] - m.decoded[i - 1][c];
            s += dd * dd;
        }
        m.jumps[i] = std::sqrt(s);
        m.total_length += m.jumps[i];
        m.max_jump = std::max(m.max_jump, m.jumps[i]);
    }
    return m;
}

/// One row per waypoint: latent coordinates, decoded observation, ambient jump.
inline void write_path_csv(const std::string& file, const LatentPath& path, const AmbientMetrics& metrics) {
    auto f = csv::open_out(file);
    const std::size_t d = path.waypoints.empty() ? 0 : path.waypoints.front().size();
    const std::size_t obs = metrics.decoded.empty() ? 0 : metrics.decoded.front().size();
    f << "# method=" << to_string(path.method) << '\n';
    f << "# cost=" << csv::format(path.cost) << '\n';
    f << "# ambient_length=" << csv::format(metrics.total_length) << '\n';
    f << "# max_jump=" << csv::format(metrics.max_jump) << '\n';
    f << "index";
    for (std::size_t j = 0; j < d; ++j) f << ",z" << j;
    for (std::size_t c = 0; c < obs; ++c) f << ",x" << c + 1;
    f << ",jump\n";
    for (std::size_t i = 0; i < path.waypoints.size(); ++i) {
        std::vector<double> row = path.waypoints[i];
        row.insert(row.end(), metrics.decoded[i].begin(), metrics.decoded[i].end());
        row.push_back(metrics.jumps[i]);
        f << i << ',' << csv::join(row) << '\n';
    }
    if (!f) throw DataError("write failed for '" + file + "'");
}

}  // namespace latresp
