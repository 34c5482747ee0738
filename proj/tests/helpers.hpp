#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace testutil {

// Central differences of a scalar function of a flat parameter vector.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> p, double h = 1e-4) {
    std::vector<double> g(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double keep = p[i];
        p[i] = keep + h;
        const double fp = f(p);
        p[i] = keep - h;
        const double fm = f(p);
        p[i] = keep;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// |a - b| / max(|a|, |b|), with a floor so entries that are both ~0 compare absolutely.
inline double relative_error(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], b[i]));
    return worst;
}

inline std::string tmp_dir(const std::string& name) {
    namespace fs = std::filesystem;
    const fs::path p = fs::path(LATRESP_TEST_TMP) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

}  // namespace testutil
