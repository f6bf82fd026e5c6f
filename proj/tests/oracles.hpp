#pragma once

// Independent reference computations used only by tests.

#include "mmdcal/numerics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace mmdcal::testing {

/// Biased MMD^2 by three explicit double loops with per-pair kernel sums.
inline double mmd2_oracle(const Matrix& x, const Matrix& y, const std::array<double, 3>& sigmas) {
    auto k = [&](const RowVector& a, const RowVector& b) {
        double sq = 0.0;
        for (Eigen::Index c = 0; c < a.size(); ++c) sq += (a(c) - b(c)) * (a(c) - b(c));
        double s = 0.0;
        for (double sig : sigmas) s += std::exp(-sq / (sig * sig));
        return s;
    };
    const double n = static_cast<double>(x.rows()), m = static_cast<double>(y.rows());
    double xx = 0.0, xy = 0.0, yy = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.rows(); ++j) xx += k(x.row(i), x.row(j));
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < y.rows(); ++j) xy += k(x.row(i), y.row(j));
    for (Eigen::Index i = 0; i < y.rows(); ++i)
        for (Eigen::Index j = 0; j < y.rows(); ++j) yy += k(y.row(i), y.row(j));
    return xx / (n * n) - 2.0 * xy / (n * m) + yy / (m * m);
}

/// Mean distance to the k nearest other points by sorting all distances.
inline std::vector<double> knn_mean_oracle(const Matrix& p, std::size_t k) {
    std::vector<double> out;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        std::vector<double> d;
        for (Eigen::Index j = 0; j < p.rows(); ++j) {
            if (j != i) d.push_back((p.row(i) - p.row(j)).norm());
        }
        std::sort(d.begin(), d.end());
        double s = 0.0;
        for (std::size_t t = 0; t < k; ++t) s += d[t];
        out.push_back(s / static_cast<double>(k));
    }
    return out;
}

/// Kolmogorov-Smirnov statistic of values against Uniform[0, 1].
inline double ks_uniform_statistic(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        d = std::max(d, static_cast<double>(i + 1) / n - v[i]);
        d = std::max(d, v[i] - static_cast<double>(i) / n);
    }
    return d;
}

/// Asymptotic Kolmogorov distribution tail P(sqrt(n) D > t).
inline double kolmogorov_pvalue(double d, std::size_t n) {
    const double sn = std::sqrt(static_cast<double>(n));
    const double t = (sn + 0.12 + 0.11 / sn) * d;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * t * t);
        p += term;
        if (std::abs(term) < 1e-12) break;
    }
    return std::clamp(p, 0.0, 1.0);
}

}  // namespace mmdcal::testing
