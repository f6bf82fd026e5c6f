#include "mmdcal/mmd.hpp"

#include "mmdcal/errors.hpp"
#include "mmdcal/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace mmdcal {

void KernelSpec::validate() const {
    for (double s : sigmas) {
        if (!(s > 0.0) || !std::isfinite(s)) throw DataError("kernel bandwidths must be positive and finite");
    }
}

double kernel_from_sq_distance(double sq_dist, const KernelSpec& spec) {
    double k = 0.0;
    for (double s : spec.sigmas) k += std::exp(-sq_dist / (s * s));
    return k;
}

double kernel_eval(const RowVector& x, const RowVector& y, const KernelSpec& spec) {
    require_dims(x.size() == y.size(), "kernel_eval");
    return kernel_from_sq_distance((x - y).squaredNorm(), spec);
}

Matrix kernel_matrix(const Matrix& a, const Matrix& b, const KernelSpec& spec) {
    Matrix k = pairwise_sq_distances(a, b);
    for (Eigen::Index i = 0; i < k.rows(); ++i) {
        for (Eigen::Index j = 0; j < k.cols(); ++j) k(i, j) = kernel_from_sq_distance(k(i, j), spec);
    }
    return k;
}

KernelSpec heuristic_bandwidths(const Matrix& target) {
    if (static_cast<std::size_t>(target.rows()) < kBandwidthNeighbors + 1) {
        throw DataError("bandwidth heuristic needs at least " + std::to_string(kBandwidthNeighbors + 1) +
                        " target points, got " + std::to_string(target.rows()));
    }
    const Vector per_point = knn_mean_distance(target, kBandwidthNeighbors);
    const double scale = median(std::vector<double>(per_point.begin(), per_point.end()));
    if (!(scale > 0.0)) throw DataError("bandwidth heuristic: target points are not distinct enough (median scale 0)");
    KernelSpec spec;
    spec.sigmas = {scale / 2.0, scale, 2.0 * scale};
    spec.median_scale = scale;
    return spec;
}

namespace {

// Row sums are accumulated left to right per row, then rows are summed in
// order, so the result does not depend on blocking.
double kernel_sum(const Matrix& a, const Matrix& b, const KernelSpec& spec) {
    const Eigen::Index d = a.cols();
    double total = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i).data();
        double row = 0.0;
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            const double* bj = b.row(j).data();
            double sq = 0.0;
            for (Eigen::Index c = 0; c < d; ++c) {
                const double diff = ai[c] - bj[c];
                sq += diff * diff;
            }
            row += kernel_from_sq_distance(sq, spec);
        }
        total += row;
    }
    return total;
}

MmdEstimate make_estimate(double mmd2, std::size_t n, std::size_t m, const KernelSpec& spec) {
    MmdEstimate e;
    // The exact biased statistic is nonnegative; only rounding noise is clamped.
    e.mmd_squared = std::max(0.0, mmd2);
    e.mmd = std::sqrt(e.mmd_squared);
    e.n_source = n;
    e.n_target = m;
    e.kernel = spec;
    return e;
}

void check_mmd_inputs(const Matrix& x, const Matrix& y, const KernelSpec& spec) {
    require_dims(x.cols() == y.cols(), "mmd: " + std::to_string(x.cols()) + " vs " + std::to_string(y.cols()) + " columns");
    if (x.rows() < 1 || y.rows() < 1) throw DataError("mmd: both samples need at least one row");
    spec.validate();
}

}  // namespace

MmdEstimate mmd_biased(const Matrix& x, const Matrix& y, const KernelSpec& spec) {
    check_mmd_inputs(x, y, spec);
    const double n = static_cast<double>(x.rows());
    const double m = static_cast<double>(y.rows());
    const double kxx = kernel_sum(x, x, spec);
    const double kxy = kernel_sum(x, y, spec);
    const double kyy = kernel_sum(y, y, spec);
    const double mmd2 = kxx / (n * n) - 2.0 * kxy / (n * m) + kyy / (m * m);
    return make_estimate(mmd2, static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(y.rows()), spec);
}

MmdGradient mmd_biased_with_gradient(const Matrix& x, const Matrix& y, const KernelSpec& spec) {
    check_mmd_inputs(x, y, spec);
    const Eigen::Index n = x.rows(), m = y.rows(), d = x.cols();
    std::array<double, 3> inv_sq{};
    for (std::size_t s = 0; s < 3; ++s) inv_sq[s] = 1.0 / (spec.sigmas[s] * spec.sigmas[s]);

    // d k(a, b) / d a = w(|a-b|^2) (a - b) with w = -2 sum_s exp(-D/s^2) / s^2.
    auto accumulate = [&](const Matrix& other, Eigen::Index i, double coef, double* grad_row, double& ksum) {
        const double* xi = x.row(i).data();
        for (Eigen::Index j = 0; j < other.rows(); ++j) {
            const double* oj = other.row(j).data();
            double sq = 0.0;
            for (Eigen::Index c = 0; c < d; ++c) {
                const double diff = xi[c] - oj[c];
                sq += diff * diff;
            }
            double kval = 0.0, w = 0.0;
            for (std::size_t s = 0; s < 3; ++s) {
                const double e = std::exp(-sq * inv_sq[s]);
                kval += e;
                w -= 2.0 * e * inv_sq[s];
            }
            ksum += kval;
            const double scale = coef * w;
            for (Eigen::Index c = 0; c < d; ++c) grad_row[c] += scale * (xi[c] - oj[c]);
        }
    };

    const double nn = static_cast<double>(n), mm = static_cast<double>(m);
    MmdGradient out;
    out.d_x = Matrix::Zero(n, d);
    double kxx = 0.0, kxy = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double row_xx = 0.0, row_xy = 0.0;
        // x_i appears in both slots of the xx sum, hence 2/n^2.
        accumulate(x, i, 2.0 / (nn * nn), out.d_x.row(i).data(), row_xx);
        accumulate(y, i, -2.0 / (nn * mm), out.d_x.row(i).data(), row_xy);
        kxx += row_xx;
        kxy += row_xy;
    }
    const double kyy = kernel_sum(y, y, spec);
    out.mmd_squared = kxx / (nn * nn) - 2.0 * kxy / (nn * mm) + kyy / (mm * mm);
    return out;
}

double mmd_permutation_test(const Matrix& x, const Matrix& y, const KernelSpec& spec,
                            std::size_t n_permutations, std::uint64_t seed) {
    check_mmd_inputs(x, y, spec);
    if (n_permutations < 1) throw ConfigError("permutation test needs at least one permutation");
    const Matrix pooled = vstack(x, y);
    const Matrix gram = kernel_matrix(pooled, pooled, spec);
    const auto n = static_cast<std::size_t>(x.rows());
    const auto total = static_cast<std::size_t>(pooled.rows());
    const double nn = static_cast<double>(n);
    const double mm = static_cast<double>(total - n);

    // With g = +1/n on the first group and -1/m on the second, the biased
    // statistic equals g^T K g.
    auto statistic = [&](const std::vector<std::size_t>& order) {
        Vector g(static_cast<Eigen::Index>(total));
        for (std::size_t t = 0; t < total; ++t) {
            g(static_cast<Eigen::Index>(order[t])) = t < n ? 1.0 / nn : -1.0 / mm;
        }
        return g.dot(gram * g);
    };

    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const double observed = statistic(order);
    Rng rng(seed);
    std::size_t exceed = 0;
    for (std::size_t p = 0; p < n_permutations; ++p) {
        rng.shuffle(order);
        // Relative slack so permutations equal to the observed split count as ties.
        if (statistic(order) >= observed - 1e-12 * std::abs(observed)) ++exceed;
    }
    return static_cast<double>(1 + exceed) / static_cast<double>(1 + n_permutations);
}

}  // namespace mmdcal
