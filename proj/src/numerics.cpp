#include "mmdcal/numerics.hpp"

#include "mmdcal/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace mmdcal {

Matrix pairwise_sq_distances(const Matrix& a, const Matrix& b) {
    require_dims(a.cols() == b.cols(), "pairwise_sq_distances: " + std::to_string(a.cols()) +
                                           " vs " + std::to_string(b.cols()) + " columns");
    const Eigen::Index n = a.rows(), m = b.rows(), d = a.cols();
    Matrix out(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double* ai = a.row(i).data();
        for (Eigen::Index j = 0; j < m; ++j) {
            const double* bj = b.row(j).data();
            double s = 0.0;
            for (Eigen::Index c = 0; c < d; ++c) {
                const double diff = ai[c] - bj[c];
                s += diff * diff;
            }
            out(i, j) = s;
        }
    }
    return out;
}

Vector knn_mean_distance(const Matrix& points, std::size_t k) {
    const auto n = static_cast<std::size_t>(points.rows());
    if (k == 0 || n <= k) {
        throw DataError("knn_mean_distance: need more than k=" + std::to_string(k) +
                        " points, got " + std::to_string(n));
    }
    const Matrix dist = pairwise_sq_distances(points, points);
    Vector out(static_cast<Eigen::Index>(n));
    std::vector<std::size_t> order(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t pos = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) order[pos++] = j;
        }
        const auto row = dist.row(static_cast<Eigen::Index>(i));
        auto closer = [&row](std::size_t p, std::size_t q) {
            const double dp = row(static_cast<Eigen::Index>(p));
            const double dq = row(static_cast<Eigen::Index>(q));
            return dp < dq || (dp == dq && p < q);
        };
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), closer);
        std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), closer);
        double sum = 0.0;
        for (std::size_t t = 0; t < k; ++t) sum += std::sqrt(row(static_cast<Eigen::Index>(order[t])));
        out(static_cast<Eigen::Index>(i)) = sum / static_cast<double>(k);
    }
    return out;
}

namespace {

struct Eigenpairs {
    Vector values;   // descending
    Matrix vectors;  // columns match values
    RowVector mean;
};

Eigenpairs covariance_eigenpairs(const Matrix& data) {
    if (data.rows() < 2) throw DataError("PCA needs at least 2 rows");
    if (!all_finite(data)) throw DataError("PCA input contains non-finite values");
    Eigenpairs out;
    out.mean = column_means(data);
    const Matrix centered = data.rowwise() - out.mean;
    const Eigen::MatrixXd cov =
        (centered.transpose() * centered) / static_cast<double>(data.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw NumericError("PCA eigendecomposition failed");
    const Eigen::Index d = cov.rows();
    out.values.resize(d);
    out.vectors.resize(d, d);
    // Eigen returns ascending eigenvalues.
    for (Eigen::Index c = 0; c < d; ++c) {
        out.values(c) = std::max(0.0, solver.eigenvalues()(d - 1 - c));
        Vector v = solver.eigenvectors().col(d - 1 - c);
        Eigen::Index arg = 0;
        for (Eigen::Index r = 1; r < d; ++r) {
            if (std::abs(v(r)) > std::abs(v(arg))) arg = r;
        }
        if (v(arg) < 0) v = -v;
        out.vectors.col(c) = v;
    }
    return out;
}

std::size_t numerical_rank(const Vector& descending_values, Eigen::Index n_rows) {
    if (descending_values.size() == 0 || descending_values(0) <= 0.0) return 0;
    const double tol = descending_values(0) * 1e-12 * static_cast<double>(std::max<Eigen::Index>(descending_values.size(), n_rows));
    std::size_t rank = 0;
    for (Eigen::Index i = 0; i < descending_values.size(); ++i) {
        if (descending_values(i) > tol) ++rank;
    }
    return rank;
}

PcaModel truncate(const Eigenpairs& pairs, std::size_t k) {
    PcaModel model;
    model.mean = pairs.mean;
    model.components = pairs.vectors.leftCols(static_cast<Eigen::Index>(k));
    model.explained_variance = pairs.values.head(static_cast<Eigen::Index>(k));
    return model;
}

}  // namespace

PcaModel fit_pca(const Matrix& data, std::size_t k) {
    const auto n = static_cast<std::size_t>(data.rows());
    const auto d = static_cast<std::size_t>(data.cols());
    if (k == 0 || n < 2 || k > std::min(n - 1, d)) {
        throw DataError("fit_pca: k=" + std::to_string(k) + " out of range for " +
                        std::to_string(n) + "x" + std::to_string(d) + " data");
    }
    const Eigenpairs pairs = covariance_eigenpairs(data);
    const std::size_t rank = numerical_rank(pairs.values, data.rows());
    if (k > rank) {
        throw DataError("fit_pca: k=" + std::to_string(k) + " exceeds the data rank " + std::to_string(rank));
    }
    return truncate(pairs, k);
}

PcaModel fit_pca_full_rank(const Matrix& data) {
    const Eigenpairs pairs = covariance_eigenpairs(data);
    const std::size_t rank = numerical_rank(pairs.values, data.rows());
    if (rank == 0) throw DataError("fit_pca: data has zero variance");
    return truncate(pairs, rank);
}

Matrix project(const PcaModel& model, const Matrix& data) {
    require_dims(data.cols() == model.mean.size(), "project: data has " + std::to_string(data.cols()) +
                                                       " columns, model expects " + std::to_string(model.mean.size()));
    return (data.rowwise() - model.mean) * model.components;
}

Matrix reconstruct(const PcaModel& model, const Matrix& scores) {
    require_dims(scores.cols() == model.components.cols(), "reconstruct: score width");
    Matrix out = scores * model.components.transpose();
    out.rowwise() += model.mean;
    return out;
}

RowVector column_means(const Matrix& data) {
    if (data.rows() == 0) throw DataError("column_means: empty matrix");
    return data.colwise().sum() / static_cast<double>(data.rows());
}

RowVector column_variances(const Matrix& data) {
    const RowVector mean = column_means(data);
    return (data.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(data.rows());
}

double median(std::vector<double> values) {
    if (values.empty()) throw DataError("median of empty list");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

Matrix take_rows(const Matrix& data, const std::vector<std::size_t>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), data.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = data.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

Matrix vstack(const Matrix& a, const Matrix& b) {
    require_dims(a.cols() == b.cols(), "vstack");
    Matrix out(a.rows() + b.rows(), a.cols());
    out.topRows(a.rows()) = a;
    out.bottomRows(b.rows()) = b;
    return out;
}

bool all_finite(const Matrix& m) {
    return m.allFinite();
}

}  // namespace mmdcal
