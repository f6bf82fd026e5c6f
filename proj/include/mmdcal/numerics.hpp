#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace mmdcal {

/// Row-major dense matrix; one row is one data point.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Principal component model: mean, orthonormal components (one per
/// column, ordered by decreasing explained variance) and their variances.
struct PcaModel {
    RowVector mean;
    Matrix components;  // d x k
    Vector explained_variance;

    std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
    std::size_t n_components() const { return static_cast<std::size_t>(components.cols()); }
};

/// Entry (i, j) is the squared Euclidean distance between a.row(i) and b.row(j).
/// Computed from explicit coordinate differences, so entries are never negative.
Matrix pairwise_sq_distances(const Matrix& a, const Matrix& b);

/// Mean Euclidean distance from each point to its k nearest other points.
/// Exact brute force; ties are broken by lower point index.
Vector knn_mean_distance(const Matrix& points, std::size_t k);

/// Fits k principal components from the sample covariance (1/(n-1)) of the
/// mean-centered data. The entry of largest magnitude in each component is
/// made positive. Throws if k exceeds min(n-1, d) or the numerical rank.
PcaModel fit_pca(const Matrix& data, std::size_t k);

/// Fits every component with nonzero variance.
PcaModel fit_pca_full_rank(const Matrix& data);

/// (data - mean) * components.
Matrix project(const PcaModel& model, const Matrix& data);

/// mean + scores * components^T.
Matrix reconstruct(const PcaModel& model, const Matrix& scores);

/// Column means and population (1/n) variances.
RowVector column_means(const Matrix& data);
RowVector column_variances(const Matrix& data);

/// Median of the values; the mean of the two central values for even length.
double median(std::vector<double> values);

/// Rows of `data` selected by index, in the given order.
Matrix take_rows(const Matrix& data, const std::vector<std::size_t>& rows);

/// Stacks a on top of b.
Matrix vstack(const Matrix& a, const Matrix& b);

bool all_finite(const Matrix& m);

}  // namespace mmdcal
