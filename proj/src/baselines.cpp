#include "mmdcal/baselines.hpp"

#include "mmdcal/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mmdcal {

namespace {

void require_shared_columns(const Sample& a, const Sample& b) {
    if (a.column_names != b.column_names) throw DimensionError("source and target do not share column names");
}

}  // namespace

MomentMatchMap fit_moment_match(const Matrix& source, const Matrix& target) {
    require_dims(source.cols() == target.cols(), "moment matching");
    const RowVector src_mean = column_means(source);
    const RowVector tgt_mean = column_means(target);
    const RowVector src_std = column_variances(source).array().sqrt();
    const RowVector tgt_std = column_variances(target).array().sqrt();
    MomentMatchMap map;
    map.scale.resize(source.cols());
    for (Eigen::Index j = 0; j < source.cols(); ++j) {
        if (!(src_std(j) > 0.0)) throw DataError("moment matching: source column " + std::to_string(j) + " has zero variance");
        if (!(tgt_std(j) > 0.0)) throw DataError("moment matching: target column " + std::to_string(j) + " has zero variance");
        map.scale(j) = tgt_std(j) / src_std(j);
    }
    map.shift = tgt_mean.array() - map.scale.array() * src_mean.array();
    return map;
}

MomentMatchMap fit_moment_match(const Sample& source, const Sample& target) {
    require_shared_columns(source, target);
    return fit_moment_match(source.data, target.data);
}

Matrix apply_moment_match(const MomentMatchMap& map, const Matrix& points) {
    require_dims(static_cast<std::size_t>(points.cols()) == map.dim(), "apply_moment_match");
    Matrix out = points.array().rowwise() * map.scale.array();
    out.rowwise() += map.shift;
    return out;
}

Sample apply_moment_match(const MomentMatchMap& map, const Sample& sample) {
    Sample out = sample;
    out.data = apply_moment_match(map, sample.data);
    out.provenance += "|moment-matched";
    return out;
}

PcRemovalMap fit_pc_removal(const Matrix& source, const Matrix& target, std::size_t n_remove) {
    require_dims(source.cols() == target.cols(), "PC removal");
    if (source.rows() < 1 || target.rows() < 1) throw DataError("PC removal needs rows from both batches");
    const Matrix pooled = vstack(source, target);
    PcRemovalMap map;
    map.pca = fit_pca_full_rank(pooled);
    const std::size_t k = map.pca.n_components();
    if (n_remove >= k) {
        throw DataError("PC removal: cannot remove " + std::to_string(n_remove) + " of " + std::to_string(k) +
                        " available components");
    }
    const Matrix scores = project(map.pca, pooled);
    Vector batch(pooled.rows());
    batch.head(source.rows()).setZero();
    batch.tail(target.rows()).setOnes();
    const Vector batch_c = batch.array() - batch.mean();
    const double batch_norm = batch_c.norm();

    map.correlations.resize(static_cast<Eigen::Index>(k));
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(k); ++c) {
        const Vector s = scores.col(c).array() - scores.col(c).mean();
        const double denom = s.norm() * batch_norm;
        map.correlations(c) = denom > 0.0 ? s.dot(batch_c) / denom : 0.0;
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    // |correlation| on a 1e-12 grid, so rounding noise counts as a tie.
    std::vector<double> key(k);
    for (std::size_t c = 0; c < k; ++c) key[c] = std::round(std::abs(map.correlations(static_cast<Eigen::Index>(c))) * 1e12);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
    map.removed.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_remove));
    return map;
}

PcRemovalMap fit_pc_removal(const Sample& source, const Sample& target, std::size_t n_remove) {
    require_shared_columns(source, target);
    return fit_pc_removal(source.data, target.data, n_remove);
}

Matrix apply_pc_removal(const PcRemovalMap& map, const Matrix& points) {
    require_dims(static_cast<std::size_t>(points.cols()) == map.pca.dim(), "apply_pc_removal");
    Matrix out = points;
    const Matrix centered = points.rowwise() - map.pca.mean;
    for (std::size_t c : map.removed) {
        const Vector dir = map.pca.components.col(static_cast<Eigen::Index>(c));
        const Vector score = centered * dir;
        out -= score * dir.transpose();
    }
    return out;
}

Sample apply_pc_removal(const PcRemovalMap& map, const Sample& sample) {
    Sample out = sample;
    out.data = apply_pc_removal(map, sample.data);
    out.provenance += "|pc-removed";
    return out;
}

}  // namespace mmdcal
