#pragma once

#include "mmdcal/numerics.hpp"
#include "mmdcal/preprocessing.hpp"

#include <vector>

namespace mmdcal {

/// Per-column affine map x_j -> scale_j * x_j + shift_j that gives the
/// source the target's column means and (1/n) variances.
struct MomentMatchMap {
    RowVector shift;
    RowVector scale;

    std::size_t dim() const { return static_cast<std::size_t>(scale.size()); }
};

MomentMatchMap fit_moment_match(const Matrix& source, const Matrix& target);
MomentMatchMap fit_moment_match(const Sample& source, const Sample& target);
Matrix apply_moment_match(const MomentMatchMap& map, const Matrix& points);
Sample apply_moment_match(const MomentMatchMap& map, const Sample& sample);

/// Removes the principal directions of the pooled data that correlate most
/// with the batch label.
struct PcRemovalMap {
    PcaModel pca;
    /// Zero-based component indices, in removal order.
    std::vector<std::size_t> removed;
    /// Pearson correlation of each component score with the batch label
    /// (0 for source rows, 1 for target rows).
    Vector correlations;
};

/// Fits PCA on the pooled rows (every nonzero-variance component) and
/// removes the n_remove components with the largest |correlation|; ties
/// (within 1e-12) go to the lower index.
PcRemovalMap fit_pc_removal(const Matrix& source, const Matrix& target, std::size_t n_remove);
PcRemovalMap fit_pc_removal(const Sample& source, const Sample& target, std::size_t n_remove);

/// x - sum over removed components c of ((x - mean) . c) c.
Matrix apply_pc_removal(const PcRemovalMap& map, const Matrix& points);
Sample apply_pc_removal(const PcRemovalMap& map, const Sample& sample);

}  // namespace mmdcal
