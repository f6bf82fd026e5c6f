#pragma once

#include "mmdcal/numerics.hpp"

#include <array>
#include <cstdint>

namespace mmdcal {

/// Bandwidths of the three-term Gaussian kernel
/// k(x, y) = sum_i exp(-|x - y|^2 / sigma_i^2).
struct KernelSpec {
    std::array<double, 3> sigmas{1.0, 1.0, 1.0};
    /// Median kNN scale the sigmas were derived from (0 when set by hand).
    double median_scale = 0.0;

    void validate() const;
};

struct MmdEstimate {
    double mmd_squared = 0.0;
    double mmd = 0.0;
    std::size_t n_source = 0;
    std::size_t n_target = 0;
    KernelSpec kernel;
};

inline constexpr std::size_t kBandwidthNeighbors = 25;

double kernel_eval(const RowVector& x, const RowVector& y, const KernelSpec& spec);

/// Kernel value for a precomputed squared distance.
double kernel_from_sq_distance(double sq_dist, const KernelSpec& spec);

/// Gram matrix k(a_i, b_j).
Matrix kernel_matrix(const Matrix& a, const Matrix& b, const KernelSpec& spec);

/// sigmas = {m/2, m, 2m} where m is the median over target points of the
/// mean distance to their 25 nearest other target points.
KernelSpec heuristic_bandwidths(const Matrix& target);

/// Biased (V-statistic) squared MMD including the diagonal kernel terms.
MmdEstimate mmd_biased(const Matrix& x, const Matrix& y, const KernelSpec& spec);

/// Biased squared MMD and its gradient with respect to every row of x.
struct MmdGradient {
    double mmd_squared = 0.0;
    Matrix d_x;
};
MmdGradient mmd_biased_with_gradient(const Matrix& x, const Matrix& y, const KernelSpec& spec);

/// Permutation two-sample test with the biased MMD as statistic.
///
/// The pooled rows [x; y] are shuffled n_permutations times by Fisher-Yates
/// driven by Rng(seed); after each shuffle the first n pooled indices form
/// the first group. Returns (1 + #{permuted >= observed}) / (1 + n_permutations).
double mmd_permutation_test(const Matrix& x, const Matrix& y, const KernelSpec& spec,
                            std::size_t n_permutations, std::uint64_t seed);

}  // namespace mmdcal
