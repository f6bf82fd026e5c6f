#include "mmdcal/benchmarks.hpp"

#include "mmdcal/random.hpp"

#include <cmath>

namespace mmdcal {

Matrix gaussian_sample(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

BenchmarkPair shift_benchmark(std::size_t n, std::size_t d, double shift, std::uint64_t seed) {
    BenchmarkPair p;
    p.source = gaussian_sample(n, d, derive_seed(seed, 0));
    p.target = gaussian_sample(n, d, derive_seed(seed, 1));
    p.target.col(0).array() += shift;
    return p;
}

Matrix mixture_sample(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double center = rng.bernoulli(0.5) ? 1.5 : -1.5;
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = center + rng.normal();
    }
    return m;
}

Matrix warp(const Matrix& x) {
    return x.array() + 0.3 * x.array().tanh();
}

BenchmarkPair warp_benchmark(std::size_t n, std::size_t d, std::uint64_t seed) {
    BenchmarkPair p;
    p.source = mixture_sample(n, d, seed);
    p.target = warp(p.source);
    return p;
}

IndirectBenchmark indirect_benchmark(std::size_t n, std::size_t d, std::uint64_t seed) {
    const auto D = static_cast<Eigen::Index>(d);
    // Patient 2 differs from patient 1 by a shift on the second coordinate;
    // day 2 differs from day 1 by a shift on the first.
    RowVector patient2 = RowVector::Zero(D);
    patient2(std::min<Eigen::Index>(1, D - 1)) += 1.0;
    RowVector day2 = RowVector::Zero(D);
    day2(0) += 0.8;
    if (D > 2) day2(2) -= 0.5;

    IndirectBenchmark b;
    b.p1d1 = mixture_sample(n, d, derive_seed(seed, 0));
    b.p2d1 = mixture_sample(n, d, derive_seed(seed, 1)).rowwise() + patient2;
    b.p2d2 = mixture_sample(n, d, derive_seed(seed, 2)).rowwise() + (patient2 + day2);
    b.p1d2 = mixture_sample(n, d, derive_seed(seed, 3)).rowwise() + day2;
    return b;
}

}  // namespace mmdcal
