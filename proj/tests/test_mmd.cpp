#include "mmdcal/benchmarks.hpp"
#include "mmdcal/errors.hpp"
#include "mmdcal/mmd.hpp"
#include "mmdcal/random.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace mmdcal;

TEST_CASE("kernel evaluation") {
    KernelSpec unit;
    RowVector x(2), y(2);
    x << 0.3, -1.0;
    CHECK(kernel_eval(x, x, unit) == 3.0);
    y << 1.3, -1.0;
    CHECK(kernel_eval(x, y, unit) == doctest::Approx(3.0 * std::exp(-1.0)).epsilon(1e-14));
    y << 100.0, 100.0;
    const double far = kernel_eval(x, y, unit);
    CHECK(far >= 0.0);
    CHECK(far < 1e-300);
    CHECK_THROWS_AS(kernel_eval(x, RowVector::Zero(3), unit), DimensionError);
}

TEST_CASE("kernel uses sigma squared without a factor of two") {
    KernelSpec spec;
    spec.sigmas = {0.5, 1.0, 2.0};
    RowVector x = RowVector::Zero(1), y = RowVector::Ones(1);
    const double want = std::exp(-1.0 / 0.25) + std::exp(-1.0) + std::exp(-1.0 / 4.0);
    CHECK(kernel_eval(x, y, spec) == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("kernel is symmetric and translation invariant") {
    KernelSpec spec;
    spec.sigmas = {0.7, 1.4, 2.8};
    const Matrix p = gaussian_sample(20, 4, 3);
    const RowVector c = gaussian_sample(1, 4, 4).row(0);
    for (Eigen::Index i = 0; i + 1 < p.rows(); ++i) {
        const RowVector a = p.row(i), b = p.row(i + 1);
        CHECK(kernel_eval(a, b, spec) == kernel_eval(b, a, spec));
        CHECK(kernel_eval(a + c, b + c, spec) == doctest::Approx(kernel_eval(a, b, spec)).epsilon(1e-12));
    }
}

TEST_CASE("kernel Gram matrix is positive semi-definite") {
    KernelSpec spec;
    spec.sigmas = {0.5, 1.0, 2.0};
    const Matrix p = gaussian_sample(100, 3, 12);
    const Matrix k = kernel_matrix(p, p, spec);
    CHECK((k - k.transpose()).cwiseAbs().maxCoeff() == 0.0);
    const Eigen::MatrixXd dense = k;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8);
}

TEST_CASE("bandwidth heuristic on 26 evenly spaced points") {
    Matrix line(26, 1);
    for (int i = 0; i < 26; ++i) line(i, 0) = i;
    // Each point's 25 nearest others are all the other points.
    std::vector<double> means;
    for (int i = 0; i < 26; ++i) {
        double s = 0.0;
        for (int j = 0; j < 26; ++j) s += std::abs(i - j);
        means.push_back(s / 25.0);
    }
    std::sort(means.begin(), means.end());
    const double scale = 0.5 * (means[12] + means[13]);
    const KernelSpec k = heuristic_bandwidths(line);
    CHECK(k.median_scale == doctest::Approx(scale).epsilon(1e-14));
    CHECK(k.sigmas[0] == doctest::Approx(scale / 2));
    CHECK(k.sigmas[1] == doctest::Approx(scale));
    CHECK(k.sigmas[2] == doctest::Approx(2 * scale));
}

TEST_CASE("bandwidth heuristic counts duplicates as distance-zero neighbours") {
    const Matrix base = gaussian_sample(26, 2, 31);
    const Matrix doubled = vstack(base, base);
    const auto oracle = testing::knn_mean_oracle(doubled, 25);
    std::vector<double> sorted = oracle;
    std::sort(sorted.begin(), sorted.end());
    const double want = 0.5 * (sorted[25] + sorted[26]);
    CHECK(heuristic_bandwidths(doubled).median_scale == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("bandwidth heuristic needs 26 points") {
    CHECK_THROWS_AS(heuristic_bandwidths(gaussian_sample(25, 2, 1)), DataError);
    CHECK_NOTHROW(heuristic_bandwidths(gaussian_sample(26, 2, 1)));
}

TEST_CASE("biased MMD hand example") {
    KernelSpec unit;
    Matrix x(1, 1), y(1, 1);
    x << 0.0;
    y << 1.0;
    const MmdEstimate e = mmd_biased(x, y, unit);
    CHECK(e.mmd_squared == doctest::Approx(6.0 - 6.0 * std::exp(-1.0)).epsilon(1e-14));
    CHECK(e.mmd == doctest::Approx(std::sqrt(6.0 - 6.0 * std::exp(-1.0))).epsilon(1e-14));
    CHECK(e.n_source == 1);
    CHECK(e.n_target == 1);
}

TEST_CASE("biased MMD of a sample with itself is exactly zero") {
    KernelSpec spec;
    spec.sigmas = {0.3, 0.6, 1.2};
    const Matrix x = gaussian_sample(40, 5, 2);
    CHECK(mmd_biased(x, x, spec).mmd_squared == 0.0);
    CHECK(mmd_biased(x, x, spec).mmd == 0.0);
}

TEST_CASE("biased MMD matches the double-loop oracle and is symmetric") {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng.index(50), m = 1 + rng.index(50), d = 1 + rng.index(10);
        const Matrix x = gaussian_sample(n, d, rng.next_u64());
        const Matrix y = gaussian_sample(m, d, rng.next_u64()).array() + 0.5;
        KernelSpec spec;
        const double s = 0.5 + 2.0 * rng.uniform();
        spec.sigmas = {s / 2, s, 2 * s};
        const double want = testing::mmd2_oracle(x, y, spec.sigmas);
        CHECK(std::abs(mmd_biased(x, y, spec).mmd_squared - want) < 1e-10);
        CHECK(std::abs(mmd_biased(y, x, spec).mmd_squared - want) < 1e-10);
    }
    CHECK_THROWS_AS(mmd_biased(gaussian_sample(3, 2, 1), gaussian_sample(3, 3, 1), KernelSpec{}), DimensionError);
}

TEST_CASE("MMD gradient matches central differences") {
    KernelSpec spec;
    spec.sigmas = {0.5, 1.0, 2.0};
    const Matrix x = gaussian_sample(7, 3, 5);
    const Matrix y = gaussian_sample(9, 3, 6).array() + 0.4;
    const MmdGradient g = mmd_biased_with_gradient(x, y, spec);
    CHECK(g.mmd_squared == doctest::Approx(mmd_biased(x, y, spec).mmd_squared).epsilon(1e-12));
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            Matrix xp = x, xm = x;
            xp(i, j) += h;
            xm(i, j) -= h;
            const double fd = (testing::mmd2_oracle(xp, y, spec.sigmas) - testing::mmd2_oracle(xm, y, spec.sigmas)) / (2 * h);
            CHECK(g.d_x(i, j) == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("permutation test: large shift gives the minimum p-value") {
    const Matrix x = gaussian_sample(40, 2, 1);
    const Matrix y = gaussian_sample(40, 2, 2).array() + 25.0;
    const KernelSpec spec = heuristic_bandwidths(y);
    CHECK(mmd_permutation_test(x, y, spec, 99, 5) == doctest::Approx(1.0 / 100.0));
}

TEST_CASE("permutation test is deterministic for a seed and within [0, 1]") {
    const Matrix x = gaussian_sample(30, 2, 3);
    const Matrix y = gaussian_sample(35, 2, 4);
    const KernelSpec spec = heuristic_bandwidths(y);
    const double p1 = mmd_permutation_test(x, y, spec, 100, 9);
    const double p2 = mmd_permutation_test(x, y, spec, 100, 9);
    CHECK(p1 == p2);
    CHECK(p1 > 0.0);
    CHECK(p1 <= 1.0);
    CHECK_THROWS(mmd_permutation_test(x, y, spec, 0, 9));
}

TEST_CASE("permutation test with a single permutation") {
    // The p-value counts the observed split, so one permutation gives 1/2 or 1.
    const Matrix x = gaussian_sample(10, 2, 3);
    const Matrix y = gaussian_sample(12, 2, 4);
    KernelSpec spec;
    const double p = mmd_permutation_test(x, y, spec, 1, 1);
    CHECK((p == 0.5 || p == 1.0));
}
