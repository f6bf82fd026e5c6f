#include "mmdcal/benchmarks.hpp"
#include "mmdcal/errors.hpp"
#include "mmdcal/numerics.hpp"
#include "mmdcal/random.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace mmdcal;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
    Eigen::Index i = 0;
    for (const auto& r : rows) {
        Eigen::Index j = 0;
        for (double v : r) m(i, j++) = v;
        ++i;
    }
    return m;
}

}  // namespace

TEST_CASE("pairwise squared distances") {
    CHECK(pairwise_sq_distances(mat({{0, 0}}), mat({{3, 4}}))(0, 0) == 25.0);
    CHECK(pairwise_sq_distances(mat({{1, 2}}), mat({{1, 2}}))(0, 0) == 0.0);
    const Matrix d = pairwise_sq_distances(mat({{1, 0}, {0, 1}}), mat({{0, 0}}));
    CHECK(d.rows() == 2);
    CHECK(d(0, 0) == 1.0);
    CHECK(d(1, 0) == 1.0);
    CHECK_THROWS_AS(pairwise_sq_distances(mat({{1, 2}}), mat({{1, 2, 3}})), DimensionError);
}

TEST_CASE("pairwise distances of a set with itself are symmetric with zero diagonal") {
    const Matrix a = gaussian_sample(30, 4, 7);
    const Matrix d = pairwise_sq_distances(a, a);
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        CHECK(d(i, i) == 0.0);
        for (Eigen::Index j = 0; j < d.cols(); ++j) {
            CHECK(d(i, j) == d(j, i));
            CHECK(d(i, j) >= 0.0);
        }
    }
}

TEST_CASE("knn mean distance") {
    const Vector a = knn_mean_distance(mat({{0}, {1}, {2}}), 1);
    CHECK(a(0) == 1.0);
    CHECK(a(1) == 1.0);
    CHECK(a(2) == 1.0);

    const Vector b = knn_mean_distance(mat({{0}, {1}, {3}}), 2);
    CHECK(b(0) == doctest::Approx(2.0));
    CHECK(b(1) == doctest::Approx(1.5));
    CHECK(b(2) == doctest::Approx(2.5));

    CHECK_THROWS_AS(knn_mean_distance(gaussian_sample(25, 2, 1), 25), DataError);
}

TEST_CASE("knn mean distance matches brute force and is permutation-equivariant") {
    const Matrix p = gaussian_sample(60, 3, 11);
    const Vector got = knn_mean_distance(p, 7);
    const auto want = testing::knn_mean_oracle(p, 7);
    for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(got(i) == doctest::Approx(want[static_cast<std::size_t>(i)]).epsilon(1e-12));

    Rng rng(3);
    std::vector<std::size_t> perm = sample_without_replacement(rng, 60, 60);
    const Vector shuffled = knn_mean_distance(take_rows(p, perm), 7);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        CHECK(shuffled(static_cast<Eigen::Index>(i)) == doctest::Approx(got(static_cast<Eigen::Index>(perm[i]))).epsilon(1e-12));
    }
}

TEST_CASE("PCA of rank-1 data on the diagonal") {
    Matrix line(6, 2);
    for (int i = 0; i < 6; ++i) line.row(i) << i - 2.5, i - 2.5;
    const PcaModel m = fit_pca(line, 1);
    CHECK(m.components(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(m.components(1, 0) == doctest::Approx(1.0 / std::sqrt(2.0)));
    // The second direction has zero variance, so asking for it fails.
    CHECK_THROWS_AS(fit_pca(line, 2), DataError);

    const Matrix scores = project(m, line);
    const Matrix back = reconstruct(m, scores);
    CHECK((back - line).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("PCA rejects out-of-range k") {
    const Matrix x = gaussian_sample(10, 3, 1);
    CHECK_THROWS_AS(fit_pca(x, 0), DataError);
    CHECK_THROWS_AS(fit_pca(x, 4), DataError);
    CHECK_THROWS_AS(fit_pca(gaussian_sample(3, 5, 1), 3), DataError);
}

TEST_CASE("PCA of an isotropic sample has comparable variances") {
    const PcaModel m = fit_pca(gaussian_sample(10000, 2, 5), 2);
    CHECK(m.explained_variance(0) >= m.explained_variance(1));
    CHECK(m.explained_variance(1) / m.explained_variance(0) > 0.8);
}

TEST_CASE("PCA components are orthonormal and full reconstruction is lossless") {
    const Matrix x = gaussian_sample(200, 6, 9) * gaussian_sample(6, 6, 10);
    const PcaModel m = fit_pca(x, 6);
    const Eigen::MatrixXd gram = m.components.transpose() * m.components;
    CHECK((gram - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-8);
    for (Eigen::Index c = 1; c < m.explained_variance.size(); ++c) {
        CHECK(m.explained_variance(c) <= m.explained_variance(c - 1));
    }
    CHECK((reconstruct(m, project(m, x)) - x).cwiseAbs().maxCoeff() < 1e-6);

    // Largest-magnitude entry of each component is positive.
    for (Eigen::Index c = 0; c < m.components.cols(); ++c) {
        Eigen::Index arg;
        m.components.col(c).cwiseAbs().maxCoeff(&arg);
        CHECK(m.components(arg, c) > 0.0);
    }
}

TEST_CASE("projection of the mean is zero and reconstruction error falls with k") {
    const Matrix x = gaussian_sample(100, 5, 21) * gaussian_sample(5, 5, 22);
    double previous = INFINITY;
    for (std::size_t k = 1; k <= 5; ++k) {
        const PcaModel m = fit_pca(x, k);
        CHECK(project(m, Matrix(m.mean)).cwiseAbs().maxCoeff() < 1e-12);
        const double err = (reconstruct(m, project(m, x)) - x).squaredNorm();
        CHECK(err <= previous + 1e-9);
        previous = err;
    }
    CHECK_THROWS_AS(project(fit_pca(x, 2), gaussian_sample(3, 4, 1)), DimensionError);
}

TEST_CASE("median uses the mean of the central pair for even length") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
    CHECK_THROWS(median({}));
}

TEST_CASE("rng draws are reproducible and in range") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng r(1);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(r.index(7) < 7);
    }
    const auto s = sample_without_replacement(r, 50, 50);
    std::vector<std::size_t> sorted = s;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 50; ++i) CHECK(sorted[i] == i);
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
}

TEST_CASE("normal draws have unit variance") {
    Rng r(8);
    double s = 0.0, ss = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double v = r.normal();
        s += v;
        ss += v * v;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(ss / n == doctest::Approx(1.0).epsilon(0.01));
}
