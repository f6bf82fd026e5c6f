#pragma once

#include "mmdcal/numerics.hpp"

#include <cstdint>

namespace mmdcal {

/// Seeded synthetic source/target pairs with known structure.
struct BenchmarkPair {
    Matrix source;
    Matrix target;
};

/// n x d matrix of i.i.d. standard normals.
Matrix gaussian_sample(std::size_t n, std::size_t d, std::uint64_t seed);

/// source ~ N(0, I_d); target is an independent N(0, I_d) draw plus `shift`
/// on the first coordinate.
BenchmarkPair shift_benchmark(std::size_t n, std::size_t d, double shift, std::uint64_t seed);

/// Equal-weight mixture of N(-1.5 * 1, I) and N(+1.5 * 1, I) in d dimensions.
Matrix mixture_sample(std::size_t n, std::size_t d, std::uint64_t seed);

/// x + 0.3 tanh(x), coordinatewise.
Matrix warp(const Matrix& x);

/// source is a two-component mixture; target = warp(source), row for row.
BenchmarkPair warp_benchmark(std::size_t n, std::size_t d, std::uint64_t seed);

/// Four samples with additive patient and day effects: sample (p, t) is a
/// fresh draw of patient p's mixture plus the day-t offset.
struct IndirectBenchmark {
    Matrix p1d1, p2d1, p2d2, p1d2;
};
IndirectBenchmark indirect_benchmark(std::size_t n, std::size_t d, std::uint64_t seed);

}  // namespace mmdcal
