#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace mmdcal {

/// Seeded generator with platform-independent draws.
///
/// std::mt19937_64 is fully specified by the standard, but the standard
/// distributions are not, so uniform, normal, Bernoulli and index draws are
/// implemented here on top of the raw engine output. This keeps trained
/// parameters and reports byte-identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller (the second variate is cached).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    bool bernoulli(double p) { return uniform() < p; }
    /// Uniform integer in [0, n) by rejection, no modulo bias.
    std::size_t index(std::size_t n);

    /// Fisher-Yates shuffle, swapping position i with a draw from [0, i].
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    std::uint64_t next_u64() { return engine_(); }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Derives an independent child seed from a parent seed and a stream tag
/// (splitmix64 finalizer), so separate stages get decoupled streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// k distinct indices drawn uniformly from [0, n), in draw order.
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k);

/// k indices drawn uniformly from [0, n) with replacement.
std::vector<std::size_t> sample_with_replacement(Rng& rng, std::size_t n, std::size_t k);

}  // namespace mmdcal
