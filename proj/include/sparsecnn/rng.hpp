#pragma once

#include <cstdint>
#include <random>

namespace sparsecnn {

// Deterministic helpers around std::mt19937_64. Distributions are hand-rolled
// so that a fixed seed produces the same stream on every standard library.

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    return std::mt19937_64(splitmix64(s));
}

/// Independent stream for a (seed, a, b) triple, e.g. (master, epoch, sample).
inline std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = seed;
    std::uint64_t x = splitmix64(s);
    s = x ^ (a * 0xff51afd7ed558ccdull + 1);
    x = splitmix64(s);
    s = x ^ (b * 0xc4ceb9fe1a85ec53ull + 1);
    return std::mt19937_64(splitmix64(s));
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_double(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_double(rng);
}

/// Uniform integer in [lo, hi] inclusive, rejection-debiased.
inline std::int64_t uniform_int(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(rng()); // full 64-bit range
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % span + 1) % span;
    std::uint64_t x = rng();
    while (x > limit) x = rng();
    return lo + static_cast<std::int64_t>(x % span);
}

} // namespace sparsecnn
