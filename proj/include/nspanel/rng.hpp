#pragma once

#include <cmath>
#include <cstdint>

// Counter-based pseudorandom generation.
//
// All randomness in this library is derived from SplitMix64 evaluated in
// counter form: the k-th raw output of a stream with seed s is
//
//     out(s, k) = finalize(s + (k + 1) * 0x9E3779B97F4A7C15)
//
// where finalize is the usual SplitMix64 xor-multiply finalizer. This makes
// every draw a pure function of (seed, counter), so panels and Monte Carlo
// replications can be produced in any order, on any number of threads, with
// bit-identical results.
//
// Normal variates use the Box-Muller cosine branch: the j-th normal of a
// stream consumes raw outputs 2j and 2j+1. Both the generator and the
// normal method are frozen; changing either changes every generated panel.

namespace nspanel::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t finalize64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Raw 64-bit output at position `index` of the stream with the given seed.
constexpr std::uint64_t bits_at(std::uint64_t seed, std::uint64_t index) noexcept {
    return finalize64(seed + (index + 1) * kGolden);
}

/// Derives a child seed from (master, a, b). Used for per-replication
/// streams: replication r at grid point k gets derive_seed(master, k, r).
/// Fixed mixing function; part of the reproducibility contract.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                    std::uint64_t b) noexcept {
    return bits_at(bits_at(master, a), b);
}

/// Maps 64 random bits to a double in (0, 1]. The lower end is bounded away
/// from 0 (minimum 2^-54), so log(uniform01(bits)) is always finite; the top
/// value rounds up to exactly 1.
inline double uniform01(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// j-th standard normal variate of the stream with the given seed.
/// Box-Muller cosine branch on raw outputs (2j, 2j+1).
inline double normal_at(std::uint64_t seed, std::uint64_t j) noexcept {
    const double u1 = uniform01(bits_at(seed, 2 * j));
    const double u2 = uniform01(bits_at(seed, 2 * j + 1));
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace nspanel::rng
