#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace shiftopt {

// All randomness flows through mt19937_64 plus the hand-rolled draws below.
// std::*_distribution is implementation-defined, which would break
// byte-for-byte run-history reproducibility across standard libraries.
using Rng = std::mt19937_64;

// splitmix64 finalizer, used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return mix_seed(mix_seed(a) ^ (0x9e3779b97f4a7c15ULL + b));
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix_seed(mix_seed(a, b) ^ (0xd1b54a32d192ed03ULL + c));
}

// Uniform double in [0, 1) with 53 random bits.
inline double u01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * u01(rng);
}

// Log-uniform over [lo, hi], lo > 0. The exp/log round trip can land a hair
// outside the interval, so the result is clamped back in.
inline double log_uniform(Rng& rng, double lo, double hi) {
    assert(lo > 0.0 && hi >= lo);
    const double v = std::exp(uniform_real(rng, std::log(lo), std::log(hi)));
    return v < lo ? lo : (v > hi ? hi : v);
}

// Uniform integer in [lo, hi], both inclusive.
inline long long uniform_int(Rng& rng, long long lo, long long hi) {
    assert(lo <= hi);
    const std::uint64_t n = static_cast<std::uint64_t>(hi - lo) + 1;
    if (n == 0) return lo;  // full 64-bit span
    // Rejection sampling keeps the draw exactly uniform.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return lo + static_cast<long long>(x % n);
}

// Standard normal via Box-Muller.
inline double normal(Rng& rng) {
    double u1 = u01(rng);
    while (u1 <= 0.0) u1 = u01(rng);
    const double u2 = u01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

// Fisher-Yates; std::shuffle's draw sequence is implementation-defined.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long long>(i) - 1));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace shiftopt
