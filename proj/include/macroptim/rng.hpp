#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace macroptim {

// Deterministic PRNG stack, specified by algorithm rather than by library so
// that streams are reproducible from other languages:
//
//   * SplitMix64 (Steele/Lea/Flood 2014) seeds and derives sub-streams.
//   * xoshiro256** (Blackman/Vigna 2018) generates the main stream; its four
//     256-bit state words are filled from consecutive SplitMix64 outputs.
//   * Uniform doubles in [0,1) take the top 53 bits: (x >> 11) * 2^-53.
//   * Gaussians use the trigonometric Box-Muller transform on consecutive
//     uniforms u1, u2 with u1 forced into (0,1):
//       z0 = sqrt(-2 ln u1) cos(2 pi u2),  z1 = sqrt(-2 ln u1) sin(2 pi u2),
//     and z1 is cached for the next call.

struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
};

// Combines a base seed with a stream index into an independent sub-seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    SplitMix64 sm(seed ^ (0xA0761D6478BD642FULL * (index + 1)));
    return sm.next();
}

class Xoshiro256StarStar {
  public:
    explicit Xoshiro256StarStar(std::uint64_t seed) {
        SplitMix64 sm(seed);
        for (auto &word : state_) word = sm.next();
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double gaussian() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        const double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53; // ln(0) guard
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phi = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(phi);
        has_cached_ = true;
        return r * std::cos(phi);
    }

    // Uniform integer in [0, n) by rejection-free modulo of the top bits;
    // slight modulo bias is irrelevant for batch indexing at desk scale.
    std::uint64_t below(std::uint64_t n) { return next() % n; }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4] = {};
    double cached_ = 0.0;
    bool has_cached_ = false;
};

} // namespace macroptim
