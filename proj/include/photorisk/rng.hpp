#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace photorisk {

// Deterministic 64-bit PRNG (splitmix64). Gaussian draws use the
// Box-Muller transform without caching the spare value, so every draw
// sequence is a pure function of the seed and the call order. This is
// what makes datasets, weight init and training trajectories
// bit-reproducible, and it keeps the stream portable to other languages.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1) with 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Unbiased integer in [0,n), n > 0. Rejection keeps the modulo fair.
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    double normal(double mean, double stddev) {
        // u1 in (0,1] keeps the log finite; two uniforms per draw, no spare.
        const double u1 = 1.0 - next_double();
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
};

}  // namespace photorisk
