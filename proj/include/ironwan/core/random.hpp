#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace ironwan::core {

/// Seeded generator with platform-independent draws.
///
/// std::mt19937_64 output is fully specified by the standard; the library
/// distributions are not, so the draws below are written out by hand.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n); n > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform01() < p; }

    double normal(double mean, double stddev) {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Exponential with the given mean.
    double exponential(double mean) {
        double u = uniform01();
        while (u <= 0.0) u = uniform01();
        return -mean * std::log(u);
    }

private:
    std::mt19937_64 engine_;
};

/// Stable 64-bit mix for deriving sub-seeds (splitmix64 finaliser).
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace ironwan::core
