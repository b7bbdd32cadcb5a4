#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace rtadapt {

/// Seeded random stream with a fixed, platform-independent draw sequence.
///
/// The standard-library distributions are implementation defined, so normal
/// and uniform variates are derived here directly from the raw mt19937_64
/// output. Two runs with the same seed produce identical draws on any
/// conforming compiler.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform draw in [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller; draws are consumed in pairs.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double std_dev) { return mean + std_dev * normal(); }

    /// Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n) {
        // Rejection-free modulo is biased for large n; n here is always far
        // below 2^32 so the bias is < 2^-32 and irrelevant for simulation use.
        return engine_() % n;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace rtadapt
