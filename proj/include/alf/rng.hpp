#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace alf {

// Deterministic RNG. Distributions are hand-rolled on top of the raw engine
// because std::normal_distribution output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Derives an independent stream from (seed, stream ids). Used so that
    // per-image / per-step work is reproducible regardless of scheduling.
    static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
        std::uint64_t h = seed;
        h ^= a + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        h ^= b + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        return Rng(h);
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return engine_() % n; }

    // Standard normal via Box-Muller; caches the second variate.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace alf
