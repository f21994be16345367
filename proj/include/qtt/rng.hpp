#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace qtt {

// Seeded generator with explicitly defined variate transforms. The std:: distributions
// are implementation-defined, which would break cross-platform reproducibility.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1].
    double uniform_open_low() { return 1.0 - uniform(); }

    double exponential(double rate) { return -std::log(uniform_open_low()) / rate; }

    // Box-Muller; the second variate of each pair is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double radius = std::sqrt(-2.0 * std::log(uniform_open_low()));
        const double angle = 2.0 * std::numbers::pi * uniform();
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    std::uint64_t next_u64() { return engine_(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Derives an independent stream seed from a base seed and a stream tag (splitmix64 finaliser).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace qtt
