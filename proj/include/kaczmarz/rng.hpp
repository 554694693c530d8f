#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace kaczmarz {

/// One step of the splitmix64 mixer.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for task (cell, trial) derived from a root seed. Each index is mixed
/// separately so adding cells or trials never changes the seed of an
/// existing (cell, trial) pair.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t cell,
                                    std::uint64_t trial) noexcept {
    return splitmix64(splitmix64(splitmix64(root) ^ cell) ^ (trial + 0x632be59bd9b4e019ULL));
}

/// Seeded generator with a platform-independent output sequence.
///
/// The standard distributions are implementation-defined, so uniforms are
/// taken from the top 53 bits of mt19937_64 and normals come from the basic
/// Box-Muller transform (both outputs used, in order).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 == 0.0);
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace kaczmarz
