#pragma once

// Deterministic random streams. A master seed fans out into named child
// streams so that consumers (env resets, planner noise, weight init, replay
// sampling, ...) never share state and a run replays bit-identically for a
// fixed seed. Gaussian draws use our own Box-Muller instead of
// std::normal_distribution, whose output differs across standard libraries.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace lpln {

namespace detail {
inline std::uint64_t mix_name(std::uint64_t seed, const std::string& name) {
    std::uint64_t h = 14695981039346656037ull;  // FNV-1a over the name
    for (unsigned char c : name) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h ^ (seed * 0x9e3779b97f4a7c15ull);
}
}  // namespace detail

class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : eng_(seed), seed_(seed) {}

    // Child stream keyed by (this stream's seed, name). Derivation depends
    // only on the seed, not on how many draws the parent has made.
    RngStream child(const std::string& name) const {
        return RngStream(detail::mix_name(seed_, name));
    }

    std::uint64_t bits() { return eng_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int n) {  // in [0, n)
        return static_cast<int>(static_cast<std::uint64_t>(n) * (eng_() >> 32) >> 32);
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return mag * std::cos(2.0 * M_PI * u2);
    }

private:
    std::mt19937_64 eng_;
    std::uint64_t seed_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace lpln
