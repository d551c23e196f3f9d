#pragma once

#include <cstdint>

namespace archsearch {

// Counter-based deterministic RNG (splitmix64). The full generator state is
// (seed, draw count), which is what snapshots persist: restoring seeks the
// stream in O(1) because the internal state after n draws is
// seed + n * kGamma (mod 2^64).
//
// Every stochastic choice in a run (rollouts, shuffles, weight init) goes
// through one instance of this class so that a run is a pure function of its
// seed, independent of platform and standard-library version.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed), draws_(0) {}

    std::uint64_t next_u64() {
        state_ += kGamma;
        ++draws_;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [0, n). Plain modulo: the bias at these ranges is far below
    // anything the tests can see, and the result is platform-stable.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    // Uniform in [lo, hi].
    double next_in(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t draws() const { return draws_; }

    // Reposition the stream at draw `draws` of the given seed.
    void restore(std::uint64_t seed, std::uint64_t draws) {
        seed_ = seed;
        draws_ = draws;
        state_ = seed + draws * kGamma;
    }

private:
    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

    std::uint64_t seed_;
    std::uint64_t state_;
    std::uint64_t draws_;
};

}  // namespace archsearch
