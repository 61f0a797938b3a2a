#pragma once

#include <cmath>
#include <cstdint>

namespace ctcn {

// Counter-based random stream. A draw is a pure function of (key, counter),
// so identical seeds and call sequences produce identical values on every
// platform, and independent sub-streams can be split off without sharing
// state between threads.
class RngStream {
public:
    RngStream() = default;
    explicit RngStream(std::uint64_t seed) : key_(mix(seed)) {}

    static std::uint64_t mix(std::uint64_t z) {
        // splitmix64 finalizer
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Independent stream derived from this one; does not advance the parent.
    RngStream derive(std::uint64_t salt) const {
        RngStream s;
        s.key_ = mix(key_ ^ mix(salt + 0x632be59bd9b4e019ULL));
        return s;
    }

    std::uint64_t next_u64() { return mix(key_ ^ mix(counter_++)); }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller; consumes exactly two draws per call.
    double next_normal() {
        double u1 = double((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }
    void set_counter(std::uint64_t c) { counter_ = c; }

private:
    std::uint64_t key_ = 0x9e3779b97f4a7c15ULL;
    std::uint64_t counter_ = 0;
};

}  // namespace ctcn
