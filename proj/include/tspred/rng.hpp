// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace tspred {

// SplitMix64 finalizer. Bijective on 64-bit words.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Counter-based random stream. A stream is a pure function of its key, so
// streams keyed by (seed, index) give identical bytes no matter how many
// threads generate them or in what order.
class RngStream {
public:
    explicit RngStream(std::uint64_t key) : key_(key) {}

    static RngStream keyed(std::uint64_t seed, std::uint64_t index) {
        return RngStream(mix64(mix64(seed) ^ (index + 0x9e3779b97f4a7c15ull)));
    }

    std::uint64_t next_u64() { return mix64(key_ + (++ctr_) * 0x9e3779b97f4a7c15ull); }

    // Uniform in [0, 1) from the top 53 bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t next_below(std::uint64_t n) {
        // Rejection sampling on the top bits keeps the draw unbiased.
        const std::uint64_t limit = ~0ull - (~0ull % n + 1) % n;
        std::uint64_t v = next_u64();
        while (v > limit) v = next_u64();
        return v % n;
    }

private:
    std::uint64_t key_;
    std::uint64_t ctr_ = 0;
};

}  // namespace tspred
