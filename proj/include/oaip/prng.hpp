// Deterministic PRNG (splitmix64). Used instead of <random> distributions so
// that seeded runs are bit-identical across standard libraries.
#pragma once

#include <cstdint>

namespace oaip {

struct SplitMix64 {
    uint64_t state = 0;

    explicit SplitMix64(uint64_t seed = 0) : state(seed) {}

    uint64_t next() {
        state += 0x9e3779b97f4a7c15ull;
        uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, n); modulo bias is irrelevant at our n.
    uint64_t below(uint64_t n) { return next() % n; }

    // Uniform integer in [lo, hi].
    int64_t range(int64_t lo, int64_t hi) {
        return lo + int64_t(below(uint64_t(hi - lo + 1)));
    }

    // Uniform in [0, 1).
    double unit() { return double(next() >> 11) * 0x1.0p-53; }
};

}  // namespace oaip
