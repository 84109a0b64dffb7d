// Scalar primitives for block-exponent int8 arithmetic: effective bit-width,
// shift-and-round (highest discarded bit decides the carry, applied to the
// magnitude and re-signed), saturation, and exact rounded division.
#pragma once

#include <bit>
#include <cassert>
#include <cstdint>
#include <cstdlib>

namespace oaip {

inline constexpr int kMantMax = 127;  // symmetric int8 range; -128 excluded

// ceil(log2(v)) for v >= 1; 0 for v == 0.
inline int effective_bits(uint64_t v) {
    if (v <= 1) return 0;
    return std::bit_width(v - 1);
}

inline uint64_t magnitude(int64_t v) {
    return v < 0 ? ~uint64_t(v) + 1 : uint64_t(v);
}

// Right-shift |v| by b bits, add the highest discarded bit, re-sign.
// Equals round-half-away-from-zero(v / 2^b).
inline int64_t shift_round_scalar(int64_t v, int b) {
    if (b <= 0 || v == 0) return v;
    uint64_t mag = magnitude(v);
    uint64_t carry = (b - 1 < 64) ? ((mag >> (b - 1)) & 1u) : 0;
    uint64_t q = (b < 64) ? (mag >> b) : 0;
    int64_t r = int64_t(q + carry);
    return v < 0 ? -r : r;
}

inline int8_t sat_i8(int64_t v) {
    if (v > kMantMax) return int8_t(kMantMax);
    if (v < -kMantMax) return int8_t(-kMantMax);
    return int8_t(v);
}

// round-half-away-from-zero(num / den), den > 0. |num| must stay below 2^62.
inline int64_t round_div(int64_t num, int64_t den) {
    assert(den > 0);
    uint64_t n = magnitude(num);
    uint64_t q = (2 * n + uint64_t(den)) / (2 * uint64_t(den));
    return num < 0 ? -int64_t(q) : int64_t(q);
}

// Exact positive rational p/q with 0 < p < q, used for prune rates and the
// rollback tolerance so threshold comparisons stay integer-exact.
struct Rational {
    int64_t num = 0;
    int64_t den = 1;

    double value() const { return double(num) / double(den); }
};

}  // namespace oaip
