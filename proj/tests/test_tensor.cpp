#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "oaip/tensor.hpp"
#include "test_util.hpp"

using namespace oaip;

TEST_CASE("quantize picks the power-of-two scale from the max magnitude") {
    Q8Tensor t = quantize(std::vector<double>{0.5, -1.0, 0.25}, {3});
    CHECK(t.exponent == -7);
    CHECK(t.data[0] == 64);
    CHECK(t.data[1] == -127);  // -128 saturates to the symmetric range
    CHECK(t.data[2] == 32);

    Q8Tensor z = quantize(std::vector<double>(6, 0.0), {2, 3});
    CHECK(z.exponent == 0);
    CHECK(z.all_zero());

    Q8Tensor h = quantize(std::vector<double>{100.0}, {1});
    CHECK(h.exponent == 0);
    CHECK(h.data[0] == 100);
}

TEST_CASE("quantize rejects non-finite input") {
    std::vector<double> with_nan = {1.0, NAN};
    std::vector<double> with_inf = {INFINITY};
    CHECK_THROWS_AS(quantize(with_nan, Shape{2}), std::invalid_argument);
    CHECK_THROWS_AS(quantize(with_inf, Shape{1}), std::invalid_argument);
}

TEST_CASE("quantize bound: elementwise error within half a step") {
    SplitMix64 rng(0x51a1);
    for (int trial = 0; trial < 500; ++trial) {
        size_t n = 1 + rng.below(64);
        double scale = std::ldexp(1.0, int(rng.range(-8, 8)));
        auto x = testutil::random_reals(rng, n, -scale, scale);
        Q8Tensor t = quantize(x, {int(n)});
        double step = std::ldexp(1.0, t.exponent);
        int maxabs = 0;
        for (size_t i = 0; i < n; ++i) {
            double back = double(t.data[i]) * step;
            maxabs = std::max(maxabs, std::abs(int(t.data[i])));
            // the lone saturated extremal element is exempt
            if (std::abs(t.data[i]) == 127 && std::fabs(x[i]) > 127.5 * step) continue;
            CHECK(std::fabs(x[i] - back) <= step / 2 + 1e-15 * scale);
        }
        bool allzero = true;
        for (double v : x) allzero &= (v == 0.0);
        if (!allzero) CHECK(maxabs >= 64);
    }
}

TEST_CASE("effective bit-width") {
    Q32Tensor t({3});
    t.data = {6, -2, 1};
    CHECK(effective_bitwidth(t) == 3);
    t.data = {1, 0, -1};
    CHECK(effective_bitwidth(t) == 0);
    t.data = {0, 0, 0};
    CHECK(effective_bitwidth(t) == 0);
}

TEST_CASE("shift_round uses the highest discarded bit on the magnitude") {
    Q32Tensor t({1}, 2);
    t.data = {37};  // E=6, target 3 -> B=3; discarded 101, carry 1
    Q8Tensor r = shift_round(t, 3);
    CHECK(r.data[0] == 5);
    CHECK(r.exponent == 5);

    t.data = {-37};
    r = shift_round(t, 3);
    CHECK(r.data[0] == -5);
    CHECK(r.exponent == 5);

    t.data = {16};  // E=4 <= 7 -> identity
    r = shift_round(t, 7);
    CHECK(r.data[0] == 16);
    CHECK(r.exponent == 2);
}

TEST_CASE("shift_round equals round-half-away-from-zero, saturated") {
    SplitMix64 rng(0xbeef);
    for (int trial = 0; trial < 20000; ++trial) {
        int64_t v = int64_t(int32_t(rng.next()));
        int b = int(rng.below(25));
        // independent oracle: exact rational rounding via the closed form
        uint64_t mag = v < 0 ? -uint64_t(v) : uint64_t(v);
        uint64_t half = b > 0 ? (uint64_t(1) << (b - 1)) : 0;
        int64_t expect = int64_t((mag + half) >> b);
        if (v < 0) expect = -expect;
        CHECK(shift_round_scalar(v, b) == expect);
    }
}

TEST_CASE("shift_round saturation closure and zero preservation") {
    SplitMix64 rng(0x77);
    for (int trial = 0; trial < 300; ++trial) {
        Q32Tensor t({4, 5}, int(rng.range(-6, 6)));
        for (auto& v : t.data) v = int32_t(rng.next());
        Q8Tensor r = shift_round(t, 7);
        for (int8_t v : r.data) {
            CHECK(v <= 127);
            CHECK(v >= -127);
        }
    }
    Q32Tensor z({3, 3}, 5);
    Q8Tensor r = shift_round(z, 7);
    CHECK(r.all_zero());
    CHECK(r.exponent == 5);
}

TEST_CASE("shift_round exponent compensation bounds the value error") {
    SplitMix64 rng(0x1234);
    for (int trial = 0; trial < 300; ++trial) {
        Q32Tensor t({8}, int(rng.range(-4, 4)));
        for (auto& v : t.data) v = int32_t(rng.range(-2000000, 2000000));
        int b = std::max(effective_bitwidth(t) - 7, 0);
        Q8Tensor r = shift_round(t, 7);
        REQUIRE(r.exponent == t.exponent + b);
        for (size_t i = 0; i < t.size(); ++i) {
            double want = std::ldexp(double(t.data[i]), t.exponent);
            double got = std::ldexp(double(r.data[i]), r.exponent);
            if (int64_t(magnitude(t.data[i])) > int64_t(127) << b) continue;  // saturated
            CHECK(std::fabs(want - got) <= std::ldexp(0.5, t.exponent + b));
        }
    }
}

TEST_CASE("dequantize") {
    Q8Tensor t({1}, -7);
    t.data = {64};
    CHECK(dequantize(t)[0] == doctest::Approx(0.5));
    Q8Tensor z({2}, 3);
    auto d = dequantize(z);
    CHECK(d[0] == 0.0);
    CHECK(d[1] == 0.0);
}

TEST_CASE("align_add identities") {
    Q8Tensor a({1}, 0), b({1}, 0);
    a.data = {3};
    Q8Tensor r = align_add(a, b);
    CHECK(r.data[0] == 3);
    CHECK(r.exponent == 0);

    Q8Tensor c({1}, 1), d({1}, 0);
    c.data = {4};
    d.data = {8};
    r = align_add(c, d);
    CHECK(r.data[0] == 8);
    CHECK(r.exponent == 1);
}

TEST_CASE("align_add error stays within one rounding step per rounding") {
    SplitMix64 rng(0xa11a);
    for (int trial = 0; trial < 2000; ++trial) {
        Q8Tensor a = testutil::random_q8(rng, {6}, -3, 3);
        Q8Tensor b = testutil::random_q8(rng, {6}, -3, 3);
        Q8Tensor r = align_add(a, b);
        int estar = std::max(a.exponent, b.exponent);
        for (size_t i = 0; i < r.size(); ++i) {
            double exact = std::ldexp(double(a.data[i]), a.exponent) +
                           std::ldexp(double(b.data[i]), b.exponent);
            double got = std::ldexp(double(r.data[i]), r.exponent);
            if (std::abs(r.data[i]) == 127 &&
                std::fabs(exact) >= std::ldexp(127.0, r.exponent))
                continue;  // saturated
            double bound = std::ldexp(0.5, estar) + std::ldexp(0.5, r.exponent);
            CHECK(std::fabs(exact - got) <= bound);
        }
    }
}

TEST_CASE("align_add zero preservation") {
    Q8Tensor a({4}, 2), b({4}, -1);
    CHECK(align_add(a, b).all_zero());
}

TEST_CASE("WideScalar comparison aligns exponents") {
    WideScalar a{100, 0}, b{25, 2};
    CHECK(wide_cmp(a, b) == 0);
    // alignment happens at the coarser exponent: 101 rounds back to 25<<2
    CHECK(wide_cmp(WideScalar{101, 0}, b) == 0);
    CHECK(wide_cmp(WideScalar{97, 0}, b) < 0);
    CHECK(wide_cmp(WideScalar{151, 0}, b) > 0);
    CHECK(wide_cmp(WideScalar{-5, 10}, WideScalar{5, 10}) < 0);

    WideScalar s = wide_sub(WideScalar{100, 0}, WideScalar{80, 0});
    CHECK(s.mant == 20);
    CHECK(wide_add(s, WideScalar{-20, 0}).is_zero());
    CHECK(WideScalar{3, 2}.value() == doctest::Approx(12.0));
}
