#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "oaip/sampling.hpp"
#include "test_util.hpp"

using namespace oaip;

namespace {
RasterImage make_image(int h, int w, float fill = 0.0f) {
    RasterImage img;
    img.height = h;
    img.width = w;
    img.channels = 3;
    img.pixels.assign(size_t(h) * w * 3, fill);
    return img;
}

RasterImage random_image(SplitMix64& rng, int h, int w) {
    RasterImage img = make_image(h, w);
    for (auto& p : img.pixels) p = float(255.0 * rng.unit());
    return img;
}
}  // namespace

TEST_CASE("patch means") {
    RasterImage img = make_image(8, 8, 4.0f);
    PatchGrid g = make_grid(8, 8, 4);
    CHECK(g.count() == 4);
    for (double m : patch_means(img, g)) CHECK(m == 4.0);

    // half zeros, half tens within one patch
    RasterImage mix = make_image(4, 4);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 4; ++x)
            for (int c = 0; c < 3; ++c) mix.pixels[(size_t(y) * 4 + x) * 3 + c] = 10.0f;
    PatchGrid g1 = make_grid(4, 4, 4);
    CHECK(patch_means(mix, g1)[0] == 5.0);

    SplitMix64 rng(0x9a);
    RasterImage r = random_image(rng, 12, 16);
    PatchGrid gr = make_grid(12, 16, 4);
    auto means = patch_means(r, gr);
    // independent brute force in the same scan order
    for (int pr = 0; pr < gr.rows; ++pr)
        for (int pc = 0; pc < gr.cols; ++pc) {
            double sum = 0;
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 4; ++x)
                    for (int c = 0; c < 3; ++c) sum += r.at(pr * 4 + y, pc * 4 + x, c);
            CHECK(means[size_t(pr) * gr.cols + pc] == sum / 48.0);
        }
}

TEST_CASE("grid crops the remainder") {
    PatchGrid g = make_grid(70, 129, 32);
    CHECK(g.rows == 2);
    CHECK(g.cols == 4);
}

TEST_CASE("affinity worked examples") {
    std::vector<double> m = {0.0, 10.0};
    auto a = affinity(m);
    CHECK(a[0] == 1.0);
    CHECK(a[3] == 1.0);
    CHECK(a[1] == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(a[1] == a[2]);

    auto c = affinity(std::vector<double>(5, 3.25));  // constant image
    for (double v : c) CHECK(v == 1.0);
}

TEST_CASE("affinity is symmetric, unit-diagonal, within (0,1], shift-invariant") {
    SplitMix64 rng(0x5a);
    std::vector<double> m(9);
    for (auto& v : m) v = double(rng.range(0, 255));  // exact integers: shift stays exact
    auto a = affinity(m);
    for (int i = 0; i < 9; ++i) {
        CHECK(a[size_t(i) * 9 + i] == 1.0);
        for (int j = 0; j < 9; ++j) {
            CHECK(a[size_t(i) * 9 + j] == a[size_t(j) * 9 + i]);
            CHECK(a[size_t(i) * 9 + j] > 0.0);
            CHECK(a[size_t(i) * 9 + j] <= 1.0);
        }
    }
    std::vector<double> shifted = m;
    for (auto& v : shifted) v += 64.0;
    CHECK(affinity(shifted) == a);
}

TEST_CASE("change scores") {
    std::vector<double> m = {0.0, 10.0};
    auto a_pre = affinity(m);
    std::vector<double> a_post(4, 1.0);
    auto alpha = change_scores(a_pre, a_post, 2);
    CHECK(alpha[0] == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));

    CHECK(change_scores(a_pre, a_pre, 2) == std::vector<double>{0.0, 0.0});

    SplitMix64 rng(0x77);
    std::vector<double> p(25), q(25);
    for (auto& v : p) v = rng.unit();
    for (auto& v : q) v = rng.unit();
    auto s = change_scores(p, q, 5);
    for (int i = 0; i < 5; ++i) {
        double want = 0;
        for (int j = 0; j < 5; ++j) want += std::fabs(p[size_t(i) * 5 + j] - q[size_t(i) * 5 + j]);
        CHECK(s[size_t(i)] == want);
    }
}

TEST_CASE("sample selection ranks, breaks ties by index, keeps sets disjoint") {
    SplitMix64 rng(0xd1);
    RasterImage pre = random_image(rng, 32, 48);
    RasterImage post = random_image(rng, 32, 48);
    PatchGrid g = make_grid(32, 48, 16);  // 2x3 = 6 patches

    SampleSet s = select_samples({0.1, 0.9, 0.5, 0.2, 0.0, 0.4}, 1, 1, pre, post, g);
    REQUIRE(s.num_positive == 1);
    REQUIRE(s.num_negative == 1);
    CHECK(s.samples[0].patch_index == 1);
    CHECK(s.samples[0].positive);
    CHECK(s.samples[1].patch_index == 4);
    CHECK(!s.samples[1].positive);
    CHECK(s.samples[0].pre.shape == Shape{3, 16, 16});

    // all-equal scores: positions resolved by ascending index, disjoint
    SampleSet t = select_samples(std::vector<double>(6, 1.0), 2, 3, pre, post, g);
    CHECK(t.samples[0].patch_index == 0);
    CHECK(t.samples[1].patch_index == 1);
    CHECK(t.samples[2].patch_index == 2);
    CHECK(t.samples[3].patch_index == 3);
    CHECK(t.samples[4].patch_index == 4);

    // more requested than available
    SampleSet u = select_samples(std::vector<double>(6, 1.0), 5, 5, pre, post, g);
    CHECK(u.num_positive == 5);
    CHECK(u.num_negative == 1);

    // each sample block is quantized on its own exponent
    CHECK(!s.samples[0].pre.all_zero());
}

TEST_CASE("empty grid is an error") {
    RasterImage small = make_image(8, 8);
    PatchGrid g = make_grid(8, 8, 16);
    CHECK(g.count() == 0);
    CHECK_THROWS_AS(select_samples({}, 1, 1, small, small, g), std::invalid_argument);
}
