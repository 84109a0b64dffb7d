#include "oaip/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace oaip {

PatchGrid make_grid(int height, int width, int patch) {
    if (patch < 1) throw std::invalid_argument("patch size must be positive");
    PatchGrid g;
    g.patch = patch;
    g.rows = height / patch;
    g.cols = width / patch;
    return g;
}

std::vector<double> patch_means(const RasterImage& img, const PatchGrid& grid) {
    std::vector<double> means(size_t(grid.count()), 0.0);
    const double denom = double(grid.patch) * grid.patch * img.channels;
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) {
            double sum = 0.0;
            for (int y = 0; y < grid.patch; ++y) {
                const float* row =
                    img.pixels.data() +
                    (size_t(r * grid.patch + y) * img.width + size_t(c) * grid.patch) *
                        img.channels;
                for (int i = 0; i < grid.patch * img.channels; ++i) sum += row[i];
            }
            means[size_t(r) * grid.cols + c] = sum / denom;
        }
    return means;
}

std::vector<double> affinity(const std::vector<double>& means) {
    const int q = int(means.size());
    if (q < 1) throw std::invalid_argument("affinity: empty grid");
    double h = 0.0;
    for (int i = 0; i < q; ++i)
        for (int j = i + 1; j < q; ++j) h = std::max(h, std::fabs(means[i] - means[j]));
    std::vector<double> a(size_t(q) * q, 1.0);
    if (h == 0.0) return a;  // constant image: no dissimilarity structure
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j) {
            double d = std::fabs(means[size_t(i)] - means[size_t(j)]);
            a[size_t(i) * q + j] = std::exp(-(d * d) / (h * h));
        }
    return a;
}

std::vector<double> change_scores(const std::vector<double>& a_pre,
                                  const std::vector<double>& a_post, int q) {
    if (a_pre.size() != size_t(q) * q || a_post.size() != size_t(q) * q)
        throw std::invalid_argument("change_scores: affinity size mismatch");
    std::vector<double> alpha(size_t(q), 0.0);
    for (int i = 0; i < q; ++i) {
        double s = 0.0;
        for (int j = 0; j < q; ++j)
            s += std::fabs(a_pre[size_t(i) * q + j] - a_post[size_t(i) * q + j]);
        alpha[size_t(i)] = s;
    }
    return alpha;
}

namespace {
Q8Tensor extract_patch(const RasterImage& img, const PatchGrid& g, int patch_index) {
    const int r = patch_index / g.cols, c = patch_index % g.cols;
    const int s = g.patch;
    std::vector<float> block(size_t(3) * s * s);
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x)
                block[(size_t(ch) * s + y) * s + x] =
                    img.at(r * s + y, c * s + x, ch);
    return quantize(block, Shape{3, s, s});
}
}  // namespace

SampleSet select_samples(const std::vector<double>& scores, int num_pos, int num_neg,
                         const RasterImage& pre, const RasterImage& post,
                         const PatchGrid& grid) {
    const int q = grid.count();
    if (q == 0) throw std::invalid_argument("select_samples: no full patch fits the image");
    if (int(scores.size()) != q)
        throw std::invalid_argument("select_samples: score count does not match grid");

    std::vector<int> order(static_cast<size_t>(q), 0);
    std::iota(order.begin(), order.end(), 0);

    std::vector<int> by_high = order;
    std::sort(by_high.begin(), by_high.end(), [&](int a, int b) {
        if (scores[size_t(a)] != scores[size_t(b)]) return scores[size_t(a)] > scores[size_t(b)];
        return a < b;
    });
    std::vector<int> by_low = order;
    std::sort(by_low.begin(), by_low.end(), [&](int a, int b) {
        if (scores[size_t(a)] != scores[size_t(b)]) return scores[size_t(a)] < scores[size_t(b)];
        return a < b;
    });

    SampleSet set;
    set.grid = grid;
    const int take_pos = std::min(num_pos, q);
    std::vector<uint8_t> is_pos(size_t(q), 0);
    for (int i = 0; i < take_pos; ++i) is_pos[size_t(by_high[size_t(i)])] = 1;
    for (int i = 0; i < take_pos; ++i) {
        int p = by_high[size_t(i)];
        set.samples.push_back(
            {p, true, extract_patch(pre, grid, p), extract_patch(post, grid, p)});
    }
    for (int i = 0; i < q && set.num_negative < num_neg; ++i) {
        int p = by_low[size_t(i)];
        if (is_pos[size_t(p)]) continue;
        set.samples.push_back(
            {p, false, extract_patch(pre, grid, p), extract_patch(post, grid, p)});
        ++set.num_negative;
    }
    set.num_positive = take_pos;
    return set;
}

}  // namespace oaip
