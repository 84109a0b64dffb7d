#include "oaip/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oaip {

RealMap layer_difference(const Q8Tensor& f1, const Q8Tensor& f2) {
    check_same_shape(f1, f2, "layer_difference");
    const int C = f1.shape[0], H = f1.shape[1], W = f1.shape[2];
    const int e = std::max(f1.exponent, f2.exponent);
    const int s1 = e - f1.exponent, s2 = e - f2.exponent;
    RealMap d;
    d.height = H;
    d.width = W;
    d.values.assign(size_t(H) * W, 0.0);
    const double scale = std::ldexp(1.0, 2 * e) / C;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            int64_t sum = 0;
            for (int c = 0; c < C; ++c) {
                size_t i = (size_t(c) * H + y) * W + x;
                int64_t diff =
                    shift_round_scalar(f1.data[i], s1) - shift_round_scalar(f2.data[i], s2);
                sum += diff * diff;
            }
            d.at(y, x) = double(sum) * scale;
        }
    return d;
}

RealMap bilinear_resize(const RealMap& src, int out_h, int out_w) {
    RealMap dst;
    dst.height = out_h;
    dst.width = out_w;
    dst.values.assign(size_t(out_h) * out_w, 0.0);
    const double sy = double(src.height) / out_h;
    const double sx = double(src.width) / out_w;
    for (int y = 0; y < out_h; ++y) {
        double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(src.height - 1));
        int y0 = int(fy);
        int y1 = std::min(y0 + 1, src.height - 1);
        double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(src.width - 1));
            int x0 = int(fx);
            int x1 = std::min(x0 + 1, src.width - 1);
            double wx = fx - x0;
            dst.at(y, x) = (1 - wy) * ((1 - wx) * src.at(y0, x0) + wx * src.at(y0, x1)) +
                           wy * ((1 - wx) * src.at(y1, x0) + wx * src.at(y1, x1));
        }
    }
    return dst;
}

namespace {
RealMap fuse_at_base(const RealMap& d3, const RealMap& d4, const RealMap& d5,
                     const std::array<int, 3>& alpha) {
    RealMap u4 = bilinear_resize(d4, d3.height, d3.width);
    RealMap u5 = bilinear_resize(d5, d3.height, d3.width);
    RealMap out = d3;
    for (size_t i = 0; i < out.values.size(); ++i)
        out.values[i] =
            alpha[0] * d3.values[i] + alpha[1] * u4.values[i] + alpha[2] * u5.values[i];
    return out;
}
}  // namespace

RealMap fuse(const RealMap& d3, const RealMap& d4, const RealMap& d5,
             const std::array<int, 3>& alpha, int out_h, int out_w) {
    if (d4.height > d3.height || d5.height > d4.height)
        throw std::invalid_argument("fuse: maps must come in decreasing resolution");
    return bilinear_resize(fuse_at_base(d3, d4, d5, alpha), out_h, out_w);
}

int otsu_threshold(const std::array<int64_t, 256>& histogram) {
    int64_t total = 0, wsum = 0;
    for (int i = 0; i < 256; ++i) {
        total += histogram[size_t(i)];
        wsum += int64_t(i) * histogram[size_t(i)];
    }
    // between-class variance ~ (s0*c1 - s1*c0)^2 / (c0*c1), compared exactly
    // as quotient+remainder (exact for any pixel count below ~2^27)
    __int128 best_q = -1, best_r = 0;
    int64_t best_den = 1;
    int best_t = 0;
    int64_t c0 = 0, s0 = 0;
    for (int t = 0; t < 255; ++t) {
        c0 += histogram[size_t(t)];
        s0 += int64_t(t) * histogram[size_t(t)];
        const int64_t c1 = total - c0;
        if (c0 == 0 || c1 == 0) continue;
        const int64_t s1 = wsum - s0;
        const __int128 num = __int128(s0) * c1 - __int128(s1) * c0;
        const int64_t den = c0 * c1;
        const __int128 sq = num * num;
        const __int128 q = sq / den;
        const __int128 r = sq % den;
        if (q > best_q || (q == best_q && r * best_den > best_r * den)) {
            best_q = q;
            best_r = r;
            best_den = den;
            best_t = t;
        }
    }
    return best_q < 0 ? 0 : best_t;
}

OtsuResult otsu(const RealMap& map) {
    OtsuResult res;
    res.binary.assign(map.values.size(), 0);
    if (map.values.empty()) return res;
    double lo = map.values[0], hi = map.values[0];
    for (double v : map.values) {
        if (!std::isfinite(v)) throw std::invalid_argument("otsu: non-finite difference value");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi == lo) return res;  // constant map: everything unchanged

    std::vector<uint8_t> bins(map.values.size());
    std::array<int64_t, 256> hist{};
    const double scale = 255.0 / (hi - lo);
    for (size_t i = 0; i < map.values.size(); ++i) {
        int b = int(std::lround((map.values[i] - lo) * scale));
        bins[i] = uint8_t(std::clamp(b, 0, 255));
        ++hist[size_t(bins[i])];
    }
    res.threshold = otsu_threshold(hist);
    for (size_t i = 0; i < bins.size(); ++i) res.binary[i] = bins[i] > res.threshold ? 1 : 0;
    return res;
}

MetricsReport metrics(const std::vector<uint8_t>& predicted, const std::vector<uint8_t>& truth) {
    if (predicted.size() != truth.size())
        throw std::invalid_argument("metrics: prediction and ground truth differ in size");
    MetricsReport m;
    m.total = int64_t(predicted.size());
    for (size_t i = 0; i < predicted.size(); ++i) {
        const bool p = predicted[i] != 0, t = truth[i] != 0;
        m.detected_changed += p;
        m.true_changed += t;
        m.correct_changed += (p && t);
        m.correct_unchanged += (!p && !t);
    }
    const double nt = double(m.total);
    m.accuracy = double(m.correct_changed + m.correct_unchanged) / nt;
    m.precision = m.detected_changed ? double(m.correct_changed) / double(m.detected_changed) : 0.0;
    m.recall = m.true_changed ? double(m.correct_changed) / double(m.true_changed) : 0.0;
    m.expected_agreement =
        (double(m.detected_changed) * double(m.true_changed) +
         double(m.total - m.detected_changed) * double(m.total - m.true_changed)) /
        (nt * nt);
    m.kappa = m.expected_agreement == 1.0
                  ? 0.0
                  : (m.accuracy - m.expected_agreement) / (1.0 - m.expected_agreement);
    return m;
}

namespace {

Q8Tensor quantize_block_chw(const RasterImage& img, int y0, int x0, int h, int w) {
    std::vector<float> block(size_t(3) * h * w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                block[(size_t(c) * h + y) * w + x] = img.at(y0 + y, x0 + x, c);
    return quantize(block, Shape{3, h, w});
}

RealMap fused_base_for_window(const SiameseState& net, const RasterImage& pre,
                              const RasterImage& post, const std::array<int, 3>& alpha,
                              int y0, int x0, int h, int w) {
    Q8Tensor q1 = quantize_block_chw(pre, y0, x0, h, w);
    Q8Tensor q2 = quantize_block_chw(post, y0, x0, h, w);
    BranchForward f1 = forward_branch(net, Branch::t1, q1);
    BranchForward f2 = forward_branch(net, Branch::t2, q2);
    RealMap d3 = layer_difference(f1.taps[0].frn_out, f2.taps[0].frn_out);
    RealMap d4 = layer_difference(f1.taps[1].frn_out, f2.taps[1].frn_out);
    RealMap d5 = layer_difference(f1.taps[2].frn_out, f2.taps[2].frn_out);
    return fuse_at_base(d3, d4, d5, alpha);
}

}  // namespace

InferenceResult infer_change_map(const SiameseState& net, const RasterImage& pre,
                                 const RasterImage& post, const std::array<int, 3>& alpha,
                                 int tile) {
    if (pre.height != post.height || pre.width != post.width)
        throw std::invalid_argument("inference: image sizes differ");
    const int H = pre.height, W = pre.width;
    if (H < 16 || W < 16)
        throw std::invalid_argument("inference: images must be at least 16x16");

    RealMap base;  // fused map at conv3_4 resolution
    if (tile <= 0 || (tile >= H && tile >= W)) {
        base = fused_base_for_window(net, pre, post, alpha, 0, 0, H, W);
    } else {
        if (tile % 16 != 0 || tile < 64)
            throw std::invalid_argument("tile size must be a multiple of 16 and >= 64");
        constexpr int kMargin = 32;
        base.height = (H / 2) / 2;
        base.width = (W / 2) / 2;
        base.values.assign(size_t(base.height) * base.width, 0.0);
        for (int ty = 0; ty < H; ty += tile)
            for (int tx = 0; tx < W; tx += tile) {
                const int ry0 = std::max(0, ty - kMargin);
                const int rx0 = std::max(0, tx - kMargin);
                const int ry1 = std::min(H, ty + tile + kMargin);
                const int rx1 = std::min(W, tx + tile + kMargin);
                RealMap part =
                    fused_base_for_window(net, pre, post, alpha, ry0, rx0, ry1 - ry0, rx1 - rx0);
                // cells this tile owns in the global conv3_4-resolution grid
                const int gy0 = ty / 4, gx0 = tx / 4;
                const int gy1 = (ty + tile >= H) ? base.height : (ty + tile) / 4;
                const int gx1 = (tx + tile >= W) ? base.width : (tx + tile) / 4;
                for (int gy = gy0; gy < gy1; ++gy)
                    for (int gx = gx0; gx < gx1; ++gx) {
                        int ly = gy - ry0 / 4, lx = gx - rx0 / 4;
                        if (ly < part.height && lx < part.width) base.at(gy, gx) = part.at(ly, lx);
                    }
            }
    }

    InferenceResult res;
    res.difference = bilinear_resize(base, H, W);
    OtsuResult ot = otsu(res.difference);
    res.threshold = ot.threshold;
    res.change = std::move(ot.binary);
    return res;
}

}  // namespace oaip
