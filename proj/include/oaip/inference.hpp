// Whole-image inference: per-tap squared-difference maps, weighted fusion
// with bilinear upscaling, Otsu thresholding, and the evaluation metrics.
// This is one-shot postprocessing; it runs in real arithmetic.
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "oaip/network.hpp"
#include "oaip/raster.hpp"
#include "oaip/tensor.hpp"

namespace oaip {

struct RealMap {
    std::vector<double> values;  // row-major
    int height = 0, width = 0;

    double& at(int y, int x) { return values[size_t(y) * width + x]; }
    double at(int y, int x) const { return values[size_t(y) * width + x]; }
};

// D(x,y) = mean over channels of the squared branch difference, mantissas
// aligned and squared in integers, one conversion to real at the end.
RealMap layer_difference(const Q8Tensor& f1, const Q8Tensor& f2);

// Bilinear resize, align-corners = false.
RealMap bilinear_resize(const RealMap& src, int out_h, int out_w);

// alpha3*D3 + alpha4*U(D4) + alpha5*U(D5) at D3 resolution, then upscaled
// to the requested full resolution.
RealMap fuse(const RealMap& d3, const RealMap& d4, const RealMap& d5,
             const std::array<int, 3>& alpha, int out_h, int out_w);

struct OtsuResult {
    int threshold = 0;                 // on the normalized 0..255 scale
    std::vector<uint8_t> binary;       // 1 = changed
};

// Min-max normalize to [0,255], histogram into 256 bins, pick the threshold
// maximizing between-class variance (exact integer comparison, ties to the
// lowest threshold). A constant map yields threshold 0 and an all-zero mask.
OtsuResult otsu(const RealMap& map);
int otsu_threshold(const std::array<int64_t, 256>& histogram);

struct MetricsReport {
    int64_t correct_changed = 0;    // n_a
    int64_t correct_unchanged = 0;  // n_c
    int64_t detected_changed = 0;   // N_d
    int64_t true_changed = 0;       // N_c
    int64_t total = 0;              // N_t
    double accuracy = 0, precision = 0, recall = 0;
    double expected_agreement = 0;  // p_e
    double kappa = 0;
};

MetricsReport metrics(const std::vector<uint8_t>& predicted, const std::vector<uint8_t>& truth);

struct InferenceResult {
    RealMap difference;           // fused, full resolution
    std::vector<uint8_t> change;  // 0/1, full resolution
    int threshold = 0;
};

// Runs both branches over the full images (or over overlapping tiles when
// tile > 0) and produces the fused difference map and binary change map.
// Tiled responses are normalized per tile, so tiling trades a little seam
// accuracy for bounded memory.
InferenceResult infer_change_map(const SiameseState& net, const RasterImage& pre,
                                 const RasterImage& post, const std::array<int, 3>& alpha,
                                 int tile = 0);

}  // namespace oaip
