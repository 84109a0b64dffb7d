// Patch-level affinity-matrix comparison for training sample selection.
// Runs once before training, in real arithmetic.
#pragma once

#include <vector>

#include "oaip/raster.hpp"
#include "oaip/tensor.hpp"

namespace oaip {

struct PatchGrid {
    int patch = 0;  // patch side length s
    int rows = 0, cols = 0;
    int count() const { return rows * cols; }
};

// Regular s x s grid; remainder pixels outside full patches are cropped.
PatchGrid make_grid(int height, int width, int patch);

// Mean over all pixels and channels of each patch.
std::vector<double> patch_means(const RasterImage& img, const PatchGrid& grid);

// A[i][j] = exp(-d_ij^2 / h^2) with d_ij = |M_i - M_j| and h = max d.
// A constant image (h = 0) yields the all-ones matrix.
std::vector<double> affinity(const std::vector<double>& means);

// alpha_i = sum_j |A_pre[i][j] - A_post[i][j]|
std::vector<double> change_scores(const std::vector<double>& a_pre,
                                  const std::vector<double>& a_post, int q);

struct Sample {
    int patch_index = 0;
    bool positive = false;  // high change score: the loss pushes branches apart
    Q8Tensor pre, post;     // 3 x s x s blocks, quantized per patch
};

struct SampleSet {
    std::vector<Sample> samples;  // positives first, then negatives
    PatchGrid grid;
    int num_positive = 0, num_negative = 0;
};

// Picks num_pos highest and num_neg lowest change scores (ties resolved by
// ascending patch index, sets kept disjoint) and extracts quantized pixel
// blocks from both images. When the grid is smaller than the request,
// whatever is available is taken.
SampleSet select_samples(const std::vector<double>& scores, int num_pos, int num_neg,
                         const RasterImage& pre, const RasterImage& post,
                         const PatchGrid& grid);

}  // namespace oaip
