// Integer layer kernels on block-exponent tensors: 3x3 convolution (forward,
// input gradient, weight gradient), ReLU, 2x2 max pooling, and the L1 filter
// response normalization. Accumulation is exact in int32/int64; results are
// shift-rounded back to int8 with the shift compensated in the exponent.
#pragma once

#include <cstdint>
#include <vector>

#include "oaip/tensor.hpp"

namespace oaip {

// Fixed conv geometry: 3x3 kernel, stride 1, zero padding 1, no bias.
// Output spatial size equals input spatial size.
struct ConvGeometry {
    int in_channels = 0;
    int out_channels = 0;
    static constexpr int kKernel = 3;
    static constexpr int kStride = 1;
    static constexpr int kPad = 1;
};

ConvGeometry geometry_of(const Q8Tensor& w);

// Weights repacked for the SIMD kernels (forward wants the reduction over
// input channels contiguous, the input gradient wants it over output
// channels). Pack once per layer, reuse across samples.
struct PackedWeights {
    int out_ch = 0, in_ch = 0;
    int cpad = 0, opad = 0;
    int exponent = 0;
    std::vector<int8_t> fwd;  // [o][ky][kx][c], c padded to cpad
    std::vector<int8_t> bwd;  // [c][ky][kx][o], o padded to opad
    bool empty() const { return out_ch == 0; }
};
PackedWeights pack_weights(const Q8Tensor& w);

struct ConvForwardOut {
    Q8Tensor out;
    Q32Tensor acc;  // retained only when requested
};

// out = shift_round(w * a); acc exponent is e_a + e_w, output exponent adds
// the shift. a is (C,H,W), w is (O,C,3,3).
ConvForwardOut conv_fwd(const Q8Tensor& a, const Q8Tensor& w, bool keep_acc = false);
ConvForwardOut conv_fwd(const Q8Tensor& a, const PackedWeights& w, bool keep_acc = false);
Q32Tensor conv_fwd_acc(const Q8Tensor& a, const PackedWeights& w);

// Full correlation of the output gradient with the 180-degree-rotated
// kernel; produces the input-shaped gradient.
Q8Tensor conv_bwd_input(const Q8Tensor& ga, const Q8Tensor& w);
Q8Tensor conv_bwd_input(const Q8Tensor& ga, const PackedWeights& w);
Q32Tensor conv_bwd_input_acc(const Q8Tensor& ga, const PackedWeights& w);

// Weight gradient gw[o][c][ky][kx] = sum over pixels of ga * shifted a,
// shifted to the grad_bits budget (see shift_to_grad_bits).
Q8Tensor conv_grad_weight(const Q8Tensor& a, const Q8Tensor& ga, int grad_bits);
Q32Tensor conv_grad_weight_acc(const Q8Tensor& a, const Q8Tensor& ga);

// int64 tensor for accumulating per-sample conv accumulators across a batch
// before the single gradient shift.
struct WideTensor {
    std::vector<int64_t> data;
    Shape shape;
    int exponent = 0;
    bool empty() const { return data.empty(); }
};
void wide_accumulate(WideTensor& acc, const Q32Tensor& t);

// Batch weight-gradient accumulator fed directly by the gradient kernel, so
// per-sample gradients are never materialized. Incoming contributions are
// aligned to the running exponent (which only ratchets upward). int32 is
// enough while samples * pixels * 127^2 stays below 2^31; the caller checks.
struct GradAccumulator {
    std::vector<int32_t> data;
    Shape shape;
    int exponent = 0;
    bool empty() const { return data.empty(); }
};

// acc += shifted(a (*) ga), fused into the kernel's store loop.
void conv_grad_weight_accumulate(const Q8Tensor& a, const Q8Tensor& ga, GradAccumulator& acc);

// B = max(E - grad_bits, 0), round-to-nearest, saturate magnitudes to
// 2^grad_bits - 1 so the gradient bit budget is strict.
Q8Tensor shift_to_grad_bits(const Q32Tensor& acc, int grad_bits);
Q8Tensor shift_to_grad_bits(const WideTensor& acc, int grad_bits);
Q8Tensor shift_to_grad_bits(const GradAccumulator& acc, int grad_bits);

// --- elementwise / spatial ops ----------------------------------------------

struct ReluOut {
    Q8Tensor out;
    std::vector<uint8_t> mask;  // 1 where the input was positive
};
ReluOut relu(const Q8Tensor& t);
Q8Tensor relu_bwd(const Q8Tensor& g, const std::vector<uint8_t>& mask);

// 2x2 stride-2 max over mantissas; a trailing odd row/column is cropped.
// idx holds the winning in-window cell (0..3, row-major); ties go to the
// first cell in scan order.
struct PoolOut {
    Q8Tensor out;
    std::vector<uint8_t> idx;
};
PoolOut maxpool(const Q8Tensor& t);
Q8Tensor maxpool_bwd(const Q8Tensor& g, const std::vector<uint8_t>& idx, const Shape& in_shape);

// L1 filter response normalization, y = x / mean|x| per channel, computed as
// round(m * 128 / nu) with nu = max(floor(sum|m| / (H*W)), 1), then one
// tensor-wide shift-round. The input exponent cancels (nu carries it), so
// the output exponent is B - 7.
struct FrnStats {
    std::vector<int64_t> nu;  // per output channel
    int in_exponent = 0;
    int shift = 0;  // forward B, for diagnostics
};
struct FrnOut {
    Q8Tensor out;
    FrnStats stats;
};
FrnOut frn_fwd(const Q8Tensor& t);
// Backward treats nu as a constant: same 128/nu scaling, exponent
// e_g - e_in + B - 7.
Q8Tensor frn_bwd(const Q8Tensor& g, const FrnStats& stats);

}  // namespace oaip

// Serial reference kernels, kept independent of the production path for
// oracle tests and the kernel benchmark. Wide-integer accumulation over
// arbitrary integer inputs.
namespace oaip::ref {

std::vector<int64_t> conv_fwd_acc(const std::vector<int64_t>& a, const oaip::Shape& ash,
                                  const std::vector<int64_t>& w, const oaip::Shape& wsh);
std::vector<int64_t> conv_bwd_input_acc(const std::vector<int64_t>& ga, const oaip::Shape& gsh,
                                        const std::vector<int64_t>& w, const oaip::Shape& wsh);
std::vector<int64_t> conv_grad_weight_acc(const std::vector<int64_t>& a, const oaip::Shape& ash,
                                          const std::vector<int64_t>& ga, const oaip::Shape& gsh);
std::vector<int64_t> widen(const oaip::Q8Tensor& t);

}  // namespace oaip::ref
