// Block-exponent integer tensors: int8 mantissas (Q8Tensor) and int32
// accumulators (Q32Tensor) that share one power-of-two exponent per tensor,
// plus the WideScalar used for loss bookkeeping.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oaip/int8_math.hpp"

namespace oaip {

using Shape = std::vector<int>;

size_t shape_elems(const Shape& s);

// int8 mantissa tensor with one shared power-of-two exponent.
// Element i represents data[i] * 2^exponent. Mantissas stay in [-127, 127].
struct Q8Tensor {
    std::vector<int8_t> data;
    Shape shape;
    int exponent = 0;

    Q8Tensor() = default;
    Q8Tensor(Shape s, int exp = 0)
        : data(shape_elems(s), 0), shape(std::move(s)), exponent(exp) {}

    size_t size() const { return data.size(); }
    int dim(size_t i) const { return shape[i]; }
    bool all_zero() const;
};

// int32 accumulator tensor; lives between an integer convolution and the
// next shift-and-round.
struct Q32Tensor {
    std::vector<int32_t> data;
    Shape shape;
    int exponent = 0;

    Q32Tensor() = default;
    Q32Tensor(Shape s, int exp = 0)
        : data(shape_elems(s), 0), shape(std::move(s)), exponent(exp) {}

    size_t size() const { return data.size(); }
};

// 64-bit mantissa scalar with exponent; holds loss values.
struct WideScalar {
    int64_t mant = 0;
    int exponent = 0;

    static WideScalar zero() { return {}; }
    double value() const;
    bool is_zero() const { return mant == 0; }
};

WideScalar wide_normalize(WideScalar v);
WideScalar wide_add(WideScalar a, WideScalar b);
WideScalar wide_sub(WideScalar a, WideScalar b);
WideScalar wide_neg(WideScalar a);
// -1 / 0 / +1 after aligning both mantissas to the larger exponent
// (lower-exponent mantissa is shifted right with round-to-nearest).
int wide_cmp(WideScalar a, WideScalar b);

// --- tensor-core operations -------------------------------------------------

// Uniform 8-bit quantization with a power-of-two scale: exponent
// e = ceil(log2(max|x|)) - 7 (0 for an all-zero input), mantissas rounded to
// nearest and saturated to [-127, 127]. Rejects non-finite input.
Q8Tensor quantize(const std::vector<double>& x, Shape shape);
Q8Tensor quantize(const std::vector<float>& x, Shape shape);

// ceil(log2(max|mantissa|)); 0 for an all-zero tensor.
int effective_bitwidth(const Q32Tensor& t);

// Discard B = max(E - target_bits, 0) low bits of every mantissa with
// round-to-nearest, saturate to [-127, 127], and add B to the exponent.
Q8Tensor shift_round(const Q32Tensor& t, int target_bits = 7);

std::vector<double> dequantize(const Q8Tensor& t);

// Align exponents (right shift the lower-exponent operand, round to
// nearest), add in 32-bit, then shift-round back to 8-bit.
Q8Tensor align_add(const Q8Tensor& a, const Q8Tensor& b);

std::string shape_str(const Shape& s);
void check_same_shape(const Q8Tensor& a, const Q8Tensor& b, const char* what);

}  // namespace oaip
