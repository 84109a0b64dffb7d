#include "oaip/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace oaip {

size_t shape_elems(const Shape& s) {
    size_t n = 1;
    for (int d : s) n *= size_t(d);
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ")";
    return os.str();
}

bool Q8Tensor::all_zero() const {
    return std::all_of(data.begin(), data.end(), [](int8_t v) { return v == 0; });
}

void check_same_shape(const Q8Tensor& a, const Q8Tensor& b, const char* what) {
    if (a.shape != b.shape)
        throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                    shape_str(a.shape) + " vs " + shape_str(b.shape));
}

// --- WideScalar --------------------------------------------------------------

double WideScalar::value() const { return std::ldexp(double(mant), exponent); }

// Keep |mant| below 2^61 so alignment and addition cannot overflow.
WideScalar wide_normalize(WideScalar v) {
    while (magnitude(v.mant) >= (uint64_t(1) << 61)) {
        v.mant = shift_round_scalar(v.mant, 1);
        v.exponent += 1;
    }
    if (v.mant == 0) v.exponent = 0;
    return v;
}

namespace {
// Mantissas of a and b at the common exponent max(ea, eb).
struct Aligned {
    int64_t a, b;
    int exponent;
};

Aligned wide_align(WideScalar x, WideScalar y) {
    x = wide_normalize(x);
    y = wide_normalize(y);
    int e = std::max(x.exponent, y.exponent);
    return {shift_round_scalar(x.mant, e - x.exponent),
            shift_round_scalar(y.mant, e - y.exponent), e};
}
}  // namespace

WideScalar wide_add(WideScalar a, WideScalar b) {
    Aligned al = wide_align(a, b);
    return wide_normalize({al.a + al.b, al.exponent});
}

WideScalar wide_neg(WideScalar a) { return {-a.mant, a.exponent}; }

WideScalar wide_sub(WideScalar a, WideScalar b) { return wide_add(a, wide_neg(b)); }

int wide_cmp(WideScalar a, WideScalar b) {
    Aligned al = wide_align(a, b);
    if (al.a < al.b) return -1;
    if (al.a > al.b) return 1;
    return 0;
}

// --- quantize / dequantize ----------------------------------------------------

namespace {
template <typename T>
Q8Tensor quantize_impl(const std::vector<T>& x, Shape shape) {
    if (x.size() != shape_elems(shape))
        throw std::invalid_argument("quantize: data size does not match shape " +
                                    shape_str(shape));
    double maxabs = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        double v = double(x[i]);
        if (!std::isfinite(v))
            throw std::invalid_argument("quantize: non-finite value at index " +
                                        std::to_string(i));
        maxabs = std::max(maxabs, std::fabs(v));
    }
    Q8Tensor out(std::move(shape), 0);
    if (maxabs == 0.0) return out;

    // ceil(log2(maxabs)) without relying on log() rounding: maxabs = f*2^p,
    // f in [0.5, 1), so ceil = p unless maxabs is an exact power of two.
    int p = 0;
    std::frexp(maxabs, &p);
    int ebits = (maxabs == std::ldexp(1.0, p - 1)) ? p - 1 : p;
    out.exponent = ebits - 7;
    for (size_t i = 0; i < x.size(); ++i) {
        double scaled = std::ldexp(double(x[i]), -out.exponent);
        out.data[i] = sat_i8(std::llround(scaled));
    }
    return out;
}
}  // namespace

Q8Tensor quantize(const std::vector<double>& x, Shape shape) {
    return quantize_impl(x, std::move(shape));
}
Q8Tensor quantize(const std::vector<float>& x, Shape shape) {
    return quantize_impl(x, std::move(shape));
}

std::vector<double> dequantize(const Q8Tensor& t) {
    std::vector<double> out(t.size());
    for (size_t i = 0; i < t.size(); ++i)
        out[i] = std::ldexp(double(t.data[i]), t.exponent);
    return out;
}

// --- shift-and-round ----------------------------------------------------------

int effective_bitwidth(const Q32Tensor& t) {
    int64_t maxabs = 0;
    for (int32_t v : t.data) maxabs = std::max(maxabs, int64_t(magnitude(v)));
    return effective_bits(uint64_t(maxabs));
}

Q8Tensor shift_round(const Q32Tensor& t, int target_bits) {
    int b = std::max(effective_bitwidth(t) - target_bits, 0);
    Q8Tensor out(t.shape, t.exponent + b);
    for (size_t i = 0; i < t.size(); ++i)
        out.data[i] = sat_i8(shift_round_scalar(t.data[i], b));
    return out;
}

Q8Tensor align_add(const Q8Tensor& a, const Q8Tensor& b) {
    check_same_shape(a, b, "align_add");
    int e = std::max(a.exponent, b.exponent);
    Q32Tensor acc(a.shape, e);
    int sa = e - a.exponent, sb = e - b.exponent;
    for (size_t i = 0; i < a.size(); ++i)
        acc.data[i] = int32_t(shift_round_scalar(a.data[i], sa)) +
                      int32_t(shift_round_scalar(b.data[i], sb));
    return shift_round(acc, 7);
}

}  // namespace oaip
