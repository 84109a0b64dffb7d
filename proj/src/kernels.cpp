#include "oaip/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>

#if defined(__AVX512VNNI__) && defined(__AVX512BW__) && defined(__AVX512VL__)
#define OAIP_SIMD_VNNI 1
#include <immintrin.h>
#elif defined(__AVX2__)
#define OAIP_SIMD_AVX2 1
#include <immintrin.h>
#endif

namespace oaip {

namespace {

constexpr int kLane = 64;  // channel padding for the packed layouts

int padded(int c) { return (c + kLane - 1) / kLane * kLane; }

// Parallelize a conv call only when it is worth the fork.
bool parallel_worth(double macs) { return macs > 4.0e6; }

thread_local std::vector<int8_t> tl_apack;
thread_local std::vector<int32_t> tl_gaquad;
thread_local std::vector<int8_t> tl_panels;

// CHW int8 -> [pixel][c] with channels zero-padded to cpad.
void pack_nhwc(const int8_t* src, int C, int HW, int cpad, std::vector<int8_t>& dst) {
    dst.assign(size_t(HW) * cpad, 0);
    constexpr int kBlock = 48;
    for (int c0 = 0; c0 < C; c0 += kBlock) {
        int c1 = std::min(c0 + kBlock, C);
        for (int p = 0; p < HW; ++p) {
            int8_t* d = dst.data() + size_t(p) * cpad;
            for (int c = c0; c < c1; ++c) d[c] = src[size_t(c) * HW + p];
        }
    }
}

bool has_negative(const Q8Tensor& t) {
    for (int8_t v : t.data)
        if (v < 0) return true;
    return false;
}

#if defined(OAIP_SIMD_VNNI)

inline int32_t reduce_vec(__m512i v) { return _mm512_reduce_add_epi32(v); }

// One 64-byte step of the dot product. For signed activations the weight
// chunk is negated where the activation is negative and the activation
// magnitude feeds the unsigned operand.
template <bool kSignedA>
inline __m512i dot_step(__m512i acc, const int8_t* a, const int8_t* w) {
    __m512i av = _mm512_loadu_si512(a);
    __m512i wv = _mm512_loadu_si512(w);
    if constexpr (kSignedA) {
        __mmask64 neg = _mm512_movepi8_mask(av);
        wv = _mm512_mask_sub_epi8(wv, neg, _mm512_setzero_si512(), wv);
        av = _mm512_abs_epi8(av);
    }
    return _mm512_dpbusd_epi32(acc, av, wv);
}

using VecAcc = __m512i;
inline VecAcc acc_zero() { return _mm512_setzero_si512(); }
constexpr int kVecStep = 64;

#elif defined(OAIP_SIMD_AVX2)

inline int32_t reduce_vec(__m256i v) {
    __m128i s = _mm_add_epi32(_mm256_castsi256_si128(v), _mm256_extracti128_si256(v, 1));
    s = _mm_add_epi32(s, _mm_shuffle_epi32(s, 0x4e));
    s = _mm_add_epi32(s, _mm_shuffle_epi32(s, 0xb1));
    return _mm_cvtsi128_si32(s);
}

template <bool kSignedA>
inline __m256i dot_step(__m256i acc, const int8_t* a, const int8_t* w) {
    __m256i av = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a));
    __m256i wv = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(w));
    if constexpr (kSignedA) {
        wv = _mm256_sign_epi8(wv, av);
        av = _mm256_abs_epi8(av);
    }
    __m256i p16 = _mm256_maddubs_epi16(av, wv);  // pairs <= 2*127*127, no saturation
    return _mm256_add_epi32(acc, _mm256_madd_epi16(p16, _mm256_set1_epi16(1)));
}

using VecAcc = __m256i;
inline VecAcc acc_zero() { return _mm256_setzero_si256(); }
constexpr int kVecStep = 32;

#endif

// Shared 3x3 correlation: acc[n][y][x] = sum over (ky,kx,c) of
// wpack[n][ky][kx][c] * apack[(y+ky-1)(x+kx-1)][c]. The input-gradient pass
// uses the same kernel with mirrored/transposed packed weights.
template <bool kSignedA>
void conv3x3_core(const int8_t* apack, int H, int W, int cpad, const int8_t* wpack,
                  int nout, int32_t* acc_chw) {
    const size_t wstride = size_t(9) * cpad;
    const size_t hw = size_t(H) * W;
    const bool par = parallel_worth(double(hw) * nout * cpad * 9);

#pragma omp parallel for schedule(static) if (par)
    for (int p = 0; p < int(hw); ++p) {
        const int y = p / W, x = p % W;
        const int ky0 = y > 0 ? 0 : 1, ky1 = y < H - 1 ? 3 : 2;
        const int kx0 = x > 0 ? 0 : 1, kx1 = x < W - 1 ? 3 : 2;

#if defined(OAIP_SIMD_VNNI) || defined(OAIP_SIMD_AVX2)
        int n = 0;
        for (; n + 4 <= nout; n += 4) {
            VecAcc v0 = acc_zero(), v1 = acc_zero(), v2 = acc_zero(), v3 = acc_zero();
            const int8_t* wn = wpack + size_t(n) * wstride;
            for (int ky = ky0; ky < ky1; ++ky)
                for (int kx = kx0; kx < kx1; ++kx) {
                    const int8_t* arow = apack + (size_t(y + ky - 1) * W + (x + kx - 1)) * cpad;
                    const size_t koff = size_t(ky * 3 + kx) * cpad;
                    for (int cb = 0; cb < cpad; cb += kVecStep) {
                        const int8_t* ac = arow + cb;
                        v0 = dot_step<kSignedA>(v0, ac, wn + koff + cb);
                        v1 = dot_step<kSignedA>(v1, ac, wn + wstride + koff + cb);
                        v2 = dot_step<kSignedA>(v2, ac, wn + 2 * wstride + koff + cb);
                        v3 = dot_step<kSignedA>(v3, ac, wn + 3 * wstride + koff + cb);
                    }
                }
            acc_chw[size_t(n) * hw + p] = reduce_vec(v0);
            acc_chw[size_t(n + 1) * hw + p] = reduce_vec(v1);
            acc_chw[size_t(n + 2) * hw + p] = reduce_vec(v2);
            acc_chw[size_t(n + 3) * hw + p] = reduce_vec(v3);
        }
        for (; n < nout; ++n) {
            VecAcc v0 = acc_zero();
            const int8_t* wn = wpack + size_t(n) * wstride;
            for (int ky = ky0; ky < ky1; ++ky)
                for (int kx = kx0; kx < kx1; ++kx) {
                    const int8_t* arow = apack + (size_t(y + ky - 1) * W + (x + kx - 1)) * cpad;
                    const size_t koff = size_t(ky * 3 + kx) * cpad;
                    for (int cb = 0; cb < cpad; cb += kVecStep)
                        v0 = dot_step<kSignedA>(v0, arow + cb, wn + koff + cb);
                }
            acc_chw[size_t(n) * hw + p] = reduce_vec(v0);
        }
#else
        for (int n = 0; n < nout; ++n) {
            const int8_t* wn = wpack + size_t(n) * wstride;
            int32_t s = 0;
            for (int ky = ky0; ky < ky1; ++ky)
                for (int kx = kx0; kx < kx1; ++kx) {
                    const int8_t* arow = apack + (size_t(y + ky - 1) * W + (x + kx - 1)) * cpad;
                    const int8_t* wrow = wn + size_t(ky * 3 + kx) * cpad;
                    for (int c = 0; c < cpad; ++c) s += int32_t(wrow[c]) * int32_t(arow[c]);
                }
            acc_chw[size_t(n) * hw + p] = s;
        }
#endif
    }
}

void run_conv3x3(const Q8Tensor& a, const int8_t* wpack, int nout, int cpad,
                 int32_t* acc_chw) {
    const int C = a.shape[0], H = a.shape[1], W = a.shape[2];
    pack_nhwc(a.data.data(), C, H * W, cpad, tl_apack);
    if (has_negative(a))
        conv3x3_core<true>(tl_apack.data(), H, W, cpad, wpack, nout, acc_chw);
    else
        conv3x3_core<false>(tl_apack.data(), H, W, cpad, wpack, nout, acc_chw);
}

// --- weight gradient ----------------------------------------------------------
//
// gw[o][c][ky][kx] = sum over pixels of ga[o][p] * a[c][shifted p]; the dot
// runs over pixels packed four at a time so it maps onto the same u8*s8
// instructions (activation quads unsigned, gradient quad broadcast signed).

// Branchless right shift with round-half-away (s >= 1).
inline int32_t rshift_round32(int32_t v, int s) {
    int32_t sign = v >> 31;
    uint32_t mag = uint32_t((v ^ sign) - sign);
    uint32_t r = ((mag >> (s - 1)) + 1) >> 1;
    return (int32_t(r) ^ sign) - sign;
}

// kAdd: shift the fresh value right by `shift` and add into acc instead of
// overwriting (the fused batch-accumulation path).
template <bool kAdd>
void grad_weight_generic(const Q8Tensor& a, const Q8Tensor& ga, int32_t* acc, int shift) {
    const int C = a.shape[0], H = a.shape[1], W = a.shape[2];
    const int O = ga.shape[0];
    const bool par = parallel_worth(double(O) * C * 9 * H * W);
#pragma omp parallel for schedule(static) if (par)
    for (int o = 0; o < O; ++o)
        for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    int y0 = std::max(0, 1 - ky), y1 = std::min(H, H + 1 - ky);
                    int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
                    int32_t s = 0;
                    for (int y = y0; y < y1; ++y) {
                        const int8_t* gr = ga.data.data() + (size_t(o) * H + y) * W;
                        const int8_t* ar =
                            a.data.data() + (size_t(c) * H + y + ky - 1) * W + (kx - 1);
                        for (int x = x0; x < x1; ++x) s += int32_t(gr[x]) * int32_t(ar[x]);
                    }
                    if (shift) s = rshift_round32(s, shift);
                    int32_t* dst = acc + (size_t(o) * C + c) * 9 + ky * 3 + kx;
                    if constexpr (kAdd)
                        *dst += s;
                    else
                        *dst = s;
                }
}

#if defined(OAIP_SIMD_VNNI) || defined(OAIP_SIMD_AVX2)
template <bool kAdd>
void grad_weight_simd(const Q8Tensor& a, const Q8Tensor& ga, int32_t* acc, int shift) {
    const int C = a.shape[0], H = a.shape[1], W = a.shape[2];
    const int O = ga.shape[0];
    const int S = H * W;
    const int quads = (S + 3) / 4;
    const int cpad = padded(C);
    const size_t panstride = size_t(quads) * cpad * 4;

    // Shifted activation panels, one per kernel offset: [quad][c][4].
    tl_panels.assign(9 * panstride, 0);
    for (int k = 0; k < 9; ++k) {
        const int ky = k / 3, kx = k % 3;
        int8_t* pan = tl_panels.data() + size_t(k) * panstride;
        for (int c = 0; c < C; ++c) {
            const int8_t* ac = a.data.data() + size_t(c) * S;
            for (int p = 0; p < S; ++p) {
                int sy = p / W + ky - 1, sx = p % W + kx - 1;
                if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                pan[(size_t(p / 4) * cpad + c) * 4 + (p % 4)] = ac[sy * W + sx];
            }
        }
    }
    // Gradient rows packed four pixels per int32, padded to whole quads.
    tl_gaquad.assign(size_t(O) * quads, 0);
    for (int o = 0; o < O; ++o)
        std::memcpy(tl_gaquad.data() + size_t(o) * quads,
                    ga.data.data() + size_t(o) * S, size_t(S));

#if defined(OAIP_SIMD_VNNI)
    constexpr int kCl = 16;  // int32 lanes per vector
#else
    constexpr int kCl = 8;
#endif
    const bool par = parallel_worth(double(O) * C * 9 * S);
    // hoisted: worker threads must not touch the thread_local buffers
    const int8_t* panels = tl_panels.data();
    const int32_t* gaquad = tl_gaquad.data();
#pragma omp parallel for schedule(static) if (par)
    for (int o = 0; o < O; ++o) {
        const int32_t* gq = gaquad + size_t(o) * quads;
        for (int c0 = 0; c0 < C; c0 += kCl) {
            for (int k = 0; k < 9; ++k) {
                const int8_t* pan = panels + size_t(k) * panstride + size_t(c0) * 4;
#if defined(OAIP_SIMD_VNNI)
                __m512i v = _mm512_setzero_si512();
                for (int q = 0; q < quads; ++q)
                    v = _mm512_dpbusd_epi32(
                        v, _mm512_loadu_si512(pan + size_t(q) * cpad * 4),
                        _mm512_set1_epi32(gq[q]));
                alignas(64) int32_t lanes[kCl];
                _mm512_store_si512(lanes, v);
#else
                __m256i v = _mm256_setzero_si256();
                const __m256i ones = _mm256_set1_epi16(1);
                for (int q = 0; q < quads; ++q) {
                    __m256i av = _mm256_loadu_si256(
                        reinterpret_cast<const __m256i*>(pan + size_t(q) * cpad * 4));
                    __m256i gb = _mm256_set1_epi32(gq[q]);
                    __m256i p16 = _mm256_maddubs_epi16(av, gb);
                    v = _mm256_add_epi32(v, _mm256_madd_epi16(p16, ones));
                }
                alignas(32) int32_t lanes[kCl];
                _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), v);
#endif
                const int cn = std::min(kCl, C - c0);
                for (int l = 0; l < cn; ++l) {
                    int32_t v = shift ? rshift_round32(lanes[l], shift) : lanes[l];
                    int32_t* dst = acc + (size_t(o) * C + c0 + l) * 9 + k;
                    if constexpr (kAdd)
                        *dst += v;
                    else
                        *dst = v;
                }
            }
        }
    }
}
#endif

void check_conv_shapes(const Q8Tensor& a, int in_ch, const char* what) {
    if (a.shape.size() != 3)
        throw std::invalid_argument(std::string(what) + ": activation must be (C,H,W), got " +
                                    shape_str(a.shape));
    if (a.shape[0] != in_ch)
        throw std::invalid_argument(std::string(what) + ": channel mismatch, activation " +
                                    shape_str(a.shape) + " vs weights expecting " +
                                    std::to_string(in_ch));
}

}  // namespace

ConvGeometry geometry_of(const Q8Tensor& w) {
    if (w.shape.size() != 4 || w.shape[2] != 3 || w.shape[3] != 3)
        throw std::invalid_argument("conv weights must be (O,C,3,3), got " + shape_str(w.shape));
    return ConvGeometry{w.shape[1], w.shape[0]};
}

PackedWeights pack_weights(const Q8Tensor& w) {
    ConvGeometry g = geometry_of(w);
    PackedWeights p;
    p.out_ch = g.out_channels;
    p.in_ch = g.in_channels;
    p.cpad = padded(p.in_ch);
    p.opad = padded(p.out_ch);
    p.exponent = w.exponent;
    p.fwd.assign(size_t(p.out_ch) * 9 * p.cpad, 0);
    p.bwd.assign(size_t(p.in_ch) * 9 * p.opad, 0);
    for (int o = 0; o < p.out_ch; ++o)
        for (int c = 0; c < p.in_ch; ++c)
            for (int k = 0; k < 9; ++k) {
                int8_t v = w.data[(size_t(o) * p.in_ch + c) * 9 + k];
                p.fwd[(size_t(o) * 9 + k) * p.cpad + c] = v;
                // mirrored offsets so the input gradient reuses the forward core
                p.bwd[(size_t(c) * 9 + (8 - k)) * p.opad + o] = v;
            }
    return p;
}

Q32Tensor conv_fwd_acc(const Q8Tensor& a, const PackedWeights& w) {
    check_conv_shapes(a, w.in_ch, "conv_fwd");
    Q32Tensor acc({w.out_ch, a.shape[1], a.shape[2]}, a.exponent + w.exponent);
    run_conv3x3(a, w.fwd.data(), w.out_ch, w.cpad, acc.data.data());
    return acc;
}

ConvForwardOut conv_fwd(const Q8Tensor& a, const PackedWeights& w, bool keep_acc) {
    Q32Tensor acc = conv_fwd_acc(a, w);
    ConvForwardOut r;
    r.out = shift_round(acc, 7);
    if (keep_acc) r.acc = std::move(acc);
    return r;
}

ConvForwardOut conv_fwd(const Q8Tensor& a, const Q8Tensor& w, bool keep_acc) {
    return conv_fwd(a, pack_weights(w), keep_acc);
}

Q32Tensor conv_bwd_input_acc(const Q8Tensor& ga, const PackedWeights& w) {
    check_conv_shapes(ga, w.out_ch, "conv_bwd_input");
    Q32Tensor acc({w.in_ch, ga.shape[1], ga.shape[2]}, ga.exponent + w.exponent);
    const int H = ga.shape[1], W = ga.shape[2];
    pack_nhwc(ga.data.data(), w.out_ch, H * W, w.opad, tl_apack);
    conv3x3_core<true>(tl_apack.data(), H, W, w.opad, w.bwd.data(), w.in_ch,
                       acc.data.data());
    return acc;
}

Q8Tensor conv_bwd_input(const Q8Tensor& ga, const PackedWeights& w) {
    return shift_round(conv_bwd_input_acc(ga, w), 7);
}

Q8Tensor conv_bwd_input(const Q8Tensor& ga, const Q8Tensor& w) {
    return conv_bwd_input(ga, pack_weights(w));
}

namespace {
void check_grad_shapes(const Q8Tensor& a, const Q8Tensor& ga) {
    if (a.shape.size() != 3 || ga.shape.size() != 3 || a.shape[1] != ga.shape[1] ||
        a.shape[2] != ga.shape[2])
        throw std::invalid_argument("conv_grad_weight: incompatible shapes " +
                                    shape_str(a.shape) + " vs " + shape_str(ga.shape));
}

template <bool kAdd>
void grad_weight_dispatch(const Q8Tensor& a, const Q8Tensor& ga, int32_t* acc, int shift) {
#if defined(OAIP_SIMD_VNNI) || defined(OAIP_SIMD_AVX2)
    if (!has_negative(a)) {
        grad_weight_simd<kAdd>(a, ga, acc, shift);
        return;
    }
#endif
    grad_weight_generic<kAdd>(a, ga, acc, shift);
}
}  // namespace

Q32Tensor conv_grad_weight_acc(const Q8Tensor& a, const Q8Tensor& ga) {
    check_grad_shapes(a, ga);
    Q32Tensor acc({ga.shape[0], a.shape[0], 3, 3}, a.exponent + ga.exponent);
    grad_weight_dispatch<false>(a, ga, acc.data.data(), 0);
    return acc;
}

void conv_grad_weight_accumulate(const Q8Tensor& a, const Q8Tensor& ga, GradAccumulator& acc) {
    check_grad_shapes(a, ga);
    const Shape gshape = {ga.shape[0], a.shape[0], 3, 3};
    const int e_in = a.exponent + ga.exponent;
    if (acc.empty()) {
        acc.data.assign(shape_elems(gshape), 0);
        acc.shape = gshape;
        acc.exponent = e_in;
    } else if (acc.shape != gshape) {
        throw std::invalid_argument("conv_grad_weight_accumulate: shape changed mid-batch");
    }
    if (e_in > acc.exponent) {
        // ratchet the accumulator up to the coarser exponent (rare)
        const int d = e_in - acc.exponent;
        if (d >= 31)
            std::fill(acc.data.begin(), acc.data.end(), 0);
        else
            for (auto& v : acc.data) v = rshift_round32(v, d);
        acc.exponent = e_in;
    }
    if (acc.exponent - e_in >= 31) return;  // contribution rounds to nothing
    grad_weight_dispatch<true>(a, ga, acc.data.data(), acc.exponent - e_in);
}

Q8Tensor conv_grad_weight(const Q8Tensor& a, const Q8Tensor& ga, int grad_bits) {
    return shift_to_grad_bits(conv_grad_weight_acc(a, ga), grad_bits);
}

// --- gradient shifts and batch accumulation -----------------------------------

namespace {
template <typename Acc>
Q8Tensor shift_grad_impl(const Acc& acc, int grad_bits) {
    if (grad_bits < 1 || grad_bits > 7)
        throw std::invalid_argument("grad_bits must be in [1,7]");
    int64_t maxabs = 0;
    for (auto v : acc.data) maxabs = std::max<int64_t>(maxabs, int64_t(magnitude(v)));
    int b = std::max(effective_bits(uint64_t(maxabs)) - grad_bits, 0);
    const int64_t bound = (int64_t(1) << grad_bits) - 1;
    Q8Tensor out(acc.shape, acc.exponent + b);
    for (size_t i = 0; i < acc.data.size(); ++i) {
        int64_t v = shift_round_scalar(acc.data[i], b);
        out.data[i] = int8_t(std::clamp<int64_t>(v, -bound, bound));
    }
    return out;
}
}  // namespace

Q8Tensor shift_to_grad_bits(const Q32Tensor& acc, int grad_bits) {
    return shift_grad_impl(acc, grad_bits);
}
Q8Tensor shift_to_grad_bits(const WideTensor& acc, int grad_bits) {
    return shift_grad_impl(acc, grad_bits);
}
Q8Tensor shift_to_grad_bits(const GradAccumulator& acc, int grad_bits) {
    return shift_grad_impl(acc, grad_bits);
}

void wide_accumulate(WideTensor& acc, const Q32Tensor& t) {
    if (acc.empty()) {
        acc.data.assign(t.data.begin(), t.data.end());
        acc.shape = t.shape;
        acc.exponent = t.exponent;
        return;
    }
    if (acc.shape != t.shape)
        throw std::invalid_argument("wide_accumulate: shape mismatch");
    int e = std::max(acc.exponent, t.exponent);
    int sa = e - acc.exponent, st = e - t.exponent;
    for (size_t i = 0; i < acc.data.size(); ++i)
        acc.data[i] = shift_round_scalar(acc.data[i], sa) +
                      shift_round_scalar(int64_t(t.data[i]), st);
    acc.exponent = e;
}

// --- ReLU ---------------------------------------------------------------------

ReluOut relu(const Q8Tensor& t) {
    ReluOut r;
    r.out = t;
    r.mask.assign(t.size(), 0);
    for (size_t i = 0; i < t.size(); ++i) {
        if (t.data[i] > 0)
            r.mask[i] = 1;
        else
            r.out.data[i] = 0;
    }
    return r;
}

Q8Tensor relu_bwd(const Q8Tensor& g, const std::vector<uint8_t>& mask) {
    if (mask.size() != g.size())
        throw std::invalid_argument("relu_bwd: mask size mismatch");
    Q8Tensor out = g;
    for (size_t i = 0; i < g.size(); ++i)
        if (!mask[i]) out.data[i] = 0;
    return out;
}

// --- 2x2 max pooling ------------------------------------------------------------

PoolOut maxpool(const Q8Tensor& t) {
    const int C = t.shape[0], H = t.shape[1], W = t.shape[2];
    const int Ho = H / 2, Wo = W / 2;
    PoolOut r;
    r.out = Q8Tensor({C, Ho, Wo}, t.exponent);
    r.idx.assign(size_t(C) * Ho * Wo, 0);
    for (int c = 0; c < C; ++c) {
        const int8_t* in = t.data.data() + size_t(c) * H * W;
        int8_t* out = r.out.data.data() + size_t(c) * Ho * Wo;
        uint8_t* idx = r.idx.data() + size_t(c) * Ho * Wo;
        for (int y = 0; y < Ho; ++y)
            for (int x = 0; x < Wo; ++x) {
                int best = -1;
                int8_t bv = 0;
                for (int d = 0; d < 4; ++d) {
                    int8_t v = in[(2 * y + d / 2) * W + 2 * x + d % 2];
                    if (best < 0 || v > bv) {
                        best = d;
                        bv = v;
                    }
                }
                out[y * Wo + x] = bv;
                idx[y * Wo + x] = uint8_t(best);
            }
    }
    return r;
}

Q8Tensor maxpool_bwd(const Q8Tensor& g, const std::vector<uint8_t>& idx, const Shape& in_shape) {
    const int C = g.shape[0], Ho = g.shape[1], Wo = g.shape[2];
    const int H = in_shape[1], W = in_shape[2];
    if (idx.size() != g.size() || in_shape[0] != C)
        throw std::invalid_argument("maxpool_bwd: index/shape mismatch");
    Q8Tensor out(in_shape, g.exponent);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < Ho; ++y)
            for (int x = 0; x < Wo; ++x) {
                size_t i = (size_t(c) * Ho + y) * Wo + x;
                int d = idx[i];
                out.data[(size_t(c) * H + 2 * y + d / 2) * W + 2 * x + d % 2] = g.data[i];
            }
    return out;
}

// --- L1 filter response normalization -------------------------------------------

FrnOut frn_fwd(const Q8Tensor& t) {
    const int C = t.shape[0];
    const int HW = t.shape[1] * t.shape[2];
    FrnOut r;
    r.stats.nu.resize(C);
    r.stats.in_exponent = t.exponent;
    Q32Tensor tmp(t.shape, -7);
    for (int c = 0; c < C; ++c) {
        const int8_t* in = t.data.data() + size_t(c) * HW;
        int64_t sum = 0;
        for (int i = 0; i < HW; ++i) sum += std::abs(int(in[i]));
        int64_t nu = std::max<int64_t>(sum / HW, 1);
        r.stats.nu[c] = nu;
        int32_t* out = tmp.data.data() + size_t(c) * HW;
        for (int i = 0; i < HW; ++i)
            out[i] = int32_t(round_div(int64_t(in[i]) * 128, nu));
    }
    r.out = shift_round(tmp, 7);
    r.stats.shift = r.out.exponent + 7;
    return r;
}

Q8Tensor frn_bwd(const Q8Tensor& g, const FrnStats& stats) {
    const int C = g.shape[0];
    const int HW = g.shape[1] * g.shape[2];
    if (int(stats.nu.size()) != C)
        throw std::invalid_argument("frn_bwd: cached stats have wrong channel count");
    Q32Tensor tmp(g.shape, g.exponent - stats.in_exponent - 7);
    for (int c = 0; c < C; ++c) {
        const int8_t* in = g.data.data() + size_t(c) * HW;
        int32_t* out = tmp.data.data() + size_t(c) * HW;
        for (int i = 0; i < HW; ++i)
            out[i] = int32_t(round_div(int64_t(in[i]) * 128, stats.nu[c]));
    }
    return shift_round(tmp, 7);
}

}  // namespace oaip
