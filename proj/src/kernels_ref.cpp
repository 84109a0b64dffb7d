// Naive nested-loop convolution kernels with int64 accumulation. These are
// the comparison oracles for the production kernels and the serial side of
// the kernel benchmark; keep them boring.
#include <stdexcept>

#include "oaip/kernels.hpp"

namespace oaip::ref {

std::vector<int64_t> widen(const Q8Tensor& t) {
    return std::vector<int64_t>(t.data.begin(), t.data.end());
}

std::vector<int64_t> conv_fwd_acc(const std::vector<int64_t>& a, const Shape& ash,
                                  const std::vector<int64_t>& w, const Shape& wsh) {
    int C = ash[0], H = ash[1], W = ash[2];
    int O = wsh[0];
    if (wsh[1] != C || wsh[2] != 3 || wsh[3] != 3)
        throw std::invalid_argument("ref::conv_fwd_acc: shape mismatch");
    std::vector<int64_t> acc(size_t(O) * H * W, 0);
    for (int o = 0; o < O; ++o)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                int64_t s = 0;
                for (int c = 0; c < C; ++c)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            int sy = y + ky - 1, sx = x + kx - 1;
                            if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                            s += w[((size_t(o) * C + c) * 3 + ky) * 3 + kx] *
                                 a[(size_t(c) * H + sy) * W + sx];
                        }
                acc[(size_t(o) * H + y) * W + x] = s;
            }
    return acc;
}

std::vector<int64_t> conv_bwd_input_acc(const std::vector<int64_t>& ga, const Shape& gsh,
                                        const std::vector<int64_t>& w, const Shape& wsh) {
    int O = gsh[0], H = gsh[1], W = gsh[2];
    int C = wsh[1];
    if (wsh[0] != O || wsh[2] != 3 || wsh[3] != 3)
        throw std::invalid_argument("ref::conv_bwd_input_acc: shape mismatch");
    std::vector<int64_t> acc(size_t(C) * H * W, 0);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                int64_t s = 0;
                for (int o = 0; o < O; ++o)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            int sy = y + 1 - ky, sx = x + 1 - kx;
                            if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                            s += w[((size_t(o) * C + c) * 3 + ky) * 3 + kx] *
                                 ga[(size_t(o) * H + sy) * W + sx];
                        }
                acc[(size_t(c) * H + y) * W + x] = s;
            }
    return acc;
}

std::vector<int64_t> conv_grad_weight_acc(const std::vector<int64_t>& a, const Shape& ash,
                                          const std::vector<int64_t>& ga, const Shape& gsh) {
    int C = ash[0], H = ash[1], W = ash[2];
    int O = gsh[0];
    if (gsh[1] != H || gsh[2] != W)
        throw std::invalid_argument("ref::conv_grad_weight_acc: shape mismatch");
    std::vector<int64_t> acc(size_t(O) * C * 9, 0);
    for (int o = 0; o < O; ++o)
        for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    int64_t s = 0;
                    for (int y = 0; y < H; ++y)
                        for (int x = 0; x < W; ++x) {
                            int sy = y + ky - 1, sx = x + kx - 1;
                            if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                            s += ga[(size_t(o) * H + y) * W + x] *
                                 a[(size_t(c) * H + sy) * W + sx];
                        }
                    acc[(size_t(o) * C + c) * 9 + ky * 3 + kx] = s;
                }
    return acc;
}

}  // namespace oaip::ref
