#include <cmath>

#include "doctest.h"
#include "float_reference.hpp"
#include "oaip/training.hpp"
#include "test_util.hpp"

using namespace oaip;

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return na == nb ? 1.0 : 0.0;
    return dot / std::sqrt(na * nb);
}

Sample random_sample(SplitMix64& rng, int s, bool positive) {
    Sample sm;
    sm.positive = positive;
    sm.pre = Q8Tensor({3, s, s}, 0);
    sm.post = Q8Tensor({3, s, s}, 0);
    for (auto& v : sm.pre.data) v = int8_t(rng.below(128));
    for (auto& v : sm.post.data) v = int8_t(rng.below(128));
    return sm;
}

}  // namespace

TEST_CASE("integer weight gradients track the analytic float gradients") {
    int good = 0, trials = 12;
    for (int trial = 0; trial < trials; ++trial) {
        SiameseState net = build_network({4, 4, 4, 4, 4});
        init_random_weights(net, 1000 + uint64_t(trial));
        SplitMix64 rng(500 + uint64_t(trial));
        Sample sm = random_sample(rng, 16, trial % 2 == 0);

        // integer path
        BranchForward f1 = forward_branch(net, Branch::t1, sm.pre, nullptr, true);
        BranchForward f2 = forward_branch(net, Branch::t2, sm.post, nullptr, true);
        const int sign = sm.positive ? -1 : +1;
        std::array<Q8Tensor, 3> g1s, g2s;
        for (int t = 0; t < 3; ++t) {
            TapGradPair g =
                tap_loss_grad(f1.taps[size_t(t)].frn_out, f2.taps[size_t(t)].frn_out, sign, 1);
            g1s[size_t(t)] = std::move(g.g1);
            g2s[size_t(t)] = std::move(g.g2);
        }
        std::array<std::array<WideTensor, 3>, 2> acc;
        backward_branch(net, Branch::t1, f1.trace, g1s, acc[0]);
        backward_branch(net, Branch::t2, f2.trace, g2s, acc[1]);

        // analytic oracle: real-valued backward at the same forward state
        floatref::Net fnet = floatref::from_state(net);
        floatref::Trace t1 = floatref::from_branch_forward(f1);
        floatref::Trace t2 = floatref::from_branch_forward(f2);
        std::array<floatref::Tensor, 3> fg1, fg2;
        for (int t = 0; t < 3; ++t) {
            fg1[size_t(t)] =
                floatref::tap_loss_grad(t1.taps[size_t(t)], t2.taps[size_t(t)], sign, 1);
            fg2[size_t(t)] = fg1[size_t(t)];
            for (auto& v : fg2[size_t(t)].data) v = -v;
        }
        std::array<std::array<floatref::Weights, 3>, 2> facc;
        floatref::backward(fnet, 0, t1, fg1, facc[0]);
        floatref::backward(fnet, 1, t2, fg2, facc[1]);

        double worst = 1.0;
        for (int b = 0; b < 2; ++b)
            for (int t = 0; t < 3; ++t) {
                Q8Tensor gw = shift_to_grad_bits(acc[size_t(b)][size_t(t)], 5);
                worst = std::min(worst, cosine(dequantize(gw), facc[size_t(b)][size_t(t)].data));
            }
        INFO("trial ", trial, " worst tap cosine ", worst);
        if (worst >= 0.95) ++good;
    }
    // allow occasional quantization-unfriendly draws
    CHECK(good >= trials - 2);
}
