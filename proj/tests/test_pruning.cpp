#include <stdexcept>
#include "doctest.h"
#include "oaip/pruning.hpp"
#include "oaip/training.hpp"
#include "test_util.hpp"

using namespace oaip;

namespace {

// History with given losses at iterations 1..n (values at exponent 0).
std::vector<LossRecord> script(const std::vector<int64_t>& losses) {
    std::vector<LossRecord> h;
    for (size_t i = 0; i < losses.size(); ++i) h.push_back({int(i + 1), {losses[i], 0}, false});
    return h;
}

// Flat loss script of length n with chosen values at chosen iterations.
std::vector<LossRecord> script_n(int n, int64_t fill,
                                 std::initializer_list<std::pair<int, int64_t>> overrides) {
    std::vector<int64_t> v(size_t(n), fill);
    for (auto [k, val] : overrides) v[size_t(k - 1)] = val;
    return script(v);
}

}  // namespace

TEST_CASE("significance sums filter-pair L1 norms") {
    SiameseState net = build_network({4, 4, 4, 4, 4});
    // hand-set conv3_4 (layer 7): 4 filters x 4 in x 9
    for (int b = 0; b < 2; ++b) {
        Q8Tensor& w = net.weight(Branch(b), 7);
        std::fill(w.data.begin(), w.data.end(), int8_t(0));
    }
    // filter 0: t1 norm 3, t2 norm 2; filter 1: t1 norm 1, t2 norm 5
    net.weight(Branch::t1, 7).data[0] = -3;
    net.weight(Branch::t2, 7).data[0] = 2;
    net.weight(Branch::t1, 7).data[36] = 1;
    net.weight(Branch::t2, 7).data[36] = -5;
    auto s = significance(net, 7);
    CHECK(s[0] == 5);
    CHECK(s[1] == 6);
    CHECK(s[2] == 0);  // all-zero pair scores zero: pruned first

    SplitMix64 rng(0x51);
    init_random_weights(net, 17);
    for (int b = 0; b < 2; ++b) {
        Q8Tensor& w = net.weight(Branch(b), 11);
        for (auto& v : w.data) v = int8_t(rng.range(-127, 127));
        net.invalidate(11);
    }
    auto scores = significance(net, 11);
    for (int c = 0; c < 4; ++c) {
        int64_t want = 0;
        for (int b = 0; b < 2; ++b) {
            const Q8Tensor& w = net.weight(Branch(b), 11);
            for (int i = 0; i < 36; ++i) want += std::abs(int(w.data[size_t(c) * 36 + i]));
        }
        CHECK(scores[size_t(c)] == want);
    }
    CHECK_THROWS_AS(significance(net, 0), std::invalid_argument);
}

TEST_CASE("prune_step honors quotas, floors, ties and snapshots") {
    SiameseState net = build_network({4, 4, 4, 4, 4});
    init_random_weights(net, 23);
    PruneState ps;
    ps.quotas.assign(16, 0);
    ps.quotas[7] = 4;   // live 4 -> prunes 3 (leaves one)
    ps.quotas[8] = 0;   // untouched
    ps.quotas[11] = 1;
    auto history = script({10});

    SiameseState before = net;
    std::string detail = prune_step(net, ps, 1, history);
    CHECK(net.live_filters(7) == 1);
    CHECK(net.live_filters(8) == 4);
    CHECK(net.live_filters(11) == 3);
    CHECK(ps.last_prune_iteration == 1);
    CHECK(history[0].prune_marker);
    CHECK(detail.find("conv3_4:3") != std::string::npos);
    CHECK(detail.find("conv4_1:0") != std::string::npos);

    // snapshot restores the exact pre-prune state
    int k2 = apply_rollback(net, ps, 1 + 0, history, 0 * 2);  // interval 0 => rewind by 0
    CHECK(k2 == 1);
    for (int b = 0; b < 2; ++b)
        for (int l = 0; l < 16; ++l)
            CHECK(net.weights[size_t(b)][size_t(l)].data ==
                  before.weights[size_t(b)][size_t(l)].data);
    validate_structure(net);
}

TEST_CASE("ties in significance break toward the lower filter index") {
    SiameseState net = build_network({4, 4, 4, 4, 4});
    // per-filter constant weights 5,6,5,7: filters 0 and 2 tie at the bottom
    const int8_t fill[4] = {5, 6, 5, 7};
    for (int b = 0; b < 2; ++b) {
        for (int l = 7; l < 16; ++l) {
            Q8Tensor& w = net.weight(Branch(b), l);
            std::fill(w.data.begin(), w.data.end(), int8_t(1));
            net.invalidate(l);
        }
        Q8Tensor& w = net.weight(Branch(b), 7);
        for (int o = 0; o < 4; ++o)
            std::fill_n(w.data.begin() + o * 36, 36, fill[o]);
    }
    PruneState ps;
    ps.quotas.assign(16, 0);
    ps.quotas[7] = 1;
    auto history = script({10});
    prune_step(net, ps, 1, history);
    CHECK(net.live_filters(7) == 3);
    CHECK(net.weight(Branch::t1, 7).data[0] == 6);  // filter 0, not 2, was removed
}

TEST_CASE("rollback decision follows the loss recovery rule") {
    // L^max = 100 (iter 1), L^last = L_19 = 80, check at k = 30
    auto h1 = script_n(30, 90, {{1, 100}, {19, 80}, {30, 90}});
    CHECK(rollback_check(h1, {7, 10}, 30, 20));  // 10 < 0.7*20 = 14

    auto h2 = script_n(30, 90, {{1, 100}, {19, 80}, {30, 70}});
    CHECK(!rollback_check(h2, {7, 10}, 30, 20));  // 30 < 14 is false

    // boundary: everything equal -> 0 < 0 is false -> greedy
    auto h3 = script_n(30, 100, {});
    CHECK(!rollback_check(h3, {7, 10}, 30, 20));
}

TEST_CASE("apply_rollback rewinds, truncates history and halves quotas") {
    SiameseState net = build_network({4, 4, 4, 4, 4});
    init_random_weights(net, 29);
    PruneState ps;
    ps.quotas.assign(16, 0);
    ps.quotas[7] = 8;

    auto history = script_n(20, 50, {});
    SiameseState at_prune = net;
    prune_step(net, ps, 20, history);  // snapshot at k=20, history size 20

    for (int k = 21; k <= 30; ++k) history.push_back({k, {60, 0}, false});
    int k = apply_rollback(net, ps, 30, history, 20);
    CHECK(k == 20);
    CHECK(history.size() == 20);
    CHECK(ps.quotas[7] == 4);
    for (int b = 0; b < 2; ++b)
        for (int l = 0; l < 16; ++l)
            CHECK(net.weights[size_t(b)][size_t(l)].data ==
                  at_prune.weights[size_t(b)][size_t(l)].data);

    // repeated rollbacks from the same snapshot keep halving: 4 -> 2 -> 1 -> 0
    for (int expect : {2, 1, 0}) {
        for (int kk = 21; kk <= 30; ++kk) history.push_back({kk, {60, 0}, false});
        apply_rollback(net, ps, 30, history, 20);
        CHECK(ps.quotas[7] == expect);
    }

    PruneState empty;
    CHECK_THROWS_AS(apply_rollback(net, empty, 30, history, 20), std::logic_error);
}

TEST_CASE("greedy reset reads the current live counts") {
    SiameseState net = build_network();  // 512-wide deep layers
    PruneState ps;
    apply_greedy_reset(ps, net, {1, 16});
    CHECK(ps.quotas[8] == 32);   // 512/16
    CHECK(ps.quotas[7] == 16);   // 256/16
    remove_filters(net, 8, {0, 1});
    apply_greedy_reset(ps, net, {1, 16});
    CHECK(ps.quotas[8] == 31);  // floor(510/16)

    SiameseState tiny = build_network({4, 4, 4, 10, 4});
    apply_greedy_reset(ps, tiny, {1, 16});
    CHECK(ps.quotas[8] == 0);  // floor(10/16): retired from pruning
}

TEST_CASE("controller schedule: prune at P, check at P/2 after the first prune") {
    SiameseState net = build_network({8, 8, 8, 8, 8});
    init_random_weights(net, 31);
    PruneConfig cfg;
    cfg.interval = 4;
    cfg.max_rate = {1, 2};
    cfg.tolerance = {7, 10};
    PruneController ctl(cfg, net);
    CHECK(ctl.state().quotas[8] == 4);

    std::vector<LossRecord> history;
    std::vector<std::string> events;
    int k = 1;
    const int total_live_before = net.total_prunable_filters();
    // plateaued losses: the check never rolls back (0 < theta*0 is false)
    for (int step = 0; step < 10; ++step) {
        history.push_back({k, {100, 0}, false});
        PruneOutcome out = ctl.after_iteration(k, net, history);
        events.push_back(out.kind == PruneOutcome::Kind::prune      ? "prune"
                         : out.kind == PruneOutcome::Kind::rollback ? "rollback"
                                                                    : "none");
        if (out.kind == PruneOutcome::Kind::rollback) k = out.rewound_to;
        ++k;
    }
    CHECK(events ==
          std::vector<std::string>{"none", "none", "none", "prune", "none", "none", "none",
                                   "prune", "none", "none"});
    // the k=2 check before any prune did nothing; the k=6 check after the
    // first prune ran greedily
    CHECK(net.total_prunable_filters() < total_live_before);
}

TEST_CASE("controller rollback path restores filters and rewinds") {
    SiameseState net = build_network({8, 8, 8, 8, 8});
    init_random_weights(net, 37);
    PruneConfig cfg;
    cfg.interval = 4;
    cfg.max_rate = {1, 2};
    PruneController ctl(cfg, net);

    std::vector<LossRecord> history;
    // falling losses until the prune at k=4, then a spike at the k=6 check
    std::vector<int64_t> vals = {100, 90, 85, 80, 82, 99};
    int k = 1;
    int live_at_prune = 0;
    PruneOutcome last;
    for (int step = 0; step < 6; ++step) {
        history.push_back({k, {vals[size_t(step)], 0}, false});
        if (k == 4) live_at_prune = net.total_prunable_filters();
        last = ctl.after_iteration(k, net, history);
        if (last.kind == PruneOutcome::Kind::rollback) break;
        ++k;
    }
    CHECK(last.kind == PruneOutcome::Kind::rollback);
    CHECK(last.rewound_to == 4);
    CHECK(history.size() == 4);
    CHECK(net.total_prunable_filters() == live_at_prune);
    CHECK(ctl.state().quotas[8] == 2);  // halved from 4
}
