#include "oaip/pruning.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "oaip/training.hpp"

namespace oaip {

void validate(const PruneConfig& cfg) {
    if (cfg.interval < 2 || cfg.interval % 2 != 0)
        throw std::invalid_argument("prune interval must be even and >= 2");
    if (cfg.max_rate.num <= 0 || cfg.max_rate.num >= cfg.max_rate.den)
        throw std::invalid_argument("max prune rate must be in (0,1)");
    if (cfg.tolerance.num <= 0 || cfg.tolerance.num >= cfg.tolerance.den)
        throw std::invalid_argument("rollback tolerance must be in (0,1)");
}

std::vector<int64_t> significance(const SiameseState& net, int layer) {
    const LayerSpec& l = net.layers.at(size_t(layer));
    if (!l.prunable) throw std::invalid_argument("significance: " + l.name + " is not prunable");
    std::vector<int64_t> scores(size_t(l.out_channels), 0);
    const size_t row = size_t(l.in_channels) * 9;
    for (const auto& br : net.weights) {
        const Q8Tensor& w = br[size_t(layer)];
        for (int c = 0; c < l.out_channels; ++c) {
            int64_t s = 0;
            const int8_t* f = w.data.data() + size_t(c) * row;
            for (size_t i = 0; i < row; ++i) s += std::abs(int(f[i]));
            scores[size_t(c)] += s;
        }
    }
    return scores;
}

std::string prune_step(SiameseState& net, PruneState& ps, int k,
                       std::vector<LossRecord>& history) {
    ps.snapshot = NetSnapshot{net.layers, net.weights, ps.quotas, k, history.size()};

    // decide victims everywhere first, then mutate
    struct Plan {
        int layer;
        std::vector<int> victims;
    };
    std::vector<Plan> plans;
    std::string detail;
    for (int l = 0; l < int(net.layers.size()); ++l) {
        if (!net.layers[size_t(l)].prunable) continue;
        const int live = net.live_filters(l);
        const int quota = ps.quotas[size_t(l)];
        const int n = std::min(quota, live - 1);
        if (!detail.empty()) detail += ";";
        detail += net.layers[size_t(l)].name + ":" + std::to_string(std::max(n, 0));
        if (n <= 0) continue;
        std::vector<int64_t> scores = significance(net, l);
        std::vector<int> order(static_cast<size_t>(live), 0);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (scores[size_t(a)] != scores[size_t(b)]) return scores[size_t(a)] < scores[size_t(b)];
            return a < b;
        });
        plans.push_back({l, {order.begin(), order.begin() + n}});
    }
    for (const auto& p : plans) remove_filters(net, p.layer, p.victims);

    ps.last_prune_iteration = k;
    if (!history.empty()) history.back().prune_marker = true;
    return detail;
}

bool rollback_check(const std::vector<LossRecord>& history, const Rational& tolerance,
                    int k, int last_prune_iteration) {
    if (history.empty() || last_prune_iteration <= 0)
        throw std::logic_error("rollback_check called before any pruning");

    WideScalar lmax = history.front().value;
    const WideScalar* lk = nullptr;
    const WideScalar* llast = nullptr;
    for (const auto& rec : history) {
        if (rec.iteration <= k && wide_cmp(rec.value, lmax) > 0) lmax = rec.value;
        if (rec.iteration == k) lk = &rec.value;
        if (rec.iteration == last_prune_iteration - 1) llast = &rec.value;
    }
    if (!lk || !llast)
        throw std::logic_error("rollback_check: loss history is missing iteration " +
                               std::to_string(lk ? last_prune_iteration - 1 : k));

    WideScalar d1 = wide_sub(lmax, *lk);
    WideScalar d2 = wide_sub(lmax, *llast);
    // exact: d1 < (num/den) * d2 with both at a common exponent
    d1 = wide_normalize(d1);
    d2 = wide_normalize(d2);
    int e = std::max(d1.exponent, d2.exponent);
    int64_t m1 = shift_round_scalar(d1.mant, e - d1.exponent);
    int64_t m2 = shift_round_scalar(d2.mant, e - d2.exponent);
    return __int128(m1) * tolerance.den < __int128(m2) * tolerance.num;
}

int apply_rollback(SiameseState& net, PruneState& ps, int k,
                   std::vector<LossRecord>& history, int interval) {
    if (!ps.snapshot) throw std::logic_error("apply_rollback without a snapshot");
    const NetSnapshot& s = *ps.snapshot;
    net.layers = s.layers;
    net.weights = s.weights;
    net.invalidate_packed();
    history.resize(s.history_size);
    for (auto& q : ps.quotas) q /= 2;
    const int rewound = k - interval / 2;
    if (rewound != s.iteration)
        throw std::logic_error("rollback landed at iteration " + std::to_string(rewound) +
                               " but the snapshot is from " + std::to_string(s.iteration));
    return rewound;
}

void apply_greedy_reset(PruneState& ps, const SiameseState& net, const Rational& max_rate) {
    ps.quotas.assign(net.layers.size(), 0);
    for (int l = 0; l < int(net.layers.size()); ++l)
        if (net.layers[size_t(l)].prunable)
            ps.quotas[size_t(l)] =
                int(int64_t(net.live_filters(l)) * max_rate.num / max_rate.den);
}

PruneController::PruneController(PruneConfig cfg, const SiameseState& net) : cfg_(cfg) {
    validate(cfg_);
    apply_greedy_reset(st_, net, cfg_.max_rate);  // initial quotas from live counts
}

PruneOutcome PruneController::after_iteration(int k, SiameseState& net,
                                              std::vector<LossRecord>& history) {
    PruneOutcome out;
    if (k % cfg_.interval == 0) {
        out.kind = PruneOutcome::Kind::prune;
        out.detail = prune_step(net, st_, k, history);
    } else if (k % cfg_.interval == cfg_.interval / 2 && st_.last_prune_iteration > 0) {
        if (rollback_check(history, cfg_.tolerance, k, st_.last_prune_iteration)) {
            out.kind = PruneOutcome::Kind::rollback;
            out.rewound_to = apply_rollback(net, st_, k, history, cfg_.interval);
            out.detail = "rewound-to:" + std::to_string(out.rewound_to);
        } else {
            apply_greedy_reset(st_, net, cfg_.max_rate);
            out.detail = "greedy-reset";
        }
    }
    return out;
}

}  // namespace oaip
