#include "oaip/training.hpp"

#include <bit>
#include <chrono>
#include <fstream>
#include <stdexcept>

namespace oaip {

namespace {

int mean_shift(size_t elems) {
    return elems > 1 ? std::bit_width(uint64_t(elems)) - 1 : 0;
}

void validate(const TrainConfig& cfg) {
    if (cfg.iterations < 1) throw std::invalid_argument("iteration count must be positive");
    if (cfg.grad_bits < 1 || cfg.grad_bits > 7)
        throw std::invalid_argument("gradient bit budget must be in (0,7]");
    for (int a : cfg.tap_alpha)
        if (a < 1 || a > (1 << 20))
            throw std::invalid_argument("tap weights must be positive integers <= 2^20");
}

}  // namespace

WideScalar tap_loss_term(const Q8Tensor& f1, const Q8Tensor& f2, int alpha) {
    check_same_shape(f1, f2, "tap_loss_term");
    const int e = std::max(f1.exponent, f2.exponent);
    const int s1 = e - f1.exponent, s2 = e - f2.exponent;
    int64_t sum = 0;
    for (size_t i = 0; i < f1.size(); ++i) {
        int64_t d = shift_round_scalar(f1.data[i], s1) - shift_round_scalar(f2.data[i], s2);
        sum += d * d;
    }
    return wide_normalize({sum * alpha, 2 * e - mean_shift(f1.size())});
}

TapGradPair tap_loss_grad(const Q8Tensor& f1, const Q8Tensor& f2, int sign, int alpha) {
    check_same_shape(f1, f2, "tap_loss_grad");
    const int e = std::max(f1.exponent, f2.exponent);
    const int s1 = e - f1.exponent, s2 = e - f2.exponent;
    Q32Tensor t(f1.shape, e);
    for (size_t i = 0; i < f1.size(); ++i) {
        int32_t d = int32_t(shift_round_scalar(f1.data[i], s1)) -
                    int32_t(shift_round_scalar(f2.data[i], s2));
        t.data[i] = sign * alpha * d;
    }
    TapGradPair g;
    g.g1 = shift_round(t, 7);
    // the 2/(W*H*C) loss constant is a pure exponent offset
    g.g1.exponent += 1 - mean_shift(f1.size());
    g.g2 = g.g1;
    for (auto& v : g.g2.data) v = int8_t(-v);
    return g;
}

Q8Tensor update_weights(const Q8Tensor& w, const Q8Tensor& gw) {
    check_same_shape(w, gw, "update_weights");
    std::vector<int32_t> d(w.size());
    int64_t maxabs = 0;
    for (size_t i = 0; i < w.size(); ++i) {
        d[i] = int32_t(w.data[i]) - int32_t(gw.data[i]);
        maxabs = std::max<int64_t>(maxabs, std::abs(int64_t(d[i])));
    }
    Q8Tensor out(w.shape, w.exponent);
    if (maxabs == 0) return out;
    for (size_t i = 0; i < w.size(); ++i)
        out.data[i] = int8_t(round_div(int64_t(d[i]) * 127, maxabs));
    return out;
}

namespace {
// Accumulation strategies for the per-sample weight gradients: the wide path
// materializes each sample's int32 gradient and adds it in int64; the fused
// path streams into one int32 accumulator inside the kernel.
struct WideAccPolicy {
    static void add(WideTensor& acc, const Q8Tensor& a, const Q8Tensor& g) {
        wide_accumulate(acc, conv_grad_weight_acc(a, g));
    }
};
struct FusedAccPolicy {
    static void add(GradAccumulator& acc, const Q8Tensor& a, const Q8Tensor& g) {
        conv_grad_weight_accumulate(a, g, acc);
    }
};

template <typename Policy, typename Acc>
void backward_branch_impl(const SiameseState& net, Branch b, const BranchTrace& trace,
                          const std::array<Q8Tensor, 3>& tap_grads, std::array<Acc, 3>& gw_acc) {
    // conv5_4 tap
    Q8Tensor g = frn_bwd(tap_grads[2], trace.frn_stats[2]);
    g = relu_bwd(g, trace.relu_masks[8]);
    Policy::add(gw_acc[2], trace.inputs[8], g);
    g = conv_bwd_input(g, net.packed(b, 15));
    for (int l = 14; l >= 12; --l) {
        g = relu_bwd(g, trace.relu_masks[size_t(l - kFirstActiveLayer)]);
        g = conv_bwd_input(g, net.packed(b, l));
    }
    // through pool4, join the conv4_4 tap gradient
    g = maxpool_bwd(g, trace.pool4_idx, trace.pool4_in_shape);
    g = align_add(g, frn_bwd(tap_grads[1], trace.frn_stats[1]));
    g = relu_bwd(g, trace.relu_masks[4]);
    Policy::add(gw_acc[1], trace.inputs[4], g);
    g = conv_bwd_input(g, net.packed(b, 11));
    for (int l = 10; l >= 8; --l) {
        g = relu_bwd(g, trace.relu_masks[size_t(l - kFirstActiveLayer)]);
        g = conv_bwd_input(g, net.packed(b, l));
    }
    // through pool3, join the conv3_4 tap gradient
    g = maxpool_bwd(g, trace.pool3_idx, trace.pool3_in_shape);
    g = align_add(g, frn_bwd(tap_grads[0], trace.frn_stats[0]));
    g = relu_bwd(g, trace.relu_masks[0]);
    Policy::add(gw_acc[0], trace.inputs[0], g);
}
}  // namespace

void backward_branch(const SiameseState& net, Branch b, const BranchTrace& trace,
                     const std::array<Q8Tensor, 3>& tap_grads,
                     std::array<WideTensor, 3>& gw_acc) {
    backward_branch_impl<WideAccPolicy>(net, b, trace, tap_grads, gw_acc);
}

void backward_branch(const SiameseState& net, Branch b, const BranchTrace& trace,
                     const std::array<Q8Tensor, 3>& tap_grads,
                     std::array<GradAccumulator, 3>& gw_acc) {
    backward_branch_impl<FusedAccPolicy>(net, b, trace, tap_grads, gw_acc);
}

Trainer::Trainer(SiameseState& net, const SampleSet& samples, TrainConfig cfg)
    : net_(net), samples_(samples), cfg_(cfg) {
    validate(cfg_);
    if (samples_.samples.empty()) throw std::invalid_argument("no training samples");
}

template <typename Acc>
LossRecord Trainer::iterate(int k) {
    const bool first = !cache_.valid;
    if (first) cache_.entries.resize(samples_.samples.size());

    std::array<std::array<Acc, 3>, 2> gw_acc;
    WideScalar loss;
    last_conv_calls_ = 0;

    for (size_t i = 0; i < samples_.samples.size(); ++i) {
        const Sample& s = samples_.samples[i];
        const Q8Tensor* c1 = first ? nullptr : &cache_.entries[i][0];
        const Q8Tensor* c2 = first ? nullptr : &cache_.entries[i][1];
        BranchForward f1 = forward_branch(net_, Branch::t1, s.pre, c1, true);
        BranchForward f2 = forward_branch(net_, Branch::t2, s.post, c2, true);
        last_conv_calls_ += f1.conv_calls + f2.conv_calls;
        if (first) {
            cache_.entries[i][0] = std::move(f1.frozen_out);
            cache_.entries[i][1] = std::move(f2.frozen_out);
        }

        const int sign = s.positive ? -1 : +1;
        std::array<Q8Tensor, 3> g1s, g2s;
        for (int t = 0; t < 3; ++t) {
            WideScalar term = tap_loss_term(f1.taps[size_t(t)].frn_out,
                                            f2.taps[size_t(t)].frn_out, cfg_.tap_alpha[size_t(t)]);
            loss = wide_add(loss, s.positive ? wide_neg(term) : term);
            TapGradPair g = tap_loss_grad(f1.taps[size_t(t)].frn_out, f2.taps[size_t(t)].frn_out,
                                          sign, cfg_.tap_alpha[size_t(t)]);
            g1s[size_t(t)] = std::move(g.g1);
            g2s[size_t(t)] = std::move(g.g2);
        }
        backward_branch(net_, Branch::t1, f1.trace, g1s, gw_acc[0]);
        backward_branch(net_, Branch::t2, f2.trace, g2s, gw_acc[1]);
    }
    if (first) cache_.valid = true;

    for (int b = 0; b < 2; ++b)
        for (int t = 0; t < 3; ++t) {
            const int layer = kTapLayers[size_t(t)];
            Q8Tensor gw = shift_to_grad_bits(gw_acc[size_t(b)][size_t(t)], cfg_.grad_bits);
            Q8Tensor& w = net_.weight(Branch(b), layer);
            w = update_weights(w, gw);
            net_.invalidate(layer);
        }

    LossRecord rec{k, loss, false};
    history_.push_back(rec);
    return rec;
}

LossRecord Trainer::run_iteration(int k) {
    // int32 batch accumulation is exact while samples * pixels * 127^2 fits;
    // fall back to the int64 path otherwise.
    const int tap_pixels = (cfg_.patch_size / 4) * (cfg_.patch_size / 4);
    const int64_t bound =
        int64_t(samples_.samples.size()) * tap_pixels * int64_t(kMantMax) * kMantMax;
    if (bound < (int64_t(1) << 30)) return iterate<GradAccumulator>(k);
    return iterate<WideTensor>(k);
}

TrainResult run_training(SiameseState& net, const SampleSet& samples, const TrainConfig& cfg,
                         const PruneConfig& pcfg) {
    TrainResult res;
    Trainer trainer(net, samples, cfg);
    PruneController controller(pcfg, net);

    // Rollbacks rewind the counter and replay; cap the total executed
    // iterations so a pathological loss sequence cannot spin forever.
    const long budget = 4L * cfg.iterations + 64L * pcfg.interval;
    long executed = 0;
    int k = 1;
    while (k <= cfg.iterations) {
        auto t0 = std::chrono::steady_clock::now();
        LossRecord rec = trainer.run_iteration(k);
        PruneOutcome out = controller.after_iteration(k, net, trainer.history());
        auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();

        TrainLogRow row;
        row.iteration = k;
        row.loss = rec.value;
        row.live_filters = net.total_prunable_filters();
        row.elapsed_ms = ms;
        switch (out.kind) {
            case PruneOutcome::Kind::prune: row.event = "prune"; break;
            case PruneOutcome::Kind::rollback: row.event = "rollback"; break;
            default: row.event = "none"; break;
        }
        row.detail = out.detail.empty() ? "-" : out.detail;
        res.log.push_back(std::move(row));

        if (out.kind == PruneOutcome::Kind::rollback) k = out.rewound_to;
        ++k;
        if (++executed > budget) {
            res.budget_exceeded = true;
            break;
        }
    }
    return res;
}

void write_train_log_csv(const std::string& path, const std::vector<TrainLogRow>& rows) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    f << "iteration,loss_mantissa,loss_exponent,event,live_filters,elapsed_ms,detail\n";
    for (const auto& r : rows)
        f << r.iteration << "," << r.loss.mant << "," << r.loss.exponent << "," << r.event << ","
          << r.live_filters << "," << r.elapsed_ms << "," << r.detail << "\n";
    if (!f.good()) throw std::runtime_error(path + ": write failed");
}

}  // namespace oaip
