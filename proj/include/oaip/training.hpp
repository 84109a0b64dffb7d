// Loss over the FRN taps, integer loss gradients, backpropagation through
// the Siamese stack, the int8 weight update, and the batch-gradient training
// loop with the pruning controller attached.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "oaip/network.hpp"
#include "oaip/pruning.hpp"
#include "oaip/sampling.hpp"
#include "oaip/tensor.hpp"

namespace oaip {

struct TrainConfig {
    int iterations = 1000;                  // T
    int grad_bits = 5;                      // gradient bit budget, in (0,7]
    std::array<int, 3> tap_alpha = {1, 1, 1};
    int num_pos = 20;                       // n_h
    int num_neg = 30;                       // n_l
    int patch_size = 64;                    // s
};

struct LossRecord {
    int iteration = 0;
    WideScalar value;
    bool prune_marker = false;
};

// One tap's squared branch difference for one sample: mantissas aligned,
// differenced in 32-bit, squared and summed in 64-bit, scaled by alpha and
// by 2^-floor(log2(W*H*C)) folded into the exponent. Non-negative.
WideScalar tap_loss_term(const Q8Tensor& f1, const Q8Tensor& f2, int alpha);

// Gradient of the loss at one tap: sign * alpha * (f1 - f2) aligned and
// shift-rounded, with the 2/(W*H*C) constant as a pure exponent offset.
// sign is +1 for negative samples (pull together), -1 for positive (push
// apart). The t2 gradient is the negation of the t1 gradient.
struct TapGradPair {
    Q8Tensor g1, g2;
};
TapGradPair tap_loss_grad(const Q8Tensor& f1, const Q8Tensor& f2, int sign, int alpha);

// Int8 weight update: d = w - gw on mantissas, then rescaled so max|d|
// maps to 127. The weight exponent is a fixed per-layer frame.
Q8Tensor update_weights(const Q8Tensor& w, const Q8Tensor& gw);

// Backpropagates the three tap gradients of one branch through FRN, ReLU,
// pooling and the frozen-but-prunable convs, accumulating wide weight
// gradients for the three fine-tuned layers.
void backward_branch(const SiameseState& net, Branch b, const BranchTrace& trace,
                     const std::array<Q8Tensor, 3>& tap_grads,
                     std::array<WideTensor, 3>& gw_acc);
void backward_branch(const SiameseState& net, Branch b, const BranchTrace& trace,
                     const std::array<Q8Tensor, 3>& tap_grads,
                     std::array<GradAccumulator, 3>& gw_acc);

// Runs forward/loss/backward/update over the whole sample set each
// iteration. Builds the frozen conv3_3 cache on the first pass.
class Trainer {
  public:
    Trainer(SiameseState& net, const SampleSet& samples, TrainConfig cfg);

    LossRecord run_iteration(int k);

    std::vector<LossRecord>& history() { return history_; }
    const FrozenCache& cache() const { return cache_; }
    int last_conv_calls() const { return last_conv_calls_; }

  private:
    template <typename Acc>
    LossRecord iterate(int k);

    SiameseState& net_;
    const SampleSet& samples_;
    TrainConfig cfg_;
    FrozenCache cache_;
    std::vector<LossRecord> history_;
    int last_conv_calls_ = 0;
};

struct TrainLogRow {
    int iteration = 0;
    WideScalar loss;
    std::string event;  // none | prune | rollback
    int live_filters = 0;
    int64_t elapsed_ms = 0;
    std::string detail;
};

struct TrainResult {
    std::vector<TrainLogRow> log;
    bool budget_exceeded = false;
};

// Full training loop: one batch step per iteration, pruning every P
// iterations and the rollback check P/2 after, with the iteration counter
// rewound on rollback. Deterministic for fixed inputs.
TrainResult run_training(SiameseState& net, const SampleSet& samples, const TrainConfig& cfg,
                         const PruneConfig& pcfg);

void write_train_log_csv(const std::string& path, const std::vector<TrainLogRow>& rows);

}  // namespace oaip
