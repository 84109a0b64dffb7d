// Adaptive filter-pair pruning: L1 significance scores, periodic pruning
// with per-layer quotas, the loss-recovery rollback check, snapshot/restore,
// and quota adaptation (halve on rollback, reset greedily otherwise).
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "oaip/int8_math.hpp"
#include "oaip/network.hpp"

namespace oaip {

struct LossRecord;  // training.hpp

struct PruneConfig {
    int interval = 20;             // P, even and >= 2
    Rational max_rate = {1, 16};   // largest fraction of live filters per prune
    Rational tolerance = {7, 10};  // rollback threshold factor, in (0,1)
};
void validate(const PruneConfig& cfg);

// Deep copy of everything a rollback must restore.
struct NetSnapshot {
    std::vector<LayerSpec> layers;
    std::array<std::vector<Q8Tensor>, 2> weights;
    std::vector<int> quotas;
    int iteration = 0;
    size_t history_size = 0;
};

struct PruneState {
    std::vector<int> quotas;  // per layer; 0 for non-prunable layers
    std::optional<NetSnapshot> snapshot;
    int last_prune_iteration = 0;  // 0 until the first prune
};

// Per-filter score: L1 norm of the filter pair's mantissas across both
// branches (the branches of one layer share an exponent frame).
std::vector<int64_t> significance(const SiameseState& net, int layer);

// Snapshot, then remove the min(quota, live-1) lowest-scoring filter pairs
// of every prunable layer (ties to the lower index). Returns a
// "layer:count;..." detail string.
std::string prune_step(SiameseState& net, PruneState& ps, int k,
                       std::vector<LossRecord>& history);

// True when loss recovery since the last prune is too small:
// Lmax - Lk < tolerance * (Lmax - Llast), compared exactly.
bool rollback_check(const std::vector<LossRecord>& history, const Rational& tolerance,
                    int k, int last_prune_iteration);

// Restore the snapshot, truncate history to it, halve all quotas, and
// return the rewound iteration counter (k - P/2).
int apply_rollback(SiameseState& net, PruneState& ps, int k,
                   std::vector<LossRecord>& history, int interval);

// Quotas back to floor(max_rate * live), read from the current live counts.
void apply_greedy_reset(PruneState& ps, const SiameseState& net, const Rational& max_rate);

struct PruneOutcome {
    enum class Kind { none, prune, rollback } kind = Kind::none;
    int rewound_to = 0;
    std::string detail;
};

// Drives the schedule: prune at k mod P == 0, check at k mod P == P/2 once
// a prune exists.
class PruneController {
  public:
    PruneController(PruneConfig cfg, const SiameseState& net);

    PruneOutcome after_iteration(int k, SiameseState& net, std::vector<LossRecord>& history);

    const PruneState& state() const { return st_; }
    PruneState& state() { return st_; }

  private:
    PruneConfig cfg_;
    PruneState st_;
};

}  // namespace oaip
