// End-to-end orchestration: load rasters, select samples, fine-tune with
// integer training + pruning, run whole-image inference, write artifacts.
#pragma once

#include <array>
#include <optional>
#include <string>

#include "oaip/inference.hpp"
#include "oaip/int8_math.hpp"

namespace oaip {

struct RunConfig {
    std::string pre_path, post_path;
    std::string gt_path;       // optional
    std::string weights_path;  // optional; seeded init otherwise
    std::string out_dir;

    int patch_size = 64;            // s
    int num_pos = 20;               // n_h
    int num_neg = 30;               // n_l
    int iterations = 1000;          // T
    int prune_interval = 20;        // P
    Rational prune_rate = {1, 16};  // r_max
    Rational theta = {7, 10};
    int grad_bits = 5;              // b_gw
    std::array<int, 3> alpha = {1, 1, 1};
    uint64_t seed = 1;
    int tile = 0;  // 0 = whole image
};

// "p/q", "0.7", "1" -> exact rational
Rational parse_rational(const std::string& text);

struct PipelineResult {
    std::optional<MetricsReport> report;  // present when ground truth given
    int threshold = 0;
    int initial_filters = 0, final_filters = 0;
    size_t initial_weight_bytes = 0, final_weight_bytes = 0;
    bool budget_exceeded = false;
};

// Writes change_map.pgm, difference_map.pgm, train_log.csv, metrics.txt
// (when ground truth is given), weights_final.oaipw and
// config_resolved.txt into out_dir.
PipelineResult run_pipeline(const RunConfig& cfg);

}  // namespace oaip
