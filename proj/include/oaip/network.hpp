// The Siamese VGG conv stack: construction, weight persistence, frozen-layer
// caching, per-branch forward with FRN taps, and structural filter removal.
// Branches t1 (pre image) and t2 (post image) always share the same
// structure; their weights diverge during fine-tuning.
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "oaip/kernels.hpp"
#include "oaip/tensor.hpp"

namespace oaip {

enum class Branch { t1 = 0, t2 = 1 };

struct LayerSpec {
    std::string name;  // conv1_1 .. conv5_4
    int block = 0;     // 1-based block
    int index = 0;     // 1-based position within the block
    int in_channels = 0;
    int out_channels = 0;  // live count after pruning
    bool frozen = false;   // conv1_1..conv3_3: output cacheable, never touched
    bool prunable = false; // conv3_4..conv5_4
    bool frn_tap = false;  // conv3_4, conv4_4, conv5_4 (the fine-tuned set)
};

// Layer indices of the three FRN taps in the 16-layer stack.
inline constexpr std::array<int, 3> kTapLayers = {7, 11, 15};
// First layer after the frozen prefix (conv3_4).
inline constexpr int kFirstActiveLayer = 7;
inline constexpr int kLayerCount = 16;

struct SiameseState {
    std::vector<LayerSpec> layers;
    std::array<std::vector<Q8Tensor>, 2> weights;  // [branch][layer]

    Q8Tensor& weight(Branch b, int layer) { return weights[size_t(b)][size_t(layer)]; }
    const Q8Tensor& weight(Branch b, int layer) const {
        return weights[size_t(b)][size_t(layer)];
    }
    // Packed form for the conv kernels; built lazily, dropped on mutation.
    const PackedWeights& packed(Branch b, int layer) const;
    void invalidate(int layer);
    void invalidate_packed() const;

    int live_filters(int layer) const { return layers[size_t(layer)].out_channels; }
    int total_prunable_filters() const;
    size_t weight_bytes() const;  // mantissa bytes across both branches

  private:
    mutable std::array<std::vector<PackedWeights>, 2> packed_;
};

// Standard stack: 16 conv layers in 5 blocks (64,128,256,512,512 wide),
// pools after blocks 1-4, FRN taps on conv3_4/conv4_4/conv5_4. Weights are
// zero until initialized or loaded.
SiameseState build_network();
// Same structure with custom block widths; used for small test nets.
SiameseState build_network(const std::array<int, 5>& block_widths);

// Seeded stand-in for pre-trained weights: mantissas uniform in [-32, 32],
// per-layer exponent chosen so the dequantized spread roughly matches
// sqrt(2 / (9 * fan_in)). Both branches start identical.
void init_random_weights(SiameseState& state, uint64_t seed);

// OAIPW1 container, both branches of all 16 layers with live channel counts.
void save_weights(const SiameseState& state, const std::string& path);
SiameseState load_weights(const std::string& path);

struct TapRecord {
    Q8Tensor frn_out;
    FrnStats frn_stats;
};

// Everything backward needs from one branch pass over one sample.
struct BranchTrace {
    std::array<Q8Tensor, 9> inputs;                  // inputs to layers 7..15
    std::array<std::vector<uint8_t>, 9> relu_masks;  // masks of layers 7..15
    std::array<FrnStats, 3> frn_stats;               // per tap
    std::vector<uint8_t> pool3_idx, pool4_idx;
    Shape pool3_in_shape, pool4_in_shape;
};

struct BranchForward {
    std::array<TapRecord, 3> taps;
    BranchTrace trace;       // filled when requested
    Q8Tensor frozen_out;     // conv3_3 block output, when the prefix ran
    int conv_calls = 0;
};

// Per-sample per-branch stored conv3_3 block output. Valid while the sample
// set and the frozen prefix stay unchanged (pruning never touches either).
struct FrozenCache {
    std::vector<std::array<Q8Tensor, 2>> entries;
    bool valid = false;
};

// Runs conv/relu/pool through one branch. With a cache entry the frozen
// prefix is skipped and the pass starts at conv3_4. Input must be 3xHxW
// with H, W >= 16.
BranchForward forward_branch(const SiameseState& state, Branch b, const Q8Tensor& input,
                             const Q8Tensor* frozen_cache = nullptr,
                             bool want_trace = false);

// Removes the indexed output filters of `layer` in both branches and the
// matching input channels of the next layer. At least one filter must
// survive.
void remove_filters(SiameseState& state, int layer, const std::vector<int>& indices);

// Throws when channel chaining or branch symmetry is broken.
void validate_structure(const SiameseState& state);

}  // namespace oaip
