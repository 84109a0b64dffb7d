#include "oaip/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "oaip/prng.hpp"

namespace oaip {

namespace {

constexpr char kWeightMagic[6] = {'O', 'A', 'I', 'P', 'W', '1'};

std::vector<LayerSpec> make_layers(const std::array<int, 5>& widths) {
    const std::array<int, 5> block_sizes = {2, 2, 4, 4, 4};
    std::vector<LayerSpec> layers;
    int in_ch = 3;
    for (int blk = 0; blk < 5; ++blk)
        for (int i = 0; i < block_sizes[size_t(blk)]; ++i) {
            LayerSpec l;
            l.name = "conv" + std::to_string(blk + 1) + "_" + std::to_string(i + 1);
            l.block = blk + 1;
            l.index = i + 1;
            l.in_channels = in_ch;
            l.out_channels = widths[size_t(blk)];
            in_ch = l.out_channels;
            layers.push_back(std::move(l));
        }
    for (int i = 0; i < kLayerCount; ++i) {
        layers[size_t(i)].frozen = i < kFirstActiveLayer;
        layers[size_t(i)].prunable = i >= kFirstActiveLayer;
        layers[size_t(i)].frn_tap =
            std::find(kTapLayers.begin(), kTapLayers.end(), i) != kTapLayers.end();
    }
    return layers;
}

SiameseState from_layers(std::vector<LayerSpec> layers) {
    SiameseState st;
    st.layers = std::move(layers);
    for (auto& br : st.weights) {
        br.reserve(st.layers.size());
        for (const auto& l : st.layers)
            br.emplace_back(Shape{l.out_channels, l.in_channels, 3, 3}, 0);
    }
    st.invalidate_packed();
    return st;
}

void read_exact(std::ifstream& f, void* dst, size_t n, const std::string& path) {
    std::streampos at = f.tellg();
    f.read(reinterpret_cast<char*>(dst), std::streamsize(n));
    if (!f.good())
        throw std::runtime_error(path + ": truncated at byte offset " +
                                 std::to_string(long(at)));
}

uint16_t read_u16(std::ifstream& f, const std::string& path) {
    uint8_t b[2];
    read_exact(f, b, 2, path);
    return uint16_t(b[0] | (b[1] << 8));
}

int16_t read_i16(std::ifstream& f, const std::string& path) {
    return int16_t(read_u16(f, path));
}

void write_u16(std::ofstream& f, uint16_t v) {
    uint8_t b[2] = {uint8_t(v & 0xff), uint8_t(v >> 8)};
    f.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

const PackedWeights& SiameseState::packed(Branch b, int layer) const {
    auto& cache = packed_[size_t(b)];
    if (cache.size() != layers.size()) cache.resize(layers.size());
    auto& slot = cache[size_t(layer)];
    if (slot.empty()) slot = pack_weights(weight(b, layer));
    return slot;
}

void SiameseState::invalidate(int layer) {
    for (auto& cache : packed_)
        if (size_t(layer) < cache.size()) cache[size_t(layer)] = PackedWeights{};
}

void SiameseState::invalidate_packed() const {
    for (auto& cache : packed_) {
        cache.clear();
        cache.resize(layers.size());
    }
}

int SiameseState::total_prunable_filters() const {
    int n = 0;
    for (const auto& l : layers)
        if (l.prunable) n += l.out_channels;
    return n;
}

size_t SiameseState::weight_bytes() const {
    size_t n = 0;
    for (const auto& br : weights)
        for (const auto& w : br) n += w.size();
    return n;
}

SiameseState build_network() { return build_network({64, 128, 256, 512, 512}); }

SiameseState build_network(const std::array<int, 5>& block_widths) {
    return from_layers(make_layers(block_widths));
}

void init_random_weights(SiameseState& state, uint64_t seed) {
    // std of uniform{-32..32}
    const double uniform_std = std::sqrt((65.0 * 65.0 - 1.0) / 12.0);
    for (size_t li = 0; li < state.layers.size(); ++li) {
        const LayerSpec& l = state.layers[li];
        SplitMix64 rng(seed * 0x9e3779b97f4a7c15ull + li + 1);
        double target = std::sqrt(2.0 / (9.0 * l.in_channels));
        int exp = int(std::lround(std::log2(target / uniform_std)));
        Q8Tensor w(Shape{l.out_channels, l.in_channels, 3, 3}, exp);
        for (auto& v : w.data) v = int8_t(rng.range(-32, 32));
        state.weights[0][li] = w;
        state.weights[1][li] = std::move(w);
        state.invalidate(int(li));
    }
}

void save_weights(const SiameseState& state, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    f.write(kWeightMagic, sizeof(kWeightMagic));
    write_u16(f, uint16_t(state.layers.size()));
    for (size_t li = 0; li < state.layers.size(); ++li) {
        const LayerSpec& l = state.layers[li];
        f.put(char(uint8_t(l.name.size())));
        f.write(l.name.data(), std::streamsize(l.name.size()));
        write_u16(f, uint16_t(l.in_channels));
        write_u16(f, uint16_t(l.out_channels));
        f.put(char(3));
        for (const auto& br : state.weights)
            write_u16(f, uint16_t(int16_t(br[li].exponent)));
        for (const auto& br : state.weights)
            f.write(reinterpret_cast<const char*>(br[li].data.data()),
                    std::streamsize(br[li].size()));
    }
    if (!f.good()) throw std::runtime_error(path + ": write failed");
}

SiameseState load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(path + ": cannot open");
    char magic[6];
    read_exact(f, magic, 6, path);
    if (std::memcmp(magic, kWeightMagic, 6) != 0)
        throw std::runtime_error(path + ": bad magic at byte offset 0, expected \"OAIPW1\"");

    const std::array<int, 5> standard = {64, 128, 256, 512, 512};
    std::vector<LayerSpec> expect = make_layers(standard);

    uint16_t count = read_u16(f, path);
    if (count != expect.size())
        throw std::runtime_error(path + ": layer count " + std::to_string(count) +
                                 ", expected " + std::to_string(expect.size()));

    std::vector<LayerSpec> layers = expect;
    std::array<std::vector<Q8Tensor>, 2> weights;
    int prev_out = -1;
    for (size_t li = 0; li < layers.size(); ++li) {
        std::streampos at = f.tellg();
        uint8_t nlen = 0;
        read_exact(f, &nlen, 1, path);
        std::string name(nlen, '\0');
        read_exact(f, name.data(), nlen, path);
        if (name != expect[li].name)
            throw std::runtime_error(path + ": layer " + std::to_string(li) + " named \"" +
                                     name + "\", expected \"" + expect[li].name +
                                     "\" (byte offset " + std::to_string(long(at)) + ")");
        int in_ch = read_u16(f, path);
        int out_ch = read_u16(f, path);
        uint8_t kernel = 0;
        read_exact(f, &kernel, 1, path);
        if (kernel != 3)
            throw std::runtime_error(path + ": " + name + " kernel " + std::to_string(kernel) +
                                     ", expected 3");
        if (out_ch < 1 || out_ch > expect[li].out_channels ||
            (expect[li].frozen && out_ch != expect[li].out_channels))
            throw std::runtime_error(path + ": " + name + " out_channels " +
                                     std::to_string(out_ch) +
                                     " incompatible with the architecture");
        int expect_in = prev_out < 0 ? 3 : prev_out;
        if (in_ch != expect_in)
            throw std::runtime_error(path + ": " + name + " in_channels " +
                                     std::to_string(in_ch) + ", expected " +
                                     std::to_string(expect_in) + " (byte offset " +
                                     std::to_string(long(at)) + ")");
        prev_out = out_ch;
        layers[li].in_channels = in_ch;
        layers[li].out_channels = out_ch;

        int exps[2] = {read_i16(f, path), read_i16(f, path)};
        for (int b = 0; b < 2; ++b) {
            Q8Tensor w(Shape{out_ch, in_ch, 3, 3}, exps[b]);
            read_exact(f, w.data.data(), w.size(), path);
            weights[size_t(b)].push_back(std::move(w));
        }
    }
    SiameseState st;
    st.layers = std::move(layers);
    st.weights = std::move(weights);
    st.invalidate_packed();
    validate_structure(st);
    return st;
}

void validate_structure(const SiameseState& state) {
    for (size_t li = 0; li < state.layers.size(); ++li) {
        const LayerSpec& l = state.layers[li];
        if (li > 0 && state.layers[li - 1].out_channels != l.in_channels)
            throw std::runtime_error("structure: " + l.name + " in_channels " +
                                     std::to_string(l.in_channels) + " != previous out " +
                                     std::to_string(state.layers[li - 1].out_channels));
        for (const auto& br : state.weights) {
            const Q8Tensor& w = br[li];
            if (w.shape != Shape{l.out_channels, l.in_channels, 3, 3})
                throw std::runtime_error("structure: " + l.name + " weight shape " +
                                         shape_str(w.shape) + " out of sync");
        }
        if (l.out_channels < 1)
            throw std::runtime_error("structure: " + l.name + " has no filters left");
    }
}

BranchForward forward_branch(const SiameseState& state, Branch b, const Q8Tensor& input,
                             const Q8Tensor* frozen_cache, bool want_trace) {
    BranchForward r;
    Q8Tensor x;
    if (frozen_cache) {
        x = *frozen_cache;
    } else {
        if (input.shape.size() != 3 || input.shape[0] != 3)
            throw std::invalid_argument("forward_branch: input must be 3xHxW, got " +
                                        shape_str(input.shape));
        if (input.shape[1] < 16 || input.shape[2] < 16)
            throw std::invalid_argument("forward_branch: spatial size " +
                                        shape_str(input.shape) +
                                        " too small for five blocks (needs >= 16 px)");
        x = input;
        for (int l = 0; l < kFirstActiveLayer; ++l) {
            x = relu(conv_fwd(x, state.packed(b, l)).out).out;
            ++r.conv_calls;
            if (l == 1 || l == 3) x = maxpool(x).out;  // pools after blocks 1 and 2
        }
        r.frozen_out = x;
    }

    int tap = 0;
    for (int l = kFirstActiveLayer; l < kLayerCount; ++l) {
        const int t = l - kFirstActiveLayer;
        if (want_trace) r.trace.inputs[size_t(t)] = x;
        Q8Tensor conv_out = conv_fwd(x, state.packed(b, l)).out;
        ++r.conv_calls;
        ReluOut act = relu(conv_out);
        if (want_trace) r.trace.relu_masks[size_t(t)] = act.mask;

        if (state.layers[size_t(l)].frn_tap) {
            FrnOut fr = frn_fwd(act.out);
            r.taps[size_t(tap)].frn_out = std::move(fr.out);
            r.taps[size_t(tap)].frn_stats = fr.stats;
            if (want_trace) r.trace.frn_stats[size_t(tap)] = std::move(fr.stats);
            ++tap;
        }
        if (l == kTapLayers[0] || l == kTapLayers[1]) {  // pools after blocks 3 and 4
            PoolOut p = maxpool(act.out);
            if (want_trace) {
                auto& idx = (l == kTapLayers[0]) ? r.trace.pool3_idx : r.trace.pool4_idx;
                auto& shp = (l == kTapLayers[0]) ? r.trace.pool3_in_shape : r.trace.pool4_in_shape;
                idx = std::move(p.idx);
                shp = act.out.shape;
            }
            x = std::move(p.out);
        } else {
            x = std::move(act.out);
        }
    }
    return r;
}

void remove_filters(SiameseState& state, int layer, const std::vector<int>& indices) {
    if (layer < 0 || layer >= int(state.layers.size()))
        throw std::invalid_argument("remove_filters: no such layer");
    LayerSpec& l = state.layers[size_t(layer)];
    if (!l.prunable) throw std::invalid_argument("remove_filters: " + l.name + " is not prunable");

    std::vector<int> idx = indices;
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    if (idx.empty()) return;
    if (idx.front() < 0 || idx.back() >= l.out_channels)
        throw std::invalid_argument("remove_filters: index out of range for " + l.name);
    if (l.out_channels - int(idx.size()) < 1)
        throw std::invalid_argument("remove_filters: would empty " + l.name);

    std::vector<uint8_t> drop(size_t(l.out_channels), 0);
    for (int i : idx) drop[size_t(i)] = 1;
    const int new_out = l.out_channels - int(idx.size());

    for (auto& br : state.weights) {
        const Q8Tensor& old = br[size_t(layer)];
        Q8Tensor next(Shape{new_out, l.in_channels, 3, 3}, old.exponent);
        const size_t row = size_t(l.in_channels) * 9;
        for (int o = 0, dst = 0; o < l.out_channels; ++o) {
            if (drop[size_t(o)]) continue;
            std::memcpy(next.data.data() + size_t(dst) * row, old.data.data() + size_t(o) * row,
                        row);
            ++dst;
        }
        br[size_t(layer)] = std::move(next);
    }

    if (layer + 1 < int(state.layers.size())) {
        LayerSpec& nl = state.layers[size_t(layer) + 1];
        for (auto& br : state.weights) {
            const Q8Tensor& old = br[size_t(layer) + 1];
            Q8Tensor next(Shape{nl.out_channels, new_out, 3, 3}, old.exponent);
            for (int o = 0; o < nl.out_channels; ++o)
                for (int c = 0, dst = 0; c < nl.in_channels; ++c) {
                    if (drop[size_t(c)]) continue;
                    std::memcpy(next.data.data() + (size_t(o) * new_out + dst) * 9,
                                old.data.data() + (size_t(o) * nl.in_channels + c) * 9, 9);
                    ++dst;
                }
            br[size_t(layer) + 1] = std::move(next);
        }
        nl.in_channels = new_out;
        state.invalidate(layer + 1);
    }
    l.out_channels = new_out;
    state.invalidate(layer);
    validate_structure(state);
}

}  // namespace oaip
