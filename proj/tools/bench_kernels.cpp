// Kernel benchmark: production conv kernels (SIMD + OpenMP when available)
// against the serial reference. Shapes mirror the deep trainable layers.
#include <benchmark/benchmark.h>
#include <omp.h>

#include "oaip/kernels.hpp"
#include "oaip/prng.hpp"

using namespace oaip;

namespace {

Q8Tensor rand_q8(SplitMix64& rng, Shape s, bool nonneg) {
    Q8Tensor t(std::move(s), 0);
    for (auto& v : t.data) v = int8_t(nonneg ? rng.below(128) : rng.range(-127, 127));
    return t;
}

struct ConvCase {
    Q8Tensor a, w, ga;
    PackedWeights pw;
};

ConvCase make_case(int C, int O, int S) {
    SplitMix64 rng(42);
    ConvCase cc;
    cc.a = rand_q8(rng, {C, S, S}, true);
    cc.w = rand_q8(rng, {O, C, 3, 3}, false);
    cc.ga = rand_q8(rng, {O, S, S}, false);
    cc.pw = pack_weights(cc.w);
    return cc;
}

// threads == 0 keeps the OpenMP default (all cores)
void set_threads(benchmark::State& state) {
    if (state.range(3) > 0) omp_set_num_threads(int(state.range(3)));
}

double macs(const ConvCase& cc) {
    return double(cc.w.shape[0]) * cc.w.shape[1] * 9.0 * cc.a.shape[1] * cc.a.shape[2];
}

}  // namespace

static void BM_conv_fwd(benchmark::State& state) {
    auto cc = make_case(int(state.range(0)), int(state.range(1)), int(state.range(2)));
    set_threads(state);
    for (auto _ : state) {
        auto acc = conv_fwd_acc(cc.a, cc.pw);
        benchmark::DoNotOptimize(acc.data.data());
    }
    state.counters["MACs/s"] =
        benchmark::Counter(macs(cc), benchmark::Counter::kIsIterationInvariantRate);
}

static void BM_conv_fwd_serial_ref(benchmark::State& state) {
    auto cc = make_case(int(state.range(0)), int(state.range(1)), int(state.range(2)));
    auto wa = ref::widen(cc.a);
    auto ww = ref::widen(cc.w);
    for (auto _ : state) {
        auto acc = ref::conv_fwd_acc(wa, cc.a.shape, ww, cc.w.shape);
        benchmark::DoNotOptimize(acc.data());
    }
    state.counters["MACs/s"] =
        benchmark::Counter(macs(cc), benchmark::Counter::kIsIterationInvariantRate);
}

static void BM_conv_bwd_input(benchmark::State& state) {
    auto cc = make_case(int(state.range(0)), int(state.range(1)), int(state.range(2)));
    set_threads(state);
    for (auto _ : state) {
        auto acc = conv_bwd_input_acc(cc.ga, cc.pw);
        benchmark::DoNotOptimize(acc.data.data());
    }
    state.counters["MACs/s"] =
        benchmark::Counter(macs(cc), benchmark::Counter::kIsIterationInvariantRate);
}

static void BM_conv_grad_weight(benchmark::State& state) {
    auto cc = make_case(int(state.range(0)), int(state.range(1)), int(state.range(2)));
    set_threads(state);
    for (auto _ : state) {
        auto acc = conv_grad_weight_acc(cc.a, cc.ga);
        benchmark::DoNotOptimize(acc.data.data());
    }
    state.counters["MACs/s"] =
        benchmark::Counter(macs(cc), benchmark::Counter::kIsIterationInvariantRate);
}

// {in_ch, out_ch, spatial, threads}
#define CONV_ARGS                                  \
    Args({256, 256, 8, 1})->Args({512, 512, 4, 1}) \
        ->Args({64, 64, 256, 1})->Args({64, 64, 256, 0})

BENCHMARK(BM_conv_fwd)->CONV_ARGS->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv_bwd_input)->CONV_ARGS->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv_grad_weight)->CONV_ARGS->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv_fwd_serial_ref)
    ->Args({256, 256, 8, 1})
    ->Args({512, 512, 4, 1})
    ->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
