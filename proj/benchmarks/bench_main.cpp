// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "rlt/packing.hpp"
#include "rlt/refmodel.hpp"
#include "rlt/tokenizer.hpp"

using namespace rlt;

namespace {

const TubeletConfig kCfg{16, 16, 2, 64};

// Noise with the top third of patch rows frozen.
VideoTensor clip(std::size_t side, std::size_t frames = 16, std::uint64_t seed = 1) {
    const VideoDims dims{3, frames, side, side};
    const std::size_t frozen = (side / kCfg.patch_y / 3) * kCfg.patch_y;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);
    VideoTensor v(dims);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t t = 0; t < frames; ++t)
            for (std::size_t h = 0; h < side; ++h)
                for (std::size_t w = 0; w < side; ++w)
                    v.at(c, t, h, w) = (t > 0 && h < frozen) ? v.at(c, 0, h, w) : unit(rng);
    return v;
}

TokenizeSettings settings() {
    TokenizeSettings s;
    s.config = kCfg;
    return s;
}

void BM_Tokenize(benchmark::State& state) {
    const auto video = clip(static_cast<std::size_t>(state.range(0)));
    const auto s = settings();
    std::size_t slots = 0;
    for (auto _ : state) {
        auto seq = tokenize(video, s);
        slots = seq.source().slot_count();
        benchmark::DoNotOptimize(seq);
    }
    state.counters["slots_per_s"] =
        benchmark::Counter(static_cast<double>(slots), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Tokenize)->Arg(112)->Arg(224)->Arg(448)->Unit(benchmark::kMillisecond);

void BM_StandardTokenize(benchmark::State& state) {
    const auto video = clip(static_cast<std::size_t>(state.range(0)));
    const auto s = settings();
    for (auto _ : state) benchmark::DoNotOptimize(standard_tokenize(video, s));
}
BENCHMARK(BM_StandardTokenize)->Arg(224)->Unit(benchmark::kMillisecond);

void BM_StaticMask(benchmark::State& state) {
    const auto video = clip(static_cast<std::size_t>(state.range(0)));
    const auto s = settings();
    for (auto _ : state) {
        const auto diffs = compute_differences(video, s.norm, s.config, s.metric);
        benchmark::DoNotOptimize(mask_from_differences(diffs, s.tau));
    }
}
BENCHMARK(BM_StaticMask)->Arg(224)->Unit(benchmark::kMillisecond);

void BM_RunLengths(benchmark::State& state) {
    const auto video = clip(224);
    const auto s = settings();
    const auto mask = mask_from_differences(compute_differences(video, s.norm, s.config, s.metric), s.tau);
    for (auto _ : state) benchmark::DoNotOptimize(compute_run_lengths(mask));
}
BENCHMARK(BM_RunLengths);

void BM_Pack(benchmark::State& state) {
    std::vector<TokenSequence> seqs;
    for (std::int64_t i = 0; i < state.range(0); ++i) seqs.push_back(tokenize(clip(112, 16, i), settings()));
    for (auto _ : state) benchmark::DoNotOptimize(pack(seqs));
}
BENCHMARK(BM_Pack)->Arg(2)->Arg(8)->Unit(benchmark::kMicrosecond);

void BM_ForwardSingle(benchmark::State& state) {
    const auto seq = tokenize(clip(static_cast<std::size_t>(state.range(0))), settings());
    const ToyTransformer model(ModelConfig::for_source(seq.source()));
    for (auto _ : state) benchmark::DoNotOptimize(model.forward_single(seq));
    state.counters["tokens"] = static_cast<double>(seq.size());
}
BENCHMARK(BM_ForwardSingle)->Arg(112)->Arg(224)->Unit(benchmark::kMillisecond);

void BM_ForwardPacked(benchmark::State& state) {
    std::vector<TokenSequence> seqs;
    for (std::int64_t i = 0; i < 4; ++i) seqs.push_back(tokenize(clip(112, 16, i), settings()));
    const auto batch = pack(seqs);
    const ToyTransformer model(ModelConfig::for_source(seqs[0].source()));
    const auto form = state.range(0) == 0 ? MaskForm::Compact : MaskForm::Dense;
    for (auto _ : state) benchmark::DoNotOptimize(model.forward_packed(batch, form));
}
BENCHMARK(BM_ForwardPacked)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
