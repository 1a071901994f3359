#include <benchmark/benchmark.h>

#include <vector>

#include "ssmg/lm.hpp"
#include "ssmg/ops.hpp"
#include "ssmg/random.hpp"
#include "ssmg/rvq.hpp"
#include "ssmg/scan.hpp"
#include "ssmg/synthdata.hpp"

namespace {

using namespace ssmg;

std::vector<float> noise(std::size_t n, std::uint64_t seed, double lo, double hi) {
    Rng rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(uniform(rng, lo, hi));
    return v;
}

struct ScanFixture {
    ScanDims dims;
    std::vector<float> decay, inject, readout, value;

    explicit ScanFixture(std::size_t length) : dims{length, 4, 16, 16} {
        decay = noise(length * dims.heads, 1, 0.8, 1.0);
        inject = noise(length * dims.heads * dims.state_dim, 2, -1.0, 1.0);
        readout = noise(length * dims.heads * dims.state_dim, 3, -1.0, 1.0);
        value = noise(length * dims.heads * dims.head_dim, 4, -1.0, 1.0);
    }
    ScanInputs<float> inputs() const { return {dims, decay, inject, readout, value}; }
};

void BM_ScanSequential(benchmark::State& state) {
    const ScanFixture f(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(selective_scan_sequential(f.inputs()));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ScanSequential)->RangeMultiplier(4)->Range(64, 4096);

void BM_ScanChunked(benchmark::State& state) {
    const ScanFixture f(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(selective_scan_chunked(f.inputs(), 64));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ScanChunked)->RangeMultiplier(4)->Range(64, 4096);

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Tensor<float> a({n, n}, noise(n * n, 5, -1.0, 1.0));
    const Tensor<float> b({n, n}, noise(n * n, 6, -1.0, 1.0));
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0) * state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(32, 256);

// Cost of one decoding step after `range(0)` tokens of context.
void decode_step(benchmark::State& state, Arch arch) {
    LmConfig cfg;
    cfg.arch = arch;
    cfg.vocab = 64;
    const LanguageModel<float> model(cfg, 11);
    const auto text = model.encode_caption("a slow melody in a minor key, low register, sparse");
    const auto context = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        state.PauseTiming();
        IncrementalDecoder<float> dec(model, text);
        for (std::size_t t = 0; t < context; ++t) dec.push(static_cast<int>(t % 64));
        state.ResumeTiming();
        dec.push(1);
        benchmark::DoNotOptimize(dec.logits().data());
    }
}
void BM_DecodeStepSimba(benchmark::State& state) { decode_step(state, Arch::PrefixSimba); }
void BM_DecodeStepTransformer(benchmark::State& state) { decode_step(state, Arch::CrossTransformer); }
BENCHMARK(BM_DecodeStepSimba)->Arg(16)->Arg(128)->Arg(512);
BENCHMARK(BM_DecodeStepTransformer)->Arg(16)->Arg(128)->Arg(512);

void BM_RvqEncode(benchmark::State& state) {
    const auto piece = sample_piece(PieceAttributes::from_index(7), 500, 3);
    const auto books = fit_rvq(piece, 4, 64, 5, 9);
    for (auto _ : state) benchmark::DoNotOptimize(rvq_encode(piece, books));
    state.SetItemsProcessed(state.iterations() * 500);
}
BENCHMARK(BM_RvqEncode);

}  // namespace
BENCHMARK_MAIN();
