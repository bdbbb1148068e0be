#include <benchmark/benchmark.h>

#include <array>

#include "sfpe/rng.hpp"

namespace {

void BM_PhiloxBlock(benchmark::State& state) {
    std::array<std::uint64_t, 4> ctr = {1, 2, 3, 4};
    const std::array<std::uint64_t, 2> key = {42, 7};
    for (auto _ : state) {
        ctr = sfpe::Philox4x64::block(ctr, key);
        benchmark::DoNotOptimize(ctr);
    }
}
BENCHMARK(BM_PhiloxBlock);

void BM_NormalDraw(benchmark::State& state) {
    const sfpe::RngStream stream = sfpe::RngStream(1).path(3);
    std::uint64_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(stream.normal(i++));
    }
}
BENCHMARK(BM_NormalDraw);

void BM_FillNormals(benchmark::State& state) {
    const sfpe::RngStream stream = sfpe::RngStream(1).path(3);
    std::array<double, 64> out;
    for (auto _ : state) {
        stream.fill_normals(0, out);
        benchmark::DoNotOptimize(out);
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * 64);
}
BENCHMARK(BM_FillNormals);

void BM_Split(benchmark::State& state) {
    const sfpe::RngStream stream(9);
    std::uint64_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(stream.path(i++));
    }
}
BENCHMARK(BM_Split);

}  // namespace
