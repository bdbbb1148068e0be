#include <benchmark/benchmark.h>

#include <vector>

#include "sfpe/catalog.hpp"
#include "sfpe/sde.hpp"
#include "sfpe/solver.hpp"

namespace {

void BM_SimulatePathOU(benchmark::State& state) {
    sfpe::SdeCoefficients ou;
    ou.d = 1;
    ou.m = 1;
    ou.mu = {sfpe::Expression::parse("-x1", 1, false)};
    ou.sigma = {sfpe::Expression::parse("1", 1, false)};
    sfpe::PathPlan plan{0.0, 1.0, static_cast<int>(state.range(0))};
    const std::vector<double> x0 = {0.5};
    const sfpe::RngStream root(3);
    std::uint64_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(sfpe::simulate_path(x0, plan, ou, root.path(i++)));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SimulatePathOU)->Arg(50)->Arg(500);

void BM_PicardApplyExact(benchmark::State& state) {
    const sfpe::ProblemSpec& p = sfpe::find_catalog_entry("lambda_reaction")->problem;
    auto zero = [](double, std::span<const double>) { return 0.0; };
    const sfpe::RngStream root(5);
    std::uint64_t rep = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(sfpe::picard_apply(zero, p, 0.0, std::vector<double>{0.0},
                                                    static_cast<int>(state.range(0)), 1,
                                                    root.branch(rep++)));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PicardApplyExact)->Arg(1024)->Arg(8192);

void BM_MlpReplication(benchmark::State& state) {
    const sfpe::ProblemSpec& p = sfpe::find_catalog_entry("sine_reaction")->problem;
    sfpe::MlpConfig cfg;
    cfg.levels = 3;
    cfg.base_samples = 8;
    const sfpe::RngStream root(7);
    std::uint64_t rep = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            sfpe::mlp_single(p, cfg, 0.0, std::vector<double>{0.0}, root.replication(rep++)));
    }
}
BENCHMARK(BM_MlpReplication);

}  // namespace
