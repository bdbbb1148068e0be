#include <benchmark/benchmark.h>

#include <vector>

#include "sfpe/expr.hpp"

namespace {

void BM_EvaluatePolynomial(benchmark::State& state) {
    const sfpe::Expression e = sfpe::Expression::parse("x1^2 + x2^2 + 0.5*x1*x2", 2, false);
    const std::vector<double> x = {0.7, -1.3};
    const sfpe::Bindings b(0.25, x);
    for (auto _ : state) {
        benchmark::DoNotOptimize(e.evaluate(b));
    }
}
BENCHMARK(BM_EvaluatePolynomial);

void BM_EvaluateReaction(benchmark::State& state) {
    const sfpe::Expression e = sfpe::Expression::parse("v - clip(v,-1,1)^3", 1, true);
    const std::vector<double> x = {0.0};
    sfpe::Bindings b(0.0, x, 0.4);
    for (auto _ : state) {
        benchmark::DoNotOptimize(e.evaluate(b));
    }
}
BENCHMARK(BM_EvaluateReaction);

void BM_Parse(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            sfpe::Expression::parse("exp(-t)*sin(x1) + clip(v,-2,2)^3/(1 + x2^2)", 2, true));
    }
}
BENCHMARK(BM_Parse);

}  // namespace
