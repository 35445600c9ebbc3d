#include <benchmark/benchmark.h>

#include "dforce/rng.hpp"
#include "dforce/schedule.hpp"

namespace {

// Building both big-integer count tables for a production-sized problem.
void BM_SamplerBuild_16x1000(benchmark::State& state) {
    for (auto _ : state) {
        dforce::FoppSampler sampler(16, 1000);
        benchmark::DoNotOptimize(&sampler);
    }
}
BENCHMARK(BM_SamplerBuild_16x1000);

void BM_CountNondecreasing_16x1000(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(dforce::count_nondecreasing(16, 1000));
    }
}
BENCHMARK(BM_CountNondecreasing_16x1000);

// Unanchored draw throughput once the tables exist.
void BM_Sample_16x1000(benchmark::State& state) {
    const dforce::FoppSampler sampler(16, 1000);
    dforce::Rng rng(1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(sampler.sample(rng));
    }
}
BENCHMARK(BM_Sample_16x1000);

void BM_SampleGiven_16x1000(benchmark::State& state) {
    const dforce::FoppSampler sampler(16, 1000);
    dforce::Rng rng(1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(sampler.sample_given(8, 500, rng));
    }
}
BENCHMARK(BM_SampleGiven_16x1000);

void BM_PlanBuild_16x1000_s250(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(dforce::ad_schedule(16, 1000, 250));
    }
}
BENCHMARK(BM_PlanBuild_16x1000_s250);

}  // namespace

BENCHMARK_MAIN();
