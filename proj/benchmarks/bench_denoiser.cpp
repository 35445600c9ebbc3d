#include <benchmark/benchmark.h>

#include <vector>

#include "dforce/denoiser.hpp"
#include "dforce/latent.hpp"
#include "dforce/rng.hpp"
#include "dforce/sampler.hpp"
#include "dforce/schedule.hpp"
#include "dforce/train.hpp"

namespace {

struct Fixture {
    dforce::DenoiserParams params;
    dforce::LatentSequence x;
    std::vector<double> t_flow;

    Fixture(int dim, int hidden, int frames) {
        dforce::Rng rng(11);
        params = dforce::init_denoiser(dforce::DenoiserConfig{dim, hidden, frames, 1}, rng);
        x = dforce::LatentSequence::gaussian(frames, dim, rng);
        t_flow.assign(frames, 0.5);
    }
};

void BM_Forward_d8_h64_f8(benchmark::State& state) {
    const Fixture fx(8, 64, 8);
    for (auto _ : state) {
        benchmark::DoNotOptimize(dforce::denoiser_forward(fx.params, fx.x, fx.t_flow, 0));
    }
}
BENCHMARK(BM_Forward_d8_h64_f8);

void BM_ForwardBackward_d8_h64_f8(benchmark::State& state) {
    const Fixture fx(8, 64, 8);
    dforce::LatentSequence du = fx.x;
    std::vector<double> grad(fx.params.values.size());
    for (auto _ : state) {
        dforce::ForwardCache cache;
        benchmark::DoNotOptimize(
            dforce::denoiser_forward(fx.params, fx.x, fx.t_flow, 0, &cache));
        std::fill(grad.begin(), grad.end(), 0.0);
        dforce::denoiser_backward(fx.params, fx.x, fx.t_flow, 0, cache, du, grad);
        benchmark::DoNotOptimize(grad.data());
    }
}
BENCHMARK(BM_ForwardBackward_d8_h64_f8);

void BM_FmLossBatch16_d8_h64_f8(benchmark::State& state) {
    const Fixture fx(8, 64, 8);
    dforce::Rng rng(13);
    std::vector<dforce::LatentSequence> x1, x0;
    std::vector<std::vector<double>> t;
    std::vector<int> cond(16, 0);
    for (int b = 0; b < 16; ++b) {
        x1.push_back(dforce::LatentSequence::gaussian(8, 8, rng));
        x0.push_back(dforce::LatentSequence::gaussian(8, 8, rng));
        t.emplace_back(8, rng.uniform(0.05, 0.95));
    }
    std::vector<double> grad;
    for (auto _ : state) {
        benchmark::DoNotOptimize(dforce::fm_loss(fx.params, x1, x0, t, cond, &grad));
    }
}
BENCHMARK(BM_FmLossBatch16_d8_h64_f8);

void BM_EulerSample_T32(benchmark::State& state) {
    const Fixture fx(8, 64, 8);
    const dforce::SchedulePlan plan = dforce::ad_schedule(8, 32, 0);
    dforce::Rng rng(17);
    const dforce::LatentSequence init = dforce::LatentSequence::gaussian(8, 8, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(dforce::euler_sample(fx.params, plan, init, 0, true));
    }
}
BENCHMARK(BM_EulerSample_T32);

}  // namespace

BENCHMARK_MAIN();
