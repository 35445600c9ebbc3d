#include <benchmark/benchmark.h>

#include <cstdint>

#include "dforce/crop.hpp"
#include "dforce/rng.hpp"

namespace {

dforce::BinaryMask video_mask(int rows, int cols) {
    dforce::BinaryMask mask;
    mask.rows = rows;
    mask.cols = cols;
    mask.cells.assign(static_cast<std::size_t>(rows) * cols, 1);
    // detection bands at the top and bottom plus scattered single cells, the
    // shape subtitle/logo removal actually produces
    const int band = rows / 13;
    for (int i = 0; i < band * cols; ++i) mask.cells[i] = 0;
    for (std::size_t i = static_cast<std::size_t>(rows - band) * cols; i < mask.cells.size();
         ++i) {
        mask.cells[i] = 0;
    }
    dforce::Rng rng(3);
    for (int k = 0; k < 300; ++k) {
        const int i = band + static_cast<int>(rng.uniform_int(rows - 2 * band));
        const int j = static_cast<int>(rng.uniform_int(cols));
        mask.cells[static_cast<std::size_t>(i) * cols + j] = 0;
    }
    return mask;
}

void BM_MaxRect_1080p(benchmark::State& state) {
    const dforce::BinaryMask mask = video_mask(1080, 1920);
    for (auto _ : state) {
        benchmark::DoNotOptimize(dforce::max_interior_rectangle(mask));
    }
}
BENCHMARK(BM_MaxRect_1080p);

void BM_MaxRect_480p(benchmark::State& state) {
    const dforce::BinaryMask mask = video_mask(480, 854);
    for (auto _ : state) {
        benchmark::DoNotOptimize(dforce::max_interior_rectangle(mask));
    }
}
BENCHMARK(BM_MaxRect_480p);

void BM_MaxRectBruteforce_100x100(benchmark::State& state) {
    dforce::Rng rng(5);
    dforce::BinaryMask mask;
    mask.rows = 100;
    mask.cols = 100;
    mask.cells.assign(100 * 100, 0);
    for (std::uint8_t& cell : mask.cells) cell = rng.uniform() < 0.9 ? 1 : 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(dforce::max_interior_rectangle_bruteforce(mask));
    }
}
BENCHMARK(BM_MaxRectBruteforce_100x100);

void BM_CandidateRegions_1080p(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(dforce::candidate_regions(1080, 1920));
    }
}
BENCHMARK(BM_CandidateRegions_1080p);

}  // namespace

BENCHMARK_MAIN();
