// Serial reference path vs OpenMP path for the hot kernels.

#include <benchmark/benchmark.h>

#include "lichen/learners.hpp"
#include "lichen/rectify.hpp"
#include "lichen/rng.hpp"
#include "lichen/slic.hpp"
#include "lichen/synth.hpp"

using namespace lichen;

namespace {

Exec execOf(const benchmark::State& s) { return s.range(0) ? Exec::Parallel : Exec::Serial; }

const Raster& scene() {
    static const Raster img = synth::generate(synth::presetSpec(synth::Difficulty::Medium, 1, 800, 600)).image;
    return img;
}

void BM_Gaussian(benchmark::State& s) {
    const Raster& img = scene();
    for (auto _ : s) benchmark::DoNotOptimize(gaussianSmooth(img, 3.0, execOf(s)));
}

void BM_Slic(benchmark::State& s) {
    const Raster& img = scene();
    for (auto _ : s) benchmark::DoNotOptimize(slic::slic(img, {500, 20, 1}, execOf(s)));
}

void BM_Warp(benchmark::State& s) {
    const Raster& img = scene();
    const rectify::Homography h({0.95, 0.04, 12, -0.03, 1.05, -8, 4e-5, -3e-5, 1});
    for (auto _ : s) benchmark::DoNotOptimize(rectify::warpPerspective(img, h, 800, 600, execOf(s)));
}

void BM_KernelRow(benchmark::State& s) {
    learners::Dataset d;
    d.n = 4000;
    d.d = 24;
    Rng rng(3);
    d.x.resize(static_cast<std::size_t>(d.n) * d.d);
    for (auto& v : d.x) v = rng.uniform();
    d.y.resize(d.n);
    for (auto& v : d.y) v = static_cast<int>(rng.below(2));
    std::vector<double> row(d.n);
    int i = 0;
    for (auto _ : s) {
        learners::kernelRow(d, learners::Kernel::Rbf, 3, 0.05, i, row.data(), execOf(s));
        i = (i + 1) % d.n;
        benchmark::DoNotOptimize(row.data());
    }
}

} // namespace

BENCHMARK(BM_Gaussian)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Slic)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Warp)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KernelRow)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
