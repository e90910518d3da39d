#include <benchmark/benchmark.h>

#include "videdit/diffusion.hpp"
#include "videdit/rng.hpp"
#include "videdit/schedule.hpp"

using namespace videdit;

static void BM_MakeSchedule(benchmark::State& state) {
    for (auto _ : state) {
        NoiseSchedule s = make_schedule(1000, 0.00085, 0.012, ScheduleKind::ScaledLinear, 50);
        benchmark::DoNotOptimize(s.alpha_bars.back());
    }
}
BENCHMARK(BM_MakeSchedule);

static void BM_DdimStep(benchmark::State& state) {
    NoiseSchedule s = make_schedule(1000, 0.00085, 0.012, ScheduleKind::ScaledLinear, 50);
    Rng rng(1);
    Tensor z = rng.normal_tensor({8, 4, 16, 16});
    Tensor eps = rng.normal_tensor({8, 4, 16, 16});
    for (auto _ : state) {
        Tensor out = ddim_step(z, eps, 1000, 980, s);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_DdimStep);

static void BM_AddNoise(benchmark::State& state) {
    NoiseSchedule s = make_schedule(1000, 0.00085, 0.012, ScheduleKind::ScaledLinear, 50);
    Rng rng(1);
    Tensor x0 = rng.normal_tensor({8, 4, 16, 16});
    Tensor eps = rng.normal_tensor({8, 4, 16, 16});
    for (auto _ : state) {
        Tensor out = add_noise(x0, eps, 500, s);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_AddNoise);
