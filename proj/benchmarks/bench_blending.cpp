#include <benchmark/benchmark.h>

#include "videdit/blending.hpp"
#include "videdit/rng.hpp"

using namespace videdit;

static void BM_PropagateMask(benchmark::State& state) {
    Rng rng(5);
    int hw = 64;
    Tensor m1 = rng.uniform_tensor({hw}, 0.0, 1.0);
    Tensor mp = rng.uniform_tensor({hw}, 0.0, 1.0);
    Tensor st = rng.uniform_tensor({hw, 2 * hw}, 0.0, 1.0);
    for (int i = 0; i < hw; ++i) {
        double s = 0.0;
        for (int j = 0; j < 2 * hw; ++j) s += st.at(i, j);
        for (int j = 0; j < 2 * hw; ++j) st.at(i, j) /= s;
    }
    for (auto _ : state) {
        Tensor out = propagate_mask(m1, mp, st);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_PropagateMask);

static void BM_BlendLatents(benchmark::State& state) {
    Rng rng(6);
    Tensor recon = rng.normal_tensor({8, 4, 16, 16});
    Tensor edit = rng.normal_tensor({8, 4, 16, 16});
    BlendMask mask;
    mask.alpha = Tensor({8, 8, 8});
    for (int64_t i = 0; i < mask.alpha.numel(); ++i) mask.alpha[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
    for (auto _ : state) {
        Tensor out = blend_latents(recon, edit, mask);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_BlendLatents);
