#include <benchmark/benchmark.h>

#include "videdit/model.hpp"
#include "videdit/rng.hpp"

using namespace videdit;

namespace {

struct Fixture {
    Vocabulary vocab = Vocabulary::default_vocab();
    ModelConfig cfg;
    ParamStore w3;
    Tensor video;
    Tensor text;
    Fixture() {
        w3 = inflate(init_weights_2d(cfg, vocab, 7), cfg);
        Rng rng(9);
        video = rng.normal_tensor({8, cfg.in_channels, cfg.height, cfg.width});
        text = model_encode_text(w3, cfg, vocab, "a red square moving right").embeddings;
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

}  // namespace

static void BM_Forward3d(benchmark::State& state) {
    auto& f = fixture();
    for (auto _ : state) {
        Tensor out = forward_3d_value(f.w3, f.cfg, f.video, 500, f.text);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_Forward3d);

static void BM_Forward3dRecorded(benchmark::State& state) {
    auto& f = fixture();
    for (auto _ : state) {
        std::vector<AttentionRecord> records;
        ForwardOptions opt;
        opt.record = true;
        opt.records = &records;
        Tensor out = forward_3d_value(f.w3, f.cfg, f.video, 500, f.text, opt);
        benchmark::DoNotOptimize(records.size());
    }
}
BENCHMARK(BM_Forward3dRecorded);

static void BM_Forward3dBackward(benchmark::State& state) {
    auto& f = fixture();
    for (auto _ : state) {
        ag::Graph g;
        ParamBinder P(g, f.w3, is_attention_param);
        ag::Var pred = forward_3d(g, P, f.cfg, g.constant(f.video), 500, g.constant(f.text));
        ag::Var loss = ag::mse_loss(g, pred, f.video);
        g.backward(loss);
        benchmark::DoNotOptimize(loss->val[0]);
    }
}
BENCHMARK(BM_Forward3dBackward);

static void BM_StAttentionKernel(benchmark::State& state) {
    Rng rng(3);
    int hw = 64, c = 32;
    AttnWeights w;
    w.wq = rng.normal_tensor({c, c});
    w.wk = rng.normal_tensor({c, c});
    w.wv = rng.normal_tensor({c, c});
    w.wo = rng.normal_tensor({c, c});
    w.bo = rng.normal_tensor({c});
    w.heads = 2;
    Tensor zf = rng.normal_tensor({hw, c});
    Tensor z1 = rng.normal_tensor({hw, c});
    Tensor zp = rng.normal_tensor({hw, c});
    for (auto _ : state) {
        auto [out, map] = st_attention(zf, z1, zp, w);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_StAttentionKernel);
