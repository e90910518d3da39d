#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "../test_util.hpp"
#include "videdit/blending.hpp"
#include "videdit/control.hpp"
#include "videdit/model.hpp"

using namespace videdit;
using testutil::tiny_config;

// ---- token alignment ----

TEST_CASE("align_tokens") {
    Vocabulary vocab = Vocabulary::default_vocab();
    auto ids = [&](const std::string& p) { return vocab.tokenize(p, 8); };

    SUBCASE("identical prompts pair everything, no edits") {
        TokenAlignment a = align_tokens(ids("a red square moving right"), ids("a red square moving right"));
        CHECK(a.pairs.size() == 6);  // BOS + 5 words; PAD never pairs
        CHECK(a.src_edit_indices.empty());
        CHECK(a.tgt_edit_indices.empty());
        for (const auto& [s, t] : a.pairs) CHECK(s == t);
    }
    SUBCASE("single word swap") {
        TokenAlignment a = align_tokens(ids("a red square moving right"), ids("a blue square moving right"));
        CHECK(a.pairs.size() == 5);  // BOS a square moving right
        REQUIRE(a.src_edit_indices.size() == 1);
        REQUIRE(a.tgt_edit_indices.size() == 1);
        CHECK(a.src_edit_indices[0] == 2);
        CHECK(a.tgt_edit_indices[0] == 2);
    }
    SUBCASE("insertion-only edit") {
        TokenAlignment a = align_tokens(ids("a square moving right"), ids("a red square moving right"));
        CHECK(a.src_edit_indices.empty());
        REQUIRE(a.tgt_edit_indices.size() == 1);
        CHECK(a.tgt_edit_indices[0] == 2);
    }
    SUBCASE("unknown words collide on the UNK id") {
        // out-of-vocabulary tokens all map to UNK, so LCS pairs them
        // greedily; the extra target token lands in the edit set
        TokenAlignment a = align_tokens(ids("a man is skiing"), ids("a spider man is skiing"));
        CHECK(a.pairs.size() == 5);
        CHECK(a.src_edit_indices.empty());
        REQUIRE(a.tgt_edit_indices.size() == 1);
    }
    SUBCASE("disjoint raw sequences have no pairs") {
        TokenAlignment a = align_tokens({3, 4}, {5, 6});
        CHECK(a.pairs.empty());
        CHECK(a.src_edit_indices == std::vector<int>{0, 1});
        CHECK(a.tgt_edit_indices == std::vector<int>{0, 1});
    }
    SUBCASE("pairs strictly increase in both coordinates") {
        TokenAlignment a = align_tokens(ids("a red circle moving up"), ids("a blue circle moving down"));
        for (size_t i = 0; i + 1 < a.pairs.size(); ++i) {
            CHECK(a.pairs[i].first < a.pairs[i + 1].first);
            CHECK(a.pairs[i].second < a.pairs[i + 1].second);
        }
    }
}

// ---- injection gates ----

TEST_CASE("should_inject windows") {
    InjectionConfig cfg;
    SUBCASE("cross at 50 steps with duration 0.2 covers steps 0..9") {
        for (int i = 0; i < 50; ++i)
            CHECK(should_inject(AttnType::Cross, i, 50, cfg) == (i < 10));
    }
    SUBCASE("duration 0 never injects, duration 1 always") {
        InjectionConfig c0;
        c0.dur_st = 0.0;
        InjectionConfig c1;
        c1.dur_st = 1.0;
        for (int i = 0; i < 50; ++i) {
            CHECK(!should_inject(AttnType::SpatioTemporal, i, 50, c0));
            CHECK(should_inject(AttnType::SpatioTemporal, i, 50, c1));
        }
    }
    SUBCASE("duration monotonicity: injected sets nest") {
        for (double d1 = 0.0; d1 <= 1.0; d1 += 0.13)
            for (double d2 = d1; d2 <= 1.0; d2 += 0.17) {
                InjectionConfig a, b;
                a.dur_temporal = d1;
                b.dur_temporal = d2;
                for (int i = 0; i < 37; ++i)
                    if (should_inject(AttnType::Temporal, i, 37, a))
                        CHECK(should_inject(AttnType::Temporal, i, 37, b));
            }
    }
    SUBCASE("out-of-range step is rejected") {
        CHECK_THROWS(should_inject(AttnType::Cross, 50, 50, cfg));
        CHECK_THROWS(should_inject(AttnType::Cross, -1, 50, cfg));
    }
}

// ---- map injection ----

TEST_CASE("inject_cross column semantics") {
    Rng rng(3);
    Tensor src = rng.uniform_tensor({2, 4, 6}, 0.0, 1.0);
    Tensor tgt = rng.uniform_tensor({2, 4, 6}, 0.0, 1.0);

    SUBCASE("full alignment over every column reproduces the source") {
        TokenAlignment full;
        for (int i = 0; i < 6; ++i) full.pairs.emplace_back(i, i);
        Tensor out = inject_cross(src, tgt, full);
        CHECK(bitwise_equal(out, src));
    }
    SUBCASE("empty alignment keeps the target") {
        TokenAlignment none;
        Tensor out = inject_cross(src, tgt, none);
        CHECK(bitwise_equal(out, tgt));
    }
    SUBCASE("swapped word keeps its own column") {
        TokenAlignment a;
        for (int i = 0; i < 6; ++i)
            if (i != 2) a.pairs.emplace_back(i, i);
        a.src_edit_indices = {2};
        a.tgt_edit_indices = {2};
        Tensor out = inject_cross(src, tgt, a);
        int replaced = 0, kept = 0;
        for (int f = 0; f < 2; ++f)
            for (int r = 0; r < 4; ++r)
                for (int l = 0; l < 6; ++l) {
                    if (l == 2)
                        kept += out.at(f, r, l) == tgt.at(f, r, l) ? 1 : 0;
                    else
                        replaced += out.at(f, r, l) == src.at(f, r, l) ? 1 : 0;
                }
        CHECK(replaced == 2 * 4 * 5);
        CHECK(kept == 2 * 4);
    }
    SUBCASE("shape mismatch is an error") {
        CHECK_THROWS(inject_cross(src, Tensor({2, 4, 7}), TokenAlignment{}));
    }
    SUBCASE("row stochasticity is preserved under full-row recombination") {
        // aligned replacement copies whole columns from another
        // row-stochastic map of the same prompt; rows still sum to 1 when
        // all columns come from the same source row
        Tensor s2({1, 3, 4});
        Tensor t2({1, 3, 4});
        for (int r = 0; r < 3; ++r) {
            double accs = 0.0, acct = 0.0;
            for (int l = 0; l < 4; ++l) {
                s2.at(0, r, l) = (l + 1) * (r + 1);
                t2.at(0, r, l) = (4 - l) * (r + 1);
                accs += s2.at(0, r, l);
                acct += t2.at(0, r, l);
            }
            for (int l = 0; l < 4; ++l) {
                s2.at(0, r, l) /= accs;
                t2.at(0, r, l) /= acct;
            }
        }
        TokenAlignment full;
        for (int i = 0; i < 4; ++i) full.pairs.emplace_back(i, i);
        Tensor out = inject_cross(s2, t2, full);
        for (int r = 0; r < 3; ++r) {
            double acc = 0.0;
            for (int l = 0; l < 4; ++l) acc += out.at(0, r, l);
            CHECK(acc == doctest::Approx(1.0).epsilon(1e-5));
        }
    }
}

TEST_CASE("inject_full") {
    Rng rng(5);
    Tensor a = rng.normal_tensor({4, 8});
    Tensor b = rng.normal_tensor({4, 8});
    Tensor out = inject_full(a, b);
    CHECK(bitwise_equal(out, a));
    CHECK(bitwise_equal(inject_full(a, inject_full(a, b)), a));  // idempotent
    CHECK_THROWS(inject_full(a, Tensor({4, 9})));
}

// ---- controllers over the real model ----

namespace {

struct ControlSetup {
    Vocabulary vocab = Vocabulary::default_vocab();
    ModelConfig cfg = tiny_config();
    ParamStore w3;
    Tensor video_a, video_b, text;
    ControlSetup() {
        ParamStore w2 = init_weights_2d(cfg, vocab, 5);
        // raw init has a zero output head (outputs identically zero);
        // give it signal so injection effects are observable
        Rng hr(50);
        Tensor head = hr.normal_tensor(w2.get("out.conv.w").shape());
        head *= 0.1;
        w2.get("out.conv.w") = head;
        w3 = inflate(w2, cfg);
        Rng rng(6);
        video_a = rng.normal_tensor({2, cfg.in_channels, cfg.height, cfg.width});
        video_b = rng.normal_tensor({2, cfg.in_channels, cfg.height, cfg.width});
        text = model_encode_text(w3, cfg, vocab, "a red square").embeddings;
    }
};

}  // namespace

TEST_CASE("recording and injecting controllers") {
    ControlSetup s;
    InjectionConfig icfg;
    icfg.dur_cross = 1.0;
    icfg.dur_st = 1.0;
    icfg.dur_temporal = 1.0;
    int steps = 3;

    RecordingController rec(icfg, steps);
    for (int i = 0; i < steps; ++i) {
        rec.begin_step(i);
        ForwardOptions opt;
        opt.hook = rec.hook();
        forward_3d_value(s.w3, s.cfg, s.video_a, 10 + i, s.text, opt);
    }
    SUBCASE("hook invocation count = steps x attention modules") {
        CHECK(rec.hook_calls() == steps * 9);
    }
    SUBCASE("averaged maps are available at every step") {
        for (int i = 0; i < steps; ++i) {
            Tensor c = rec.records().cross_avg(i);
            Tensor st = rec.records().st_avg(i);
            int hw = s.cfg.coarse_h() * s.cfg.coarse_w();
            CHECK(c.shape() == std::vector<int>{2, hw, s.cfg.max_tokens});
            CHECK(st.shape() == std::vector<int>{2, hw, 2 * hw});
        }
    }
    SUBCASE("missing record is an error") {
        CHECK_THROWS(rec.records().get(7, "mid", AttnType::Cross));
        CHECK_THROWS(rec.records().cross_avg(99));
    }

    SUBCASE("full-duration injection replays the source maps") {
        TokenAlignment full = align_tokens(s.vocab.tokenize("a red square", 8), s.vocab.tokenize("a red square", 8));
        auto inj = controller_run(rec.records(), icfg, full, steps);
        inj->begin_step(0);
        ForwardOptions opt;
        opt.hook = inj->hook();
        Tensor with_inject = forward_3d_value(s.w3, s.cfg, s.video_b, 10, s.text, opt);
        Tensor without = forward_3d_value(s.w3, s.cfg, s.video_b, 10, s.text);
        CHECK(inj->hook_calls() == 9);
        // the edit branch now carries the source maps wholesale for ST
        CHECK(max_abs_diff(inj->effective().st_avg(0), rec.records().st_avg(0)) == 0.0);
        // cross keeps only target PAD columns; aligned columns match
        Tensor eff_cross = inj->effective().cross_avg(0);
        Tensor src_cross = rec.records().cross_avg(0);
        std::vector<int> ids = s.vocab.tokenize("a red square", 8);
        for (int f = 0; f < eff_cross.dim(0); ++f)
            for (int r = 0; r < eff_cross.dim(1); ++r)
                for (int l = 0; l < eff_cross.dim(2); ++l)
                    if (ids[static_cast<size_t>(l)] != Vocabulary::kPad)
                        CHECK(eff_cross.at(f, r, l) == src_cross.at(f, r, l));
        // and the replayed maps change the edit branch output
        CHECK(max_abs_diff(with_inject, without) > 0.0);
    }
    SUBCASE("zero durations leave the branch untouched") {
        InjectionConfig zero;
        zero.dur_cross = zero.dur_st = zero.dur_temporal = 0.0;
        auto inj = controller_run(rec.records(), zero, TokenAlignment{}, steps);
        inj->begin_step(0);
        ForwardOptions opt;
        opt.hook = inj->hook();
        Tensor with_hook = forward_3d_value(s.w3, s.cfg, s.video_b, 10, s.text, opt);
        Tensor without = forward_3d_value(s.w3, s.cfg, s.video_b, 10, s.text);
        CHECK(bitwise_equal(with_hook, without));
    }
    SUBCASE("identical inputs with injection reproduce the source forward bitwise") {
        TokenAlignment full = align_tokens(s.vocab.tokenize("a red square", 8), s.vocab.tokenize("a red square", 8));
        auto inj = controller_run(rec.records(), icfg, full, steps);
        inj->begin_step(0);
        ForwardOptions opt;
        opt.hook = inj->hook();
        Tensor injected = forward_3d_value(s.w3, s.cfg, s.video_a, 10, s.text, opt);
        Tensor plain = forward_3d_value(s.w3, s.cfg, s.video_a, 10, s.text);
        CHECK(max_abs_diff(injected, plain) < 1e-12);
    }
    SUBCASE("windowed recording drops per-head maps outside the injection window") {
        InjectionConfig narrow;
        narrow.dur_cross = 0.4;  // keeps step 0 only (round(0.4*3) = 1)
        narrow.dur_st = 1.0;
        narrow.dur_temporal = 1.0;
        RecordingController wrec(narrow, steps);
        for (int i = 0; i < steps; ++i) {
            wrec.begin_step(i);
            ForwardOptions opt;
            opt.hook = wrec.hook();
            forward_3d_value(s.w3, s.cfg, s.video_a, 10 + i, s.text, opt);
        }
        CHECK(wrec.records().has(0, "mid", AttnType::Cross));
        CHECK(!wrec.records().has(2, "mid", AttnType::Cross));
        CHECK(wrec.records().has(2, "mid", AttnType::SpatioTemporal));
        Tensor avg = wrec.records().cross_avg(2);  // averages survive everywhere
        CHECK(avg.numel() > 0);
    }
}

// ---- blending math ----

TEST_CASE("normalize_heatmap") {
    SUBCASE("constant frame becomes uniform") {
        Tensor m = Tensor::full({1, 2, 2}, 3.0);
        Tensor n = normalize_heatmap(m);
        for (int j = 0; j < 4; ++j) CHECK(n.at(0, j) == doctest::Approx(0.25));
    }
    SUBCASE("hand case [[1,3],[2,2]]") {
        Tensor m({1, 2, 2}, {1, 3, 2, 2});
        Tensor n = normalize_heatmap(m);
        CHECK(n.at(0, 0) == doctest::Approx(0.125));
        CHECK(n.at(0, 1) == doctest::Approx(0.375));
        CHECK(n.at(0, 2) == doctest::Approx(0.25));
        CHECK(n.at(0, 3) == doctest::Approx(0.25));
    }
    SUBCASE("rows sum to one") {
        Rng rng(9);
        Tensor m = rng.uniform_tensor({4, 3, 3}, 0.01, 2.0);
        Tensor n = normalize_heatmap(m);
        for (int f = 0; f < 4; ++f) {
            double s = 0.0;
            for (int j = 0; j < 9; ++j) s += n.at(f, j);
            CHECK(s == doctest::Approx(1.0).epsilon(1e-8));
        }
    }
    SUBCASE("zero-sum frame is an error") {
        Tensor m({2, 2, 2});
        m.at(0, 0, 0) = 1.0;  // frame 1 stays all-zero
        CHECK_THROWS(normalize_heatmap(m));
    }
}

namespace {

Tensor row_stochastic(Rng& rng, int rows, int cols) {
    Tensor m = rng.uniform_tensor({rows, cols}, 0.0, 1.0);
    for (int i = 0; i < rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < cols; ++j) s += m.at(i, j);
        for (int j = 0; j < cols; ++j) m.at(i, j) /= s;
    }
    return m;
}

Tensor normalized_vec(Rng& rng, int n) {
    Tensor v = rng.uniform_tensor({n}, 0.0, 1.0);
    double s = v.sum();
    for (int i = 0; i < n; ++i) v[i] /= s;
    return v;
}

}  // namespace

TEST_CASE("propagate_mask") {
    int hw = 9;
    Rng rng(17);
    SUBCASE("identity attention on the first block returns m1 exactly") {
        Tensor st({hw, 2 * hw});
        for (int j = 0; j < hw; ++j) st.at(j, j) = 1.0;
        Tensor m1 = normalized_vec(rng, hw);
        Tensor mp = normalized_vec(rng, hw);
        Tensor out = propagate_mask(m1, mp, st);
        CHECK(bitwise_equal(out, m1));
    }
    SUBCASE("uniform attention gives 1/HW everywhere") {
        Tensor st = Tensor::full({hw, 2 * hw}, 1.0 / (2 * hw));
        Tensor m1 = normalized_vec(rng, hw);
        Tensor mp = normalized_vec(rng, hw);
        Tensor out = propagate_mask(m1, mp, st);
        for (int j = 0; j < hw; ++j) CHECK(out[j] == doctest::Approx(1.0 / hw).epsilon(1e-12));
    }
    SUBCASE("convex combination bound over 1000 random instances") {
        for (int trial = 0; trial < 1000; ++trial) {
            Tensor st = row_stochastic(rng, hw, 2 * hw);
            Tensor m1 = normalized_vec(rng, hw);
            Tensor mp = normalized_vec(rng, hw);
            Tensor out = propagate_mask(m1, mp, st);
            double lo = std::min(m1.min(), mp.min());
            double hi = std::max(m1.max(), mp.max());
            CHECK(out.min() >= lo - 1e-12);
            CHECK(out.max() <= hi + 1e-12);
        }
    }
    SUBCASE("mass preservation under half-column-sum maps") {
        // columns each summing to 1/2 preserve total mass exactly
        Tensor st({hw, 2 * hw});
        for (int i = 0; i < hw; ++i)
            for (int j = 0; j < 2 * hw; ++j) st.at(i, j) = 1.0 / (2 * hw);
        Tensor m1 = normalized_vec(rng, hw);
        Tensor mp = normalized_vec(rng, hw);
        Tensor out = propagate_mask(m1, mp, st);
        CHECK(out.sum() == doctest::Approx(1.0).epsilon(1e-6));
        // and a permutation-style map: query j reads first-block key j and
        // prev-block key j with weight 1/2 each
        Tensor perm({hw, 2 * hw});
        for (int j = 0; j < hw; ++j) {
            perm.at(j, j) = 0.5;
            perm.at(j, hw + j) = 0.5;
        }
        Tensor out2 = propagate_mask(m1, mp, perm);
        CHECK(out2.sum() == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("L-infinity smoothness in the previous-frame block") {
        // row-stochastic weights bound the per-entry change by the largest
        // perturbation entry
        Tensor st = row_stochastic(rng, hw, 2 * hw);
        Tensor m1 = normalized_vec(rng, hw);
        Tensor mp = normalized_vec(rng, hw);
        Tensor mp2 = mp;
        mp2[3] += 0.01;
        Tensor a = propagate_mask(m1, mp, st);
        Tensor b = propagate_mask(m1, mp2, st);
        CHECK(max_abs_diff(a, b) <= 0.01 + 1e-12);
    }
    SUBCASE("L1 smoothness when previous-block columns sum to at most one") {
        Tensor perm({hw, 2 * hw});
        for (int j = 0; j < hw; ++j) {
            perm.at(j, j) = 0.5;
            perm.at(j, hw + ((j + 1) % hw)) = 0.5;
        }
        Tensor m1 = normalized_vec(rng, hw);
        Tensor mp = normalized_vec(rng, hw);
        Tensor mp2 = mp;
        for (int j = 0; j < hw; ++j) mp2[j] += (j % 2 ? 1.0 : -1.0) * 0.002;
        double l1_in = 0.0;
        for (int j = 0; j < hw; ++j) l1_in += std::fabs(mp2[j] - mp[j]);
        Tensor a = propagate_mask(m1, mp, perm);
        Tensor b = propagate_mask(m1, mp2, perm);
        double l1_out = 0.0;
        for (int j = 0; j < hw; ++j) l1_out += std::fabs(a[j] - b[j]);
        CHECK(l1_out <= l1_in + 1e-12);
    }
    SUBCASE("shape mismatch is an error") {
        Tensor st = row_stochastic(rng, hw, 2 * hw);
        CHECK_THROWS(propagate_mask(Tensor({hw + 1}), Tensor({hw + 1}), st));
    }
}

TEST_CASE("binarize_mask") {
    SUBCASE("constant positive frame is all ones for any tau <= 1") {
        Tensor m = Tensor::full({1, 4}, 0.3);
        for (double tau : {0.0, 0.25, 0.5, 1.0}) {
            BlendMask b = binarize_mask(m, tau, 2, 2);
            CHECK(b.popcount() == 4);
        }
    }
    SUBCASE("hand case 0.04/0.4 at tau 0.25") {
        Tensor m({1, 2}, {0.04, 0.4});
        BlendMask b = binarize_mask(m, 0.25, 1, 2);
        CHECK(b.alpha.at(0, 0, 0) == 0.0);  // rescaled 0.1 < 0.25
        CHECK(b.alpha.at(0, 0, 1) == 1.0);  // rescaled 1.0
    }
    SUBCASE("tau 0 keeps every pixel of a positive frame") {
        Tensor m({1, 4}, {0.0, 0.1, 0.2, 0.3});
        BlendMask b = binarize_mask(m, 0.0, 2, 2);
        CHECK(b.popcount() == 4);  // 0/max = 0 >= 0
    }
    SUBCASE("all-zero frame yields an all-zero mask, not an error") {
        Tensor m({2, 4});
        m.at(1, 0) = 1.0;
        BlendMask b = binarize_mask(m, 0.25, 2, 2);
        CHECK(b.alpha.at(0, 0, 0) == 0.0);
        CHECK(b.popcount() == 1);
    }
    SUBCASE("raising tau never adds pixels") {
        Rng rng(23);
        Tensor m = rng.uniform_tensor({3, 16}, 0.0, 1.0);
        int64_t prev = 1000;
        for (double tau = 0.0; tau <= 1.0001; tau += 0.1) {
            BlendMask b = binarize_mask(m, tau, 4, 4);
            CHECK(b.popcount() <= prev);
            prev = b.popcount();
        }
    }
}

TEST_CASE("union_masks") {
    Rng rng(29);
    auto random_mask = [&](int seed) {
        Rng r(static_cast<uint64_t>(seed));
        BlendMask m;
        m.alpha = Tensor({2, 3, 3});
        for (int64_t i = 0; i < m.alpha.numel(); ++i) m.alpha[i] = r.uniform() < 0.4 ? 1.0 : 0.0;
        return m;
    };
    BlendMask a = random_mask(1), b = random_mask(2);
    BlendMask zero;
    zero.alpha = Tensor({2, 3, 3});

    CHECK(bitwise_equal(union_masks(a, zero).alpha, a.alpha));
    CHECK(bitwise_equal(union_masks(a, b).alpha, union_masks(b, a).alpha));
    CHECK(bitwise_equal(union_masks(a, a).alpha, a.alpha));
    CHECK(union_masks(a, b).popcount() >= std::max(a.popcount(), b.popcount()));
    CHECK_THROWS(union_masks(a, BlendMask{Tensor({1, 3, 3})}));
    (void)rng;
}

TEST_CASE("blend_latents") {
    Rng rng(31);
    Tensor recon = rng.normal_tensor({2, 3, 4, 4});
    Tensor edit = rng.normal_tensor({2, 3, 4, 4});
    SUBCASE("alpha 0 is the reconstruction bitwise") {
        BlendMask m;
        m.alpha = Tensor({2, 2, 2});
        CHECK(bitwise_equal(blend_latents(recon, edit, m), recon));
    }
    SUBCASE("alpha 1 is the edit bitwise") {
        BlendMask m;
        m.alpha = Tensor::full({2, 2, 2}, 1.0);
        CHECK(bitwise_equal(blend_latents(recon, edit, m), edit));
    }
    SUBCASE("half-plane mask splits pixelwise, mask upsampled 2x") {
        BlendMask m;
        m.alpha = Tensor({2, 2, 2});
        m.alpha.at(0, 0, 1) = 1.0;  // right half of frame 0
        m.alpha.at(0, 1, 1) = 1.0;
        Tensor out = blend_latents(recon, edit, m);
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) {
                    double expect = (j >= 2) ? edit.at(0, c, i, j) : recon.at(0, c, i, j);
                    CHECK(out.at(0, c, i, j) == expect);
                }
        // frame 1 untouched
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) CHECK(out.at(1, c, i, j) == recon.at(1, c, i, j));
    }
    SUBCASE("shape mismatch is an error") {
        BlendMask m;
        m.alpha = Tensor({2, 3, 3});  // 4 % 3 != 0
        CHECK_THROWS(blend_latents(recon, edit, m));
    }
}

TEST_CASE("compute_blend_mask pipeline") {
    Rng rng(37);
    int f = 3, hw = 16, l = 6;
    InjectionConfig cfg;
    TokenAlignment align;
    align.src_edit_indices = {2};
    align.tgt_edit_indices = {3};

    auto softmax_like = [&](int frames) {
        Tensor m({frames, hw, l});
        for (int fi = 0; fi < frames; ++fi)
            for (int p = 0; p < hw; ++p) {
                double s = 0.0;
                for (int j = 0; j < l; ++j) {
                    m.at(fi, p, j) = rng.uniform(0.01, 1.0);
                    s += m.at(fi, p, j);
                }
                for (int j = 0; j < l; ++j) m.at(fi, p, j) /= s;
            }
        return m;
    };
    auto st_like = [&](int frames) {
        Tensor st({frames, hw, 2 * hw});
        for (int fi = 0; fi < frames; ++fi)
            for (int p = 0; p < hw; ++p) {
                double s = 0.0;
                for (int j = 0; j < 2 * hw; ++j) {
                    st.at(fi, p, j) = rng.uniform(0.0, 1.0);
                    s += st.at(fi, p, j);
                }
                for (int j = 0; j < 2 * hw; ++j) st.at(fi, p, j) /= s;
            }
        return st;
    };

    SUBCASE("single frame reduces to the frame-wise mask") {
        Tensor cs = softmax_like(1), ct = softmax_like(1), st = st_like(1);
        BlendMask tc = compute_blend_mask(cs, ct, st, align, cfg);
        BlendMask fw = compute_framewise_mask(cs, ct, align, cfg);
        CHECK(bitwise_equal(tc.alpha, fw.alpha));
    }
    SUBCASE("identical frames and identical ST maps give identical propagated mask frames") {
        // Frame 0 keeps its own normalized map by definition; every
        // propagated frame sees the same inputs and the same weights, so
        // frames 1..F-1 coincide exactly.
        Tensor cs1 = softmax_like(1), ct1 = softmax_like(1);
        Tensor cs({f, hw, l}), ct({f, hw, l});
        for (int fi = 0; fi < f; ++fi) {
            std::copy_n(cs1.data(), hw * l, cs.data() + static_cast<int64_t>(fi) * hw * l);
            std::copy_n(ct1.data(), hw * l, ct.data() + static_cast<int64_t>(fi) * hw * l);
        }
        Tensor st1 = st_like(1);
        Tensor st({f, hw, 2 * hw});
        for (int fi = 0; fi < f; ++fi)
            std::copy_n(st1.data(), hw * 2 * hw, st.data() + static_cast<int64_t>(fi) * hw * 2 * hw);
        BlendMask m = compute_blend_mask(cs, ct, st, align, cfg);
        for (int fi = 2; fi < f; ++fi)
            for (int p = 0; p < hw; ++p)
                CHECK(m.alpha[static_cast<int64_t>(fi) * hw + p] == m.alpha[static_cast<int64_t>(1) * hw + p]);
        // identity ST weights additionally pin every frame to frame 0's mask
        Tensor id_st({f, hw, 2 * hw});
        for (int fi = 0; fi < f; ++fi)
            for (int j = 0; j < hw; ++j) id_st.at(fi, j, j) = 1.0;
        BlendMask mid = compute_blend_mask(cs, ct, id_st, align, cfg);
        for (int fi = 1; fi < f; ++fi)
            for (int p = 0; p < hw; ++p)
                CHECK(mid.alpha[static_cast<int64_t>(fi) * hw + p] == mid.alpha[p]);
    }
    SUBCASE("no edited tokens on either side yields an empty mask") {
        TokenAlignment none;
        Tensor cs = softmax_like(f), ct = softmax_like(f), st = st_like(f);
        BlendMask m = compute_blend_mask(cs, ct, st, none, cfg);
        CHECK(m.popcount() == 0);
    }
    SUBCASE("one-sided edits work") {
        TokenAlignment tgt_only;
        tgt_only.tgt_edit_indices = {1};
        Tensor cs = softmax_like(f), ct = softmax_like(f), st = st_like(f);
        BlendMask m = compute_blend_mask(cs, ct, st, tgt_only, cfg);
        CHECK(m.alpha.dim(0) == f);
    }
}
