#include "videdit/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "videdit/image_io.hpp"
#include "videdit/rng.hpp"

namespace videdit {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- config ----

RunConfig default_run_config() {
    RunConfig c;
    c.pretrain.steps = 1200;
    c.pretrain.learning_rate = 2e-3;
    c.pretrain.batch = 8;
    c.finetune.steps = 300;
    c.finetune.learning_rate = 1e-3;
    c.finetune.batch = 1;
    c.finetune.trainable_substrings = {".sa.", ".ca.", ".ta."};
    return c;
}

static void apply_json(RunConfig& c, const json& j) {
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("mode", c.mode);
    get("seed", c.seed);
    get("weights2d_path", c.weights2d_path);
    get("video_path", c.video_path);
    get("out_dir", c.out_dir);
    get("source_prompt", c.source_prompt);
    get("target_prompt", c.target_prompt);
    get("scene_seed", c.scene_seed);
    get("scene_frames", c.scene.frames);
    get("scene_color", c.scene.color);
    get("scene_shape", c.scene.shape);
    get("scene_direction", c.scene.direction);
    get("scene_sprite_size", c.scene.sprite_size);
    get("scene_speed", c.scene.speed);
    get("scene_wrap", c.scene.wrap);
    get("T", c.T);
    get("beta_start", c.beta_start);
    get("beta_end", c.beta_end);
    get("schedule_kind", c.schedule_kind);
    get("sampler_steps", c.sampler_steps);
    get("guidance", c.guidance);
    get("model_height", c.model.height);
    get("model_width", c.model.width);
    get("model_channels", c.model.in_channels);
    get("model_base_channels", c.model.base_channels);
    get("model_mid_channels", c.model.mid_channels);
    get("model_heads", c.model.heads);
    get("model_text_dim", c.model.text_dim);
    get("model_max_tokens", c.model.max_tokens);
    get("model_time_dim", c.model.time_dim);
    get("model_norm_groups", c.model.norm_groups);
    get("model_ff_mult", c.model.ff_mult);
    get("pretrain_steps", c.pretrain.steps);
    get("pretrain_lr", c.pretrain.learning_rate);
    get("pretrain_batch", c.pretrain.batch);
    get("pretrain_images", c.pretrain_images);
    get("finetune_steps", c.finetune.steps);
    get("finetune_lr", c.finetune.learning_rate);
    get("nti_inner_iters", c.nti_inner_iters);
    get("nti_lr", c.nti_lr);
    get("dur_cross", c.injection.dur_cross);
    get("dur_st", c.injection.dur_st);
    get("dur_temporal", c.injection.dur_temporal);
    get("tau", c.injection.tau);
    get("blend_start", c.injection.blend_start);
    get("blending", c.blending);
    get("tc_blending", c.tc_blending);
    get("sdedit_t0", c.sdedit_t0);
    get("dump_attention", c.dump_attention);
    get("save_pngs", c.save_pngs);
}

RunConfig run_config_from_json_string(const std::string& json_text) {
    RunConfig c = default_run_config();
    json j = json::parse(json_text);
    apply_json(c, j);
    return c;
}

RunConfig run_config_from_json_file(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), "run config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return run_config_from_json_string(text);
}

std::string run_config_to_json(const RunConfig& c) {
    json j;
    j["mode"] = c.mode;
    j["seed"] = c.seed;
    j["weights2d_path"] = c.weights2d_path;
    j["video_path"] = c.video_path;
    j["out_dir"] = c.out_dir;
    j["source_prompt"] = c.source_prompt;
    j["target_prompt"] = c.target_prompt;
    j["scene_seed"] = c.scene_seed;
    j["scene_frames"] = c.scene.frames;
    j["scene_color"] = c.scene.color;
    j["scene_shape"] = c.scene.shape;
    j["scene_direction"] = c.scene.direction;
    j["scene_sprite_size"] = c.scene.sprite_size;
    j["scene_speed"] = c.scene.speed;
    j["scene_wrap"] = c.scene.wrap;
    j["T"] = c.T;
    j["beta_start"] = c.beta_start;
    j["beta_end"] = c.beta_end;
    j["schedule_kind"] = c.schedule_kind;
    j["sampler_steps"] = c.sampler_steps;
    j["guidance"] = c.guidance;
    j["model_height"] = c.model.height;
    j["model_width"] = c.model.width;
    j["model_channels"] = c.model.in_channels;
    j["model_base_channels"] = c.model.base_channels;
    j["model_mid_channels"] = c.model.mid_channels;
    j["model_heads"] = c.model.heads;
    j["model_text_dim"] = c.model.text_dim;
    j["model_max_tokens"] = c.model.max_tokens;
    j["model_time_dim"] = c.model.time_dim;
    j["model_norm_groups"] = c.model.norm_groups;
    j["model_ff_mult"] = c.model.ff_mult;
    j["pretrain_steps"] = c.pretrain.steps;
    j["pretrain_lr"] = c.pretrain.learning_rate;
    j["pretrain_batch"] = c.pretrain.batch;
    j["pretrain_images"] = c.pretrain_images;
    j["finetune_steps"] = c.finetune.steps;
    j["finetune_lr"] = c.finetune.learning_rate;
    j["nti_inner_iters"] = c.nti_inner_iters;
    j["nti_lr"] = c.nti_lr;
    j["dur_cross"] = c.injection.dur_cross;
    j["dur_st"] = c.injection.dur_st;
    j["dur_temporal"] = c.injection.dur_temporal;
    j["tau"] = c.injection.tau;
    j["blend_start"] = c.injection.blend_start;
    j["blending"] = c.blending;
    j["tc_blending"] = c.tc_blending;
    j["sdedit_t0"] = c.sdedit_t0;
    j["dump_attention"] = c.dump_attention;
    j["save_pngs"] = c.save_pngs;
    return j.dump(2);
}

uint64_t RunConfig::hash() const { return string_hash(run_config_to_json(*this)); }

// ---- helpers ----

BlendMask upsample_mask(const BlendMask& mask, int h, int w) {
    int f = mask.alpha.dim(0), mh = mask.alpha.dim(1), mw = mask.alpha.dim(2);
    require(h % mh == 0 && w % mw == 0, "upsample_mask: resolution not a multiple");
    int sh = h / mh, sw = w / mw;
    BlendMask out;
    out.alpha = Tensor({f, h, w});
    for (int fi = 0; fi < f; ++fi)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) out.alpha.at(fi, i, j) = mask.alpha.at(fi, i / sh, j / sw);
    return out;
}

ToyEmbedder::ToyEmbedder(const ParamStore* weights, ModelConfig cfg, const Vocabulary* vocab)
    : weights_(weights), cfg_(cfg), vocab_(vocab) {}

Tensor ToyEmbedder::embed_text(const std::string& prompt) {
    TextEmbedding e = model_encode_text(*weights_, cfg_, *vocab_, prompt);
    Tensor out({cfg_.text_dim});
    int used = 0;
    for (size_t i = 0; i < e.token_ids.size(); ++i) {
        if (e.token_ids[i] == Vocabulary::kPad) continue;
        for (int d = 0; d < cfg_.text_dim; ++d) out[d] += e.embeddings.at(static_cast<int>(i), d);
        ++used;
    }
    require(used > 0, "ToyEmbedder: prompt has no tokens");
    out *= 1.0 / static_cast<double>(used);
    return out;
}

Tensor ToyEmbedder::embed_frame(const Tensor& frame) { return frame_feature_embedding(*weights_, cfg_, frame); }

namespace {

struct RunContext {
    RunConfig cfg;
    Vocabulary vocab;
    NoiseSchedule sched;
    Tensor source;  // [F,C,H,W]
    std::optional<BlendMask> truth;
    std::string source_prompt;
    ParamStore weights2d;
    ParamStore weights3d;  // tuned
    std::vector<double> pretrain_losses;
    std::vector<double> finetune_losses;
};

DenoiserFn make_denoiser(const ParamStore& w, const ModelConfig& cfg) {
    return [&w, cfg](const Tensor& z, int t, const Tensor& text, const AttnHookFn& hook) {
        ForwardOptions opt;
        opt.hook = hook;
        return forward_3d_value(w, cfg, z, t, text, opt);
    };
}

std::string phase_tag(const std::string& phase, const std::exception& e) {
    return "phase '" + phase + "' failed: " + e.what();
}

// Setup, pretraining (or loading), inflation and one-shot finetuning —
// everything that is common to edit, reconstruct and both baselines.
RunContext prepare(const RunConfig& cfg) {
    RunContext ctx;
    ctx.cfg = cfg;
    ctx.vocab = Vocabulary::default_vocab();
    fs::create_directories(cfg.out_dir);

    try {
        ctx.sched = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end,
                                  schedule_kind_from_string(cfg.schedule_kind), cfg.sampler_steps);

        if (cfg.video_path.empty()) {
            SceneParams sp = cfg.scene;
            sp.height = cfg.model.height;
            sp.width = cfg.model.width;
            sp.channels = cfg.model.in_channels;
            Scene scene = generate_scene(sp, cfg.scene_seed);
            ctx.source = scene.video;
            ctx.truth = scene.masks;
            ctx.source_prompt = cfg.source_prompt.empty() ? scene.caption : cfg.source_prompt;
        } else if (fs::is_directory(cfg.video_path)) {
            ctx.source = load_video_png(cfg.video_path);
            ctx.source_prompt = cfg.source_prompt;
        } else {
            ctx.source = load_video_archive(cfg.video_path);
            ctx.source_prompt = cfg.source_prompt;
        }
        require(!ctx.source_prompt.empty(), "run: source prompt required");
        if (cfg.save_pngs) save_video_png(cfg.out_dir + "/source", ctx.source);
    } catch (const std::exception& e) {
        throw std::runtime_error(phase_tag("setup", e));
    }

    try {
        if (!cfg.weights2d_path.empty() && fs::exists(cfg.weights2d_path)) {
            ctx.weights2d = load_weights(cfg.weights2d_path);
        } else {
            TrainConfig tc = cfg.pretrain;
            tc.seed = Rng::derive(cfg.seed, string_hash("pretrain-seed"));
            auto data = make_pretrain_dataset(cfg.pretrain_images, cfg.model.height, cfg.model.width,
                                              cfg.model.in_channels, tc.seed);
            PretrainResult pr = pretrain_2d(data, cfg.model, ctx.vocab, ctx.sched, tc);
            ctx.weights2d = std::move(pr.weights);
            ctx.pretrain_losses = std::move(pr.loss_curve);
            write_loss_csv(cfg.out_dir + "/pretrain_loss.csv", ctx.pretrain_losses);
            std::string save_path = cfg.weights2d_path.empty() ? cfg.out_dir + "/weights2d.vta" : cfg.weights2d_path;
            ModelConfig mc = cfg.model;
            mc.vocab_size = ctx.vocab.size();
            save_weights(save_path, ctx.weights2d, mc);
        }
    } catch (const std::exception& e) {
        throw std::runtime_error(phase_tag("pretrain", e));
    }

    try {
        ParamStore inflated = inflate(ctx.weights2d, cfg.model);
        TrainConfig tc = cfg.finetune;
        tc.seed = Rng::derive(cfg.seed, string_hash("finetune-seed"));
        FinetuneResult fr = finetune_one_shot(inflated, cfg.model, ctx.vocab, ctx.sched, ctx.source,
                                              ctx.source_prompt, tc);
        ctx.weights3d = std::move(fr.weights);
        ctx.finetune_losses = std::move(fr.loss_curve);
        write_loss_csv(cfg.out_dir + "/finetune_loss.csv", ctx.finetune_losses);
    } catch (const std::exception& e) {
        throw std::runtime_error(phase_tag("finetune", e));
    }
    return ctx;
}

MetricReport base_report(const RunContext& ctx, const std::string& method, const Tensor& output) {
    MetricReport r;
    r.method = method;
    r.config_hash = ctx.cfg.hash();
    r.seed = ctx.cfg.seed;
    r.psnr_db = psnr(ctx.source, output);
    if (output.dim(0) >= 2) r.frame_consistency = frame_consistency(output);
    ToyEmbedder emb(&ctx.weights3d, ctx.cfg.model, &ctx.vocab);
    std::string prompt = ctx.cfg.target_prompt.empty() ? ctx.source_prompt : ctx.cfg.target_prompt;
    r.text_alignment = text_alignment(output, prompt, &emb);
    return r;
}

void write_common_artifacts(const RunContext& ctx, const EditArtifacts& art, TensorArchive& ar) {
    const RunConfig& cfg = ctx.cfg;
    if (cfg.save_pngs) {
        if (art.reconstruction.numel() > 0) save_video_png(cfg.out_dir + "/recon", art.reconstruction);
        if (art.edited.numel() > 0) save_video_png(cfg.out_dir + "/edited", art.edited);
    }
    if (art.edited.numel() > 0) ar.put("edited", art.edited);
    if (art.reconstruction.numel() > 0) ar.put("reconstruction", art.reconstruction);
    ar.put("source", ctx.source);
    if (art.truth_masks) ar.put("truth_masks", art.truth_masks->alpha);
    ar.meta["config"] = run_config_to_json(cfg);
    ar.save(cfg.out_dir + "/trajectory.vta");

    std::ofstream cf(cfg.out_dir + "/run_config.json");
    cf << run_config_to_json(cfg) << "\n";
    emit_report_csv({art.report}, cfg.out_dir + "/metrics.csv");
}

}  // namespace

EditArtifacts run_edit(const RunConfig& cfg) {
    require(!cfg.target_prompt.empty(), "run_edit: target prompt required");
    RunContext ctx = prepare(cfg);
    const NoiseSchedule& sched = ctx.sched;
    int S = sched.num_sampler_steps();
    DenoiserFn model = make_denoiser(ctx.weights3d, cfg.model);

    EditArtifacts art;
    art.source = ctx.source;
    art.truth_masks = ctx.truth;
    art.finetune_losses = ctx.finetune_losses;

    TextEmbedding cond_src = model_encode_text(ctx.weights3d, cfg.model, ctx.vocab, ctx.source_prompt);
    TextEmbedding cond_tgt = model_encode_text(ctx.weights3d, cfg.model, ctx.vocab, cfg.target_prompt);
    TextEmbedding null0 = model_encode_text(ctx.weights3d, cfg.model, ctx.vocab, "");

    TensorArchive ar;
    try {
        art.inversion = ddim_invert(model, ctx.source, cond_src.embeddings, sched);
        save_trajectory(ar, art.inversion, sched);
        ar.save(cfg.out_dir + "/trajectory.vta");  // partial flush
    } catch (const std::exception& e) {
        throw std::runtime_error(phase_tag("invert", e));
    }

    NtiResult nti;
    try {
        nti = null_text_invert(ctx.weights3d, cfg.model, sched, art.inversion, cond_src, null0, cfg.guidance,
                               cfg.nti_inner_iters, cfg.nti_lr);
        art.nti_losses = nti.losses;
        std::vector<double> flat;
        for (const auto& per_step : nti.losses)
            for (double v : per_step) flat.push_back(v);
        write_loss_csv(cfg.out_dir + "/nti_loss.csv", flat);
        for (int i = 0; i < S; ++i)
            ar.put("null_" + std::to_string(sched.sampler_steps[static_cast<size_t>(i)]),
                   nti.nulls.per_step[static_cast<size_t>(i)].embeddings);
    } catch (const std::exception& e) {
        throw std::runtime_error(phase_tag("null-text", e));
    }

    std::vector<Tensor> nulls = nti.nulls.matrices();
    const Tensor& z_top = art.inversion.back().z;

    // source branch: record attention, produce the reconstruction
    RecordingController recorder(cfg.injection, S);
    Trajectory recon_traj;
    try {
        SamplerCallbacks cb;
        cb.begin_step = [&recorder](int i, int) { recorder.begin_step(i); };
        cb.attn_hook = recorder.hook();
        recon_traj = ddim_sample(model, z_top, cond_src.embeddings, nulls, cfg.guidance, sched, &cb);
        art.reconstruction = recon_traj.back().z;
    } catch (const std::exception& e) {
        throw std::runtime_error(phase_tag("source-branch", e));
    }

    // edit branch: injection + optional blending
    TokenAlignment alignment = align_tokens(cond_src.token_ids, cond_tgt.token_ids);
    auto injector = controller_run(recorder.records(), cfg.injection, alignment, S);
    std::vector<BlendMask> step_masks;
    try {
        SamplerCallbacks cb;
        cb.begin_step = [&injector](int i, int) { injector->begin_step(i); };
        cb.attn_hook = injector->hook();
        int blend_from = static_cast<int>(std::lround(cfg.injection.blend_start * S));
        cb.blend = [&](int step_index, const Tensor& z_edit) -> Tensor {
            if (!cfg.blending || step_index < blend_from) return z_edit;
            Tensor cross_src = recorder.records().cross_avg(step_index);
            Tensor cross_tgt = injector->effective().cross_avg(step_index);
            BlendMask mask = cfg.tc_blending
                                 ? compute_blend_mask(cross_src, cross_tgt, injector->effective().st_avg(step_index),
                                                      alignment, cfg.injection)
                                 : compute_framewise_mask(cross_src, cross_tgt, alignment, cfg.injection);
            step_masks.push_back(mask);
            const Tensor& recon = recon_traj.states[static_cast<size_t>(step_index) + 1].z;
            return blend_latents(recon, z_edit, mask);
        };
        Trajectory edit_traj = ddim_sample(model, z_top, cond_tgt.embeddings, nulls, cfg.guidance, sched, &cb);
        art.edited = edit_traj.back().z;
    } catch (const std::exception& e) {
        throw std::runtime_error(phase_tag("edit-branch", e));
    }

    if (!step_masks.empty()) {
        art.final_mask = step_masks.back();
        for (size_t s = 0; s < step_masks.size(); ++s) {
            const Tensor& a = step_masks[s].alpha;
            for (int f = 0; f < a.dim(0); ++f) {
                Tensor frame({a.dim(1), a.dim(2)});
                std::copy_n(a.data() + static_cast<int64_t>(f) * frame.numel(), frame.numel(), frame.data());
                ar.put("mask_" + std::to_string(s) + "_" + std::to_string(f), frame);
            }
        }
        fs::create_directories(cfg.out_dir + "/masks");
        const Tensor& fin = art.final_mask->alpha;
        for (int f = 0; f < fin.dim(0); ++f) {
            Tensor frame({fin.dim(1), fin.dim(2)});
            std::copy_n(fin.data() + static_cast<int64_t>(f) * frame.numel(), frame.numel(), frame.data());
            save_pgm(cfg.out_dir + "/masks/final_" + std::to_string(f) + ".pgm", frame);
        }
    }

    art.report = base_report(ctx, cfg.tc_blending ? "edit" : "edit_no_tc", art.edited);
    if (art.final_mask && ctx.truth) {
        BlendMask up = upsample_mask(*art.final_mask, cfg.model.height, cfg.model.width);
        art.report.mask_iou = mask_iou(up, *ctx.truth);
    }
    write_common_artifacts(ctx, art, ar);

    if (cfg.save_pngs) {
        std::vector<Tensor> rows = {ctx.source, art.reconstruction, art.edited};
        save_png(cfg.out_dir + "/grid.png", frame_grid(rows));
    }
    return art;
}

EditArtifacts run_reconstruct(const RunConfig& cfg) {
    RunContext ctx = prepare(cfg);
    const NoiseSchedule& sched = ctx.sched;
    DenoiserFn model = make_denoiser(ctx.weights3d, cfg.model);

    EditArtifacts art;
    art.source = ctx.source;
    art.truth_masks = ctx.truth;
    art.finetune_losses = ctx.finetune_losses;

    TextEmbedding cond = model_encode_text(ctx.weights3d, cfg.model, ctx.vocab, ctx.source_prompt);
    TextEmbedding null0 = model_encode_text(ctx.weights3d, cfg.model, ctx.vocab, "");

    TensorArchive ar;
    try {
        art.inversion = ddim_invert(model, ctx.source, cond.embeddings, sched);
        save_trajectory(ar, art.inversion, sched);
    } catch (const std::exception& e) {
        throw std::runtime_error(phase_tag("invert", e));
    }
    NtiResult nti;
    try {
        nti = null_text_invert(ctx.weights3d, cfg.model, sched, art.inversion, cond, null0, cfg.guidance,
                               cfg.nti_inner_iters, cfg.nti_lr);
        art.nti_losses = nti.losses;
    } catch (const std::exception& e) {
        throw std::runtime_error(phase_tag("null-text", e));
    }
    try {
        Trajectory traj = ddim_sample(model, art.inversion.back().z, cond.embeddings, nti.nulls.matrices(),
                                      cfg.guidance, sched, nullptr);
        art.reconstruction = traj.back().z;
        art.edited = art.reconstruction;
    } catch (const std::exception& e) {
        throw std::runtime_error(phase_tag("resample", e));
    }

    art.report = base_report(ctx, "reconstruct", art.reconstruction);
    write_common_artifacts(ctx, art, ar);
    return art;
}

EditArtifacts run_baseline_generate(const RunConfig& cfg) {
    require(!cfg.target_prompt.empty(), "baseline_generate: target prompt required");
    RunContext ctx = prepare(cfg);
    DenoiserFn model = make_denoiser(ctx.weights3d, cfg.model);

    EditArtifacts art;
    art.source = ctx.source;
    art.truth_masks = ctx.truth;

    TextEmbedding cond = model_encode_text(ctx.weights3d, cfg.model, ctx.vocab, cfg.target_prompt);
    TextEmbedding null0 = model_encode_text(ctx.weights3d, cfg.model, ctx.vocab, "");

    Rng noise_rng(Rng::derive(cfg.seed, string_hash("init-noise")));
    Tensor z_top = noise_rng.normal_tensor(ctx.source.shape());
    try {
        Trajectory traj = ddim_sample(model, z_top, cond.embeddings, {null0.embeddings}, cfg.guidance,
                                      ctx.sched, nullptr);
        art.edited = traj.back().z;
    } catch (const std::exception& e) {
        throw std::runtime_error(phase_tag("generate", e));
    }

    art.report = base_report(ctx, "baseline_generate", art.edited);
    TensorArchive ar;
    ar.put("z_top", z_top);
    write_common_artifacts(ctx, art, ar);
    return art;
}

EditArtifacts run_baseline_sdedit(const RunConfig& cfg) {
    require(!cfg.target_prompt.empty(), "baseline_sdedit: target prompt required");
    RunContext ctx = prepare(cfg);
    const NoiseSchedule& sched = ctx.sched;
    int S = sched.num_sampler_steps();
    require(cfg.sdedit_t0 >= 0 && cfg.sdedit_t0 <= S, "baseline_sdedit: t0 must be in [0, S]");
    DenoiserFn model = make_denoiser(ctx.weights3d, cfg.model);

    EditArtifacts art;
    art.source = ctx.source;
    art.truth_masks = ctx.truth;

    TextEmbedding cond = model_encode_text(ctx.weights3d, cfg.model, ctx.vocab, cfg.target_prompt);
    TextEmbedding null0 = model_encode_text(ctx.weights3d, cfg.model, ctx.vocab, "");

    Rng noise_rng(Rng::derive(cfg.seed, string_hash("init-noise")));
    Tensor eps = noise_rng.normal_tensor(ctx.source.shape());

    TensorArchive ar;
    try {
        Tensor z;
        int start_index;  // first sampler step to run
        if (cfg.sdedit_t0 == 0) {
            // no noise injected: the source passes through unchanged
            art.edited = ctx.source;
            art.report = base_report(ctx, "baseline_sdedit", art.edited);
            ar.put("z_start", ctx.source);
            write_common_artifacts(ctx, art, ar);
            return art;
        } else if (cfg.sdedit_t0 == S) {
            // full noising == generation from pure noise
            z = eps;
            start_index = 0;
        } else {
            int t_mid = sched.sampler_steps[static_cast<size_t>(S - cfg.sdedit_t0)];
            z = add_noise(ctx.source, eps, t_mid, sched);
            start_index = S - cfg.sdedit_t0;
        }
        ar.put("z_start", z);
        for (int i = start_index; i < S; ++i) {
            int t = sched.sampler_steps[static_cast<size_t>(i)];
            int tp = sched.prev_timestep(i);
            Tensor eps_u = model(z, t, null0.embeddings, AttnHookFn());
            Tensor eps_c = model(z, t, cond.embeddings, AttnHookFn());
            z = ddim_step(z, cfg_combine(eps_u, eps_c, cfg.guidance), t, tp, sched);
            if (!z.all_finite())
                throw std::runtime_error("sdedit: non-finite latent at step " + std::to_string(i));
        }
        art.edited = z;
    } catch (const std::exception& e) {
        throw std::runtime_error(phase_tag("sdedit", e));
    }

    art.report = base_report(ctx, "baseline_sdedit", art.edited);
    write_common_artifacts(ctx, art, ar);
    return art;
}

MetricReport evaluate_run(const std::string& run_dir) {
    TensorArchive ar = TensorArchive::load(run_dir + "/trajectory.vta");
    require(ar.has("source") && ar.has("edited"), "evaluate_run: archive lacks source/edited entries");
    const Tensor& source = ar.get("source");
    const Tensor& edited = ar.get("edited");

    MetricReport r;
    r.method = "evaluate";
    r.psnr_db = psnr(source, edited);
    if (edited.dim(0) >= 2) r.frame_consistency = frame_consistency(edited);
    if (ar.has("truth_masks")) {
        // final-step union mask against the ground truth
        int last_step = -1, frames = 0;
        for (const auto& name : ar.names())
            if (name.rfind("mask_", 0) == 0) {
                int s = std::stoi(name.substr(5, name.find('_', 5) - 5));
                last_step = std::max(last_step, s);
            }
        if (last_step >= 0) {
            const Tensor& truth = ar.get("truth_masks");
            frames = truth.dim(0);
            Tensor first = ar.get("mask_" + std::to_string(last_step) + "_0");
            BlendMask pred;
            pred.alpha = Tensor({frames, first.dim(0), first.dim(1)});
            for (int f = 0; f < frames; ++f) {
                Tensor fr = ar.get("mask_" + std::to_string(last_step) + "_" + std::to_string(f));
                std::copy_n(fr.data(), fr.numel(), pred.alpha.data() + static_cast<int64_t>(f) * fr.numel());
            }
            BlendMask truth_mask;
            truth_mask.alpha = truth;
            BlendMask up = upsample_mask(pred, truth.dim(1), truth.dim(2));
            r.mask_iou = mask_iou(up, truth_mask);
        }
    }
    emit_report_csv({r}, run_dir + "/metrics_eval.csv");
    return r;
}

void emit_report(const std::vector<MetricReport>& reports, const std::vector<Tensor>& videos,
                 const std::string& csv_path, const std::string& grid_path) {
    emit_report_csv(reports, csv_path);
    if (!videos.empty()) save_png(grid_path, frame_grid(videos));
}

}  // namespace videdit
