// Command-line front end: dataset generation, pretraining, the two-stage
// edit pipeline, baselines and metric evaluation. Flag > config file >
// built-in default; every config key is also settable through the JSON
// config (see README for the key list).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "videdit/archive.hpp"
#include "videdit/image_io.hpp"
#include "videdit/pipeline.hpp"

using namespace videdit;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct CommonFlags {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> weights;
    std::optional<std::string> video;
    std::optional<std::string> source_prompt;
    std::optional<std::string> target_prompt;
    std::optional<int> sampler_steps;
    std::optional<double> guidance;
    std::optional<int> pretrain_steps;
    std::optional<int> finetune_steps;
    std::optional<int> nti_iters;
    std::optional<double> tau;
    std::optional<double> dur_cross, dur_st, dur_temporal;
    std::optional<bool> tc_blending;
    std::optional<bool> blending;
    std::optional<int> sdedit_t0;
    std::optional<uint64_t> scene_seed;
    std::optional<std::string> scene_color, scene_shape, scene_direction;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON run config; flags override file values");
    cmd->add_option("--seed", f.seed, "master seed");
    cmd->add_option("--out", f.out_dir, "output directory");
    cmd->add_option("--weights", f.weights, "2D weights archive (pretrained here when missing)");
    cmd->add_option("--video", f.video, "source video: PNG directory or .vta archive");
    cmd->add_option("--source-prompt", f.source_prompt, "caption of the source video");
    cmd->add_option("--target-prompt", f.target_prompt, "edit target caption");
    cmd->add_option("--sampler-steps", f.sampler_steps, "DDIM sampler steps");
    cmd->add_option("--guidance", f.guidance, "classifier-free guidance scale");
    cmd->add_option("--pretrain-steps", f.pretrain_steps, "pretraining steps");
    cmd->add_option("--finetune-steps", f.finetune_steps, "one-shot finetuning steps");
    cmd->add_option("--nti-iters", f.nti_iters, "null-text inner iterations per step");
    cmd->add_option("--tau", f.tau, "blending threshold");
    cmd->add_option("--dur-cross", f.dur_cross, "cross-attention injection duration");
    cmd->add_option("--dur-st", f.dur_st, "spatio-temporal injection duration");
    cmd->add_option("--dur-temporal", f.dur_temporal, "temporal injection duration");
    cmd->add_option("--tc-blending", f.tc_blending, "propagate masks through ST attention");
    cmd->add_option("--blending", f.blending, "apply latent blending");
    cmd->add_option("--t0", f.sdedit_t0, "sdedit noising depth in sampler steps");
    cmd->add_option("--scene-seed", f.scene_seed, "synthetic scene seed");
    cmd->add_option("--scene-color", f.scene_color, "sprite color word");
    cmd->add_option("--scene-shape", f.scene_shape, "sprite shape word");
    cmd->add_option("--scene-direction", f.scene_direction, "sprite motion word");
}

RunConfig resolve(const CommonFlags& f, const std::string& mode) {
    RunConfig c = f.config_path.empty() ? default_run_config() : run_config_from_json_file(f.config_path);
    c.mode = mode;
    if (f.seed) c.seed = *f.seed;
    if (f.out_dir) c.out_dir = *f.out_dir;
    if (f.weights) c.weights2d_path = *f.weights;
    if (f.video) c.video_path = *f.video;
    if (f.source_prompt) c.source_prompt = *f.source_prompt;
    if (f.target_prompt) c.target_prompt = *f.target_prompt;
    if (f.sampler_steps) c.sampler_steps = *f.sampler_steps;
    if (f.guidance) c.guidance = *f.guidance;
    if (f.pretrain_steps) c.pretrain.steps = *f.pretrain_steps;
    if (f.finetune_steps) c.finetune.steps = *f.finetune_steps;
    if (f.nti_iters) c.nti_inner_iters = *f.nti_iters;
    if (f.tau) c.injection.tau = *f.tau;
    if (f.dur_cross) c.injection.dur_cross = *f.dur_cross;
    if (f.dur_st) c.injection.dur_st = *f.dur_st;
    if (f.dur_temporal) c.injection.dur_temporal = *f.dur_temporal;
    if (f.tc_blending) c.tc_blending = *f.tc_blending;
    if (f.blending) c.blending = *f.blending;
    if (f.sdedit_t0) c.sdedit_t0 = *f.sdedit_t0;
    if (f.scene_seed) c.scene_seed = *f.scene_seed;
    if (f.scene_color) c.scene.color = *f.scene_color;
    if (f.scene_shape) c.scene.shape = *f.scene_shape;
    if (f.scene_direction) c.scene.direction = *f.scene_direction;

    // relative output dirs live under the output root when set
    if (const char* root = std::getenv("VIDEDIT_OUT_ROOT"); root && *root) {
        fs::path out(c.out_dir);
        if (out.is_relative()) c.out_dir = (fs::path(root) / out).string();
    }
    return c;
}

void print_report(const MetricReport& r) {
    std::cout << "method=" << r.method << " psnr=" << r.psnr_db;
    if (r.mask_iou) std::cout << " mask_iou=" << *r.mask_iou;
    if (r.frame_consistency) std::cout << " frame_consistency=" << *r.frame_consistency;
    if (r.text_alignment) std::cout << " text_alignment=" << *r.text_alignment;
    std::cout << "\n";
}

int cmd_pretrain(const CommonFlags& f) {
    RunConfig c = resolve(f, "pretrain");
    fs::create_directories(c.out_dir);
    Vocabulary vocab = Vocabulary::default_vocab();
    NoiseSchedule sched = make_schedule(c.T, c.beta_start, c.beta_end,
                                        schedule_kind_from_string(c.schedule_kind), c.sampler_steps);
    TrainConfig tc = c.pretrain;
    tc.seed = Rng::derive(c.seed, string_hash("pretrain-seed"));
    auto data = make_pretrain_dataset(c.pretrain_images, c.model.height, c.model.width, c.model.in_channels,
                                      tc.seed);
    PretrainResult r = pretrain_2d(data, c.model, vocab, sched, tc);
    std::string path = c.weights2d_path.empty() ? c.out_dir + "/weights2d.vta" : c.weights2d_path;
    ModelConfig mc = c.model;
    mc.vocab_size = vocab.size();
    save_weights(path, r.weights, mc);
    write_loss_csv(c.out_dir + "/pretrain_loss.csv", r.loss_curve);
    std::cout << "wrote " << path << " (" << r.weights.total_params() << " parameters, "
              << r.loss_curve.size() << " steps)\n";
    return kExitOk;
}

int cmd_make_data(const CommonFlags& f) {
    RunConfig c = resolve(f, "make-data");
    fs::create_directories(c.out_dir);
    SceneParams sp = c.scene;
    sp.height = c.model.height;
    sp.width = c.model.width;
    sp.channels = c.model.in_channels;
    Scene scene = generate_scene(sp, c.scene_seed);
    save_video_png(c.out_dir + "/video", scene.video);
    save_video_archive(c.out_dir + "/video.vta", scene.video);
    TensorArchive masks;
    masks.meta["kind"] = "masks";
    masks.put("truth_masks", scene.masks.alpha);
    masks.save(c.out_dir + "/truth_masks.vta");
    std::ofstream cap(c.out_dir + "/caption.txt");
    cap << scene.caption << "\n";
    std::cout << "wrote " << c.out_dir << " (caption: \"" << scene.caption << "\")\n";
    return kExitOk;
}

int cmd_run(const CommonFlags& f, const std::string& mode) {
    RunConfig c = resolve(f, mode);
    EditArtifacts art;
    if (mode == "edit")
        art = run_edit(c);
    else if (mode == "reconstruct")
        art = run_reconstruct(c);
    else if (mode == "baseline_generate")
        art = run_baseline_generate(c);
    else if (mode == "baseline_sdedit")
        art = run_baseline_sdedit(c);
    else
        throw std::invalid_argument("unknown mode: " + mode);
    print_report(art.report);
    std::cout << "artifacts in " << c.out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"toy text-guided video editing pipeline"};
    app.require_subcommand(1);

    CommonFlags f;
    std::string eval_dir;

    add_common(app.add_subcommand("pretrain", "train the 2D denoiser on synthetic captioned images"), f);
    add_common(app.add_subcommand("make-data", "generate a synthetic scene with ground-truth masks"), f);
    add_common(app.add_subcommand("edit", "full two-stage edit of a source video"), f);
    add_common(app.add_subcommand("reconstruct", "invert and resample the source video"), f);
    add_common(app.add_subcommand("baseline-generate", "sample from noise with the target prompt"), f);
    add_common(app.add_subcommand("baseline-sdedit", "noise to an intermediate step, then denoise"), f);
    auto* eval_cmd = app.add_subcommand("evaluate", "recompute metrics from a run directory");
    eval_cmd->add_option("--run", eval_dir, "run directory with trajectory.vta")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (app.got_subcommand("pretrain")) return cmd_pretrain(f);
        if (app.got_subcommand("make-data")) return cmd_make_data(f);
        if (app.got_subcommand("edit")) return cmd_run(f, "edit");
        if (app.got_subcommand("reconstruct")) return cmd_run(f, "reconstruct");
        if (app.got_subcommand("baseline-generate")) return cmd_run(f, "baseline_generate");
        if (app.got_subcommand("baseline-sdedit")) return cmd_run(f, "baseline_sdedit");
        if (app.got_subcommand("evaluate")) {
            MetricReport r = evaluate_run(eval_dir);
            print_report(r);
            return kExitOk;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitConfig;
}
