#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "videdit/archive.hpp"
#include "videdit/blending.hpp"
#include "videdit/control.hpp"
#include "videdit/diffusion.hpp"
#include "videdit/metrics.hpp"
#include "videdit/model.hpp"
#include "videdit/scene.hpp"
#include "videdit/training.hpp"

namespace videdit {

struct RunConfig {
    std::string mode = "edit";  // edit | reconstruct | baseline_generate | baseline_sdedit
    uint64_t seed = 0;

    std::string weights2d_path;  // load when present; pretrain (and save) otherwise
    std::string video_path;      // PNG directory or .vta archive; empty -> synthetic scene
    std::string out_dir = "out";

    std::string source_prompt;  // defaults to the scene caption
    std::string target_prompt;

    SceneParams scene;
    uint64_t scene_seed = 1;

    int T = 1000;
    double beta_start = 0.00085;
    double beta_end = 0.012;
    std::string schedule_kind = "scaled_linear";
    int sampler_steps = 50;
    double guidance = 7.5;

    ModelConfig model;
    TrainConfig pretrain;  // defaults set by default_run_config()
    TrainConfig finetune;
    int pretrain_images = 256;
    int nti_inner_iters = 10;
    double nti_lr = 0.5;

    InjectionConfig injection;
    bool blending = true;     // apply latent blending at all
    bool tc_blending = true;  // propagate masks through ST attention (ablation toggle)
    int sdedit_t0 = 25;
    bool dump_attention = false;
    bool save_pngs = true;

    uint64_t hash() const;
};

RunConfig default_run_config();
RunConfig run_config_from_json_string(const std::string& json_text);
RunConfig run_config_from_json_file(const std::string& path);
std::string run_config_to_json(const RunConfig& cfg);

struct EditArtifacts {
    Tensor source;              // [F,C,H,W]
    Tensor reconstruction;      // source-branch endpoint
    Tensor edited;              // edit-branch endpoint (blended)
    std::optional<BlendMask> final_mask;
    std::optional<BlendMask> truth_masks;
    Trajectory inversion;
    MetricReport report;
    std::vector<std::vector<double>> nti_losses;
    std::vector<double> finetune_losses;
};

// Full two-stage run: inflate -> one-shot finetune -> invert -> null-text
// optimization -> dual-branch sampling with attention injection and
// (optionally) TC blending. Writes artifacts under cfg.out_dir.
EditArtifacts run_edit(const RunConfig& cfg);

// Source branch only: invert, optimize nulls, resample.
EditArtifacts run_reconstruct(const RunConfig& cfg);

// Generation from fresh noise with the target prompt after tuning.
EditArtifacts run_baseline_generate(const RunConfig& cfg);

// Noise the source to an intermediate sampler step, then denoise with the
// target prompt; no injection, no blending. t0 == 0 returns the source
// unchanged, t0 == S starts from pure noise like baseline_generate.
EditArtifacts run_baseline_sdedit(const RunConfig& cfg);

// Recompute metrics from a finished run directory; writes metrics_eval.csv.
MetricReport evaluate_run(const std::string& run_dir);

// CSV plus a frame-grid image, one method per row.
void emit_report(const std::vector<MetricReport>& reports, const std::vector<Tensor>& videos,
                 const std::string& csv_path, const std::string& grid_path);

// Text-alignment embedder backed by the toy model itself.
class ToyEmbedder : public EmbedderPlugin {
public:
    ToyEmbedder(const ParamStore* weights, ModelConfig cfg, const Vocabulary* vocab);
    Tensor embed_text(const std::string& prompt) override;
    Tensor embed_frame(const Tensor& frame) override;

private:
    const ParamStore* weights_;
    ModelConfig cfg_;
    const Vocabulary* vocab_;
};

// Upsample a mask to the latent resolution (nearest neighbour).
BlendMask upsample_mask(const BlendMask& mask, int h, int w);

}  // namespace videdit
