#pragma once

#include <string>
#include <vector>

#include "videdit/diffusion.hpp"
#include "videdit/model.hpp"
#include "videdit/schedule.hpp"
#include "videdit/text.hpp"

namespace videdit {

struct TrainConfig {
    int steps = 300;
    double learning_rate = 1e-3;
    int batch = 8;
    uint64_t seed = 0;
    // substring filter over parameter names; empty selects everything
    std::vector<std::string> trainable_substrings;
    double uncond_prob = 0.1;  // caption dropout for classifier-free training

    bool selects(const std::string& name) const;
};

struct CaptionedImage {
    std::string caption;
    Tensor image;  // [C,H,W]
};

struct PretrainResult {
    ParamStore weights;
    std::vector<double> loss_curve;
};

struct FinetuneResult {
    ParamStore weights;
    std::vector<double> loss_curve;
};

// Noise-prediction pretraining of the 2D model on caption/image pairs.
PretrainResult pretrain_2d(const std::vector<CaptionedImage>& dataset, const ModelConfig& cfg,
                           const Vocabulary& vocab, const NoiseSchedule& sched, const TrainConfig& tc);

// Stage-1 finetuning of the inflated model on a single prompt/video pair.
// Only parameters selected by the trainable filter move; everything else is
// bitwise unchanged.
FinetuneResult finetune_one_shot(const ParamStore& weights3d, const ModelConfig& cfg, const Vocabulary& vocab,
                                 const NoiseSchedule& sched, const Tensor& video, const std::string& prompt,
                                 const TrainConfig& tc);

struct NullEmbeddingSet {
    std::vector<TextEmbedding> per_step;  // one per sampler step, noisiest first
    std::vector<Tensor> matrices() const;
};

struct NtiResult {
    NullEmbeddingSet nulls;
    // losses[i] = objective values of step i: initial value followed by one
    // entry per inner iteration (non-increasing by construction)
    std::vector<std::vector<double>> losses;
};

// Stage-2(a): per-step optimization of the null embedding so the guided
// reverse trajectory tracks the inversion trajectory. Warm-starts each step
// from the previous step's result. With w == 1 the objective does not
// depend on the null embedding and the input embedding is returned for
// every step unchanged.
NtiResult null_text_invert(const ParamStore& weights3d, const ModelConfig& cfg, const NoiseSchedule& sched,
                           const Trajectory& inversion, const TextEmbedding& cond,
                           const TextEmbedding& initial_null, double w, int inner_iters, double lr);

// Adam with per-parameter state, addressed by parameter name.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(Tensor& param, const Tensor& grad, const std::string& name);

private:
    struct State {
        Tensor m, v;
        int64_t t = 0;
    };
    double lr_, beta1_, beta2_, eps_;
    std::map<std::string, State> state_;
};

void write_loss_csv(const std::string& path, const std::vector<double>& losses);

}  // namespace videdit
