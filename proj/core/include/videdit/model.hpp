#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "videdit/autograd.hpp"
#include "videdit/records.hpp"
#include "videdit/rng.hpp"
#include "videdit/tensor.hpp"
#include "videdit/text.hpp"

namespace videdit {

// Toy text-conditioned denoiser. Two resolution levels; all attention sits
// at the coarse level, which is also where maps are recorded for editing.
struct ModelConfig {
    int in_channels = 4;
    int height = 16;
    int width = 16;
    int base_channels = 16;  // full-resolution level
    int mid_channels = 32;   // coarse level (attention)
    int heads = 2;
    int text_dim = 32;
    int max_tokens = 8;
    int time_dim = 64;
    int norm_groups = 4;
    int ff_mult = 2;
    int vocab_size = 0;  // set from the vocabulary when weights are created

    int coarse_h() const { return height / 2; }
    int coarse_w() const { return width / 2; }
    uint64_t hash() const;
};

// Ordered named parameter arrays. 2D and 3D weights share this container;
// inflation adds the temporal-attention entries and changes nothing else.
class ParamStore {
public:
    void add(const std::string& name, Tensor t);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const;
    const std::vector<std::string>& names() const { return names_; }
    int64_t total_params() const;
    size_t size() const { return names_.size(); }

    uint64_t content_hash() const;
    uint64_t content_hash(const std::function<bool(const std::string&)>& pred) const;

private:
    std::vector<std::string> names_;
    std::map<std::string, Tensor> params_;
};

// Binds store tensors into a graph as leaves, caching one Var per name.
class ParamBinder {
public:
    ParamBinder(ag::Graph& g, const ParamStore& store,
                std::function<bool(const std::string&)> trainable = nullptr);
    ag::Var operator()(const std::string& name);
    // trainable leaves touched by the forward pass, in creation order
    const std::vector<std::pair<std::string, ag::Var>>& trainable_vars() const { return trainable_vars_; }

private:
    ag::Graph& g_;
    const ParamStore& store_;
    std::function<bool(const std::string&)> trainable_;
    std::map<std::string, ag::Var> cache_;
    std::vector<std::pair<std::string, ag::Var>> trainable_vars_;
};

struct ForwardOptions {
    bool record = false;
    AttnHookFn hook;
    std::vector<AttentionRecord>* records = nullptr;
};

ParamStore init_weights_2d(const ModelConfig& cfg, const Vocabulary& vocab, uint64_t seed);

// 3x3 kernels become 1x3x3 (same values, applied per frame), self-attention
// projections are reused as ST-Attn projections, and temporal-attention
// modules are appended with a zero output projection so the inflated model
// is frame-wise identical to the 2D model until finetuning moves it.
ParamStore inflate(const ParamStore& weights2d, const ModelConfig& cfg);

bool is_temporal_param(const std::string& name);
// cross (.ca.), spatio-temporal (.sa.) and temporal (.ta.) attention entries
bool is_attention_param(const std::string& name);

// Batch of independent images; per-sample timesteps, one text per sample
// (or a single shared text).
ag::Var forward_2d(ag::Graph& g, ParamBinder& params, const ModelConfig& cfg, ag::Var x,
                   const std::vector<int>& t, const std::vector<ag::Var>& texts);

// One video [F,C,H,W], shared timestep and text; sparse spatio-temporal
// attention plus appended temporal attention.
ag::Var forward_3d(ag::Graph& g, ParamBinder& params, const ModelConfig& cfg, ag::Var video, int t,
                   ag::Var text, const ForwardOptions& opt = {});

// No-grad conveniences.
Tensor forward_2d_value(const ParamStore& w, const ModelConfig& cfg, const Tensor& x,
                        const std::vector<int>& t, const std::vector<Tensor>& texts);
Tensor forward_3d_value(const ParamStore& w, const ModelConfig& cfg, const Tensor& video, int t,
                        const Tensor& text, const ForwardOptions& opt = {});

TextEmbedding model_encode_text(const ParamStore& w, const ModelConfig& cfg, const Vocabulary& vocab,
                                const std::string& prompt);

// Pooled coarse-level features of one frame, projected into the text space
// through the mid-block cross-attention key matrix. Used by the toy
// text-alignment embedder.
Tensor frame_feature_embedding(const ParamStore& w, const ModelConfig& cfg, const Tensor& frame);

// ---- standalone attention kernels (value level, shared with tests) ----

struct AttnWeights {
    Tensor wq, wk, wv, wo, bo;
    int heads = 1;
};

// Sparse ST attention for one frame: queries from z_f, keys/values from
// [z_first; z_prev]; token matrices are [HW, C]. Returns the output tokens
// and the head-averaged map [HW, 2*HW]; softmax runs over the key axis.
std::pair<Tensor, Tensor> st_attention(const Tensor& z_f, const Tensor& z_first, const Tensor& z_prev,
                                       const AttnWeights& w);

// Attention along the frame axis at each spatial location, residual
// included; zero output projection makes this the identity.
Tensor temporal_attention(const Tensor& video, const AttnWeights& w);

}  // namespace videdit
