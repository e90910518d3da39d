#pragma once

#include <vector>

#include "videdit/control.hpp"
#include "videdit/tensor.hpp"

namespace videdit {

struct BlendMask {
    Tensor alpha;  // [F, Hm, Wm], entries in {0,1}
    int64_t popcount() const;
};

// Frame-wise normalization of a word heatmap [F,Hm,Wm] to unit mass, then
// flattening: returns [F, Hm*Wm]. A zero-mass frame means the word is
// absent and is an error.
Tensor normalize_heatmap(const Tensor& m);

// One propagation step: weighted average of the first and previous frame
// maps under the frame's ST attention weights.
//   m_hat[j] = sum_i st_map[j,i] * [m1; mprev][i]
Tensor propagate_mask(const Tensor& m_tilde_1, const Tensor& m_tilde_prev, const Tensor& st_map_f);

// Frame-wise rescale by the frame maximum, then threshold at tau. An
// all-zero frame yields an all-zero mask frame.
BlendMask binarize_mask(const Tensor& m_hat, double tau, int mask_h, int mask_w);

BlendMask union_masks(const BlendMask& a, const BlendMask& b);

// Eq.-style composite: background (alpha == 0) pixels come from the
// reconstruction bitwise, masked pixels from the edit branch. The mask is
// nearest-upsampled to the latent resolution and broadcast over channels.
Tensor blend_latents(const Tensor& z_recon, const Tensor& z_edit, const BlendMask& mask);

// Full mask pipeline for one step: per-role word heatmaps from the cross
// maps (source word from the source branch, new word from the edit branch),
// normalize -> propagate through the ST maps (frame 0 keeps its own
// normalized map) -> binarize -> union over roles. Empty edit sets on both
// sides produce an all-zero mask.
BlendMask compute_blend_mask(const Tensor& cross_src, const Tensor& cross_tgt, const Tensor& st_maps,
                             const TokenAlignment& alignment, const InjectionConfig& cfg);

// Same inputs without temporal propagation: frame-wise masks straight from
// the cross maps. The ablation baseline.
BlendMask compute_framewise_mask(const Tensor& cross_src, const Tensor& cross_tgt,
                                 const TokenAlignment& alignment, const InjectionConfig& cfg);

// Mean heatmap [F, Hm*Wm] over the given token columns of an averaged
// cross map [F, HW, L].
Tensor word_heatmap(const Tensor& cross_avg, const std::vector<int>& token_indices);

}  // namespace videdit
