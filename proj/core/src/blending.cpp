#include "videdit/blending.hpp"

#include <cmath>
#include <stdexcept>

namespace videdit {

int64_t BlendMask::popcount() const {
    int64_t n = 0;
    for (int64_t i = 0; i < alpha.numel(); ++i) n += alpha[i] != 0.0 ? 1 : 0;
    return n;
}

Tensor normalize_heatmap(const Tensor& m) {
    require(m.ndim() == 3, "normalize_heatmap: expected [F,H,W]");
    int f = m.dim(0), hw = m.dim(1) * m.dim(2);
    Tensor out({f, hw});
    for (int i = 0; i < f; ++i) {
        const double* src = m.data() + static_cast<int64_t>(i) * hw;
        double s = 0.0;
        for (int j = 0; j < hw; ++j) {
            require(src[j] >= 0.0, "normalize_heatmap: negative mass");
            s += src[j];
        }
        require(s > 0.0, "normalize_heatmap: zero-sum frame " + std::to_string(i) + " (word absent)");
        for (int j = 0; j < hw; ++j) out.at(i, j) = src[j] / s;
    }
    return out;
}

Tensor propagate_mask(const Tensor& m_tilde_1, const Tensor& m_tilde_prev, const Tensor& st_map_f) {
    require(m_tilde_1.ndim() == 1 && m_tilde_prev.ndim() == 1, "propagate_mask: expected flat maps");
    int hw = m_tilde_1.dim(0);
    require(m_tilde_prev.dim(0) == hw, "propagate_mask: map size mismatch");
    require(st_map_f.ndim() == 2 && st_map_f.dim(0) == hw && st_map_f.dim(1) == 2 * hw,
            "propagate_mask: st map must be [HW, 2HW], got " + st_map_f.shape_str());
    Tensor out({hw});
    for (int j = 0; j < hw; ++j) {
        const double* row = st_map_f.data() + static_cast<int64_t>(j) * 2 * hw;
        double acc = 0.0;
        for (int i = 0; i < hw; ++i) acc += row[i] * m_tilde_1[i];
        for (int i = 0; i < hw; ++i) acc += row[hw + i] * m_tilde_prev[i];
        out[j] = acc;
    }
    return out;
}

BlendMask binarize_mask(const Tensor& m_hat, double tau, int mask_h, int mask_w) {
    require(m_hat.ndim() == 2 && m_hat.dim(1) == mask_h * mask_w, "binarize_mask: expected [F, H*W]");
    int f = m_hat.dim(0), hw = m_hat.dim(1);
    BlendMask mask;
    mask.alpha = Tensor({f, mask_h, mask_w});
    for (int i = 0; i < f; ++i) {
        const double* src = m_hat.data() + static_cast<int64_t>(i) * hw;
        double mx = 0.0;
        for (int j = 0; j < hw; ++j) {
            require(std::isfinite(src[j]) && src[j] >= 0.0, "binarize_mask: invalid value");
            mx = std::max(mx, src[j]);
        }
        if (mx == 0.0) continue;  // all-zero frame stays empty
        double* dst = mask.alpha.data() + static_cast<int64_t>(i) * hw;
        for (int j = 0; j < hw; ++j) dst[j] = (src[j] / mx >= tau) ? 1.0 : 0.0;
    }
    return mask;
}

BlendMask union_masks(const BlendMask& a, const BlendMask& b) {
    require(a.alpha.same_shape(b.alpha), "union_masks: shape mismatch");
    BlendMask out;
    out.alpha = a.alpha;
    for (int64_t i = 0; i < out.alpha.numel(); ++i)
        out.alpha[i] = (a.alpha[i] != 0.0 || b.alpha[i] != 0.0) ? 1.0 : 0.0;
    return out;
}

Tensor blend_latents(const Tensor& z_recon, const Tensor& z_edit, const BlendMask& mask) {
    require(z_recon.same_shape(z_edit), "blend_latents: latent shape mismatch");
    require(z_recon.ndim() == 4, "blend_latents: expected [F,C,H,W]");
    int f = z_recon.dim(0), c = z_recon.dim(1), h = z_recon.dim(2), w = z_recon.dim(3);
    require(mask.alpha.dim(0) == f, "blend_latents: mask frame count mismatch");
    int mh = mask.alpha.dim(1), mw = mask.alpha.dim(2);
    require(h % mh == 0 && w % mw == 0, "blend_latents: latent resolution not a multiple of the mask's");
    int sh = h / mh, sw = w / mw;

    // selection, not arithmetic: background pixels must be the
    // reconstruction bitwise
    Tensor out = z_recon;
    for (int fi = 0; fi < f; ++fi)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                if (mask.alpha.at(fi, i / sh, j / sw) == 0.0) continue;
                for (int cc = 0; cc < c; ++cc) out.at(fi, cc, i, j) = z_edit.at(fi, cc, i, j);
            }
    return out;
}

Tensor word_heatmap(const Tensor& cross_avg, const std::vector<int>& token_indices) {
    require(cross_avg.ndim() == 3, "word_heatmap: expected [F,HW,L]");
    require(!token_indices.empty(), "word_heatmap: no token columns");
    int f = cross_avg.dim(0), hw = cross_avg.dim(1), l = cross_avg.dim(2);
    Tensor out({f, hw});
    double inv = 1.0 / static_cast<double>(token_indices.size());
    for (int fi = 0; fi < f; ++fi)
        for (int p = 0; p < hw; ++p) {
            double acc = 0.0;
            for (int ti : token_indices) {
                require(ti >= 0 && ti < l, "word_heatmap: token index out of range");
                acc += cross_avg.at(fi, p, ti);
            }
            out.at(fi, p) = acc * inv;
        }
    return out;
}

namespace {

struct MaskGeom {
    int f, hw, mh, mw;
};

MaskGeom geom_from_cross(const Tensor& cross) {
    require(cross.ndim() == 3, "compute_blend_mask: cross maps must be [F,HW,L]");
    int hw = cross.dim(1);
    int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(hw))));
    require(side * side == hw, "compute_blend_mask: non-square recording resolution");
    return {cross.dim(0), hw, side, side};
}

// normalize -> propagate over frames (frame 0 keeps its own map)
Tensor propagate_all(const Tensor& heat /*[F,HW]*/, const Tensor& st_maps /*[F,HW,2HW]*/, int mh, int mw) {
    int f = heat.dim(0), hw = heat.dim(1);
    Tensor norm = normalize_heatmap(heat.reshaped({f, mh, mw}));
    Tensor out({f, hw});
    Tensor m1({hw}), mprev({hw});
    std::copy_n(norm.data(), hw, m1.data());
    std::copy_n(norm.data(), hw, out.data());
    for (int fi = 1; fi < f; ++fi) {
        std::copy_n(norm.data() + static_cast<int64_t>(fi - 1) * hw, hw, mprev.data());
        Tensor st({hw, 2 * hw});
        std::copy_n(st_maps.data() + static_cast<int64_t>(fi) * hw * 2 * hw, static_cast<int64_t>(hw) * 2 * hw,
                    st.data());
        Tensor mh_f = propagate_mask(m1, mprev, st);
        std::copy_n(mh_f.data(), hw, out.data() + static_cast<int64_t>(fi) * hw);
    }
    return out;
}

}  // namespace

BlendMask compute_blend_mask(const Tensor& cross_src, const Tensor& cross_tgt, const Tensor& st_maps,
                             const TokenAlignment& alignment, const InjectionConfig& cfg) {
    MaskGeom gm = geom_from_cross(cross_tgt);
    require(st_maps.ndim() == 3 && st_maps.dim(0) == gm.f && st_maps.dim(1) == gm.hw &&
                st_maps.dim(2) == 2 * gm.hw,
            "compute_blend_mask: st maps must be [F,HW,2HW]");
    BlendMask mask;
    mask.alpha = Tensor({gm.f, gm.mh, gm.mw});
    bool any = false;
    if (!alignment.src_edit_indices.empty()) {
        Tensor heat = word_heatmap(cross_src, alignment.src_edit_indices);
        mask = binarize_mask(propagate_all(heat, st_maps, gm.mh, gm.mw), cfg.tau, gm.mh, gm.mw);
        any = true;
    }
    if (!alignment.tgt_edit_indices.empty()) {
        Tensor heat = word_heatmap(cross_tgt, alignment.tgt_edit_indices);
        BlendMask tgt = binarize_mask(propagate_all(heat, st_maps, gm.mh, gm.mw), cfg.tau, gm.mh, gm.mw);
        mask = any ? union_masks(mask, tgt) : tgt;
        any = true;
    }
    return mask;  // both edit sets empty -> all-zero mask (nothing to edit)
}

BlendMask compute_framewise_mask(const Tensor& cross_src, const Tensor& cross_tgt,
                                 const TokenAlignment& alignment, const InjectionConfig& cfg) {
    MaskGeom gm = geom_from_cross(cross_tgt);
    BlendMask mask;
    mask.alpha = Tensor({gm.f, gm.mh, gm.mw});
    bool any = false;
    if (!alignment.src_edit_indices.empty()) {
        Tensor heat = word_heatmap(cross_src, alignment.src_edit_indices);
        Tensor norm = normalize_heatmap(heat.reshaped({gm.f, gm.mh, gm.mw}));
        mask = binarize_mask(norm, cfg.tau, gm.mh, gm.mw);
        any = true;
    }
    if (!alignment.tgt_edit_indices.empty()) {
        Tensor heat = word_heatmap(cross_tgt, alignment.tgt_edit_indices);
        Tensor norm = normalize_heatmap(heat.reshaped({gm.f, gm.mh, gm.mw}));
        BlendMask tgt = binarize_mask(norm, cfg.tau, gm.mh, gm.mw);
        mask = any ? union_masks(mask, tgt) : tgt;
        any = true;
    }
    return mask;
}

}  // namespace videdit
