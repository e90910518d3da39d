#pragma once

#include <optional>
#include <string>
#include <vector>

#include "videdit/blending.hpp"
#include "videdit/tensor.hpp"

namespace videdit {

// Supplies text and frame embeddings for the text-alignment metric. The
// desk-scale default is backed by the toy model's own encoders; a real
// CLIP-style embedder can be plugged in from the outside.
struct EmbedderPlugin {
    virtual ~EmbedderPlugin() = default;
    virtual Tensor embed_text(const std::string& prompt) = 0;
    virtual Tensor embed_frame(const Tensor& frame) = 0;  // [C,H,W] -> [d]
};

struct MetricReport {
    std::string method;
    double psnr_db = 0.0;
    std::optional<double> mask_iou;
    std::optional<double> frame_consistency;
    std::optional<double> text_alignment;
    std::optional<double> lpips;  // interface only; no desk-scale backend
    uint64_t config_hash = 0;
    uint64_t seed = 0;
};

// 10*log10(peak^2/MSE) over the whole video; capped at 99 dB when MSE is
// numerically zero.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// |intersection| / |union|; 1.0 when both masks are empty.
double mask_iou(const BlendMask& pred, const BlendMask& truth);

// Mean cosine similarity between vectorized adjacent frames. Zero-norm
// frames skip their pairs; no usable pair is an error.
double frame_consistency(const Tensor& video);

// Mean over frames of cosine(text, frame) * 100. Returns nullopt without a
// plugin (metric omitted, not an error).
std::optional<double> text_alignment(const Tensor& video, const std::string& prompt, EmbedderPlugin* plugin);

// CSV with the fixed column order
// method,text_alignment,lpips,psnr,mask_iou,frame_consistency.
void emit_report_csv(const std::vector<MetricReport>& reports, const std::string& path);
std::string report_csv_string(const std::vector<MetricReport>& reports);

}  // namespace videdit
