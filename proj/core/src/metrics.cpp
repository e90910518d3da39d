#include "videdit/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace videdit {

double psnr(const Tensor& a, const Tensor& b, double peak) {
    require(a.same_shape(b), "psnr: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    require(peak > 0.0, "psnr: peak must be positive");
    double mse = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse < 1e-12) return 99.0;
    return 10.0 * std::log10(peak * peak / mse);
}

double mask_iou(const BlendMask& pred, const BlendMask& truth) {
    require(pred.alpha.same_shape(truth.alpha), "mask_iou: shape mismatch");
    int64_t inter = 0, uni = 0;
    for (int64_t i = 0; i < pred.alpha.numel(); ++i) {
        bool p = pred.alpha[i] != 0.0, t = truth.alpha[i] != 0.0;
        inter += (p && t) ? 1 : 0;
        uni += (p || t) ? 1 : 0;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double frame_consistency(const Tensor& video) {
    require(video.ndim() >= 2 && video.dim(0) >= 2, "frame_consistency: need at least 2 frames");
    int f = video.dim(0);
    int64_t per = video.numel() / f;
    double acc = 0.0;
    int used = 0;
    for (int i = 0; i + 1 < f; ++i) {
        const double* a = video.data() + static_cast<int64_t>(i) * per;
        const double* b = a + per;
        double na = 0.0, nb = 0.0, dot = 0.0;
        for (int64_t j = 0; j < per; ++j) {
            na += a[j] * a[j];
            nb += b[j] * b[j];
            dot += a[j] * b[j];
        }
        if (na == 0.0 || nb == 0.0) continue;  // zero-norm frame: skip pair
        acc += dot / (std::sqrt(na) * std::sqrt(nb));
        ++used;
    }
    require(used > 0, "frame_consistency: all adjacent pairs had a zero-norm frame");
    return acc / static_cast<double>(used);
}

std::optional<double> text_alignment(const Tensor& video, const std::string& prompt, EmbedderPlugin* plugin) {
    if (!plugin) return std::nullopt;
    Tensor text = plugin->embed_text(prompt);
    int f = video.dim(0);
    int c = video.dim(1), h = video.dim(2), w = video.dim(3);
    double acc = 0.0;
    for (int i = 0; i < f; ++i) {
        Tensor frame({c, h, w});
        std::copy_n(video.data() + static_cast<int64_t>(i) * c * h * w, frame.numel(), frame.data());
        Tensor emb = plugin->embed_frame(frame);
        require(emb.same_shape(text), "text_alignment: embedding dimension mismatch");
        double na = 0.0, nb = 0.0, dot = 0.0;
        for (int64_t j = 0; j < emb.numel(); ++j) {
            na += emb[j] * emb[j];
            nb += text[j] * text[j];
            dot += emb[j] * text[j];
        }
        require(na > 0.0 && nb > 0.0, "text_alignment: zero-norm embedding");
        acc += dot / (std::sqrt(na) * std::sqrt(nb));
    }
    return 100.0 * acc / static_cast<double>(f);
}

static void emit_cell(std::ostream& os, const std::optional<double>& v) {
    if (v) os << *v;
}

std::string report_csv_string(const std::vector<MetricReport>& reports) {
    std::ostringstream os;
    os.precision(10);
    os << "method,text_alignment,lpips,psnr,mask_iou,frame_consistency\n";
    for (const auto& r : reports) {
        os << r.method << ",";
        emit_cell(os, r.text_alignment);
        os << ",";
        emit_cell(os, r.lpips);
        os << "," << r.psnr_db << ",";
        emit_cell(os, r.mask_iou);
        os << ",";
        emit_cell(os, r.frame_consistency);
        os << "\n";
    }
    return os.str();
}

void emit_report_csv(const std::vector<MetricReport>& reports, const std::string& path) {
    require(!reports.empty(), "emit_report_csv: no reports");
    std::ofstream f(path);
    require(f.good(), "emit_report_csv: cannot open " + path);
    f << report_csv_string(reports);
}

}  // namespace videdit
