#include "videdit/control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace videdit {

TokenAlignment align_tokens(const std::vector<int>& src_ids, const std::vector<int>& tgt_ids) {
    int n = static_cast<int>(src_ids.size()), m = static_cast<int>(tgt_ids.size());
    auto matchable = [](int id) { return id != Vocabulary::kPad; };

    // LCS table over ids; PAD positions never match and never count as edits.
    std::vector<std::vector<int>> dp(static_cast<size_t>(n + 1), std::vector<int>(static_cast<size_t>(m + 1), 0));
    for (int i = n - 1; i >= 0; --i)
        for (int j = m - 1; j >= 0; --j) {
            if (matchable(src_ids[static_cast<size_t>(i)]) && src_ids[static_cast<size_t>(i)] == tgt_ids[static_cast<size_t>(j)])
                dp[i][j] = dp[i + 1][j + 1] + 1;
            else
                dp[i][j] = std::max(dp[i + 1][j], dp[i][j + 1]);
        }

    TokenAlignment out;
    std::vector<bool> src_used(static_cast<size_t>(n), false), tgt_used(static_cast<size_t>(m), false);
    int i = 0, j = 0;
    while (i < n && j < m) {
        if (matchable(src_ids[static_cast<size_t>(i)]) && src_ids[static_cast<size_t>(i)] == tgt_ids[static_cast<size_t>(j)]) {
            out.pairs.emplace_back(i, j);
            src_used[static_cast<size_t>(i)] = tgt_used[static_cast<size_t>(j)] = true;
            ++i;
            ++j;
        } else if (dp[i + 1][j] >= dp[i][j + 1]) {
            ++i;
        } else {
            ++j;
        }
    }
    for (int a = 0; a < n; ++a)
        if (!src_used[static_cast<size_t>(a)] && matchable(src_ids[static_cast<size_t>(a)]))
            out.src_edit_indices.push_back(a);
    for (int b = 0; b < m; ++b)
        if (!tgt_used[static_cast<size_t>(b)] && matchable(tgt_ids[static_cast<size_t>(b)]))
            out.tgt_edit_indices.push_back(b);
    return out;
}

bool should_inject(AttnType type, int step_index, int total_steps, const InjectionConfig& cfg) {
    require(step_index >= 0 && step_index < total_steps, "should_inject: step index out of range");
    double dur = 0.0;
    switch (type) {
        case AttnType::Cross: dur = cfg.dur_cross; break;
        case AttnType::SpatioTemporal: dur = cfg.dur_st; break;
        case AttnType::Temporal: dur = cfg.dur_temporal; break;
        default: throw std::invalid_argument("should_inject: unknown attention type");
    }
    int window = static_cast<int>(std::lround(dur * total_steps));
    return step_index < window;
}

Tensor inject_cross(const Tensor& src_map, const Tensor& tgt_map, const TokenAlignment& alignment) {
    require(src_map.same_shape(tgt_map), "inject_cross: shape mismatch");
    int l = src_map.dim(src_map.ndim() - 1);
    int64_t rows = src_map.numel() / l;
    Tensor out = tgt_map;
    for (const auto& [si, ti] : alignment.pairs) {
        require(si >= 0 && si < l && ti >= 0 && ti < l, "inject_cross: alignment index out of range");
        for (int64_t r = 0; r < rows; ++r) out[r * l + ti] = src_map[r * l + si];
    }
    return out;
}

Tensor inject_full(const Tensor& src_map, const Tensor& tgt_map) {
    require(src_map.same_shape(tgt_map), "inject_full: shape mismatch");
    return src_map;
}

// ---- RecordedMaps ----

std::string RecordedMaps::key(int step, const std::string& layer, AttnType type) {
    return std::to_string(step) + "/" + layer + "/" + to_string(type);
}

void RecordedMaps::store(int step, const SiteMaps& site, bool keep_per_head) {
    if (site.type == AttnType::Cross || site.type == AttnType::SpatioTemporal) {
        auto& acc = site.type == AttnType::Cross ? cross_acc_ : st_acc_;
        Tensor avg = site.head_averaged();
        auto it = acc.find(step);
        if (it == acc.end()) {
            acc.emplace(step, std::make_pair(std::move(avg), 1));
        } else {
            it->second.first += avg;
            it->second.second += 1;
        }
    }
    if (keep_per_head) maps_[key(step, site.layer_id, site.type)] = site;
}

bool RecordedMaps::has(int step, const std::string& layer, AttnType type) const {
    return maps_.count(key(step, layer, type)) > 0;
}

const SiteMaps& RecordedMaps::get(int step, const std::string& layer, AttnType type) const {
    auto it = maps_.find(key(step, layer, type));
    if (it == maps_.end())
        throw std::runtime_error("RecordedMaps: missing source record for step " + std::to_string(step) +
                                 " layer " + layer + " type " + to_string(type));
    return it->second;
}

static Tensor averaged(const std::map<int, std::pair<Tensor, int>>& acc, int step, const char* what) {
    auto it = acc.find(step);
    if (it == acc.end())
        throw std::runtime_error(std::string("RecordedMaps: no ") + what + " maps recorded at step " +
                                 std::to_string(step));
    Tensor out = it->second.first;
    out *= 1.0 / static_cast<double>(it->second.second);
    return out;
}

Tensor RecordedMaps::cross_avg(int step) const { return averaged(cross_acc_, step, "cross"); }
Tensor RecordedMaps::st_avg(int step) const { return averaged(st_acc_, step, "st"); }

// ---- controllers ----

RecordingController::RecordingController(const InjectionConfig& cfg, int total_steps)
    : windowed_(true), cfg_(cfg), total_steps_(total_steps) {}

bool RecordingController::keep_per_head(AttnType type, int step) const {
    if (!windowed_) return true;
    return should_inject(type, step, total_steps_, cfg_);
}

AttnHookFn RecordingController::hook() {
    return [this](SiteMaps& site) {
        require(step_ >= 0, "RecordingController: begin_step not called");
        ++hook_calls_;
        records_.store(step_, site, keep_per_head(site.type, step_));
    };
}

InjectingController::InjectingController(const RecordedMaps* source, InjectionConfig cfg,
                                         TokenAlignment alignment, int total_steps)
    : source_(source), cfg_(cfg), alignment_(std::move(alignment)), total_steps_(total_steps) {
    require(source_ != nullptr, "InjectingController: null source records");
}

AttnHookFn InjectingController::hook() {
    return [this](SiteMaps& site) {
        require(step_ >= 0, "InjectingController: begin_step not called");
        ++hook_calls_;
        if (should_inject(site.type, step_, total_steps_, cfg_)) {
            const SiteMaps& src = source_->get(step_, site.layer_id, site.type);
            require(src.outer == site.outer && src.heads == site.heads,
                    "InjectingController: source/target site shape mismatch");
            for (int o = 0; o < site.outer; ++o)
                for (int h = 0; h < site.heads; ++h) {
                    if (site.type == AttnType::Cross)
                        site.map(o, h) = inject_cross(src.map(o, h), site.map(o, h), alignment_);
                    else
                        site.map(o, h) = inject_full(src.map(o, h), site.map(o, h));
                }
        }
        effective_.store(step_, site, false);
    };
}

std::unique_ptr<InjectingController> controller_run(const RecordedMaps& source_records,
                                                    const InjectionConfig& cfg,
                                                    const TokenAlignment& alignment, int total_steps) {
    return std::make_unique<InjectingController>(&source_records, cfg, alignment, total_steps);
}

}  // namespace videdit
