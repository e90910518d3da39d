#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "videdit/records.hpp"
#include "videdit/text.hpp"

namespace videdit {

struct InjectionConfig {
    double dur_cross = 0.2;
    double dur_st = 0.5;
    double dur_temporal = 0.8;
    double tau = 0.25;         // TC blending threshold
    double blend_start = 0.0;  // fraction of steps after which blending starts
};

// Pairing of shared tokens between source and target prompt plus the token
// positions that differ on each side. Padding tokens are never aligned and
// never counted as edits.
struct TokenAlignment {
    std::vector<std::pair<int, int>> pairs;  // (source index, target index), increasing
    std::vector<int> src_edit_indices;
    std::vector<int> tgt_edit_indices;
};

// Longest-common-subsequence alignment over token ids.
TokenAlignment align_tokens(const std::vector<int>& src_ids, const std::vector<int>& tgt_ids);

// True when `step_index` (0 == noisiest) falls inside the injection window
// round(duration * total_steps).
bool should_inject(AttnType type, int step_index, int total_steps, const InjectionConfig& cfg);

// Cross-attention refinement: aligned columns take source values, edited
// target tokens keep their own. Maps are [..., L] with L as last axis.
Tensor inject_cross(const Tensor& src_map, const Tensor& tgt_map, const TokenAlignment& alignment);

// Wholesale replacement used for ST and temporal maps.
Tensor inject_full(const Tensor& src_map, const Tensor& tgt_map);

// Attention maps of one branch, step by step. Per-head maps (needed for
// replay) are kept only where requested; head- and site-averaged cross/ST
// maps (what TC blending consumes) are accumulated for every stored step.
class RecordedMaps {
public:
    void store(int step, const SiteMaps& site, bool keep_per_head);
    bool has(int step, const std::string& layer, AttnType type) const;
    const SiteMaps& get(int step, const std::string& layer, AttnType type) const;

    Tensor cross_avg(int step) const;  // [F, HW, L]
    Tensor st_avg(int step) const;     // [F, HW, 2HW]

    size_t per_head_sites() const { return maps_.size(); }

private:
    static std::string key(int step, const std::string& layer, AttnType type);
    std::map<std::string, SiteMaps> maps_;
    std::map<int, std::pair<Tensor, int>> cross_acc_, st_acc_;
};

// Source-branch controller: records what its forward passes produce. When
// constructed with an injection config it retains per-head maps only inside
// each type's injection window (all the replay that can ever be requested).
class RecordingController {
public:
    RecordingController() = default;
    RecordingController(const InjectionConfig& cfg, int total_steps);

    void begin_step(int step_index) { step_ = step_index; }
    AttnHookFn hook();
    const RecordedMaps& records() const { return records_; }
    int hook_calls() const { return hook_calls_; }

private:
    bool keep_per_head(AttnType type, int step) const;
    bool windowed_ = false;
    InjectionConfig cfg_;
    int total_steps_ = 0;
    int step_ = -1;
    int hook_calls_ = 0;
    RecordedMaps records_;
};

// Edit-branch controller: swaps maps in from the source records while the
// per-type injection window is open, and keeps the effective
// (post-injection) averaged maps of the current run for TC blending.
class InjectingController {
public:
    InjectingController(const RecordedMaps* source, InjectionConfig cfg, TokenAlignment alignment,
                        int total_steps);
    void begin_step(int step_index) { step_ = step_index; }
    AttnHookFn hook();
    const RecordedMaps& effective() const { return effective_; }
    const TokenAlignment& alignment() const { return alignment_; }
    int hook_calls() const { return hook_calls_; }

private:
    const RecordedMaps* source_;
    InjectionConfig cfg_;
    TokenAlignment alignment_;
    int total_steps_;
    int step_ = -1;
    int hook_calls_ = 0;
    RecordedMaps effective_;
};

// Builds the edit-branch controller from complete source records.
std::unique_ptr<InjectingController> controller_run(const RecordedMaps& source_records,
                                                    const InjectionConfig& cfg,
                                                    const TokenAlignment& alignment, int total_steps);

}  // namespace videdit
