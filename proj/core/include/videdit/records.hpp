#pragma once

#include <functional>
#include <string>
#include <vector>

#include "videdit/tensor.hpp"

namespace videdit {

enum class AttnType { Cross, SpatioTemporal, Temporal };

std::string to_string(AttnType t);

// Raw per-head maps of one attention site during one forward pass, exposed
// to hooks before the map*V product so a controller can swap them out.
//   cross:    outer = frames,    maps[f*heads+h] is [HW, L]
//   st:       outer = frames,    maps[f*heads+h] is [HW, 2*HW]
//   temporal: outer = locations, maps[p*heads+h] is [F, F]
struct SiteMaps {
    std::string layer_id;
    AttnType type = AttnType::Cross;
    int outer = 0;
    int heads = 0;
    std::vector<Tensor> maps;

    Tensor& map(int o, int h) { return maps[static_cast<size_t>(o) * heads + h]; }
    const Tensor& map(int o, int h) const { return maps[static_cast<size_t>(o) * heads + h]; }

    // Head-averaged stack: cross [F,HW,L], st [F,HW,2HW], temporal [HW,F,F].
    Tensor head_averaged() const;
};

// One recorded attention map (head-averaged).
struct AttentionRecord {
    std::string layer_id;
    AttnType attn_type = AttnType::Cross;
    int step_index = -1;
    Tensor map;
};

// Invoked once per attention site per forward pass; may replace map values
// in place (shapes must be preserved). Only legal on no-grad forwards.
using AttnHookFn = std::function<void(SiteMaps&)>;

}  // namespace videdit
