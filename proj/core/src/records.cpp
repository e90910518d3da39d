#include "videdit/records.hpp"

namespace videdit {

std::string to_string(AttnType t) {
    switch (t) {
        case AttnType::Cross: return "cross";
        case AttnType::SpatioTemporal: return "st";
        case AttnType::Temporal: return "temporal";
    }
    return "?";
}

Tensor SiteMaps::head_averaged() const {
    require(outer > 0 && heads > 0 && !maps.empty(), "SiteMaps::head_averaged: empty site");
    int rows = maps[0].dim(0), cols = maps[0].dim(1);
    Tensor out({outer, rows, cols});
    double inv = 1.0 / static_cast<double>(heads);
    for (int o = 0; o < outer; ++o) {
        double* dst = out.data() + static_cast<int64_t>(o) * rows * cols;
        for (int h = 0; h < heads; ++h) {
            const Tensor& m = map(o, h);
            for (int64_t i = 0; i < m.numel(); ++i) dst[i] += m[i] * inv;
        }
    }
    return out;
}

}  // namespace videdit
