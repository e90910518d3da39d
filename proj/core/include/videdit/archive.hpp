#pragma once

#include <map>
#include <string>
#include <vector>

#include "videdit/diffusion.hpp"
#include "videdit/model.hpp"
#include "videdit/tensor.hpp"

namespace videdit {

// Binary named-tensor container with a string metadata block. Round trips
// are bitwise. A sidecar JSON manifest (names, shapes, config hash) is
// written next to weight archives for inspection.
class TensorArchive {
public:
    void put(const std::string& name, Tensor t);
    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const;
    const std::vector<std::string>& names() const { return names_; }

    std::map<std::string, std::string> meta;

    void save(const std::string& path) const;
    static TensorArchive load(const std::string& path);

private:
    std::vector<std::string> names_;
    std::map<std::string, Tensor> tensors_;
};

// weights <-> archive, with a JSON manifest at <path>.manifest.json
void save_weights(const std::string& path, const ParamStore& weights, const ModelConfig& cfg);
ParamStore load_weights(const std::string& path);

// trajectory entries are named z_<timestep>; schedule metadata rides along
void save_trajectory(TensorArchive& ar, const Trajectory& traj, const NoiseSchedule& sched);
Trajectory load_trajectory(const TensorArchive& ar);

}  // namespace videdit
