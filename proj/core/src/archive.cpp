#include "videdit/archive.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace videdit {

static constexpr char kMagic[8] = {'V', 'T', 'A', 'R', '0', '0', '0', '1'};

void TensorArchive::put(const std::string& name, Tensor t) {
    if (!tensors_.count(name)) names_.push_back(name);
    tensors_[name] = std::move(t);
}

const Tensor& TensorArchive::get(const std::string& name) const {
    auto it = tensors_.find(name);
    require(it != tensors_.end(), "TensorArchive: missing entry " + name);
    return it->second;
}

bool TensorArchive::has(const std::string& name) const { return tensors_.count(name) > 0; }

namespace {

void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

uint64_t read_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

void write_str(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& is) {
    uint64_t n = read_u64(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

}  // namespace

void TensorArchive::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "TensorArchive: cannot open " + path + " for writing");
    f.write(kMagic, 8);
    write_u64(f, meta.size());
    for (const auto& [k, v] : meta) {
        write_str(f, k);
        write_str(f, v);
    }
    write_u64(f, names_.size());
    for (const auto& name : names_) {
        const Tensor& t = tensors_.at(name);
        write_str(f, name);
        write_u64(f, static_cast<uint64_t>(t.ndim()));
        for (int i = 0; i < t.ndim(); ++i) write_u64(f, static_cast<uint64_t>(t.dim(i)));
        f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * 8));
    }
    require(f.good(), "TensorArchive: write failed for " + path);
}

TensorArchive TensorArchive::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), "TensorArchive: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    require(f.good() && std::memcmp(magic, kMagic, 8) == 0, "TensorArchive: bad magic in " + path);
    TensorArchive ar;
    uint64_t nmeta = read_u64(f);
    for (uint64_t i = 0; i < nmeta; ++i) {
        std::string k = read_str(f);
        ar.meta[k] = read_str(f);
    }
    uint64_t n = read_u64(f);
    for (uint64_t i = 0; i < n; ++i) {
        std::string name = read_str(f);
        uint64_t nd = read_u64(f);
        std::vector<int> shape(nd);
        for (auto& d : shape) d = static_cast<int>(read_u64(f));
        Tensor t(shape);
        f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * 8));
        require(f.good(), "TensorArchive: truncated file " + path);
        ar.put(name, std::move(t));
    }
    return ar;
}

void save_weights(const std::string& path, const ParamStore& weights, const ModelConfig& cfg) {
    TensorArchive ar;
    for (const auto& name : weights.names()) ar.put(name, weights.get(name));
    std::ostringstream hash;
    hash << std::hex << cfg.hash();
    ar.meta["config_hash"] = hash.str();
    ar.meta["kind"] = "weights";
    ar.meta["in_channels"] = std::to_string(cfg.in_channels);
    ar.meta["height"] = std::to_string(cfg.height);
    ar.meta["width"] = std::to_string(cfg.width);
    ar.meta["base_channels"] = std::to_string(cfg.base_channels);
    ar.meta["mid_channels"] = std::to_string(cfg.mid_channels);
    ar.meta["heads"] = std::to_string(cfg.heads);
    ar.meta["text_dim"] = std::to_string(cfg.text_dim);
    ar.meta["max_tokens"] = std::to_string(cfg.max_tokens);
    ar.meta["time_dim"] = std::to_string(cfg.time_dim);
    ar.meta["norm_groups"] = std::to_string(cfg.norm_groups);
    ar.meta["ff_mult"] = std::to_string(cfg.ff_mult);
    ar.meta["vocab_size"] = std::to_string(cfg.vocab_size);
    ar.save(path);

    nlohmann::json manifest;
    manifest["config_hash"] = hash.str();
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& name : weights.names()) {
        nlohmann::json e;
        e["name"] = name;
        e["shape"] = weights.get(name).shape();
        layers.push_back(e);
    }
    manifest["layers"] = layers;
    std::ofstream mf(path + ".manifest.json");
    require(mf.good(), "save_weights: cannot write manifest for " + path);
    mf << manifest.dump(2) << "\n";
}

ParamStore load_weights(const std::string& path) {
    TensorArchive ar = TensorArchive::load(path);
    require(ar.meta.count("kind") && ar.meta.at("kind") == "weights", "load_weights: not a weights archive");
    ParamStore w;
    for (const auto& name : ar.names()) w.add(name, ar.get(name));
    return w;
}

void save_trajectory(TensorArchive& ar, const Trajectory& traj, const NoiseSchedule& sched) {
    for (const auto& s : traj.states) ar.put("z_" + std::to_string(s.t), s.z);
    ar.meta["schedule_T"] = std::to_string(sched.T);
    ar.meta["schedule_S"] = std::to_string(sched.num_sampler_steps());
    std::ostringstream steps;
    for (size_t i = 0; i < sched.sampler_steps.size(); ++i) steps << (i ? " " : "") << sched.sampler_steps[i];
    ar.meta["sampler_steps"] = steps.str();
    std::ostringstream order;
    for (size_t i = 0; i < traj.states.size(); ++i) order << (i ? " " : "") << traj.states[i].t;
    ar.meta["trajectory_timesteps"] = order.str();
}

Trajectory load_trajectory(const TensorArchive& ar) {
    require(ar.meta.count("trajectory_timesteps"), "load_trajectory: missing timestep order");
    Trajectory traj;
    std::istringstream order(ar.meta.at("trajectory_timesteps"));
    int t = 0, idx = 0;
    while (order >> t) {
        LatentState s;
        s.t = t;
        s.step_index = idx++;
        s.z = ar.get("z_" + std::to_string(t));
        traj.states.push_back(std::move(s));
    }
    require(!traj.states.empty(), "load_trajectory: empty trajectory");
    return traj;
}

}  // namespace videdit
