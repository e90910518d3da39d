#pragma once

#include <cstdint>

#include "videdit/tensor.hpp"

namespace videdit {

// Deterministic RNG. Gaussians come from an explicit Box-Muller transform
// rather than std::normal_distribution, whose output is
// implementation-defined; identical seeds must give bitwise-identical
// streams on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed);

    // [0,1) with 53 random bits
    double uniform();
    double uniform(double lo, double hi);
    // inclusive range
    int uniform_int(int lo, int hi);
    double normal();

    Tensor normal_tensor(std::vector<int> shape);
    Tensor uniform_tensor(std::vector<int> shape, double lo, double hi);

    // Derive an independent sub-seed for a named stream.
    static uint64_t derive(uint64_t seed, uint64_t stream);

private:
    uint64_t next_u64();
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace videdit
