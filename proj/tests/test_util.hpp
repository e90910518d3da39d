#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "videdit/autograd.hpp"
#include "videdit/model.hpp"
#include "videdit/rng.hpp"
#include "videdit/tensor.hpp"

namespace testutil {

using videdit::Tensor;

// Central-difference gradient check against a scalar loss built by `build`.
// `build` receives the graph and one leaf per input and must return the
// loss Var. Returns the worst relative error across all checked entries.
inline double grad_check(std::vector<Tensor> inputs,
                         const std::function<videdit::ag::Var(videdit::ag::Graph&, std::vector<videdit::ag::Var>&)>& build,
                         double h = 1e-5, int max_entries_per_input = 10000) {
    namespace ag = videdit::ag;
    std::vector<Tensor> analytic(inputs.size());
    {
        ag::Graph g;
        std::vector<ag::Var> leaves;
        for (auto& t : inputs) leaves.push_back(g.leaf(t, true));
        ag::Var loss = build(g, leaves);
        g.backward(loss);
        for (size_t i = 0; i < leaves.size(); ++i)
            analytic[i] = leaves[i]->has_grad() ? leaves[i]->grad : Tensor::zeros(inputs[i].shape());
    }
    auto eval = [&](const std::vector<Tensor>& vals) {
        ag::Graph g(true);
        std::vector<ag::Var> leaves;
        for (const auto& t : vals) leaves.push_back(g.leaf(t, true));
        return build(g, leaves)->val[0];
    };
    double worst = 0.0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        int64_t n = inputs[i].numel();
        int64_t stride = n > max_entries_per_input ? n / max_entries_per_input : 1;
        for (int64_t j = 0; j < n; j += stride) {
            std::vector<Tensor> vals = inputs;
            double orig = vals[i][j];
            vals[i][j] = orig + h;
            double up = eval(vals);
            vals[i][j] = orig - h;
            double dn = eval(vals);
            double num = (up - dn) / (2.0 * h);
            double ana = analytic[i][j];
            double rel = std::fabs(num - ana) / std::max({1e-6, std::fabs(num), std::fabs(ana)});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

// Small model config for fast structural and gradient tests.
inline videdit::ModelConfig tiny_config() {
    videdit::ModelConfig c;
    c.in_channels = 2;
    c.height = 8;
    c.width = 8;
    c.base_channels = 8;
    c.mid_channels = 8;
    c.heads = 2;
    c.text_dim = 8;
    c.max_tokens = 8;
    c.time_dim = 16;
    c.norm_groups = 4;
    c.ff_mult = 2;
    return c;
}

// The default toy scale from the synthetic pipeline.
inline videdit::ModelConfig toy_config() { return videdit::ModelConfig{}; }

}  // namespace testutil
