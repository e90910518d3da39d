#pragma once

#include <functional>
#include <vector>

#include "videdit/records.hpp"
#include "videdit/schedule.hpp"
#include "videdit/tensor.hpp"

namespace videdit {

struct LatentState {
    Tensor z;           // [F,C,H,W]
    int step_index = 0; // position within the trajectory
    int t = 0;          // schedule timestep (0 == data boundary)
};

struct Trajectory {
    std::vector<LatentState> states;

    const LatentState& front() const { return states.front(); }
    const LatentState& back() const { return states.back(); }
    const LatentState& at_timestep(int t) const;
    size_t size() const { return states.size(); }
};

// Denoiser callback: predicted noise for (z, t) under a text embedding
// matrix [L, d_text]. The hook (may be empty) reaches the attention sites of
// this forward pass.
using DenoiserFn = std::function<Tensor(const Tensor& z, int t, const Tensor& text_emb, const AttnHookFn& hook)>;

// Sampler-side hooks. begin_step fires before the model queries of a step;
// attn_hook is applied to the conditional pass; blend runs after the DDIM
// update and returns the (possibly mask-blended) latent.
struct SamplerCallbacks {
    std::function<void(int step_index, int t)> begin_step;
    AttnHookFn attn_hook;
    std::function<Tensor(int step_index, const Tensor& z)> blend;
};

// x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps
Tensor add_noise(const Tensor& x0, const Tensor& eps, int t, const NoiseSchedule& sched);

// eps_uncond + w * (eps_cond - eps_uncond)
Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double w);

// The deterministic DDIM update is affine in (z, eps):
//   z_prev = k_z * z + k_eps * eps.
// Shared by ddim_step and the null-text objective so both use one formula.
struct DdimCoeffs {
    double k_z = 0.0;
    double k_eps = 0.0;
};
DdimCoeffs ddim_step_coeffs(const NoiseSchedule& sched, int t, int t_prev);

Tensor ddim_step(const Tensor& z_t, const Tensor& eps_hat, int t, int t_prev, const NoiseSchedule& sched);
Tensor ddim_invert_step(const Tensor& z_tprev, const Tensor& eps_hat, int t_prev, int t, const NoiseSchedule& sched);

// Runs the sampler from z_T down to the data boundary. null_embs holds
// either a single embedding or one per sampler step. When w == 1 the CFG
// combination collapses to the conditional prediction and the null query is
// skipped. Returns all S+1 states, data endpoint last.
Trajectory ddim_sample(const DenoiserFn& model, const Tensor& z_T, const Tensor& cond_emb,
                       const std::vector<Tensor>& null_embs, double w, const NoiseSchedule& sched,
                       const SamplerCallbacks* callbacks = nullptr);

// Maps data to noise along the deterministic trajectory (guidance 1).
// Returns S+1 states with strictly increasing timesteps, x0 first.
//
// Each step solves z_next = invert_step(z, eps(z_next, t)) by fixed-point
// iteration (`refine_iters` extra model queries). With refinement the
// subsequent w == 1 resampling re-evaluates the model at the same latents
// and the round trip is exact up to the fixed-point residual; with
// refine_iters == 0 this is the plain one-query inversion.
Trajectory ddim_invert(const DenoiserFn& model, const Tensor& x0, const Tensor& cond_emb,
                       const NoiseSchedule& sched, int refine_iters = 2);

}  // namespace videdit
