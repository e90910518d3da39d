#include "videdit/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace videdit {

const LatentState& Trajectory::at_timestep(int t) const {
    for (const auto& s : states)
        if (s.t == t) return s;
    throw std::invalid_argument("Trajectory: no state at timestep " + std::to_string(t));
}

Tensor add_noise(const Tensor& x0, const Tensor& eps, int t, const NoiseSchedule& sched) {
    require(x0.same_shape(eps), "add_noise: x0/eps shape mismatch " + x0.shape_str() + " vs " + eps.shape_str());
    double ab = sched.alpha_bar_at(t);
    double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    Tensor out = x0;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a * out[i] + b * eps[i];
    return out;
}

Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double w) {
    require(eps_uncond.same_shape(eps_cond), "cfg_combine: shape mismatch");
    Tensor out = eps_uncond;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += w * (eps_cond[i] - out[i]);
    return out;
}

DdimCoeffs ddim_step_coeffs(const NoiseSchedule& sched, int t, int t_prev) {
    require(t > t_prev, "ddim_step: need t > t_prev");
    double ab_t = sched.alpha_bar_at(t);
    double ab_p = sched.alpha_bar_at(t_prev);
    require(ab_t > 0.0, "ddim_step: alpha_bar(t) == 0");
    double r = std::sqrt(ab_p / ab_t);
    return DdimCoeffs{r, std::sqrt(1.0 - ab_p) - r * std::sqrt(1.0 - ab_t)};
}

Tensor ddim_step(const Tensor& z_t, const Tensor& eps_hat, int t, int t_prev, const NoiseSchedule& sched) {
    require(z_t.same_shape(eps_hat), "ddim_step: shape mismatch");
    require(t > t_prev, "ddim_step: need t > t_prev");
    double ab_t = sched.alpha_bar_at(t);
    double ab_p = sched.alpha_bar_at(t_prev);
    require(ab_t > 0.0, "ddim_step: alpha_bar(t) == 0");
    double sa_t = std::sqrt(ab_t), sb_t = std::sqrt(1.0 - ab_t);
    double sa_p = std::sqrt(ab_p), sb_p = std::sqrt(1.0 - ab_p);
    Tensor out = z_t;
    for (int64_t i = 0; i < out.numel(); ++i) {
        double x0 = (z_t[i] - sb_t * eps_hat[i]) / sa_t;
        out[i] = sa_p * x0 + sb_p * eps_hat[i];
    }
    return out;
}

Tensor ddim_invert_step(const Tensor& z_tprev, const Tensor& eps_hat, int t_prev, int t, const NoiseSchedule& sched) {
    require(z_tprev.same_shape(eps_hat), "ddim_invert_step: shape mismatch");
    require(t > t_prev, "ddim_invert_step: need t > t_prev");
    double ab_t = sched.alpha_bar_at(t);
    double ab_p = sched.alpha_bar_at(t_prev);
    require(ab_p > 0.0, "ddim_invert_step: alpha_bar(t_prev) == 0");
    double sa_t = std::sqrt(ab_t), sb_t = std::sqrt(1.0 - ab_t);
    double sa_p = std::sqrt(ab_p), sb_p = std::sqrt(1.0 - ab_p);
    Tensor out = z_tprev;
    for (int64_t i = 0; i < out.numel(); ++i) {
        double x0 = (z_tprev[i] - sb_p * eps_hat[i]) / sa_p;
        out[i] = sa_t * x0 + sb_t * eps_hat[i];
    }
    return out;
}

Trajectory ddim_sample(const DenoiserFn& model, const Tensor& z_T, const Tensor& cond_emb,
                       const std::vector<Tensor>& null_embs, double w, const NoiseSchedule& sched,
                       const SamplerCallbacks* callbacks) {
    int S = sched.num_sampler_steps();
    require(!null_embs.empty() || w == 1.0, "ddim_sample: null embeddings required for w != 1");
    require(null_embs.size() <= 1 || static_cast<int>(null_embs.size()) == S,
            "ddim_sample: null_embs must hold 1 or S embeddings");

    Trajectory traj;
    traj.states.reserve(static_cast<size_t>(S) + 1);
    Tensor z = z_T;
    traj.states.push_back({z, 0, sched.sampler_steps[0]});

    for (int i = 0; i < S; ++i) {
        int t = sched.sampler_steps[static_cast<size_t>(i)];
        int t_prev = sched.prev_timestep(i);
        if (callbacks && callbacks->begin_step) callbacks->begin_step(i, t);

        Tensor eps;
        if (w == 1.0) {
            eps = model(z, t, cond_emb, callbacks ? callbacks->attn_hook : AttnHookFn());
        } else {
            const Tensor& null_emb = null_embs.size() == 1 ? null_embs[0] : null_embs[static_cast<size_t>(i)];
            Tensor eps_u = model(z, t, null_emb, AttnHookFn());
            Tensor eps_c = model(z, t, cond_emb, callbacks ? callbacks->attn_hook : AttnHookFn());
            require(eps_u.same_shape(z) && eps_c.same_shape(z),
                    "ddim_sample: model output shape mismatch at step " + std::to_string(i));
            eps = cfg_combine(eps_u, eps_c, w);
        }
        require(eps.same_shape(z), "ddim_sample: model output shape mismatch at step " + std::to_string(i));

        z = ddim_step(z, eps, t, t_prev, sched);
        if (callbacks && callbacks->blend) z = callbacks->blend(i, z);
        if (!z.all_finite())
            throw std::runtime_error("ddim_sample: non-finite latent at step " + std::to_string(i));
        traj.states.push_back({z, i + 1, t_prev});
    }
    return traj;
}

Trajectory ddim_invert(const DenoiserFn& model, const Tensor& x0, const Tensor& cond_emb,
                       const NoiseSchedule& sched, int refine_iters) {
    require(refine_iters >= 0, "ddim_invert: refine_iters must be >= 0");
    int S = sched.num_sampler_steps();
    Trajectory traj;
    traj.states.reserve(static_cast<size_t>(S) + 1);
    Tensor z = x0;
    traj.states.push_back({z, 0, 0});

    // walk data -> noise; the model is queried at the target timestep
    for (int k = S - 1; k >= 0; --k) {
        int t = sched.sampler_steps[static_cast<size_t>(k)];
        int t_cur = k + 1 <= S - 1 ? sched.sampler_steps[static_cast<size_t>(k + 1)] : 0;
        Tensor eps = model(z, t, cond_emb, AttnHookFn());
        require(eps.same_shape(z), "ddim_invert: model output shape mismatch at timestep " + std::to_string(t));
        Tensor z_next = ddim_invert_step(z, eps, t_cur, t, sched);
        for (int r = 0; r < refine_iters; ++r) {
            eps = model(z_next, t, cond_emb, AttnHookFn());
            z_next = ddim_invert_step(z, eps, t_cur, t, sched);
        }
        z = z_next;
        if (!z.all_finite())
            throw std::runtime_error("ddim_invert: non-finite latent at timestep " + std::to_string(t));
        traj.states.push_back({z, static_cast<int>(traj.states.size()), t});
    }
    return traj;
}

}  // namespace videdit
