#pragma once

#include <string>
#include <vector>

namespace videdit {

enum class ScheduleKind { Linear, ScaledLinear };

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

// Diffusion noise schedule. Timesteps are 1-based (t in 1..T); t = 0 is the
// data boundary where alpha_bar == 1 by convention, so the last sampler step
// lands on the predicted-x0 form.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;       // betas[t-1], t in 1..T
    std::vector<double> alphas;      // 1 - beta
    std::vector<double> alpha_bars;  // cumulative product, alpha_bars[t-1]
    std::vector<int> sampler_steps;  // strictly decreasing subsequence of 1..T

    // alpha_bar with the t=0 boundary convention
    double alpha_bar_at(int t) const;
    int num_sampler_steps() const { return static_cast<int>(sampler_steps.size()); }
    // timestep below sampler position i (0 == noisiest); returns 0 past the end
    int prev_timestep(int step_index) const;
};

NoiseSchedule make_schedule(int T, double beta_start, double beta_end, ScheduleKind kind, int sampler_S);

}  // namespace videdit
