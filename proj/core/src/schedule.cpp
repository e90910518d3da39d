#include "videdit/schedule.hpp"

#include <cmath>
#include <stdexcept>

#include "videdit/tensor.hpp"

namespace videdit {

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "linear") return ScheduleKind::Linear;
    if (s == "scaled_linear") return ScheduleKind::ScaledLinear;
    throw std::invalid_argument("unknown schedule kind: " + s);
}

std::string to_string(ScheduleKind k) {
    return k == ScheduleKind::Linear ? "linear" : "scaled_linear";
}

double NoiseSchedule::alpha_bar_at(int t) const {
    if (t == 0) return 1.0;
    require(t >= 1 && t <= T, "alpha_bar_at: timestep out of range");
    return alpha_bars[static_cast<size_t>(t - 1)];
}

int NoiseSchedule::prev_timestep(int step_index) const {
    require(step_index >= 0 && step_index < num_sampler_steps(), "prev_timestep: bad step index");
    return step_index + 1 < num_sampler_steps() ? sampler_steps[static_cast<size_t>(step_index + 1)] : 0;
}

NoiseSchedule make_schedule(int T, double beta_start, double beta_end, ScheduleKind kind, int sampler_S) {
    require(T >= 1, "make_schedule: T must be >= 1");
    require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
            "make_schedule: need 0 < beta_start <= beta_end < 1");
    require(sampler_S >= 1 && sampler_S <= T, "make_schedule: need 1 <= sampler_S <= T");

    NoiseSchedule s;
    s.T = T;
    s.betas.resize(static_cast<size_t>(T));
    for (int i = 0; i < T; ++i) {
        double frac = T > 1 ? static_cast<double>(i) / static_cast<double>(T - 1) : 0.0;
        if (kind == ScheduleKind::Linear) {
            s.betas[static_cast<size_t>(i)] = beta_start + (beta_end - beta_start) * frac;
        } else {
            double r = std::sqrt(beta_start) + (std::sqrt(beta_end) - std::sqrt(beta_start)) * frac;
            s.betas[static_cast<size_t>(i)] = r * r;
        }
    }
    s.alphas.resize(static_cast<size_t>(T));
    s.alpha_bars.resize(static_cast<size_t>(T));
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        s.alphas[static_cast<size_t>(i)] = 1.0 - s.betas[static_cast<size_t>(i)];
        prod *= s.alphas[static_cast<size_t>(i)];
        s.alpha_bars[static_cast<size_t>(i)] = prod;
    }
    // S evenly spaced timesteps, largest (T) first, last one nearest the data end
    s.sampler_steps.resize(static_cast<size_t>(sampler_S));
    for (int k = 0; k < sampler_S; ++k) {
        int t = T - static_cast<int>((static_cast<int64_t>(k) * T) / sampler_S);
        s.sampler_steps[static_cast<size_t>(k)] = t;
    }
    for (size_t k = 0; k + 1 < s.sampler_steps.size(); ++k)
        require(s.sampler_steps[k] > s.sampler_steps[k + 1], "make_schedule: sampler steps not strictly decreasing");
    require(s.sampler_steps.back() >= 1, "make_schedule: sampler step below 1");
    return s;
}

}  // namespace videdit
