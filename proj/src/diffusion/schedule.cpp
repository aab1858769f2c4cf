#include "vton/diffusion/schedule.hpp"

#include <cmath>
#include <string>

namespace vton::diffusion {

NoiseSchedule::NoiseSchedule(int timesteps, double beta_start, double beta_end)
    : timesteps_(timesteps), betas_(static_cast<std::size_t>(timesteps) + 1, 0.0),
      alpha_bars_(static_cast<std::size_t>(timesteps) + 1, 1.0) {
    if (timesteps < 1) throw RangeViolation("schedule needs at least one timestep");
    if (!(beta_start > 0.0 && beta_start < 1.0)) throw RangeViolation("beta_start must lie in (0, 1)");
    if (!(beta_end > 0.0 && beta_end < 1.0)) throw RangeViolation("beta_end must lie in (0, 1)");
    for (int s = 1; s <= timesteps; ++s) {
        const double frac = timesteps == 1 ? 0.0 : static_cast<double>(s - 1) / (timesteps - 1);
        betas_[s] = beta_start + (beta_end - beta_start) * frac;
        alpha_bars_[s] = alpha_bars_[s - 1] * (1.0 - betas_[s]);
    }
}

double NoiseSchedule::beta(int t) const {
    if (t < 1 || t > timesteps_) throw TimestepOutOfRange("beta index " + std::to_string(t) + " outside 1..T");
    return betas_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > timesteps_) throw TimestepOutOfRange("timestep " + std::to_string(t) + " outside 0..T");
    return alpha_bars_[static_cast<std::size_t>(t)];
}

NoiseSchedule make_schedule(int timesteps, double beta_start, double beta_end) {
    return NoiseSchedule(timesteps, beta_start, beta_end);
}

Tensor add_noise(const Tensor& z0, int t, const Tensor& noise, const NoiseSchedule& schedule) {
    require_same_shape(z0, noise, "add_noise");
    const double ab = schedule.alpha_bar(t);
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    Tensor out(z0.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * z0[i] + b * noise[i];
    return out;
}

Tensor predict_z0(const Tensor& z_t, const Tensor& eps_hat, int t, const NoiseSchedule& schedule) {
    require_same_shape(z_t, eps_hat, "predict_z0");
    const double ab = schedule.alpha_bar(t);
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    Tensor out(z_t.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (z_t[i] - b * eps_hat[i]) / a;
    return out;
}

}  // namespace vton::diffusion
