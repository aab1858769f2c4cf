#pragma once

#include <vector>

#include "vton/tensor.hpp"

namespace vton::diffusion {

/// Linear beta schedule with cumulative products. Index t runs 0..T; alpha_bar(0) = 1.
class NoiseSchedule {
public:
    NoiseSchedule(int timesteps, double beta_start, double beta_end);

    int timesteps() const { return timesteps_; }
    double beta(int t) const;
    double alpha_bar(int t) const;
    const std::vector<double>& alpha_bars() const { return alpha_bars_; }

private:
    int timesteps_;
    std::vector<double> betas_;       // betas_[0] unused (0)
    std::vector<double> alpha_bars_;  // alpha_bars_[0] = 1
};

/// Throws RangeViolation unless 0 < beta_start, beta_end < 1 and T >= 1.
NoiseSchedule make_schedule(int timesteps = 1000, double beta_start = 1e-4, double beta_end = 0.02);

/// z_t = sqrt(alpha_bar_t) z_0 + sqrt(1 - alpha_bar_t) eps, for 0 <= t <= T.
Tensor add_noise(const Tensor& z0, int t, const Tensor& noise, const NoiseSchedule& schedule);

/// z0_hat = (z_t - sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_bar_t).
Tensor predict_z0(const Tensor& z_t, const Tensor& eps_hat, int t, const NoiseSchedule& schedule);

}  // namespace vton::diffusion
