#pragma once

#include <cstdint>
#include <vector>

#include "vton/diffusion/codec.hpp"
#include "vton/diffusion/denoiser.hpp"
#include "vton/diffusion/schedule.hpp"

namespace vton::diffusion {

struct SamplerOptions {
    int steps = 30;
    double stop_fraction = 0.0;   // sigma in [0, 1)
    bool composite = true;
    std::uint64_t seed = 0;
    double clip_z0 = 3.0;         // |z0_hat| clamp; <= 0 disables
};

/// t_i = round(T (steps - i) / steps) for i = 0..steps-1, strictly decreasing, ending above 0.
std::vector<int> sampling_timesteps(int timesteps, int steps);

/// ceil((1 - sigma) steps), the number of steps an early-stopped pass runs.
int executed_steps(int steps, double stop_fraction);

struct SampleResult {
    Tensor latent;          // z0_hat of the last executed step (composited when enabled)
    int steps_executed = 0;
    int denoiser_calls = 0;
};

/// Deterministic DDIM-style sampler. With compositing, after every step the latent outside
/// `inputs.mask_latent` is replaced by add_noise(person_latent, t_prev, eps_fixed).
/// Throws RangeViolation for steps < 1 or sigma outside [0, 1).
SampleResult sample(Denoiser& denoiser, const NoiseSchedule& schedule, const DenoiserInputs& inputs,
                    const Tensor& person_latent, const SamplerOptions& options);

}  // namespace vton::diffusion
