#include "vton/diffusion/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace vton::diffusion {

std::vector<int> sampling_timesteps(int timesteps, int steps) {
    if (steps < 1 || steps > timesteps)
        throw RangeViolation("sampling steps must be in [1, " + std::to_string(timesteps) + "], got " +
                             std::to_string(steps));
    std::vector<int> ts;
    ts.reserve(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i)
        ts.push_back(static_cast<int>(std::lround(static_cast<double>(timesteps) * (steps - i) / steps)));
    return ts;
}

int executed_steps(int steps, double stop_fraction) {
    if (steps < 1) throw RangeViolation("steps must be >= 1");
    if (!(stop_fraction >= 0.0 && stop_fraction < 1.0))
        throw RangeViolation("stop fraction must lie in [0, 1), got " + std::to_string(stop_fraction));
    // Tolerance keeps e.g. (1 - 0.9) * 30 = 3.0000000000000004 at 3.
    const double exact = (1.0 - stop_fraction) * steps;
    return std::clamp(static_cast<int>(std::ceil(exact - 1e-9)), 1, steps);
}

namespace {

void composite_outside(Tensor& z, const Tensor& mask, const Tensor& known) {
    const int channels = z.dim(0);
    const std::size_t plane = mask.numel();
    for (int c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < plane; ++i)
            if (mask[i] < 0.5) z[c * plane + i] = known[c * plane + i];
}

}  // namespace

SampleResult sample(Denoiser& denoiser, const NoiseSchedule& schedule, const DenoiserInputs& inputs,
                    const Tensor& person_latent, const SamplerOptions& options) {
    const int run = executed_steps(options.steps, options.stop_fraction);
    const std::vector<int> ts = sampling_timesteps(schedule.timesteps(), options.steps);
    check_inputs(person_latent, inputs, denoiser.main().config().latent_channels);

    std::mt19937_64 rng(options.seed);
    const Tensor fixed_noise = Tensor::randn(person_latent.shape(), rng);
    Tensor z = fixed_noise;
    if (options.composite) composite_outside(z, inputs.mask_latent, add_noise(person_latent, ts[0], fixed_noise, schedule));

    const int calls_before = denoiser.calls();
    Tensor z0_hat;
    for (int i = 0; i < run; ++i) {
        const int t = ts[static_cast<std::size_t>(i)];
        const int t_prev = i + 1 < options.steps ? ts[static_cast<std::size_t>(i + 1)] : 0;
        const Tensor eps = denoiser.predict(z, t, inputs);
        z0_hat = predict_z0(z, eps, t, schedule);
        if (options.clip_z0 > 0.0)
            for (double& v : z0_hat.values()) v = std::clamp(v, -options.clip_z0, options.clip_z0);
        if (options.composite) composite_outside(z0_hat, inputs.mask_latent, person_latent);

        const double ab = schedule.alpha_bar(t_prev);
        const double a = std::sqrt(ab);
        const double b = std::sqrt(1.0 - ab);
        for (std::size_t k = 0; k < z.numel(); ++k) z[k] = a * z0_hat[k] + b * eps[k];
        if (options.composite)
            composite_outside(z, inputs.mask_latent, add_noise(person_latent, t_prev, fixed_noise, schedule));
    }
    return {z0_hat, run, denoiser.calls() - calls_before};
}

}  // namespace vton::diffusion
