#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "vton/diffusion/unet.hpp"

namespace vton::diffusion {

/// Conditioning that stays fixed across the denoising trajectory.
struct DenoiserInputs {
    Tensor mask_latent;        // [1, h, w], R(m_d)
    Tensor agnostic_latent;    // [C, h, w], E(x_agnostic)
    Tensor clothing_latent;    // [C, h, w], E(x_clothing)
    TextEmbedding main_text;   // tau(y_main)
    TextEmbedding reference_text;  // tau(y_ref)
};

/// Main + frozen reference U-Net pair. Counts main-network evaluations and caches the
/// reference keys/values per clothing input (the reference sees the same input at every step).
class Denoiser {
public:
    Denoiser(const UNetToy& main, const UNetToy& reference);

    /// Predicted noise for z_t as a differentiable Var (main parameters carry gradients).
    ad::Var predict(const ad::Var& z_t, int timestep, const DenoiserInputs& inputs);
    Tensor predict(const Tensor& z_t, int timestep, const DenoiserInputs& inputs);

    /// Runs the reference network on E(x_clothing) with y_ref at timestep 0.
    std::vector<LayerKV> reference_kv(const DenoiserInputs& inputs);

    int calls() const { return calls_; }
    void reset_calls() { calls_ = 0; }

    const UNetToy& main() const { return main_; }
    const UNetToy& reference() const { return reference_; }

private:
    const UNetToy& main_;
    const UNetToy& reference_;
    int calls_ = 0;
    std::optional<std::uint64_t> cache_key_;
    std::vector<LayerKV> cache_;
};

/// Throws ShapeMismatch unless every conditioning tensor matches z_t's spatial grid.
void check_inputs(const Tensor& z_t, const DenoiserInputs& inputs, int latent_channels);

/// One evaluation of eps_theta(z_t, t, ...) with both networks.
Tensor denoiser_forward(const UNetToy& main, const UNetToy& reference, const Tensor& z_t, const DenoiserInputs& inputs,
                        int timestep);

/// Mean squared error; ShapeMismatch on differing shapes.
double ldm_loss(const Tensor& eps, const Tensor& eps_hat);

}  // namespace vton::diffusion
