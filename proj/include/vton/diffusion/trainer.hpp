#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "vton/captioner.hpp"
#include "vton/diffusion/denoiser.hpp"
#include "vton/diffusion/schedule.hpp"
#include "vton/mask.hpp"

namespace vton::diffusion {

struct TrainingExample {
    Tensor person_latent;  // z_0
    DenoiserInputs inputs;
};

/// Encodes one sample for training. The agnostic image is the person with the augmented
/// mask m_d painted mid-gray, so it always agrees with R(m_d).
TrainingExample prepare_example(const TryOnSample& sample, const PromptPair& prompts, const PatchCodec& codec,
                                const HashTextEncoder& text, const DilationSpec& dilation);

/// Same, for an explicit inpainting mask (inference, or callers that already drew m_d).
TrainingExample prepare_example_with_mask(const TryOnSample& sample, const Mask& mask, const PromptPair& prompts,
                                          const PatchCodec& codec, const HashTextEncoder& text);

/// Person raster with `mask` pixels set to mid gray.
RgbImage masked_agnostic(const RgbImage& person, const Mask& mask);

class Optimizer {
public:
    virtual ~Optimizer() = default;
    /// Applies accumulated gradients to every parameter that requires them.
    virtual void step(std::vector<NamedParameter>& params) = 0;
};

class Sgd final : public Optimizer {
public:
    explicit Sgd(double learning_rate) : lr_(learning_rate) {}
    void step(std::vector<NamedParameter>& params) override;

private:
    double lr_;
};

class Adam final : public Optimizer {
public:
    explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
        : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(epsilon) {}
    void step(std::vector<NamedParameter>& params) override;

private:
    double lr_, b1_, b2_, eps_;
    int t_ = 0;
    std::vector<Tensor> m_, v_;
};

/// Loss and gradients of the noise-prediction objective on one example, at a given t and eps.
/// Gradients accumulate into the main network's parameters (scaled by `weight`).
double noise_prediction_loss(Denoiser& denoiser, const NoiseSchedule& schedule, const TrainingExample& example,
                             int timestep, const Tensor& noise, double weight = 1.0, bool backward = true);

/// Single-writer trainer for the main U-Net; the reference network is never updated.
class Trainer {
public:
    Trainer(UNetToy& main, const UNetToy& reference, const NoiseSchedule& schedule,
            std::unique_ptr<Optimizer> optimizer, std::uint64_t seed);

    /// One optimizer step on the batch mean of the loss; t ~ U{1..T}, eps ~ N(0, I) per example.
    /// Throws NonFiniteLoss (before touching parameters) if the loss is NaN or infinite.
    double train_step(const std::vector<TrainingExample>& batch);

    int steps_taken() const { return steps_; }

private:
    UNetToy& main_;
    const UNetToy& reference_;
    const NoiseSchedule& schedule_;
    std::unique_ptr<Optimizer> optimizer_;
    std::mt19937_64 rng_;
    int steps_ = 0;
};

void zero_grads(std::vector<NamedParameter>& params);

}  // namespace vton::diffusion
