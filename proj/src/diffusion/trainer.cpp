#include "vton/diffusion/trainer.hpp"

#include <cmath>

namespace vton::diffusion {

RgbImage masked_agnostic(const RgbImage& person, const Mask& mask) {
    if (mask.size() != person.size()) throw ShapeMismatch("agnostic mask does not match the person image");
    RgbImage out = person;
    for (int y = 0; y < person.height(); ++y)
        for (int x = 0; x < person.width(); ++x)
            if (mask.bits(y, x) != 0) out.set_pixel(y, x, 0.5f, 0.5f, 0.5f);
    return out;
}

namespace {

Tensor mask_to_latent(const Mask& mask, int factor) {
    const Mask small = resize_to_latent(mask, factor);
    Tensor t({1, small.size().height, small.size().width});
    for (int y = 0; y < small.size().height; ++y)
        for (int x = 0; x < small.size().width; ++x) t.at(0, y, x) = small.bits(y, x) != 0 ? 1.0 : 0.0;
    return t;
}

}  // namespace

TrainingExample prepare_example_with_mask(const TryOnSample& sample, const Mask& mask, const PromptPair& prompts,
                                          const PatchCodec& codec, const HashTextEncoder& text) {
    TrainingExample ex;
    ex.person_latent = codec.encode(sample.person);
    ex.inputs.mask_latent = mask_to_latent(mask, codec.factor());
    ex.inputs.agnostic_latent = codec.encode(masked_agnostic(sample.person, mask));
    ex.inputs.clothing_latent = codec.encode(sample.clothing);
    ex.inputs.main_text = text.encode(prompts.main_prompt);
    ex.inputs.reference_text = text.encode(prompts.reference_prompt);
    return ex;
}

TrainingExample prepare_example(const TryOnSample& sample, const PromptPair& prompts, const PatchCodec& codec,
                                const HashTextEncoder& text, const DilationSpec& dilation) {
    const Mask dilated = random_dilation_augment(build_fine_mask(sample), build_coarse_mask(sample), dilation);
    return prepare_example_with_mask(sample, dilated, prompts, codec, text);
}

void zero_grads(std::vector<NamedParameter>& params) {
    for (auto& p : params) p.var.zero_grad();
}

void Sgd::step(std::vector<NamedParameter>& params) {
    for (auto& p : params) {
        if (!p.var.requires_grad() || p.var.grad().numel() == 0) continue;
        Tensor& v = p.var.mutable_value();
        const Tensor& g = p.var.grad();
        for (std::size_t i = 0; i < v.numel(); ++i) v[i] -= lr_ * g[i];
    }
}

void Adam::step(std::vector<NamedParameter>& params) {
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.push_back(Tensor::zeros_like(p.var.value()));
            v_.push_back(Tensor::zeros_like(p.var.value()));
        }
    }
    if (m_.size() != params.size()) throw Error("Adam: parameter list changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k];
        if (!p.var.requires_grad() || p.var.grad().numel() == 0) continue;
        Tensor& w = p.var.mutable_value();
        const Tensor& g = p.var.grad();
        for (std::size_t i = 0; i < w.numel(); ++i) {
            m_[k][i] = b1_ * m_[k][i] + (1.0 - b1_) * g[i];
            v_[k][i] = b2_ * v_[k][i] + (1.0 - b2_) * g[i] * g[i];
            w[i] -= lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
        }
    }
}

double noise_prediction_loss(Denoiser& denoiser, const NoiseSchedule& schedule, const TrainingExample& example,
                             int timestep, const Tensor& noise, double weight, bool backward) {
    if (timestep < 1 || timestep > schedule.timesteps())
        throw TimestepOutOfRange("training timestep " + std::to_string(timestep) + " outside [1, " +
                                 std::to_string(schedule.timesteps()) + "]");
    const Tensor z_t = add_noise(example.person_latent, timestep, noise, schedule);
    const ad::Var eps_hat = denoiser.predict(ad::constant(z_t), timestep, example.inputs);
    ad::Var loss = ad::mse(eps_hat, ad::constant(noise));
    const double value = loss.value()[0];
    if (!std::isfinite(value)) throw NonFiniteLoss("loss is " + std::to_string(value) + " at t=" + std::to_string(timestep));
    if (backward) ad::scale(loss, weight).backward();
    return value;
}

Trainer::Trainer(UNetToy& main, const UNetToy& reference, const NoiseSchedule& schedule,
                 std::unique_ptr<Optimizer> optimizer, std::uint64_t seed)
    : main_(main), reference_(reference), schedule_(schedule), optimizer_(std::move(optimizer)), rng_(seed) {
    if (!main.trainable()) throw Error("only the main U-Net can be trained");
    if (!optimizer_) throw Error("trainer needs an optimizer");
}

double Trainer::train_step(const std::vector<TrainingExample>& batch) {
    if (batch.empty()) throw EmptyInput("training batch is empty");
    Denoiser denoiser(main_, reference_);
    zero_grads(main_.parameters());
    std::uniform_int_distribution<int> pick_t(1, schedule_.timesteps());
    const double weight = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const TrainingExample& ex : batch) {
        const int t = pick_t(rng_);
        const Tensor noise = Tensor::randn(ex.person_latent.shape(), rng_);
        total += weight * noise_prediction_loss(denoiser, schedule_, ex, t, noise, weight);
    }
    for (const auto& p : main_.parameters())
        if (p.var.grad().numel() != 0 && !p.var.grad().all_finite())
            throw NonFiniteLoss("non-finite gradient in " + p.name);
    optimizer_->step(main_.parameters());
    ++steps_;
    return total;
}

}  // namespace vton::diffusion
