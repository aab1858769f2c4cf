#include "vton/diffusion/denoiser.hpp"

namespace vton::diffusion {

Denoiser::Denoiser(const UNetToy& main, const UNetToy& reference) : main_(main), reference_(reference) {
    if (main.role() != UNetRole::main || reference.role() != UNetRole::reference)
        throw Error("denoiser needs a main and a reference U-Net");
    if (main.config().attention_width != reference.config().attention_width ||
        main.config().heads != reference.config().heads)
        throw LayerShapeMismatch("main and reference U-Nets disagree on attention heads or width");
}

void check_inputs(const Tensor& z_t, const DenoiserInputs& inputs, int latent_channels) {
    if (z_t.rank() != 3 || z_t.dim(0) != latent_channels)
        throw ShapeMismatch("z_t must be [" + std::to_string(latent_channels) + ", h, w], got " + z_t.shape_string());
    const auto same_grid = [&](const Tensor& t, int channels, const char* what) {
        if (t.rank() != 3 || t.dim(0) != channels || t.dim(1) != z_t.dim(1) || t.dim(2) != z_t.dim(2))
            throw ShapeMismatch(std::string(what) + " " + t.shape_string() + " does not match z_t " + z_t.shape_string());
    };
    same_grid(inputs.mask_latent, 1, "mask latent");
    same_grid(inputs.agnostic_latent, latent_channels, "agnostic latent");
    same_grid(inputs.clothing_latent, latent_channels, "clothing latent");
}

std::vector<LayerKV> Denoiser::reference_kv(const DenoiserInputs& inputs) {
    std::uint64_t key = checksum(inputs.clothing_latent.values());
    key = checksum(inputs.reference_text.tokens.values(), key);
    if (cache_key_ && *cache_key_ == key) return cache_;
    std::vector<LayerKV> kv;
    reference_.forward(ad::constant(inputs.clothing_latent), 0, inputs.reference_text, nullptr, &kv);
    cache_key_ = key;
    cache_ = kv;
    return kv;
}

ad::Var Denoiser::predict(const ad::Var& z_t, int timestep, const DenoiserInputs& inputs) {
    check_inputs(z_t.value(), inputs, main_.config().latent_channels);
    const std::vector<LayerKV> kv = reference_kv(inputs);
    const ad::Var input = ad::concat_channels(
        ad::concat_channels(z_t, ad::constant(inputs.mask_latent)), ad::constant(inputs.agnostic_latent));
    ++calls_;
    return main_.forward(input, timestep, inputs.main_text, &kv, nullptr);
}

Tensor Denoiser::predict(const Tensor& z_t, int timestep, const DenoiserInputs& inputs) {
    return predict(ad::constant(z_t), timestep, inputs).value();
}

Tensor denoiser_forward(const UNetToy& main, const UNetToy& reference, const Tensor& z_t, const DenoiserInputs& inputs,
                        int timestep) {
    Denoiser d(main, reference);
    return d.predict(z_t, timestep, inputs);
}

double ldm_loss(const Tensor& eps, const Tensor& eps_hat) { return mean_squared_error(eps, eps_hat); }

}  // namespace vton::diffusion
