#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vton/autodiff.hpp"
#include "vton/diffusion/attention.hpp"
#include "vton/diffusion/codec.hpp"

namespace vton::diffusion {

enum class UNetRole { main, reference };
std::string_view to_string(UNetRole role);

struct UNetConfig {
    int latent_channels = 4;
    int base_channels = 16;   // level 1; level 2 doubles it
    int attention_width = 32; // heads * head_dim
    int heads = 1;
    int text_dim = 32;
    int time_dim = 32;
    bool zero_init_output = true;
    bool operator==(const UNetConfig&) const = default;
};

struct NamedParameter {
    std::string name;
    ad::Var var;
};

/// Toy two-level conditional denoiser. Main role: input z_t ++ R(m_d) ++ E(x_agnostic)
/// (2C + 1 channels). Reference role: C channels, frozen.
///
///   in_conv -> res(16) -> self-attn -> cross-attn -> pool, conv 16->32
///   -> res(32) -> self-attn -> cross-attn -> upsample, concat skip, conv 48->16
///   -> res(16) -> silu, out_conv -> C
///
/// The timestep embedding plus a projection of the pooled text vector biases each res block.
class UNetToy {
public:
    UNetToy(UNetRole role, const UNetConfig& config, std::uint64_t seed);

    UNetRole role() const { return role_; }
    const UNetConfig& config() const { return config_; }
    int input_channels() const;
    bool trainable() const { return role_ == UNetRole::main; }

    std::vector<NamedParameter>& parameters() { return params_; }
    const std::vector<NamedParameter>& parameters() const { return params_; }
    std::size_t parameter_count() const;
    /// FNV-1a over all parameter values in declaration order.
    std::uint64_t checksum() const;

    /// Number of self-attention layers (keys/values harvested or injected per layer).
    static constexpr int kSelfAttentionLayers = 2;

    /// input [Cin, h, w] with h, w even. `inject`, when given, must hold one LayerKV per
    /// self-attention layer; `harvest`, when given, receives this network's own keys/values.
    ad::Var forward(const ad::Var& input, int timestep, const TextEmbedding& text, const std::vector<LayerKV>* inject,
                    std::vector<LayerKV>* harvest) const;

private:
    const ad::Var& p(std::size_t index) const { return params_[index].var; }
    std::size_t add(const std::string& name, std::vector<int> shape, double stddev, std::mt19937_64& rng);

    struct Attention {
        std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
    };
    struct Conv {
        std::size_t w, b;
    };
    Conv conv(const std::string& name, int in, int out, int k, std::mt19937_64& rng, bool zero = false);
    Attention attention(const std::string& name, int channels, int context_dim, std::mt19937_64& rng);
    ad::Var apply(const Conv& c, const ad::Var& x) const;
    ad::Var res_block(const Conv& c, std::size_t proj_w, std::size_t proj_b, const ad::Var& x, const ad::Var& emb) const;
    ad::Var attention_block(const Attention& a, const ad::Var& x, const ad::Var* context, const LayerKV* inject,
                            std::vector<LayerKV>* harvest) const;

    UNetRole role_;
    UNetConfig config_;
    std::vector<NamedParameter> params_;

    Conv in_conv_, res1_, down_, res2_, up_, res3_, out_conv_;
    Attention self1_, cross1_, self2_, cross2_;
    std::size_t time_w1_, time_b1_, time_w2_, time_b2_, text_w_, text_b_;
    std::size_t res1_pw_, res1_pb_, res2_pw_, res2_pb_, res3_pw_, res3_pb_;
};

/// Sinusoidal timestep features of width `dim`.
Tensor timestep_features(int timestep, int dim);

}  // namespace vton::diffusion
