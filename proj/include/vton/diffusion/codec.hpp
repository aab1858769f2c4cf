#pragma once

#include <string_view>

#include "vton/image.hpp"
#include "vton/tensor.hpp"

namespace vton::diffusion {

/// Fixed patch-projection autoencoder. Each factor x factor RGB patch (pixels mapped to
/// [-1, 1]) is projected onto `channels` orthonormal patterns: luminance, two colour
/// opponents, and a top-versus-bottom luminance gradient. The decoder is the transpose,
/// so decode(encode(x)) is the orthogonal projection of x onto that subspace.
class PatchCodec {
public:
    explicit PatchCodec(int factor = 8, int channels = 4);

    int factor() const { return factor_; }
    int channels() const { return channels_; }

    /// [C, H/f, W/f]; throws IndivisibleShape if H or W is not a multiple of the factor.
    Tensor encode(const RgbImage& image) const;
    /// Values clamped into [0, 1].
    RgbImage decode(const Tensor& latent) const;

    /// Max absolute channel error of decode(encode(image)).
    float round_trip_error(const RgbImage& image) const;

private:
    double basis(int channel, int py, int px, int rgb) const;

    int factor_;
    int channels_;
    double latent_scale_;
};

/// Deterministic hash-embedding text encoder: per-token vectors plus a pooled mean.
struct TextEmbedding {
    Tensor tokens;  // [L, D], 1 <= L <= 77
    Tensor pooled;  // [D]
};

class HashTextEncoder {
public:
    explicit HashTextEncoder(int dim = 32, int max_tokens = 77);

    int dim() const { return dim_; }
    TextEmbedding encode(std::string_view text) const;

private:
    int dim_;
    int max_tokens_;
};

}  // namespace vton::diffusion
