#include "vton/diffusion/codec.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace vton::diffusion {

PatchCodec::PatchCodec(int factor, int channels)
    : factor_(factor), channels_(channels), latent_scale_(1.0 / factor) {
    if (factor < 2 || factor % 2 != 0) throw Error("codec factor must be even and >= 2");
    if (channels < 1 || channels > 4) throw Error("codec supports 1..4 latent channels");
}

double PatchCodec::basis(int channel, int py, int px, int rgb) const {
    (void)px;
    const double area = static_cast<double>(factor_) * factor_;
    switch (channel) {
        case 0: return 1.0 / std::sqrt(3.0 * area);
        case 1: {
            static constexpr double w[3] = {1.0, -1.0, 0.0};
            return w[rgb] / std::sqrt(2.0 * area);
        }
        case 2: {
            static constexpr double w[3] = {1.0, 1.0, -2.0};
            return w[rgb] / std::sqrt(6.0 * area);
        }
        default: return (py < factor_ / 2 ? 1.0 : -1.0) / std::sqrt(3.0 * area);
    }
}

Tensor PatchCodec::encode(const RgbImage& image) const {
    if (image.height() % factor_ != 0 || image.width() % factor_ != 0)
        throw IndivisibleShape("image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                               " not divisible by codec factor " + std::to_string(factor_));
    const int h = image.height() / factor_;
    const int w = image.width() / factor_;
    Tensor z({channels_, h, w});
    for (int c = 0; c < channels_; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int py = 0; py < factor_; ++py)
                    for (int px = 0; px < factor_; ++px)
                        for (int k = 0; k < 3; ++k)
                            acc += basis(c, py, px, k) * (2.0 * image.at(y * factor_ + py, x * factor_ + px, k) - 1.0);
                z.at(c, y, x) = acc * latent_scale_;
            }
    return z;
}

RgbImage PatchCodec::decode(const Tensor& latent) const {
    if (latent.rank() != 3 || latent.dim(0) != channels_)
        throw ShapeMismatch("decode: latent " + latent.shape_string() + " does not have " + std::to_string(channels_) +
                            " channels");
    const int h = latent.dim(1);
    const int w = latent.dim(2);
    RgbImage image(h * factor_, w * factor_);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int py = 0; py < factor_; ++py)
                for (int px = 0; px < factor_; ++px)
                    for (int k = 0; k < 3; ++k) {
                        double v = 0.0;
                        for (int c = 0; c < channels_; ++c) v += basis(c, py, px, k) * latent.at(c, y, x) / latent_scale_;
                        image.at(y * factor_ + py, x * factor_ + px, k) =
                            static_cast<float>(std::clamp((v + 1.0) / 2.0, 0.0, 1.0));
                    }
    return image;
}

float PatchCodec::round_trip_error(const RgbImage& image) const { return max_abs_difference(decode(encode(image)), image); }

// ---------------------------------------------------------------------------

HashTextEncoder::HashTextEncoder(int dim, int max_tokens) : dim_(dim), max_tokens_(max_tokens) {
    if (dim < 2 || dim % 2 != 0) throw Error("text embedding dimension must be even");
}

namespace {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        const auto uc = static_cast<unsigned char>(ch);
        if (std::isalnum(uc) || ch == '-' || ch == '\'') {
            cur.push_back(static_cast<char>(std::tolower(uc)));
        } else {
            if (!cur.empty()) tokens.push_back(std::move(cur));
            cur.clear();
            if (ch == ',' || ch == '.') tokens.emplace_back(1, ch);
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

TextEmbedding HashTextEncoder::encode(std::string_view text) const {
    auto tokens = tokenize(text);
    if (tokens.empty()) tokens.emplace_back("<empty>");
    if (static_cast<int>(tokens.size()) > max_tokens_) tokens.resize(static_cast<std::size_t>(max_tokens_));
    const int L = static_cast<int>(tokens.size());

    TextEmbedding out{Tensor({L, dim_}), Tensor({dim_})};
    for (int i = 0; i < L; ++i) {
        std::mt19937_64 rng(fnv1a(tokens[static_cast<std::size_t>(i)]));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> v(static_cast<std::size_t>(dim_));
        double norm = 0.0;
        for (double& x : v) {
            x = normal(rng);
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (int d = 0; d < dim_; ++d) {
            // Unit-norm token vector plus a small sinusoidal position code.
            const double freq = std::pow(10000.0, -static_cast<double>(d / 2 * 2) / dim_);
            const double pos = d % 2 == 0 ? std::sin(i * freq) : std::cos(i * freq);
            out.tokens[static_cast<std::size_t>(i) * dim_ + d] = v[static_cast<std::size_t>(d)] / norm * std::sqrt(double(dim_)) * 0.5 + 0.1 * pos;
        }
    }
    for (int d = 0; d < dim_; ++d) {
        double acc = 0.0;
        for (int i = 0; i < L; ++i) acc += out.tokens[static_cast<std::size_t>(i) * dim_ + d];
        out.pooled[static_cast<std::size_t>(d)] = acc / L;
    }
    return out;
}

}  // namespace vton::diffusion
