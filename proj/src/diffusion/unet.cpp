#include "vton/diffusion/unet.hpp"

#include <cmath>

namespace vton::diffusion {

std::string_view to_string(UNetRole role) { return role == UNetRole::main ? "main" : "reference"; }

Tensor timestep_features(int timestep, int dim) {
    Tensor out({1, dim});
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        out[static_cast<std::size_t>(i)] = std::sin(timestep * freq);
        out[static_cast<std::size_t>(half + i)] = std::cos(timestep * freq);
    }
    return out;
}

std::size_t UNetToy::add(const std::string& name, std::vector<int> shape, double stddev, std::mt19937_64& rng) {
    Tensor t = stddev > 0.0 ? Tensor::randn(std::move(shape), rng) : Tensor(std::move(shape));
    for (double& v : t.values()) v *= stddev;
    params_.push_back({name, ad::Var(std::move(t), trainable())});
    return params_.size() - 1;
}

UNetToy::Conv UNetToy::conv(const std::string& name, int in, int out, int k, std::mt19937_64& rng, bool zero) {
    const double std = zero ? 0.0 : std::sqrt(1.0 / (in * k * k));
    const std::size_t w = add(name + ".weight", {out, in, k, k}, std, rng);
    const std::size_t b = add(name + ".bias", {out}, 0.0, rng);
    return {w, b};
}

UNetToy::Attention UNetToy::attention(const std::string& name, int channels, int context_dim, std::mt19937_64& rng) {
    const int width = config_.attention_width;
    Attention a{};
    a.wq = add(name + ".q.weight", {channels, width}, std::sqrt(1.0 / channels), rng);
    a.bq = add(name + ".q.bias", {width}, 0.0, rng);
    a.wk = add(name + ".k.weight", {context_dim, width}, std::sqrt(1.0 / context_dim), rng);
    a.bk = add(name + ".k.bias", {width}, 0.0, rng);
    a.wv = add(name + ".v.weight", {context_dim, width}, std::sqrt(1.0 / context_dim), rng);
    a.bv = add(name + ".v.bias", {width}, 0.0, rng);
    a.wo = add(name + ".out.weight", {width, channels}, 0.5 * std::sqrt(1.0 / width), rng);
    a.bo = add(name + ".out.bias", {channels}, 0.0, rng);
    return a;
}

UNetToy::UNetToy(UNetRole role, const UNetConfig& config, std::uint64_t seed) : role_(role), config_(config) {
    if (config.latent_channels < 1 || config.base_channels < 1 || config.heads < 1 ||
        config.attention_width % config.heads != 0 || config.time_dim % 2 != 0)
        throw Error("invalid U-Net configuration");
    std::mt19937_64 rng(seed);
    const int c1 = config.base_channels;
    const int c2 = 2 * c1;
    const int td = config.time_dim;

    in_conv_ = conv("in_conv", input_channels(), c1, 3, rng);
    time_w1_ = add("time.fc1.weight", {td, td}, std::sqrt(1.0 / td), rng);
    time_b1_ = add("time.fc1.bias", {td}, 0.0, rng);
    time_w2_ = add("time.fc2.weight", {td, td}, std::sqrt(1.0 / td), rng);
    time_b2_ = add("time.fc2.bias", {td}, 0.0, rng);
    text_w_ = add("text_pool.weight", {config.text_dim, td}, std::sqrt(1.0 / config.text_dim), rng);
    text_b_ = add("text_pool.bias", {td}, 0.0, rng);

    res1_ = conv("down.res", c1, c1, 3, rng);
    res1_pw_ = add("down.res.emb.weight", {td, c1}, 0.1 * std::sqrt(1.0 / td), rng);
    res1_pb_ = add("down.res.emb.bias", {c1}, 0.0, rng);
    self1_ = attention("down.self_attn", c1, c1, rng);
    cross1_ = attention("down.cross_attn", c1, config.text_dim, rng);
    down_ = conv("down.conv", c1, c2, 3, rng);

    res2_ = conv("mid.res", c2, c2, 3, rng);
    res2_pw_ = add("mid.res.emb.weight", {td, c2}, 0.1 * std::sqrt(1.0 / td), rng);
    res2_pb_ = add("mid.res.emb.bias", {c2}, 0.0, rng);
    self2_ = attention("mid.self_attn", c2, c2, rng);
    cross2_ = attention("mid.cross_attn", c2, config.text_dim, rng);

    up_ = conv("up.conv", c2 + c1, c1, 3, rng);
    res3_ = conv("up.res", c1, c1, 3, rng);
    res3_pw_ = add("up.res.emb.weight", {td, c1}, 0.1 * std::sqrt(1.0 / td), rng);
    res3_pb_ = add("up.res.emb.bias", {c1}, 0.0, rng);
    out_conv_ = conv("out_conv", c1, config.latent_channels, 3, rng, config.zero_init_output);
}

int UNetToy::input_channels() const {
    return role_ == UNetRole::main ? 2 * config_.latent_channels + 1 : config_.latent_channels;
}

std::size_t UNetToy::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var.value().numel();
    return n;
}

std::uint64_t UNetToy::checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : params_) h = vton::checksum(p.var.value().values(), h);
    return h;
}

ad::Var UNetToy::apply(const Conv& c, const ad::Var& x) const { return ad::conv2d(x, p(c.w), p(c.b)); }

ad::Var UNetToy::res_block(const Conv& c, std::size_t proj_w, std::size_t proj_b, const ad::Var& x,
                           const ad::Var& emb) const {
    const ad::Var bias = ad::linear(emb, p(proj_w), p(proj_b));  // [1, C]
    const ad::Var h = ad::add_channel_bias(ad::silu(x), bias);
    return ad::add(x, apply(c, h));
}

ad::Var UNetToy::attention_block(const Attention& a, const ad::Var& x, const ad::Var* context, const LayerKV* inject,
                                 std::vector<LayerKV>* harvest) const {
    const int height = x.value().dim(1);
    const int width = x.value().dim(2);
    const ad::Var tokens = ad::to_tokens(x);
    const ad::Var& ctx = context != nullptr ? *context : tokens;
    const ad::Var q = ad::linear(tokens, p(a.wq), p(a.bq));
    LayerKV kv{ad::linear(ctx, p(a.wk), p(a.bk)), ad::linear(ctx, p(a.wv), p(a.bv)), config_.heads};
    if (harvest != nullptr) harvest->push_back(kv);
    if (inject != nullptr) kv = inject_reference_kv(kv, *inject);
    const AttentionOutput att = attend(q, kv);
    const ad::Var out = ad::linear(att.output, p(a.wo), p(a.bo));
    return ad::add(x, ad::from_tokens(out, height, width));
}

ad::Var UNetToy::forward(const ad::Var& input, int timestep, const TextEmbedding& text,
                         const std::vector<LayerKV>* inject, std::vector<LayerKV>* harvest) const {
    const Tensor& iv = input.value();
    if (iv.rank() != 3 || iv.dim(0) != input_channels())
        throw ShapeMismatch(std::string(to_string(role_)) + " U-Net expects " + std::to_string(input_channels()) +
                            " input channels, got " + iv.shape_string());
    if (iv.dim(1) % 2 != 0 || iv.dim(2) % 2 != 0)
        throw ShapeMismatch("U-Net input spatial dims must be even, got " + iv.shape_string());
    if (text.tokens.rank() != 2 || text.tokens.dim(1) != config_.text_dim)
        throw ShapeMismatch("text embedding width " + text.tokens.shape_string() + " does not match U-Net");
    if (inject != nullptr && inject->size() != static_cast<std::size_t>(kSelfAttentionLayers))
        throw LayerShapeMismatch("expected " + std::to_string(kSelfAttentionLayers) + " injected layers, got " +
                                 std::to_string(inject->size()));

    const ad::Var text_tokens = ad::constant(text.tokens);
    const ad::Var pooled = ad::constant(text.pooled.reshaped({1, config_.text_dim}));
    const ad::Var tfeat = ad::constant(timestep_features(timestep, config_.time_dim));
    ad::Var emb = ad::linear(ad::silu(ad::linear(tfeat, p(time_w1_), p(time_b1_))), p(time_w2_), p(time_b2_));
    emb = ad::silu(ad::add(emb, ad::linear(pooled, p(text_w_), p(text_b_))));

    ad::Var h = apply(in_conv_, input);
    h = res_block(res1_, res1_pw_, res1_pb_, h, emb);
    h = attention_block(self1_, h, nullptr, inject != nullptr ? &(*inject)[0] : nullptr, harvest);
    h = attention_block(cross1_, h, &text_tokens, nullptr, nullptr);
    const ad::Var skip = h;

    h = apply(down_, ad::avg_pool2(h));
    h = res_block(res2_, res2_pw_, res2_pb_, h, emb);
    h = attention_block(self2_, h, nullptr, inject != nullptr ? &(*inject)[1] : nullptr, harvest);
    h = attention_block(cross2_, h, &text_tokens, nullptr, nullptr);

    h = apply(up_, ad::concat_channels(ad::upsample2(h), skip));
    h = res_block(res3_, res3_pw_, res3_pb_, h, emb);
    return apply(out_conv_, ad::silu(h));
}

}  // namespace vton::diffusion
