#pragma once

// Minimal reverse-mode differentiation over Tensor for the toy denoiser.
// A Var is a node in a dynamically built graph; calling backward() on a scalar
// accumulates gradients into every upstream node that requires them.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vton/tensor.hpp"

namespace vton::ad {

struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    Tensor& grad_buffer();
};

class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const std::vector<int>& shape() const { return node_->value.shape(); }
    const std::shared_ptr<Node>& node() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

    void zero_grad();
    /// Seeds d(self)/d(self) = 1; self must hold one element.
    void backward() const;

    static Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

private:
    std::shared_ptr<Node> node_;
};

Var constant(Tensor value);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var silu(const Var& a);

/// x [C, H, W] + v [C] broadcast over space.
Var add_channel_bias(const Var& x, const Var& v);

/// x [C, H, W], w [O, C, k, k], b [O] -> [O, H, W] with same padding.
Var conv2d(const Var& x, const Var& w, const Var& b);

/// a [M, K] x b [K, N] (or transposed operands) -> [M, N].
Var matmul(const Var& a, const Var& b, bool transpose_a = false, bool transpose_b = false);

/// x [L, D] + b [D] broadcast over rows.
Var add_row_bias(const Var& x, const Var& b);

/// x [L, Din] * w [Din, Dout] + b [Dout].
Var linear(const Var& x, const Var& w, const Var& b);

/// Row-wise softmax of [M, N]; `column_bias` (size N, may be empty) is added to the logits first.
Var softmax_rows(const Var& x, const std::vector<double>& column_bias = {});

/// [L1, D] ++ [L2, D] -> [L1 + L2, D]
Var concat_rows(const Var& a, const Var& b);
/// [C1, H, W] ++ [C2, H, W] -> [C1 + C2, H, W]
Var concat_channels(const Var& a, const Var& b);

/// [C, H, W] <-> [H*W, C]
Var to_tokens(const Var& x);
Var from_tokens(const Var& x, int height, int width);

/// 2x2 average pooling / nearest 2x upsampling on [C, H, W].
Var avg_pool2(const Var& x);
Var upsample2(const Var& x);

/// Mean squared error between two same-shaped Vars, as a 1-element Var.
Var mse(const Var& a, const Var& b);

}  // namespace vton::ad
