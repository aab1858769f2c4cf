#pragma once

#include <vector>

#include "vton/autodiff.hpp"

namespace vton::diffusion {

/// Keys and values of one self-attention layer, each [L, heads * head_dim].
struct LayerKV {
    ad::Var keys;
    ad::Var values;
    int heads = 1;

    int length() const { return keys.value().dim(0); }
    int width() const { return keys.value().dim(1); }
};

/// Main keys/values followed by the reference ones: length L_main + L_ref.
/// Throws LayerShapeMismatch when head count or head width differ.
LayerKV inject_reference_kv(const LayerKV& main, const LayerKV& reference);

struct AttentionOutput {
    ad::Var output;       // [Lq, heads * head_dim]
    ad::Var weights;      // [heads * Lq, Lk], row-stochastic
};

/// softmax(Q K^T / sqrt(head_dim) + column_bias) V per head. `column_bias` (length Lk or empty)
/// lets callers push columns to -infinity.
AttentionOutput attend(const ad::Var& queries, const LayerKV& kv, const std::vector<double>& column_bias = {});

/// Column bias that removes the trailing `reference_length` columns from a concatenated context.
std::vector<double> mask_reference_columns(int main_length, int reference_length);

}  // namespace vton::diffusion
