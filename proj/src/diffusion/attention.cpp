#include "vton/diffusion/attention.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace vton::diffusion {

namespace {

std::string describe(const LayerKV& kv) {
    return std::to_string(kv.heads) + " heads x width " + std::to_string(kv.width());
}

// Columns [begin, begin + count) of a [L, D] Var.
ad::Var column_slice(const ad::Var& x, int begin, int count) {
    const Tensor& xv = x.value();
    const int rows = xv.dim(0);
    const int cols = xv.dim(1);
    Tensor out({rows, count});
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < count; ++c) out[r * count + c] = xv[r * cols + begin + c];
    return ad::Var::make(std::move(out), {x}, [rows, cols, begin, count](ad::Node& self) {
        Tensor& g = self.parents[0]->grad_buffer();
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < count; ++c) g[r * cols + begin + c] += self.grad[r * count + c];
    });
}

ad::Var concat_columns(const std::vector<ad::Var>& parts) {
    ad::Var out = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const Tensor& a = out.value();
        const Tensor& b = parts[i].value();
        const int rows = a.dim(0), ca = a.dim(1), cb = b.dim(1);
        Tensor joined({rows, ca + cb});
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < ca; ++c) joined[r * (ca + cb) + c] = a[r * ca + c];
            for (int c = 0; c < cb; ++c) joined[r * (ca + cb) + ca + c] = b[r * cb + c];
        }
        out = ad::Var::make(std::move(joined), {out, parts[i]}, [rows, ca, cb](ad::Node& self) {
            if (self.parents[0]->requires_grad) {
                Tensor& g = self.parents[0]->grad_buffer();
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < ca; ++c) g[r * ca + c] += self.grad[r * (ca + cb) + c];
            }
            if (self.parents[1]->requires_grad) {
                Tensor& g = self.parents[1]->grad_buffer();
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cb; ++c) g[r * cb + c] += self.grad[r * (ca + cb) + ca + c];
            }
        });
    }
    return out;
}

}  // namespace

LayerKV inject_reference_kv(const LayerKV& main, const LayerKV& reference) {
    if (main.heads != reference.heads || main.width() != reference.width() ||
        reference.values.value().dim(1) != main.values.value().dim(1))
        throw LayerShapeMismatch("cannot inject reference keys/values (" + describe(reference) + ") into layer with " +
                                 describe(main));
    return {ad::concat_rows(main.keys, reference.keys), ad::concat_rows(main.values, reference.values), main.heads};
}

std::vector<double> mask_reference_columns(int main_length, int reference_length) {
    std::vector<double> bias(static_cast<std::size_t>(main_length + reference_length), 0.0);
    for (int i = main_length; i < main_length + reference_length; ++i)
        bias[static_cast<std::size_t>(i)] = -std::numeric_limits<double>::infinity();
    return bias;
}

AttentionOutput attend(const ad::Var& queries, const LayerKV& kv, const std::vector<double>& column_bias) {
    const Tensor& q = queries.value();
    if (q.rank() != 2 || q.dim(1) != kv.width() || kv.keys.value().dim(0) != kv.values.value().dim(0) ||
        kv.heads < 1 || kv.width() % kv.heads != 0)
        throw ShapeMismatch("attend: queries " + q.shape_string() + " keys " + kv.keys.value().shape_string() +
                            " values " + kv.values.value().shape_string());
    const int head_dim = kv.width() / kv.heads;
    const int value_dim = kv.values.value().dim(1) / kv.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    std::vector<ad::Var> outputs;
    ad::Var weights;
    for (int h = 0; h < kv.heads; ++h) {
        ad::Var qh = kv.heads == 1 ? queries : column_slice(queries, h * head_dim, head_dim);
        ad::Var kh = kv.heads == 1 ? kv.keys : column_slice(kv.keys, h * head_dim, head_dim);
        ad::Var vh = kv.heads == 1 ? kv.values : column_slice(kv.values, h * value_dim, value_dim);
        ad::Var w = ad::softmax_rows(ad::scale(ad::matmul(qh, kh, false, true), scale), column_bias);
        outputs.push_back(ad::matmul(w, vh));
        weights = h == 0 ? w : ad::concat_rows(weights, w);
    }
    return {concat_columns(outputs), weights};
}

}  // namespace vton::diffusion
