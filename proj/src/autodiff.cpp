#include "vton/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "vton/kernels.hpp"

namespace vton::ad {

Tensor& Node::grad_buffer() {
    if (grad.numel() != value.numel() || grad.shape() != value.shape()) grad = Tensor::zeros_like(value);
    return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
    if (node_) node_->grad = Tensor();
}

Var Var::make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
    Var out(std::move(value), false);
    for (const Var& p : parents) {
        out.node_->parents.push_back(p.node_);
        if (p.requires_grad()) out.node_->requires_grad = true;
    }
    if (out.node_->requires_grad)
        out.node_->backward = std::move(backward);
    else
        out.node_->parents.clear();
    return out;
}

void Var::backward() const {
    if (node_->value.numel() != 1) throw ShapeMismatch("backward() needs a scalar");
    if (!node_->requires_grad) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && n->grad.numel() == n->value.numel()) n->backward(*n);
    }
}

Var constant(Tensor value) { return Var(std::move(value), false); }

namespace {

Tensor& grad_of(Node& self, std::size_t parent) { return self.parents[parent]->grad_buffer(); }
bool wants(const Node& self, std::size_t parent) { return self.parents[parent]->requires_grad; }

}  // namespace

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
    return Var::make(std::move(out), {a, b}, [](Node& self) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (!wants(self, p)) continue;
            Tensor& g = grad_of(self, p);
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
    return Var::make(std::move(out), {a, b}, [](Node& self) {
        if (wants(self, 0)) {
            Tensor& g = grad_of(self, 0);
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
        }
        if (wants(self, 1)) {
            Tensor& g = grad_of(self, 1);
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a.value();
    for (double& v : out.values()) v *= s;
    return Var::make(std::move(out), {a}, [s](Node& self) {
        Tensor& g = grad_of(self, 0);
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += s * self.grad[i];
    });
}

Var silu(const Var& a) {
    Tensor out = a.value();
    for (double& v : out.values()) v = v / (1.0 + std::exp(-v));
    return Var::make(std::move(out), {a}, [](Node& self) {
        const Tensor& x = self.parents[0]->value;
        Tensor& g = grad_of(self, 0);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const double sig = 1.0 / (1.0 + std::exp(-x[i]));
            g[i] += self.grad[i] * sig * (1.0 + x[i] * (1.0 - sig));
        }
    });
}

Var add_channel_bias(const Var& x, const Var& v) {
    const Tensor& xv = x.value();
    if (xv.rank() != 3 || v.value().numel() != static_cast<std::size_t>(xv.dim(0)))
        throw ShapeMismatch("add_channel_bias: " + xv.shape_string() + " with " + v.value().shape_string());
    const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
    Tensor out = xv;
    for (int c = 0; c < xv.dim(0); ++c)
        for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] += v.value()[c];
    return Var::make(std::move(out), {x, v}, [plane](Node& self) {
        if (wants(self, 0)) {
            Tensor& g = grad_of(self, 0);
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
        }
        if (wants(self, 1)) {
            Tensor& g = grad_of(self, 1);
            for (std::size_t c = 0; c < g.numel(); ++c) {
                double acc = 0.0;
                for (std::size_t i = 0; i < plane; ++i) acc += self.grad[c * plane + i];
                g[c] += acc;
            }
        }
    });
}

Var conv2d(const Var& x, const Var& w, const Var& b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    if (xv.rank() != 3 || wv.rank() != 4 || wv.dim(1) != xv.dim(0) || wv.dim(2) != wv.dim(3) ||
        b.value().numel() != static_cast<std::size_t>(wv.dim(0)))
        throw ShapeMismatch("conv2d: input " + xv.shape_string() + " weight " + wv.shape_string());
    const kernels::ConvShape shape{xv.dim(0), wv.dim(0), xv.dim(1), xv.dim(2), wv.dim(2)};
    Tensor out({shape.out_channels, shape.height, shape.width});
    kernels::parallel::conv2d_forward(xv.values(), wv.values(), b.value().values(), out.values(), shape);
    return Var::make(std::move(out), {x, w, b}, [shape](Node& self) {
        if (wants(self, 0))
            kernels::parallel::conv2d_backward_input(self.grad.values(), self.parents[1]->value.values(),
                                                     grad_of(self, 0).values(), shape);
        if (wants(self, 1) || wants(self, 2)) {
            Tensor& gw = grad_of(self, 1);
            Tensor& gb = grad_of(self, 2);
            kernels::parallel::conv2d_backward_weight(self.grad.values(), self.parents[0]->value.values(), gw.values(),
                                                      gb.values(), shape);
        }
    });
}

Var matmul(const Var& a, const Var& b, bool ta, bool tb) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2) throw ShapeMismatch("matmul needs rank-2 operands");
    const int m = ta ? av.dim(1) : av.dim(0);
    const int k = ta ? av.dim(0) : av.dim(1);
    const int kb = tb ? bv.dim(1) : bv.dim(0);
    const int n = tb ? bv.dim(0) : bv.dim(1);
    if (k != kb) throw ShapeMismatch("matmul: " + av.shape_string() + " x " + bv.shape_string());
    Tensor out({m, n});
    kernels::parallel::matmul(av.values(), bv.values(), out.values(), m, k, n, ta, tb);
    return Var::make(std::move(out), {a, b}, [m, k, n, ta, tb](Node& self) {
        const Tensor& A = self.parents[0]->value;
        const Tensor& B = self.parents[1]->value;
        const Tensor& G = self.grad;  // [m, n]
        if (wants(self, 0)) {
            // dA_eff[m, k] = G * B_eff^T ; stored transposed when ta.
            Tensor tmp(ta ? std::vector<int>{k, m} : std::vector<int>{m, k});
            if (!ta)
                kernels::parallel::matmul(G.values(), B.values(), tmp.values(), m, n, k, false, !tb);
            else
                kernels::parallel::matmul(B.values(), G.values(), tmp.values(), k, n, m, tb, true);
            Tensor& g = grad_of(self, 0);
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += tmp[i];
        }
        if (wants(self, 1)) {
            // dB_eff[k, n] = A_eff^T * G ; stored transposed when tb.
            Tensor tmp(tb ? std::vector<int>{n, k} : std::vector<int>{k, n});
            if (!tb)
                kernels::parallel::matmul(A.values(), G.values(), tmp.values(), k, m, n, !ta, false);
            else
                kernels::parallel::matmul(G.values(), A.values(), tmp.values(), n, m, k, true, ta);
            Tensor& g = grad_of(self, 1);
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += tmp[i];
        }
    });
}

Var add_row_bias(const Var& x, const Var& b) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2 || b.value().numel() != static_cast<std::size_t>(xv.dim(1)))
        throw ShapeMismatch("add_row_bias: " + xv.shape_string() + " with " + b.value().shape_string());
    const int rows = xv.dim(0);
    const int cols = xv.dim(1);
    Tensor out = xv;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out[r * cols + c] += b.value()[c];
    return Var::make(std::move(out), {x, b}, [rows, cols](Node& self) {
        if (wants(self, 0)) {
            Tensor& g = grad_of(self, 0);
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
        }
        if (wants(self, 1)) {
            Tensor& g = grad_of(self, 1);
            for (int c = 0; c < cols; ++c) {
                double acc = 0.0;
                for (int r = 0; r < rows; ++r) acc += self.grad[r * cols + c];
                g[c] += acc;
            }
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) { return add_row_bias(matmul(x, w), b); }

Var softmax_rows(const Var& x, const std::vector<double>& column_bias) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2) throw ShapeMismatch("softmax_rows needs rank 2");
    const int rows = xv.dim(0);
    const int cols = xv.dim(1);
    if (!column_bias.empty() && column_bias.size() != static_cast<std::size_t>(cols))
        throw ShapeMismatch("softmax_rows: column bias length differs from row length");
    Tensor out(xv.shape());
    for (int r = 0; r < rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < cols; ++c) {
            const double v = xv[r * cols + c] + (column_bias.empty() ? 0.0 : column_bias[c]);
            out[r * cols + c] = v;
            mx = std::max(mx, v);
        }
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) {
            const double e = std::exp(out[r * cols + c] - mx);
            out[r * cols + c] = e;
            sum += e;
        }
        for (int c = 0; c < cols; ++c) out[r * cols + c] /= sum;
    }
    return Var::make(std::move(out), {x}, [rows, cols](Node& self) {
        const Tensor& y = self.value;
        Tensor& g = grad_of(self, 0);
        for (int r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (int c = 0; c < cols; ++c) dot += self.grad[r * cols + c] * y[r * cols + c];
            for (int c = 0; c < cols; ++c) g[r * cols + c] += y[r * cols + c] * (self.grad[r * cols + c] - dot);
        }
    });
}

Var concat_rows(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(1))
        throw ShapeMismatch("concat_rows: " + av.shape_string() + " and " + bv.shape_string());
    Tensor out({av.dim(0) + bv.dim(0), av.dim(1)});
    std::copy(av.values().begin(), av.values().end(), out.values().begin());
    std::copy(bv.values().begin(), bv.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(av.numel()));
    const std::size_t split = av.numel();
    return Var::make(std::move(out), {a, b}, [split](Node& self) {
        if (wants(self, 0)) {
            Tensor& g = grad_of(self, 0);
            for (std::size_t i = 0; i < split; ++i) g[i] += self.grad[i];
        }
        if (wants(self, 1)) {
            Tensor& g = grad_of(self, 1);
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[split + i];
        }
    });
}

Var concat_channels(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 3 || bv.rank() != 3 || av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2))
        throw ShapeMismatch("concat_channels: " + av.shape_string() + " and " + bv.shape_string());
    Tensor out({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
    std::copy(av.values().begin(), av.values().end(), out.values().begin());
    std::copy(bv.values().begin(), bv.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(av.numel()));
    const std::size_t split = av.numel();
    return Var::make(std::move(out), {a, b}, [split](Node& self) {
        if (wants(self, 0)) {
            Tensor& g = grad_of(self, 0);
            for (std::size_t i = 0; i < split; ++i) g[i] += self.grad[i];
        }
        if (wants(self, 1)) {
            Tensor& g = grad_of(self, 1);
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[split + i];
        }
    });
}

Var to_tokens(const Var& x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 3) throw ShapeMismatch("to_tokens needs [C, H, W]");
    const int C = xv.dim(0);
    const int L = xv.dim(1) * xv.dim(2);
    Tensor out({L, C});
    for (int c = 0; c < C; ++c)
        for (int l = 0; l < L; ++l) out[l * C + c] = xv[c * L + l];
    return Var::make(std::move(out), {x}, [C, L](Node& self) {
        Tensor& g = grad_of(self, 0);
        for (int c = 0; c < C; ++c)
            for (int l = 0; l < L; ++l) g[c * L + l] += self.grad[l * C + c];
    });
}

Var from_tokens(const Var& x, int height, int width) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2 || xv.dim(0) != height * width) throw ShapeMismatch("from_tokens: token count mismatch");
    const int C = xv.dim(1);
    const int L = height * width;
    Tensor out({C, height, width});
    for (int c = 0; c < C; ++c)
        for (int l = 0; l < L; ++l) out[c * L + l] = xv[l * C + c];
    return Var::make(std::move(out), {x}, [C, L](Node& self) {
        Tensor& g = grad_of(self, 0);
        for (int c = 0; c < C; ++c)
            for (int l = 0; l < L; ++l) g[l * C + c] += self.grad[c * L + l];
    });
}

Var avg_pool2(const Var& x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 3 || xv.dim(1) % 2 || xv.dim(2) % 2) throw ShapeMismatch("avg_pool2 needs even spatial dims");
    const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    Tensor out({C, H / 2, W / 2});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H / 2; ++y)
            for (int xx = 0; xx < W / 2; ++xx)
                out.at(c, y, xx) = 0.25 * (xv.at(c, 2 * y, 2 * xx) + xv.at(c, 2 * y, 2 * xx + 1) +
                                           xv.at(c, 2 * y + 1, 2 * xx) + xv.at(c, 2 * y + 1, 2 * xx + 1));
    return Var::make(std::move(out), {x}, [C, H, W](Node& self) {
        Tensor& g = grad_of(self, 0);
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx) g.at(c, y, xx) += 0.25 * self.grad.at(c, y / 2, xx / 2);
    });
}

Var upsample2(const Var& x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 3) throw ShapeMismatch("upsample2 needs [C, H, W]");
    const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    Tensor out({C, 2 * H, 2 * W});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < 2 * H; ++y)
            for (int xx = 0; xx < 2 * W; ++xx) out.at(c, y, xx) = xv.at(c, y / 2, xx / 2);
    return Var::make(std::move(out), {x}, [C, H, W](Node& self) {
        Tensor& g = grad_of(self, 0);
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < 2 * H; ++y)
                for (int xx = 0; xx < 2 * W; ++xx) g.at(c, y / 2, xx / 2) += self.grad.at(c, y, xx);
    });
}

Var mse(const Var& a, const Var& b) {
    const double value = mean_squared_error(a.value(), b.value());
    const double n = static_cast<double>(a.value().numel());
    return Var::make(Tensor({1}, {value}), {a, b}, [n](Node& self) {
        const Tensor& A = self.parents[0]->value;
        const Tensor& B = self.parents[1]->value;
        const double s = self.grad[0] * 2.0 / n;
        if (wants(self, 0)) {
            Tensor& g = grad_of(self, 0);
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += s * (A[i] - B[i]);
        }
        if (wants(self, 1)) {
            Tensor& g = grad_of(self, 1);
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= s * (A[i] - B[i]);
        }
    });
}

}  // namespace vton::ad
