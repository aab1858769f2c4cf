#include "vton/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace vton {

namespace {
std::size_t product(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeMismatch("negative tensor dimension");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != product(shape_)) throw ShapeMismatch("tensor data does not match shape " + shape_string());
}

Tensor Tensor::randn(std::vector<int> shape, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : t.data_) v = normal(rng);
    return t;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
    Tensor t = *this;
    if (product(shape) != numel()) throw ShapeMismatch("cannot reshape " + shape_string());
    t.shape_ = std::move(shape);
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_string() const {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) out << (i ? ", " : "") << shape_[i];
    out << ']';
    return out.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeMismatch(std::string(what) + ": shapes " + a.shape_string() + " and " + b.shape_string() + " differ");
}

double mean_squared_error(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mean_squared_error");
    if (a.numel() == 0) throw ShapeMismatch("mean_squared_error: empty tensors");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc / static_cast<double>(a.numel());
}

std::uint64_t checksum(std::span<const double> values, std::uint64_t h) {
    for (double v : values) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof v);
        for (unsigned char b : bytes) {
            h ^= b;
            h *= 1099511628211ULL;
        }
    }
    return h;
}

}  // namespace vton
