#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vton/errors.hpp"

namespace vton {

/// Dense row-major double tensor. Shapes are small ([C, H, W], [L, D], [D]).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, double fill = 0.0);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }
    /// Standard normal entries from `rng`.
    static Tensor randn(std::vector<int> shape, std::mt19937_64& rng);

    const std::vector<int>& shape() const { return shape_; }
    int dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x]; }
    double at(int c, int y, int x) const { return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x]; }

    Tensor reshaped(std::vector<int> shape) const;
    bool all_finite() const;
    bool operator==(const Tensor&) const = default;

    std::string shape_string() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// Mean of squared differences.
double mean_squared_error(const Tensor& a, const Tensor& b);

/// Order-sensitive FNV-1a over the raw bytes of every value.
std::uint64_t checksum(std::span<const double> values, std::uint64_t seed = 1469598103934665603ULL);

}  // namespace vton
