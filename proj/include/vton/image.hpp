#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vton/errors.hpp"

namespace vton {

struct Size {
    int height = 0;
    int width = 0;

    std::size_t area() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
    bool operator==(const Size&) const = default;
};

/// Single-channel row-major raster.
template <typename T>
class Plane {
public:
    Plane() = default;
    Plane(int height, int width, T fill = T{})
        : size_{height, width}, data_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill) {}
    explicit Plane(Size size, T fill = T{}) : Plane(size.height, size.width, fill) {}

    int height() const { return size_.height; }
    int width() const { return size_.width; }
    Size size() const { return size_; }
    bool empty() const { return data_.empty(); }

    T& operator()(int y, int x) { return data_[index(y, x)]; }
    const T& operator()(int y, int x) const { return data_[index(y, x)]; }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    bool operator==(const Plane&) const = default;

private:
    std::size_t index(int y, int x) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(size_.width) + static_cast<std::size_t>(x);
    }

    Size size_{};
    std::vector<T> data_;
};

using LabelMap = Plane<std::uint8_t>;

/// Interleaved RGB image with channel values in [0, 1].
class RgbImage {
public:
    RgbImage() = default;
    RgbImage(int height, int width, float fill = 0.0f)
        : size_{height, width}, data_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * 3, fill) {}
    explicit RgbImage(Size size, float fill = 0.0f) : RgbImage(size.height, size.width, fill) {}

    int height() const { return size_.height; }
    int width() const { return size_.width; }
    Size size() const { return size_; }
    bool empty() const { return data_.empty(); }

    float& at(int y, int x, int c) { return data_[index(y, x, c)]; }
    float at(int y, int x, int c) const { return data_[index(y, x, c)]; }

    void set_pixel(int y, int x, float r, float g, float b) {
        const std::size_t i = index(y, x, 0);
        data_[i] = r;
        data_[i + 1] = g;
        data_[i + 2] = b;
    }

    std::span<float> values() { return data_; }
    std::span<const float> values() const { return data_; }

    bool operator==(const RgbImage&) const = default;

private:
    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(size_.width) + static_cast<std::size_t>(x)) * 3 +
               static_cast<std::size_t>(c);
    }

    Size size_{};
    std::vector<float> data_;
};

/// Max absolute channel difference; only pixels where `where` is nonzero when given.
float max_abs_difference(const RgbImage& a, const RgbImage& b, const Plane<std::uint8_t>* where = nullptr);

/// Quantize to 8 bit and back, the exact round trip a PNG write/read performs.
RgbImage quantize_8bit(const RgbImage& image);

}  // namespace vton
