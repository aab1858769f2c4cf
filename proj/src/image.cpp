#include "vton/image.hpp"

#include <algorithm>
#include <cmath>

namespace vton {

float max_abs_difference(const RgbImage& a, const RgbImage& b, const Plane<std::uint8_t>* where) {
    if (a.size() != b.size()) throw ShapeMismatch("max_abs_difference: image sizes differ");
    if (where != nullptr && where->size() != a.size()) throw ShapeMismatch("max_abs_difference: selector size differs");
    float worst = 0.0f;
    for (int y = 0; y < a.height(); ++y) {
        for (int x = 0; x < a.width(); ++x) {
            if (where != nullptr && (*where)(y, x) == 0) continue;
            for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(a.at(y, x, c) - b.at(y, x, c)));
        }
    }
    return worst;
}

RgbImage quantize_8bit(const RgbImage& image) {
    RgbImage out = image;
    for (float& v : out.values()) v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
    return out;
}

}  // namespace vton
