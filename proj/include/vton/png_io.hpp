#pragma once

#include <filesystem>

#include "vton/image.hpp"

namespace vton::png {

RgbImage read_rgb(const std::filesystem::path& path);
void write_rgb(const std::filesystem::path& path, const RgbImage& image);

/// 8-bit grayscale; used for label maps (raw class ids) and masks ({0, 255}).
Plane<std::uint8_t> read_gray(const std::filesystem::path& path);
void write_gray(const std::filesystem::path& path, const Plane<std::uint8_t>& plane);

}  // namespace vton::png
