#include "vton/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

namespace vton::png {
namespace {

struct PngImage {
    png_image image;
    PngImage() {
        std::memset(&image, 0, sizeof(image));
        image.version = PNG_IMAGE_VERSION;
    }
    ~PngImage() { png_image_free(&image); }
    PngImage(const PngImage&) = delete;
    PngImage& operator=(const PngImage&) = delete;
};

std::vector<std::uint8_t> read_raw(const std::filesystem::path& path, png_uint_32 format, int& height, int& width) {
    if (!std::filesystem::exists(path)) throw MissingFile("missing file: " + path.string());
    PngImage png;
    if (png_image_begin_read_from_file(&png.image, path.c_str()) == 0)
        throw Error("cannot read PNG " + path.string() + ": " + png.image.message);
    png.image.format = format;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png.image));
    if (png_image_finish_read(&png.image, nullptr, buffer.data(), 0, nullptr) == 0)
        throw Error("cannot decode PNG " + path.string() + ": " + png.image.message);
    height = static_cast<int>(png.image.height);
    width = static_cast<int>(png.image.width);
    return buffer;
}

void write_raw(const std::filesystem::path& path, png_uint_32 format, int height, int width,
               const std::vector<std::uint8_t>& buffer) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    PngImage png;
    png.image.width = static_cast<png_uint_32>(width);
    png.image.height = static_cast<png_uint_32>(height);
    png.image.format = format;
    if (png_image_write_to_file(&png.image, path.c_str(), 0, buffer.data(), 0, nullptr) == 0)
        throw Error("cannot write PNG " + path.string() + ": " + png.image.message);
}

}  // namespace

RgbImage read_rgb(const std::filesystem::path& path) {
    int h = 0, w = 0;
    const auto raw = read_raw(path, PNG_FORMAT_RGB, h, w);
    RgbImage image(h, w);
    auto values = image.values();
    for (std::size_t i = 0; i < raw.size(); ++i) values[i] = static_cast<float>(raw[i]) / 255.0f;
    return image;
}

void write_rgb(const std::filesystem::path& path, const RgbImage& image) {
    std::vector<std::uint8_t> raw(image.values().size());
    const auto values = image.values();
    for (std::size_t i = 0; i < raw.size(); ++i)
        raw[i] = static_cast<std::uint8_t>(std::lround(std::clamp(values[i], 0.0f, 1.0f) * 255.0f));
    write_raw(path, PNG_FORMAT_RGB, image.height(), image.width(), raw);
}

Plane<std::uint8_t> read_gray(const std::filesystem::path& path) {
    int h = 0, w = 0;
    const auto raw = read_raw(path, PNG_FORMAT_GRAY, h, w);
    Plane<std::uint8_t> plane(h, w);
    std::copy(raw.begin(), raw.end(), plane.values().begin());
    return plane;
}

void write_gray(const std::filesystem::path& path, const Plane<std::uint8_t>& plane) {
    const auto values = plane.values();
    write_raw(path, PNG_FORMAT_GRAY, plane.height(), plane.width(), {values.begin(), values.end()});
}

}  // namespace vton::png
