#pragma once

#include <cstdint>
#include <string>

#include "vton/data_model.hpp"
#include "vton/image.hpp"

namespace vton {

enum class MaskKind { fine, coarse, dilated, refined, other };
std::string_view to_string(MaskKind kind);

/// Binary raster, 1 = region to inpaint.
struct Mask {
    Plane<std::uint8_t> bits;
    MaskKind kind = MaskKind::other;
    std::string source;

    Mask() = default;
    Mask(Plane<std::uint8_t> b, MaskKind k, std::string src = {});

    Size size() const { return bits.size(); }
    std::size_t count() const;
    bool empty_region() const { return count() == 0; }
    bool same_bits(const Mask& other) const { return bits == other.bits; }
};

/// Square (2r+1)x(2r+1) binary element with the origin at the center.
class StructuringElement {
public:
    /// All-ones square of radius r (3x3 for r = 1).
    static StructuringElement square(int radius = 1);
    /// 4-neighbour cross of radius r.
    static StructuringElement cross(int radius = 1);
    /// Throws Error if the origin is unset or the raster is not square and odd.
    explicit StructuringElement(Plane<std::uint8_t> bits);

    int radius() const { return bits_.height() / 2; }
    const Plane<std::uint8_t>& bits() const { return bits_; }

private:
    Plane<std::uint8_t> bits_;
};

struct DilationSpec {
    StructuringElement element = StructuringElement::square(1);
    int n_max = 0;
    std::uint64_t rng_seed = 0;
};

/// ceil(max(H, W) / 16)
int default_n_max(Size size);

// Construction from a sample.

/// Parse classes the fine mask covers for a category.
std::vector<Label> fine_mask_labels(Category category);

Mask build_fine_mask(const TryOnSample& sample);

/// Confidence below which a keypoint counts as missing.
inline constexpr double kKeypointConfidence = 0.1;

/// Pixel margin added around the keypoint rectangle: max(2, round(H / 32)).
int coarse_margin(Size size);

/// Rectangle (inclusive pixel bounds) from the pose alone, before union with the fine mask.
struct PixelRect {
    int top = 0;
    int left = 0;
    int bottom = 0;  // inclusive
    int right = 0;   // inclusive
    bool operator==(const PixelRect&) const = default;
};
PixelRect coarse_rectangle(const TryOnSample& sample);

/// rectangle ∪ fine mask, minus hand and foot pixels.
Mask build_coarse_mask(const TryOnSample& sample);

// Morphology and algebra.

Mask dilate(const Mask& m, const StructuringElement& b, int n);

/// n ~ U{0..n_max} drawn from spec.rng_seed, returns (m_f ⊕ⁿ b) ∩ m_c.
Mask random_dilation_augment(const Mask& fine, const Mask& coarse, const DilationSpec& spec);
/// The same with a caller-chosen n.
Mask dilation_augment_with(const Mask& fine, const Mask& coarse, const StructuringElement& b, int n);
/// The n random_dilation_augment draws for a spec.
int draw_dilation_count(const DilationSpec& spec);

Mask mask_union(const Mask& a, const Mask& b);
Mask mask_intersect(const Mask& a, const Mask& b);
Mask mask_complement(const Mask& a);
Mask mask_difference(const Mask& a, const Mask& b);
bool is_subset(const Mask& a, const Mask& b);

/// Pixels of `parsing` whose label is hand or foot.
Mask hand_foot_mask(const LabelMap& parsing);

/// Nearest-neighbour downsample sampling the top-left pixel of every factor x factor cell.
Mask resize_to_latent(const Mask& m, int factor);

// PNG storage as {0, 255}.
void write_mask_png(const std::filesystem::path& path, const Mask& m);
Mask read_mask_png(const std::filesystem::path& path, MaskKind kind);

}  // namespace vton
