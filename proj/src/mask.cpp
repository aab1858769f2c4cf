#include "vton/mask.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "vton/kernels.hpp"
#include "vton/png_io.hpp"

namespace vton {

std::string_view to_string(MaskKind kind) {
    switch (kind) {
        case MaskKind::fine: return "fine";
        case MaskKind::coarse: return "coarse";
        case MaskKind::dilated: return "dilated";
        case MaskKind::refined: return "refined";
        case MaskKind::other: return "other";
    }
    return "other";
}

Mask::Mask(Plane<std::uint8_t> b, MaskKind k, std::string src) : bits(std::move(b)), kind(k), source(std::move(src)) {
    for (std::uint8_t& v : bits.values())
        if (v > 1) throw Error("mask values must be 0 or 1");
}

std::size_t Mask::count() const {
    const auto v = bits.values();
    return static_cast<std::size_t>(std::count(v.begin(), v.end(), std::uint8_t{1}));
}

StructuringElement::StructuringElement(Plane<std::uint8_t> bits) : bits_(std::move(bits)) {
    if (bits_.height() != bits_.width() || bits_.height() % 2 == 0)
        throw Error("structuring element must be square with odd side");
    const int r = bits_.height() / 2;
    if (bits_(r, r) == 0) throw Error("structuring element origin must be set");
}

StructuringElement StructuringElement::square(int radius) {
    return StructuringElement(Plane<std::uint8_t>(2 * radius + 1, 2 * radius + 1, 1));
}

StructuringElement StructuringElement::cross(int radius) {
    Plane<std::uint8_t> bits(2 * radius + 1, 2 * radius + 1, 0);
    for (int i = 0; i <= 2 * radius; ++i) {
        bits(radius, i) = 1;
        bits(i, radius) = 1;
    }
    return StructuringElement(std::move(bits));
}

int default_n_max(Size size) { return (std::max(size.height, size.width) + 15) / 16; }

// ---------------------------------------------------------------------------

std::vector<Label> fine_mask_labels(Category category) {
    switch (category) {
        case Category::upper_body: return {Label::upper_clothes, Label::arms};
        case Category::lower_body: return {Label::lower_clothes, Label::legs};
        case Category::dresses: return {Label::dress, Label::arms, Label::legs};
    }
    return {};
}

namespace {

Label garment_label(Category category) {
    switch (category) {
        case Category::upper_body: return Label::upper_clothes;
        case Category::lower_body: return Label::lower_clothes;
        case Category::dresses: return Label::dress;
    }
    return Label::upper_clothes;
}

void require_same_shape(const Mask& a, const Mask& b, const char* what) {
    if (a.size() != b.size()) throw ShapeMismatch(std::string(what) + ": mask shapes differ");
}

}  // namespace

Mask build_fine_mask(const TryOnSample& sample) {
    const LabelMap& parse = sample.parsing;
    const auto labels = fine_mask_labels(sample.category);
    const auto garment = static_cast<std::uint8_t>(garment_label(sample.category));

    Plane<std::uint8_t> bits(parse.size(), 0);
    bool has_garment = false;
    const auto in = parse.values();
    auto out = bits.values();
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i] == garment) has_garment = true;
        for (Label l : labels)
            if (in[i] == static_cast<std::uint8_t>(l)) out[i] = 1;
    }
    if (!has_garment)
        throw EmptyRegion("sample " + sample.sample_id + ": no " + std::string(label_name(garment_label(sample.category))) +
                          " pixels for category " + std::string(to_string(sample.category)));
    return Mask(std::move(bits), MaskKind::fine, "parse:" + std::string(to_string(sample.category)));
}

int coarse_margin(Size size) { return std::max(2, static_cast<int>(std::lround(size.height / 32.0))); }

PixelRect coarse_rectangle(const TryOnSample& sample) {
    std::vector<Joint> required;
    std::vector<Joint> optional;
    switch (sample.category) {
        case Category::upper_body:
            required = {Joint::r_shoulder, Joint::l_shoulder, Joint::r_hip, Joint::l_hip};
            optional = {Joint::r_elbow, Joint::l_elbow, Joint::r_wrist, Joint::l_wrist};
            break;
        case Category::lower_body:
            required = {Joint::r_hip, Joint::l_hip, Joint::r_ankle, Joint::l_ankle};
            optional = {Joint::r_knee, Joint::l_knee};
            break;
        case Category::dresses:
            required = {Joint::r_shoulder, Joint::l_shoulder, Joint::r_knee, Joint::l_knee};
            optional = {Joint::r_elbow, Joint::l_elbow, Joint::r_wrist, Joint::l_wrist, Joint::r_hip, Joint::l_hip};
            break;
    }
    if (sample.pose.size() != static_cast<std::size_t>(kJointCount))
        throw PoseIncomplete("sample " + sample.sample_id + ": pose has " + std::to_string(sample.pose.size()) + " keypoints");
    for (Joint j : required)
        if (sample.joint(j).confidence < kKeypointConfidence)
            throw PoseIncomplete("sample " + sample.sample_id + ": keypoint " + std::to_string(static_cast<int>(j)) +
                                 " below confidence threshold");

    // Rows span the first and last required pair; columns span every confident joint used.
    const Joint top_pair[2] = {required[0], required[1]};
    const Joint bottom_pair[2] = {required[2], required[3]};
    double ymin = std::min(sample.joint(top_pair[0]).y, sample.joint(top_pair[1]).y);
    double ymax = std::max(sample.joint(bottom_pair[0]).y, sample.joint(bottom_pair[1]).y);
    double xmin = 1e300, xmax = -1e300;
    auto take_x = [&](Joint j) {
        xmin = std::min(xmin, sample.joint(j).x);
        xmax = std::max(xmax, sample.joint(j).x);
    };
    for (Joint j : required) take_x(j);
    for (Joint j : optional)
        if (sample.joint(j).confidence >= kKeypointConfidence) take_x(j);

    const Size size = sample.size();
    const int m = coarse_margin(size);
    PixelRect r;
    r.top = std::clamp(static_cast<int>(std::floor(ymin)) - m, 0, size.height - 1);
    r.bottom = std::clamp(static_cast<int>(std::ceil(ymax)) + m, 0, size.height - 1);
    r.left = std::clamp(static_cast<int>(std::floor(xmin)) - m, 0, size.width - 1);
    r.right = std::clamp(static_cast<int>(std::ceil(xmax)) + m, 0, size.width - 1);
    return r;
}

Mask build_coarse_mask(const TryOnSample& sample) {
    const PixelRect r = coarse_rectangle(sample);
    const Mask fine = build_fine_mask(sample);
    Plane<std::uint8_t> bits = fine.bits;
    for (int y = r.top; y <= r.bottom; ++y)
        for (int x = r.left; x <= r.right; ++x) bits(y, x) = 1;
    const auto parse = sample.parsing.values();
    auto out = bits.values();
    for (std::size_t i = 0; i < out.size(); ++i)
        if (is_hand_or_foot(parse[i])) out[i] = 0;
    return Mask(std::move(bits), MaskKind::coarse, "pose-rect:" + std::string(to_string(sample.category)));
}

// ---------------------------------------------------------------------------

Mask dilate(const Mask& m, const StructuringElement& b, int n) {
    if (n < 0) throw Error("dilate: negative iteration count");
    Mask out = m;
    if (n == 0 || m.bits.empty()) return out;
    Plane<std::uint8_t> scratch(m.size(), 0);
    const auto element = b.bits().values();
    for (int i = 0; i < n; ++i) {
        kernels::parallel::dilate_once(out.bits.values(), scratch.values(), m.bits.height(), m.bits.width(), element,
                                       b.radius());
        if (scratch == out.bits) break;  // fixpoint: further iterations change nothing
        std::swap(out.bits, scratch);
    }
    return out;
}

int draw_dilation_count(const DilationSpec& spec) {
    if (spec.n_max < 0) throw Error("dilation n_max must be non-negative");
    std::mt19937_64 rng(spec.rng_seed);
    std::uniform_int_distribution<int> pick(0, spec.n_max);
    return pick(rng);
}

Mask dilation_augment_with(const Mask& fine, const Mask& coarse, const StructuringElement& b, int n) {
    require_same_shape(fine, coarse, "random_dilation_augment");
    if (!is_subset(fine, coarse)) throw FineNotInCoarse("fine mask extends outside the coarse mask");
    Mask out = mask_intersect(dilate(fine, b, n), coarse);
    out.kind = MaskKind::dilated;
    out.source = "dilate:n=" + std::to_string(n);
    return out;
}

Mask random_dilation_augment(const Mask& fine, const Mask& coarse, const DilationSpec& spec) {
    return dilation_augment_with(fine, coarse, spec.element, draw_dilation_count(spec));
}

namespace {

template <typename Op>
Mask combine(const Mask& a, const Mask& b, const char* what, Op op) {
    require_same_shape(a, b, what);
    Plane<std::uint8_t> bits(a.size(), 0);
    const auto va = a.bits.values();
    const auto vb = b.bits.values();
    auto out = bits.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = op(va[i], vb[i]);
    return Mask(std::move(bits), MaskKind::other, what);
}

}  // namespace

Mask mask_union(const Mask& a, const Mask& b) {
    return combine(a, b, "union", [](std::uint8_t x, std::uint8_t y) -> std::uint8_t { return x | y; });
}

Mask mask_intersect(const Mask& a, const Mask& b) {
    return combine(a, b, "intersect", [](std::uint8_t x, std::uint8_t y) -> std::uint8_t { return x & y; });
}

Mask mask_difference(const Mask& a, const Mask& b) {
    return combine(a, b, "difference", [](std::uint8_t x, std::uint8_t y) -> std::uint8_t { return x & (1 - y); });
}

Mask mask_complement(const Mask& a) {
    Mask out = a;
    for (std::uint8_t& v : out.bits.values()) v = 1 - v;
    out.kind = MaskKind::other;
    out.source = "complement";
    return out;
}

bool is_subset(const Mask& a, const Mask& b) {
    require_same_shape(a, b, "is_subset");
    const auto va = a.bits.values();
    const auto vb = b.bits.values();
    for (std::size_t i = 0; i < va.size(); ++i)
        if (va[i] && !vb[i]) return false;
    return true;
}

Mask hand_foot_mask(const LabelMap& parsing) {
    Plane<std::uint8_t> bits(parsing.size(), 0);
    const auto in = parsing.values();
    auto out = bits.values();
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = is_hand_or_foot(in[i]) ? 1 : 0;
    return Mask(std::move(bits), MaskKind::other, "hands+feet");
}

Mask resize_to_latent(const Mask& m, int factor) {
    if (factor < 1) throw IndivisibleShape("resize factor must be positive");
    if (m.bits.height() % factor != 0 || m.bits.width() % factor != 0)
        throw IndivisibleShape("mask " + std::to_string(m.bits.height()) + "x" + std::to_string(m.bits.width()) +
                               " not divisible by " + std::to_string(factor));
    Plane<std::uint8_t> bits(m.bits.height() / factor, m.bits.width() / factor, 0);
    for (int y = 0; y < bits.height(); ++y)
        for (int x = 0; x < bits.width(); ++x) bits(y, x) = m.bits(y * factor, x * factor);
    return Mask(std::move(bits), m.kind, m.source + "|resize/" + std::to_string(factor));
}

void write_mask_png(const std::filesystem::path& path, const Mask& m) {
    Plane<std::uint8_t> scaled = m.bits;
    for (std::uint8_t& v : scaled.values()) v = v ? 255 : 0;
    png::write_gray(path, scaled);
}

Mask read_mask_png(const std::filesystem::path& path, MaskKind kind) {
    Plane<std::uint8_t> bits = png::read_gray(path);
    for (std::uint8_t& v : bits.values()) {
        if (v != 0 && v != 255) throw Error("mask PNG " + path.string() + " is not strictly {0, 255}");
        v = v ? 1 : 0;
    }
    return Mask(std::move(bits), kind, path.filename().string());
}

}  // namespace vton
