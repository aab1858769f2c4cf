#include "vton/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "vton/mask.hpp"
#include "vton/png_io.hpp"

namespace vton::synthetic {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Rgb {
    float r, g, b;
};

struct NamedColor {
    const char* name;
    Rgb rgb;
};

constexpr std::array<NamedColor, 6> kGarmentColors = {{
    {"red", {0.80f, 0.15f, 0.15f}},
    {"navy", {0.12f, 0.16f, 0.45f}},
    {"green", {0.20f, 0.55f, 0.25f}},
    {"mustard", {0.85f, 0.68f, 0.15f}},
    {"white", {0.93f, 0.93f, 0.90f}},
    {"black", {0.10f, 0.10f, 0.12f}},
}};

constexpr std::array<Rgb, 4> kSkinTones = {{
    {0.96f, 0.80f, 0.69f}, {0.87f, 0.67f, 0.52f}, {0.67f, 0.47f, 0.33f}, {0.45f, 0.30f, 0.20f},
}};

constexpr std::array<const char*, 4> kMaterials = {"cotton", "denim", "knit", "silk"};

/// Raster painter that keeps the parse map in sync with the RGB image.
class Canvas {
public:
    Canvas(Size size, Rgb background) : image_(size), parse_(size, 0) {
        for (int y = 0; y < size.height; ++y)
            for (int x = 0; x < size.width; ++x) image_.set_pixel(y, x, background.r, background.g, background.b);
    }

    void rect(double y0, double y1, double x0, double x1, Label label, Rgb color, bool striped = false) {
        const int ys = std::max(0, static_cast<int>(std::lround(y0)));
        const int ye = std::min(image_.height(), static_cast<int>(std::lround(y1)));
        const int xs = std::max(0, static_cast<int>(std::lround(x0)));
        const int xe = std::min(image_.width(), static_cast<int>(std::lround(x1)));
        for (int y = ys; y < ye; ++y)
            for (int x = xs; x < xe; ++x) put(y, x, label, color, striped);
    }

    void disc(double cy, double cx, double radius, Label label, Rgb color) {
        for (int y = 0; y < image_.height(); ++y)
            for (int x = 0; x < image_.width(); ++x) {
                const double dy = y + 0.5 - cy;
                const double dx = x + 0.5 - cx;
                if (dy * dy + dx * dx <= radius * radius) put(y, x, label, color, false);
            }
    }

    RgbImage& image() { return image_; }
    LabelMap& parse() { return parse_; }

private:
    void put(int y, int x, Label label, Rgb c, bool striped) {
        const float shade = striped && (y / 2) % 2 == 0 ? 0.75f : 1.0f;
        image_.set_pixel(y, x, c.r * shade, c.g * shade, c.b * shade);
        parse_(y, x) = static_cast<std::uint8_t>(label);
    }

    RgbImage image_;
    LabelMap parse_;
};

struct Draw {
    Category category;
    Rgb background, skin, hair, garment, other_garment;
    std::string garment_color, material, body_shape, gender, tucking, fit, hand_pose;
    bool long_sleeve;
    bool long_length;  // trousers vs shorts, maxi vs knee dress
    double cx;
    double half_torso;
};

Draw draw_attributes(std::uint64_t seed, const Options& opt) {
    std::mt19937_64 rng(seed);
    auto pick = [&](int n) { return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng)); };
    Draw d{};
    d.category = opt.category;
    const float bg = 0.78f + 0.04f * static_cast<float>(pick(4));
    d.background = {bg, bg * 0.98f, bg * 0.93f};
    d.skin = kSkinTones[static_cast<std::size_t>(pick(4))];
    d.hair = {0.15f + 0.1f * static_cast<float>(pick(3)), 0.10f, 0.06f};
    const auto& gc = kGarmentColors[static_cast<std::size_t>(pick(static_cast<int>(kGarmentColors.size())))];
    d.garment = gc.rgb;
    d.garment_color = gc.name;
    d.other_garment = {0.30f, 0.30f, 0.34f};
    d.material = kMaterials[static_cast<std::size_t>(pick(4))];
    const int shape = pick(3);
    d.body_shape = shape == 0 ? "slim" : shape == 1 ? "average" : "broad";
    d.gender = pick(2) == 0 ? "woman" : "man";
    d.tucking = opt.tucking.empty() ? (pick(2) == 0 ? "fully tucked in" : "untucked") : opt.tucking;
    d.fit = pick(2) == 0 ? "tight fit" : "loose fit";
    d.hand_pose = pick(2) == 0 ? "arms down by the sides" : "hands on hips";
    d.long_sleeve = pick(2) == 0;
    d.long_length = pick(2) == 0;
    const double u = opt.size.width / 48.0;
    d.cx = opt.size.width / 2.0 + (pick(3) - 1) * u;
    d.half_torso = (7.0 + shape) * u;
    return d;
}

/// Vertical landmarks in pixels for height H.
struct Rows {
    double s;
    double shoulder() const { return 17 * s; }
    double waist() const { return 34 * s; }
    double hip() const { return 36 * s; }
    double knee() const { return 47 * s; }
    double ankle() const { return 57 * s; }
};

GeneratedSample render(const std::string& id, const Draw& d, const Options& opt) {
    const Size size = opt.size;
    const Rows rows{size.height / 64.0};
    const double s = rows.s;
    const double u = size.width / 48.0;
    const double cx = d.cx;
    const double fit_extra = d.fit == "loose fit" ? 1.5 * u : 0.0;
    const double tw = d.half_torso;
    const double arm_w = 3.0 * u;
    const bool hands_on_hips = d.hand_pose == "hands on hips";

    Canvas canvas(size, d.background);

    // Legs and feet.
    const double leg_w = tw * 0.8;
    canvas.rect(rows.hip(), rows.ankle() + s, cx - leg_w - 0.5 * u, cx - 0.5 * u, Label::legs, d.skin);
    canvas.rect(rows.hip(), rows.ankle() + s, cx + 0.5 * u, cx + leg_w + 0.5 * u, Label::legs, d.skin);
    canvas.rect(rows.ankle() + s, rows.ankle() + 4 * s, cx - leg_w - 1.5 * u, cx - 0.5 * u, Label::feet, {0.2f, 0.15f, 0.1f});
    canvas.rect(rows.ankle() + s, rows.ankle() + 4 * s, cx + 0.5 * u, cx + leg_w + 1.5 * u, Label::feet, {0.2f, 0.15f, 0.1f});

    const bool garment_is_upper = d.category == Category::upper_body;
    const bool garment_is_lower = d.category == Category::lower_body;
    const bool garment_is_dress = d.category == Category::dresses;
    const bool striped = d.material == "knit";

    // Lower clothing (the garment for lower_body, a plain pair of trousers otherwise).
    if (!garment_is_dress) {
        const Rgb color = garment_is_lower ? d.garment : d.other_garment;
        const double hem = garment_is_lower && !d.long_length ? rows.knee() - 2 * s : rows.ankle() - s;
        const double extra = garment_is_lower ? fit_extra : 0.0;
        canvas.rect(rows.waist(), rows.hip() + 2 * s, cx - leg_w - 0.5 * u - extra, cx + leg_w + 0.5 * u + extra,
                    Label::lower_clothes, color, garment_is_lower && striped);
        canvas.rect(rows.hip(), hem, cx - leg_w - 0.5 * u - extra, cx - 0.5 * u, Label::lower_clothes, color,
                    garment_is_lower && striped);
        canvas.rect(rows.hip(), hem, cx + 0.5 * u, cx + leg_w + 0.5 * u + extra, Label::lower_clothes, color,
                    garment_is_lower && striped);
    }

    // Torso garment.
    const Label torso_label = garment_is_dress ? Label::dress : Label::upper_clothes;
    const Rgb torso_color = garment_is_lower ? Rgb{0.85f, 0.85f, 0.82f} : d.garment;
    const double torso_extra = garment_is_lower ? 0.0 : fit_extra;
    double hem = rows.waist();
    if (garment_is_upper && d.tucking == "untucked") hem = rows.hip() + 4 * s;
    if (garment_is_dress) hem = d.long_length ? rows.ankle() - 3 * s : rows.knee();
    canvas.rect(rows.shoulder(), hem, cx - tw - torso_extra, cx + tw + torso_extra, torso_label, torso_color,
                !garment_is_lower && striped);

    // Arms, sleeves, hands.
    const double arm_top = rows.shoulder() + s;
    const double arm_bottom = hands_on_hips ? rows.waist() - 2 * s : rows.hip() + 2 * s;
    const double sleeve_bottom = d.long_sleeve ? arm_bottom - s : arm_top + 6 * s;
    for (int side : {-1, 1}) {
        const double x0 = side < 0 ? cx - tw - torso_extra - arm_w : cx + tw + torso_extra;
        const double x1 = x0 + arm_w;
        canvas.rect(arm_top, arm_bottom, x0, x1, Label::arms, d.skin);
        if (!garment_is_lower)
            canvas.rect(arm_top - s, sleeve_bottom, x0, x1, torso_label, torso_color, striped);
        else
            canvas.rect(arm_top - s, arm_top + 6 * s, x0, x1, Label::upper_clothes, torso_color);
        const double hx0 = hands_on_hips ? (side < 0 ? x1 - 0.5 * u : x0 - 1.5 * u) : x0;
        canvas.rect(arm_bottom, arm_bottom + 3 * s, hx0, hx0 + arm_w + 0.5 * u, Label::hands, d.skin);
    }

    // Neck and head.
    canvas.rect(13 * s, rows.shoulder(), cx - 2 * u, cx + 2 * u, Label::neck, d.skin);
    canvas.disc(8 * s, cx, (d.gender == "woman" ? 6.5 : 5.5) * s, Label::hair, d.hair);
    if (d.gender == "woman") canvas.rect(8 * s, 15 * s, cx - 6 * u, cx - 4 * u, Label::hair, d.hair);
    canvas.disc(9.5 * s, cx, 4.5 * s, Label::face, d.skin);

    GeneratedSample out;
    TryOnSample& t = out.sample;
    t.sample_id = id;
    t.person_id = id;
    t.clothing_id = id;
    t.category = d.category;
    t.person = std::move(canvas.image());
    t.parsing = std::move(canvas.parse());

    // Keypoints (COCO-18; r_* on the image left).
    t.pose.assign(kJointCount, Keypoint{});
    auto set = [&](Joint j, double x, double y) {
        t.pose[static_cast<std::size_t>(j)] = {std::clamp(x, 0.0, size.width - 1.0), std::clamp(y, 0.0, size.height - 1.0), 0.95};
    };
    const double arm_cx = tw + torso_extra + arm_w / 2;
    set(Joint::nose, cx, 10 * s);
    set(Joint::neck, cx, 16 * s);
    set(Joint::r_eye, cx - 1.5 * u, 9 * s);
    set(Joint::l_eye, cx + 1.5 * u, 9 * s);
    set(Joint::r_ear, cx - 4 * u, 9.5 * s);
    set(Joint::l_ear, cx + 4 * u, 9.5 * s);
    set(Joint::r_shoulder, cx - tw, rows.shoulder());
    set(Joint::l_shoulder, cx + tw, rows.shoulder());
    set(Joint::r_elbow, cx - arm_cx, (arm_top + arm_bottom) / 2);
    set(Joint::l_elbow, cx + arm_cx, (arm_top + arm_bottom) / 2);
    set(Joint::r_wrist, cx - arm_cx, arm_bottom);
    set(Joint::l_wrist, cx + arm_cx, arm_bottom);
    set(Joint::r_hip, cx - leg_w / 2, rows.hip());
    set(Joint::l_hip, cx + leg_w / 2, rows.hip());
    set(Joint::r_knee, cx - leg_w / 2, rows.knee());
    set(Joint::l_knee, cx + leg_w / 2, rows.knee());
    set(Joint::r_ankle, cx - leg_w / 2, rows.ankle());
    set(Joint::l_ankle, cx + leg_w / 2, rows.ankle());

    // In-shop garment image on a white backdrop.
    Canvas shop(size, {0.98f, 0.98f, 0.98f});
    const double gx = size.width / 2.0;
    if (garment_is_lower) {
        const double top = 10 * s;
        const double bottom = d.long_length ? 58 * s : 40 * s;
        shop.rect(top, top + 6 * s, gx - 12 * u, gx + 12 * u, Label::lower_clothes, d.garment, striped);
        shop.rect(top + 6 * s, bottom, gx - 12 * u, gx - u, Label::lower_clothes, d.garment, striped);
        shop.rect(top + 6 * s, bottom, gx + u, gx + 12 * u, Label::lower_clothes, d.garment, striped);
    } else {
        const double top = 8 * s;
        const double bottom = garment_is_dress ? (d.long_length ? 60 * s : 50 * s) : 44 * s;
        shop.rect(top, bottom, gx - 11 * u, gx + 11 * u, torso_label, d.garment, striped);
        const double sleeve = d.long_sleeve ? 26 * s : 10 * s;
        shop.rect(top, top + sleeve, gx - 17 * u, gx - 11 * u, torso_label, d.garment, striped);
        shop.rect(top, top + sleeve, gx + 11 * u, gx + 17 * u, torso_label, d.garment, striped);
        shop.rect(top, top + 3 * s, gx - 3 * u, gx + 3 * u, Label::background, {0.98f, 0.98f, 0.98f});
    }
    t.clothing = std::move(shop.image());
    t.agnostic = make_agnostic(t.person, t.parsing, d.category);

    auto& p = out.attributes.person;
    p["body shape"] = d.body_shape;
    p["gender"] = d.gender;
    if (garment_is_upper) p["tucking style"] = d.tucking;
    p["fit"] = d.fit;
    p["hand pose"] = d.hand_pose;
    p["pose description"] = "standing upright facing the camera";
    auto& c = out.attributes.clothing;
    c["material"] = d.material;
    if (garment_is_lower) {
        c["cloth category"] = d.garment_color + (d.long_length ? " trousers" : " shorts");
        c["length"] = d.long_length ? "ankle length" : "above the knee";
    } else {
        c["cloth category"] = d.garment_color + (garment_is_dress ? " dress" : (d.long_sleeve ? " shirt" : " t-shirt"));
        c["sleeve length"] = d.long_sleeve ? "long sleeves" : "short sleeves";
        c["neckline"] = "crew neck";
        if (garment_is_dress) c["length"] = d.long_length ? "maxi length" : "knee length";
    }
    return out;
}

}  // namespace

RgbImage make_agnostic(const RgbImage& person, const LabelMap& parsing, Category category) {
    RgbImage out = person;
    const auto labels = fine_mask_labels(category);
    for (int y = 0; y < person.height(); ++y)
        for (int x = 0; x < person.width(); ++x)
            for (Label l : labels)
                if (parsing(y, x) == static_cast<std::uint8_t>(l)) out.set_pixel(y, x, 0.5f, 0.5f, 0.5f);
    return out;
}

GeneratedSample generate(const std::string& id, std::uint64_t seed, const Options& options) {
    if (options.size.height < 32 || options.size.width < 24)
        throw Error("synthetic samples need at least 32x24 pixels");
    return render(id, draw_attributes(seed, options), options);
}

TryOnSample pair_unpaired(const GeneratedSample& person, const GeneratedSample& garment_source) {
    if (person.sample.category != garment_source.sample.category)
        throw Error("unpaired garment must share the person's category");
    TryOnSample t = person.sample;
    t.clothing_id = garment_source.sample.clothing_id;
    t.sample_id = t.person_id + "__" + t.clothing_id;
    t.clothing = garment_source.sample.clothing;
    return t;
}

fs::path fixtures_path(const fs::path& root) { return root / "fixtures" / "captions.json"; }

void write_dataset(const fs::path& root, const DatasetOptions& options) {
    json fixtures = {{"person", json::object()}, {"clothing", json::object()}};
    std::vector<GeneratedSample> train_samples;

    for (Split split : {Split::train, Split::test}) {
        const int count = split == Split::train ? options.train_count : options.test_count;
        const fs::path sroot = DatasetLayout::split_root(root, split);
        std::vector<GeneratedSample> samples;
        for (int i = 0; i < count; ++i) {
            const std::string id = std::string(split == Split::train ? "tr" : "te") + std::to_string(1000 + i).substr(1);
            Options opt;
            opt.size = options.size;
            opt.category = options.category;
            samples.push_back(generate(id, options.seed * 1000003ULL + (split == Split::train ? 0 : 500000) + i, opt));
            save_sample(sroot, samples.back().sample);
            fixtures["person"][id] = samples.back().attributes.person;
            fixtures["clothing"][id] = samples.back().attributes.clothing;
        }
        std::ofstream paired(DatasetLayout::pairs_file(root, split, Pairing::paired));
        std::ofstream unpaired(DatasetLayout::pairs_file(root, split, Pairing::unpaired));
        for (int i = 0; i < count; ++i) {
            const auto& id = samples[static_cast<std::size_t>(i)].sample.person_id;
            const auto& other = samples[static_cast<std::size_t>((i + 1) % count)].sample.clothing_id;
            paired << id << ' ' << id << ' ' << to_string(options.category) << '\n';
            unpaired << id << ' ' << other << ' ' << to_string(options.category) << '\n';
        }
        if (split == Split::train) train_samples = std::move(samples);
    }

    // Exemplar sets: the first three training samples, labelled with their ground truth.
    const std::size_t n_ex = std::min<std::size_t>(3, train_samples.size());
    for (std::size_t i = 0; i < n_ex; ++i) {
        const auto& g = train_samples[i];
        const fs::path person_dir = root / "exemplars" / "person";
        const fs::path cloth_dir = root / "exemplars" / "clothing";
        png::write_rgb(person_dir / (g.sample.person_id + ".png"), g.sample.person);
        png::write_rgb(cloth_dir / (g.sample.clothing_id + ".png"), g.sample.clothing);
        std::ofstream(person_dir / (g.sample.person_id + ".json")) << json(g.attributes.person).dump(2) << '\n';
        std::ofstream(cloth_dir / (g.sample.clothing_id + ".json")) << json(g.attributes.clothing).dump(2) << '\n';
    }

    fs::create_directories(fixtures_path(root).parent_path());
    std::ofstream(fixtures_path(root)) << fixtures.dump(2) << '\n';
}

}  // namespace vton::synthetic
