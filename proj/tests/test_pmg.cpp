#include <doctest.h>

#include "support.hpp"
#include "vton/pmg.hpp"
#include "vton/png_io.hpp"

using namespace vton;
using namespace vton::pmg;

namespace {

class FixedSegmenter final : public Segmenter {
public:
    explicit FixedSegmenter(LabelMap labels) : labels_(std::move(labels)) {}
    std::string id() const override { return "fixed"; }
    LabelMap segment(const RgbImage&) const override { return labels_; }

private:
    LabelMap labels_;
};

diffusion::UNetConfig live_output() {
    diffusion::UNetConfig c;
    c.zero_init_output = false;
    return c;
}

}  // namespace

TEST_CASE("config validation") {
    PMGConfig c;
    CHECK_NOTHROW(validate(c));
    c.sigma = 1.0;
    CHECK_THROWS_AS(validate(c), RangeViolation);
    c.sigma = -0.1;
    CHECK_THROWS_AS(validate(c), RangeViolation);
    c.sigma = 0.5;
    c.steps = 1;
    CHECK_THROWS_AS(validate(c), RangeViolation);
    CHECK(garment_classes(Category::dresses) == std::set<Label>{Label::dress});
}

TEST_CASE("refine_mask is (targets ∪ fine) minus hands and feet") {
    const auto g = testing::make_sample(3);
    const Mask fine = build_fine_mask(g.sample);
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> lab(0, kLabelCount - 1);
    LabelMap seg(g.sample.size(), 0);
    for (auto& v : seg.values()) v = static_cast<std::uint8_t>(lab(rng));

    PMGConfig c;
    const Mask r = refine_mask(g.sample.person, fine, FixedSegmenter(seg), c, g.sample.parsing);
    const Mask hf = hand_foot_mask(g.sample.parsing);
    for (int y = 0; y < seg.height(); ++y)
        for (int x = 0; x < seg.width(); ++x) {
            const auto l = static_cast<Label>(seg(y, x));
            const bool target = l == Label::upper_clothes || l == Label::lower_clothes || l == Label::dress;
            REQUIRE(r.bits(y, x) == ((target || fine.bits(y, x)) && !hf.bits(y, x) ? 1 : 0));
        }
    CHECK(r.kind == MaskKind::refined);
    CHECK(is_subset(mask_difference(fine, hf), r));

    c.target_classes = {Label::hair};
    const Mask hair = refine_mask(g.sample.person, fine, FixedSegmenter(seg), c, g.sample.parsing);
    for (int y = 0; y < seg.height(); ++y)
        for (int x = 0; x < seg.width(); ++x)
            if (seg(y, x) == static_cast<std::uint8_t>(Label::hair) && !hf.bits(y, x)) REQUIRE(hair.bits(y, x) == 1);

    CHECK_THROWS_AS(refine_mask(g.sample.person, fine, FixedSegmenter(LabelMap(4, 4, 0)), c, g.sample.parsing),
                    SegmenterShapeMismatch);
}

TEST_CASE("hands excluded even when the segmenter calls them garment") {
    const auto g = testing::make_sample(5);
    LabelMap seg(g.sample.size(), static_cast<std::uint8_t>(Label::upper_clothes));
    const Mask r = refine_mask(g.sample.person, build_fine_mask(g.sample), FixedSegmenter(seg), PMGConfig{},
                               g.sample.parsing);
    CHECK(mask_intersect(r, hand_foot_mask(g.sample.parsing)).empty_region());
    CHECK(r.count() + hand_foot_mask(g.sample.parsing).count() == static_cast<std::size_t>(seg.values().size()));
}

TEST_CASE("threshold segmenter labels palette colours") {
    const auto g = testing::make_sample(6);
    const auto seg = ThresholdSegmenter::for_sample(g.sample);
    CHECK(seg.palette().front().label == Label::upper_clothes);
    const LabelMap labels = seg.segment(g.sample.person);
    CHECK(labels.size() == g.sample.size());
    std::size_t agree = 0;
    for (std::size_t i = 0; i < labels.values().size(); ++i)
        if (labels.values()[i] == g.sample.parsing.values()[i]) ++agree;
    CHECK(agree > labels.values().size() / 2);
}

TEST_CASE("external segmenter runs a command") {
    testing::TempDir dir;
    const auto g = testing::make_sample(7);
    png::write_gray(dir.path() / "labels.png", g.sample.parsing);
    ExternalCommandSegmenter seg("cp " + (dir.path() / "labels.png").string() + " {output}", dir.path() / "work");
    CHECK(seg.segment(g.sample.person) == g.sample.parsing);
    ExternalCommandSegmenter failing("false", dir.path() / "work");
    CHECK_THROWS_AS(failing.segment(g.sample.person), Error);
    PMGConfig c;
    c.segmentation_backend = "external";
    CHECK(make_segmenter(c, g.sample, "true", dir.path())->id() == "external");
    c.segmentation_backend = "nope";
    CHECK_THROWS(make_segmenter(c, g.sample));
}

TEST_CASE("PMG runs a 15-step coarse pass then a 30-step final pass and preserves the outside") {
    const auto models = diffusion::make_models(live_output(), 2);
    const Pipeline pipe{*models.main, *models.reference};
    const auto g = testing::make_sample(8);
    PMGConfig c;
    const auto seg = ThresholdSegmenter::for_sample(g.sample);
    const PMGResult r = pmg_generate(pipe, g.sample, testing::prompts_for(g), c, seg);
    CHECK(r.coarse_calls == 15);
    CHECK(r.final_calls == 30);
    CHECK(is_subset(mask_difference(r.fine, hand_foot_mask(g.sample.parsing)), r.refined));
    const Mask outside = mask_complement(r.refined);
    CHECK(max_abs_difference(r.image, g.sample.person, &outside.bits) == 0.0f);
    CHECK(r.image.size() == g.sample.size());

    const PMGResult again = pmg_generate(pipe, g.sample, testing::prompts_for(g), c, seg);
    CHECK(again.image == r.image);
    CHECK(again.refined.bits == r.refined.bits);

    c.sigma = 0.9;
    CHECK(pmg_generate(pipe, g.sample, testing::prompts_for(g), c, seg).coarse_calls == 3);
}

TEST_CASE("coarse output responds to the prompt") {
    const auto models = diffusion::make_models(live_output(), 2);
    const Pipeline pipe{*models.main, *models.reference};
    const auto g = testing::make_sample(9);
    const Mask coarse = build_coarse_mask(g.sample);
    PMGConfig c;
    const auto a = pmg_coarse_pass(pipe, g.sample, coarse, testing::prompts_for(g, {{"tucking style", "untucked"}}), c);
    const auto b =
        pmg_coarse_pass(pipe, g.sample, coarse, testing::prompts_for(g, {{"tucking style", "fully tucked in"}}), c);
    CHECK(a.denoiser_calls == 15);
    CHECK_FALSE(a.latent == b.latent);
}

TEST_CASE("generate_with_mask pastes outside the given mask") {
    const auto models = diffusion::make_models(live_output(), 2);
    const Pipeline pipe{*models.main, *models.reference};
    const auto g = testing::make_sample(10);
    const Mask fine = build_fine_mask(g.sample);
    const PMGResult r = generate_with_mask(pipe, g.sample, fine, testing::prompts_for(g), PMGConfig{});
    CHECK(r.coarse_calls == 0);
    CHECK(r.final_calls == 30);
    const Mask outside = mask_complement(fine);
    CHECK(max_abs_difference(r.image, g.sample.person, &outside.bits) == 0.0f);
}

TEST_CASE("paste_outside") {
    RgbImage gen(2, 2, 1.0f), orig(2, 2, 0.0f);
    Plane<std::uint8_t> m(Size{2, 2}, 0);
    m(0, 1) = 1;
    const RgbImage out = paste_outside(gen, orig, Mask(m, MaskKind::refined));
    CHECK(out.at(0, 1, 2) == 1.0f);
    CHECK(out.at(0, 0, 0) == 0.0f);
    CHECK(out.at(1, 1, 1) == 0.0f);
}

TEST_CASE("sigma ablation rows and table") {
    const auto models = diffusion::make_models(diffusion::UNetConfig{}, 2);
    const Pipeline pipe{*models.main, *models.reference};
    PMGConfig c;
    c.steps = 10;
    std::vector<TryOnSample> samples;
    std::vector<PromptPair> prompts;
    for (std::uint64_t s = 11; s < 13; ++s) {
        const auto g = testing::make_sample(s);
        samples.push_back(g.sample);
        prompts.push_back(testing::prompts_for(g));
    }
    const auto rows = sigma_ablation(pipe, samples, prompts, c, {0.8, 0.3});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].coarse_steps == 2);
    CHECK(rows[1].coarse_steps == 7);
    CHECK(rows[0].denoiser_calls == 2 * (2 + 10));
    for (const auto& r : rows) {
        CHECK(r.ssim > 0.0);
        CHECK(r.ssim <= 1.0);
        CHECK(r.refined_fraction > 0.0);
    }
    const std::string table = ablation_table(rows);
    CHECK(table.rfind("sigma,SSIM,LPIPS,FID,KID,coarse_steps,denoiser_calls,refined_fraction\n", 0) == 0);
    CHECK(table.find("0.8,") != std::string::npos);
    CHECK(table.find(",-,-,-,") != std::string::npos);
}
