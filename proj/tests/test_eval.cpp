#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "support.hpp"
#include "vton/eval.hpp"
#include "vton/lmm_client.hpp"

using namespace vton;
using namespace vton::eval;
using nlohmann::json;

TEST_CASE("caption normalization") {
    CHECK(normalize_caption("  Fully   Tucked\tIN ") == "fully tucked in");
    CHECK(captions_match("Untucked", "untucked "));
    CHECK_FALSE(captions_match("untucked", "french tucked"));
}

TEST_CASE("base ratio reproduces the published unedited counts") {
    std::vector<std::string> tuck(2032, "fully tucked in");
    std::fill_n(tuck.begin(), 907, "untucked");
    CHECK(std::round(base_ratio(tuck, "untucked") * 10000) / 100 == doctest::Approx(44.64));
    std::vector<std::string> fit(2032, "regular fit");
    std::fill_n(fit.begin(), 470, "Tight Fit");
    CHECK(std::round(base_ratio(fit, "tight fit") * 10000) / 100 == doctest::Approx(23.13));

    std::mt19937_64 rng(1);
    for (int i = 0; i < 20; ++i) {
        std::shuffle(tuck.begin(), tuck.end(), rng);
        CHECK(base_ratio(tuck, "untucked") == 907.0 / 2032.0);
    }
    CHECK_THROWS_AS(base_ratio({}, "x"), EmptyInput);
}

TEST_CASE("alignment accuracy with mock judges") {
    const auto schema = default_schema(Subject::person, Category::upper_body);
    auto reply = [&](const std::string& tucking) {
        json j;
        for (const auto& n : schema.names()) j[n] = "x";
        j["tucking style"] = tucking;
        return j.dump();
    };
    std::vector<std::string> ids;
    for (int i = 0; i < 10; ++i) ids.push_back("e" + std::to_string(i));
    std::vector<std::string> requested;
    const EditedImageGenerator gen = [&](const std::string& id, const std::string& attr, const std::string& caption) {
        requested.push_back(id + "|" + attr + "|" + caption);
        return ImageRef{id + "@edit", "/tmp/" + id + ".png"};
    };

    SUBCASE("perfect judge") {
        FunctionLmmClient judge([&](const LmmQuery&, int) { return reply(" Untucked"); });
        AlignmentTask task{"tucking style", "untucked", ids, &judge, schema, {}, 0};
        CHECK(alignment_accuracy(task, gen) == 1.0);
        CHECK(requested.size() == 10);
        CHECK(requested[3] == "e3|tucking style|untucked");
    }
    SUBCASE("half right") {
        FunctionLmmClient judge([&](const LmmQuery& q, int) {
            const std::string& id = q.request.query.id;
            return reply((id[1] - '0') % 2 ? "untucked" : "fully tucked in");
        });
        AlignmentTask task{"tucking style", "untucked", ids, &judge, schema, {}, 0};
        CHECK(alignment_accuracy(task, gen) == 0.5);
    }
    SUBCASE("errors") {
        auto judge = scripted_client({reply("untucked")});
        CHECK_THROWS_AS(alignment_accuracy({"hat", "red", ids, &judge, schema, {}, 0}, gen), SchemaMismatch);
        CHECK_THROWS_AS(alignment_accuracy({"tucking style", "untucked", {}, &judge, schema, {}, 0}, gen), EmptyInput);
    }
}

TEST_CASE("ssim identities") {
    const auto p = default_ssim_params();
    CHECK(p.c1 == doctest::Approx(1e-4));
    CHECK(p.c2 == doctest::Approx(9e-4));
    const auto g = testing::make_sample(1);
    CHECK(ssim(g.sample.person, g.sample.person) == doctest::Approx(1.0).epsilon(1e-12));
    const double c = ssim(RgbImage(16, 16, 0.0f), RgbImage(16, 16, 1.0f));
    CHECK(c == doctest::Approx(p.c1 / (1.0 + p.c1)).epsilon(1e-9));
    const auto h = testing::make_sample(2);
    const double ab = ssim(g.sample.person, h.sample.person);
    CHECK(ab == doctest::Approx(ssim(h.sample.person, g.sample.person)).epsilon(1e-12));
    CHECK(ab < 1.0);
    CHECK(ab > -1.0);
    CHECK_THROWS_AS(ssim(RgbImage(16, 16), RgbImage(16, 12)), ShapeMismatch);
    CHECK_THROWS_AS(ssim(RgbImage(8, 8), RgbImage(8, 8)), ShapeMismatch);
    CHECK_THROWS_AS(ssim_gray({1, 2}, {1, 2, 3}, 1, 2), ShapeMismatch);
}

TEST_CASE("diversity pairs") {
    const CaptionedGenerator gen = [](const std::string&, const std::string&, const std::string& caption) {
        return RgbImage(16, 16, caption == "a" ? 0.2f : 0.8f);
    };
    const auto r = diversity_pairs(gen, {"x", "y", "z"}, "tucking style", "a", "b");
    CHECK(r.pairs == 3);
    CHECK_FALSE(r.perceptual_mean.has_value());
    CHECK(r.ssim_mean < 0.5);
    const auto same = diversity_pairs(gen, {"x"}, "tucking style", "a", "a", [](const RgbImage&, const RgbImage&) {
        return 0.25;
    });
    CHECK(same.ssim_mean == doctest::Approx(1.0));
    CHECK(same.perceptual_mean == 0.25);
    CHECK_THROWS_AS(diversity_pairs(gen, {}, "t", "a", "b"), EmptyInput);
}

TEST_CASE("jaccard and STS agreement") {
    CHECK(jaccard_similarity("Fully tucked in", "fully  tucked in") == 1.0);
    CHECK(jaccard_similarity("fully tucked in", "untucked") == 0.0);
    CHECK(jaccard_similarity("tight fit", "loose fit") == doctest::Approx(1.0 / 3.0));
    CHECK(jaccard_similarity("", "") == 1.0);

    const std::vector<std::vector<std::string>> sets = {
        {"tight fit", "untucked"}, {"loose fit", "untucked"}, {"tight fit", "fully tucked in"}};
    // Pairs: (0,1) = (1/3 + 1)/2, (0,2) = (1 + 0)/2, (1,2) = (1/3 + 0)/2.
    const double expected = ((1.0 / 3 + 1) / 2 + 0.5 + (1.0 / 3) / 2) / 3;
    CHECK(sts_agreement(sets) == doctest::Approx(expected).epsilon(1e-12));
    CHECK_THROWS_AS(sts_agreement({{"a"}, {"a", "b"}}), LengthMismatch);
    CHECK_THROWS_AS(sts_agreement({{"a"}}), EmptyInput);
    CHECK_THROWS_AS(sts_agreement({{}, {}}), EmptyInput);
}

TEST_CASE("metric report") {
    MetricReport r;
    r.metrics = {{"base_ratio", 0.4464}, {"ssim_mean", 0.8}};
    r.sample_count = 12;
    r.config_fingerprint = fingerprint(json{{"seed", 1}});
    CHECK_NOTHROW(r.validate());
    CHECK(r.to_csv() == "samples,base_ratio,ssim_mean\n12,0.4464,0.8000\n");
    CHECK(r.to_json()["sample_count"] == 12);
    r.metrics["alignment_accuracy"] = 1.2;
    CHECK_THROWS_AS(r.validate(), RangeViolation);
    r.metrics["alignment_accuracy"] = std::nan("");
    CHECK_THROWS_AS(r.validate(), RangeViolation);

    const auto f = fingerprint(json{{"a", 1}, {"b", 2}});
    CHECK(f.size() == 16);
    CHECK(f == fingerprint(json::parse(R"({"b":2,"a":1})")));
    CHECK(f != fingerprint(json{{"a", 1}, {"b", 3}}));
}

TEST_CASE("reference targets are recorded, only base ratios reproducible") {
    const auto& t = reference_targets();
    CHECK(t.size() == 14);
    for (const auto& r : t) CHECK(r.reproducible_here == (r.metric == "base_ratio"));
    auto find = [&](const std::string& metric, const std::string& prefix) {
        return std::find_if(t.begin(), t.end(), [&](const ReferenceTarget& r) {
                   return r.metric == metric && r.setting.rfind(prefix, 0) == 0;
               })->value;
    };
    CHECK(find("alignment_accuracy", "untucked") == 0.8942);
    CHECK(find("alignment_accuracy", "tight fit") == 0.6698);
    CHECK(find("diversity_ssim", "tucked vs untucked, trained") == 0.8702);
}
