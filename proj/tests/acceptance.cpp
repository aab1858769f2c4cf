// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "support.hpp"
#include "vton/diffusion/sampler.hpp"
#include "vton/diffusion/trainer.hpp"
#include "vton/eval.hpp"
#include "vton/lmm_client.hpp"
#include "vton/pmg.hpp"

using namespace vton;
using namespace vton::diffusion;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(101);
    int mismatches = 0;
    for (int i = 0; i < 200; ++i) {
        auto [fine, coarse] = testing::random_fine_coarse(rng, 32, 32);
        DilationSpec spec;
        spec.n_max = 5;
        spec.rng_seed = rng();
        const int n = draw_dilation_count(spec);
        const Mask d = random_dilation_augment(fine, coarse, spec);
        if (d.bits != testing::oracle_dilate_and(fine.bits, coarse.bits, spec.element.bits(), n)) ++mismatches;
    }
    const double s = seconds_since(t0);
    return {mismatches == 0 && s < 5.0, fmt("200 cases, %d mismatches, %.2f s", mismatches, s)};
}

Outcome nesting() {
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> dim(4, 48);
    int violations = 0;
    for (int i = 0; i < 1000; ++i) {
        auto [fine, coarse] = testing::random_fine_coarse(rng, dim(rng), dim(rng));
        DilationSpec spec;
        spec.n_max = 6;
        spec.rng_seed = rng();
        if (i % 3 == 1) spec.element = StructuringElement::cross(1);
        const Mask d = random_dilation_augment(fine, coarse, spec);
        if (!is_subset(fine, d) || !is_subset(d, coarse)) ++violations;
    }
    return {violations == 0, fmt("1000 cases, %d violations", violations)};
}

Outcome forward_process() {
    using big = boost::multiprecision::cpp_bin_float_50;
    const auto s = make_schedule(1000, 1e-4, 0.02);
    double worst_rel = 0.0;
    big prod = 1;
    for (int t = 1; t <= 1000; ++t) {
        prod *= 1 - (big(1e-4) + (big(0.02) - big(1e-4)) * big(t - 1) / big(999));
        const double oracle = prod.convert_to<double>();
        worst_rel = std::max(worst_rel, std::abs(s.alpha_bar(t) - oracle) / oracle);
    }
    std::mt19937_64 rng(303);
    const int n = 10000;
    const Tensor z0({n}, 1.5);
    double worst_z = 0.0;
    for (int t : {100, 500, 900}) {
        const Tensor zt = add_noise(z0, t, Tensor::randn({n}, rng), s);
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < zt.numel(); ++i) mean += zt[i];
        mean /= n;
        for (std::size_t i = 0; i < zt.numel(); ++i) var += (zt[i] - mean) * (zt[i] - mean);
        var /= n - 1;
        const double ab = s.alpha_bar(t);
        const double expect_var = 1.0 - ab;
        const double se_mean = std::sqrt(expect_var / n);
        const double se_var = expect_var * std::sqrt(2.0 / (n - 1));
        worst_z = std::max({worst_z, std::abs(mean - std::sqrt(ab) * 1.5) / se_mean, std::abs(var - expect_var) / se_var});
    }
    return {worst_rel <= 1e-12 && worst_z <= 4.0,
            fmt("max alpha_bar rel err %.1e, worst moment deviation %.2f SE", worst_rel, worst_z)};
}

TrainingExample example_for(std::uint64_t seed, std::uint64_t mask_seed = 0) {
    const auto g = testing::make_sample(seed);
    DilationSpec spec;
    spec.n_max = default_n_max(g.sample.size());
    spec.rng_seed = mask_seed;
    return prepare_example(g.sample, testing::prompts_for(g), PatchCodec(), HashTextEncoder(), spec);
}

Outcome gradient_check() {
    const auto t0 = std::chrono::steady_clock::now();
    UNetConfig cfg;
    cfg.zero_init_output = false;
    auto pair = make_models(cfg, 404);
    const auto ex = example_for(4);
    const auto s = make_schedule();
    std::mt19937_64 rng(405);
    const Tensor noise = Tensor::randn(ex.person_latent.shape(), rng);
    const int t = 321;
    auto& params = pair.main->parameters();
    zero_grads(params);
    {
        Denoiser d(*pair.main, *pair.reference);
        noise_prediction_loss(d, s, ex, t, noise);
    }
    std::uniform_int_distribution<std::size_t> pick_param(0, params.size() - 1);
    double worst = 0.0;
    int failures = 0;
    for (int probe = 0; probe < 20;) {
        auto& p = params[pick_param(rng)];
        if (p.var.grad().numel() == 0) continue;
        std::uniform_int_distribution<std::size_t> pick(0, p.var.value().numel() - 1);
        const std::size_t i = pick(rng);
        const double analytic = p.var.grad()[i];
        const double original = p.var.value()[i];
        auto loss_at = [&](double v) {
            p.var.mutable_value()[i] = v;
            Denoiser d(*pair.main, *pair.reference);
            return noise_prediction_loss(d, s, ex, t, noise, 1.0, false);
        };
        const double h = 1e-5;
        const double numeric = (loss_at(original + h) - loss_at(original - h)) / (2 * h);
        p.var.mutable_value()[i] = original;
        const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        worst = std::max(worst, rel);
        if (rel >= 1e-4) ++failures;
        ++probe;
    }
    const double secs = seconds_since(t0);
    const std::size_t count = pair.main->parameter_count();
    return {failures == 0 && secs < 60.0 && count <= 50000,
            fmt("%zu parameters, 20 probes, max rel err %.2e, %.1f s", count, worst, secs)};
}

Outcome attention_injection() {
    std::mt19937_64 rng(505);
    std::uniform_int_distribution<int> len(1, 40), head_dim(1, 12), heads(1, 4);
    double worst_masked = 0.0, worst_row = 0.0;
    for (int i = 0; i < 50; ++i) {
        const int h = heads(rng), w = h * head_dim(rng), lq = len(rng), lm = len(rng), lr = len(rng);
        auto rnd = [&](int rows) { return ad::constant(Tensor::randn({rows, w}, rng)); };
        const ad::Var q = rnd(lq);
        const LayerKV main{rnd(lm), rnd(lm), h};
        const LayerKV ref{rnd(lr), rnd(lr), h};
        const LayerKV joint = inject_reference_kv(main, ref);
        const auto plain = attend(q, main);
        const auto masked = attend(q, joint, mask_reference_columns(lm, lr));
        for (std::size_t k = 0; k < plain.output.value().numel(); ++k)
            worst_masked = std::max(worst_masked, std::abs(plain.output.value()[k] - masked.output.value()[k]));
        const auto full = attend(q, joint);
        const Tensor& wts = full.weights.value();
        for (int r = 0; r < wts.dim(0); ++r) {
            double sum = 0.0;
            for (int c = 0; c < wts.dim(1); ++c) sum += wts[static_cast<std::size_t>(r) * wts.dim(1) + c];
            worst_row = std::max(worst_row, std::abs(sum - 1.0));
        }
    }
    return {worst_masked < 1e-5 && worst_row < 1e-6,
            fmt("50 shapes, masked max diff %.1e, row-sum max err %.1e", worst_masked, worst_row)};
}

// Smoke training shared by the frozen-reference and loss criteria; the trained model feeds the PMG checks.
struct TrainingRun {
    ModelPair models;
    std::vector<double> losses;
    std::uint64_t reference_before = 0, reference_after_100 = 0;
    double seconds = 0.0;
};

TrainingRun smoke_training() {
    const auto t0 = std::chrono::steady_clock::now();
    TrainingRun run{make_models(UNetConfig{}, 606), {}, 0, 0, 0.0};
    const auto s = make_schedule();
    run.reference_before = run.models.reference->checksum();
    Trainer trainer(*run.models.main, *run.models.reference, s, std::make_unique<Adam>(1e-3), 607);
    const int pool = 8, batch = 4;
    for (int step = 0; step < 200; ++step) {
        std::vector<TrainingExample> b;
        for (int k = 0; k < batch; ++k)
            b.push_back(example_for(1 + (step * batch + k) % pool, static_cast<std::uint64_t>(step * batch + k)));
        run.losses.push_back(trainer.train_step(b));
        if (step == 99) run.reference_after_100 = run.models.reference->checksum();
    }
    run.seconds = seconds_since(t0);
    return run;
}

Outcome frozen_reference(const TrainingRun& run) {
    return {run.reference_before == run.reference_after_100 &&
                run.reference_before == run.models.reference->checksum(),
            fmt("checksum %016llx before, %016llx after 100 steps",
                static_cast<unsigned long long>(run.reference_before),
                static_cast<unsigned long long>(run.reference_after_100))};
}

Outcome smoke_loss(const TrainingRun& run) {
    const std::size_t window = 20;
    double head = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < window; ++i) {
        head += run.losses[i] / window;
        tail += run.losses[run.losses.size() - 1 - i] / window;
    }
    const double reduction = 1.0 - tail / head;
    return {reduction >= 0.30 && run.seconds < 180.0,
            fmt("moving average %.4f -> %.4f (%.0f%% lower), 200 steps in %.1f s", head, tail, 100 * reduction,
                run.seconds)};
}

struct PmgOutcomes {
    Outcome accounting, preservation;
};

PmgOutcomes pmg_checks(const TrainingRun& run) {
    const pmg::Pipeline pipe{*run.models.main, *run.models.reference};
    pmg::PMGConfig cfg;
    cfg.steps = 30;
    cfg.sigma = 0.5;
    int wrong_calls = 0, containment = 0, hand_foot = 0, outside_violations = 0, decoded_violations = 0;
    float worst_outside = 0.0f, worst_decoded_excess = -1.0f, bound = 0.0f;
    const Category cats[3] = {Category::upper_body, Category::lower_body, Category::dresses};
    for (int i = 0; i < 100; ++i) {
        const auto g = testing::make_sample(1000 + i, cats[i % 3]);
        const auto seg = pmg::ThresholdSegmenter::for_sample(g.sample);
        const pmg::PMGResult r = pmg::pmg_generate(pipe, g.sample, testing::prompts_for(g), cfg, seg);
        if (r.coarse_calls != 15 || r.final_calls != 30) ++wrong_calls;
        const Mask hf = hand_foot_mask(g.sample.parsing);
        if (!is_subset(mask_difference(r.fine, hf), r.refined)) ++containment;
        if (!mask_intersect(r.refined, hf).empty_region()) ++hand_foot;

        const float rt = pipe.codec.round_trip_error(g.sample.person);
        bound = std::max(bound, rt);
        const Mask outside = mask_complement(r.refined);
        const float diff = max_abs_difference(r.image, g.sample.person, &outside.bits);
        worst_outside = std::max(worst_outside, diff);
        if (!(diff < rt)) ++outside_violations;

        // Latent cells left outside the inpainting mask decode to the person's own round trip.
        const Mask latent = resize_to_latent(r.refined, pipe.codec.factor());
        Plane<std::uint8_t> keep(g.sample.size(), 0);
        for (int y = 0; y < keep.height(); ++y)
            for (int x = 0; x < keep.width(); ++x)
                keep(y, x) = latent.bits(y / pipe.codec.factor(), x / pipe.codec.factor()) ? 0 : 1;
        const float dd = max_abs_difference(r.decoded, g.sample.person, &keep);
        worst_decoded_excess = std::max(worst_decoded_excess, dd - rt);
        if (dd > rt + 1e-5f) ++decoded_violations;
    }
    PmgOutcomes out;
    out.accounting = {wrong_calls == 0 && containment == 0 && hand_foot == 0,
                      fmt("100 samples: %d with wrong 15+30 call counts, %d refined-not-covering-fine, %d touching "
                          "hands/feet",
                          wrong_calls, containment, hand_foot)};
    out.preservation = {outside_violations == 0 && decoded_violations == 0,
                        fmt("100 samples: max outside diff %.2e vs round-trip bound %.3f; decoded latent-outside "
                            "patches exceed own round trip by at most %.1e",
                            worst_outside, bound, worst_decoded_excess)};
    return out;
}

Outcome evaluation_protocol() {
    std::vector<std::string> tuck(2032, "fully tucked in"), fit(2032, "regular fit");
    std::fill_n(tuck.begin(), 907, "untucked");
    std::fill_n(fit.begin(), 470, "tight fit");
    const double a = std::round(eval::base_ratio(tuck, "untucked") * 10000) / 100;
    const double b = std::round(eval::base_ratio(fit, "tight fit") * 10000) / 100;

    const auto schema = default_schema(Subject::person, Category::upper_body);
    auto reply = [&](const std::string& tucking) {
        json j;
        for (const auto& n : schema.names()) j[n] = "x";
        j["tucking style"] = tucking;
        return j.dump();
    };
    std::vector<std::string> ids;
    for (int i = 0; i < 20; ++i) ids.push_back(std::to_string(i));
    const eval::EditedImageGenerator gen = [](const std::string& id, const std::string&, const std::string&) {
        return ImageRef{id, "/dev/null"};
    };
    FunctionLmmClient perfect([&](const LmmQuery&, int) { return reply("untucked"); });
    FunctionLmmClient half([&](const LmmQuery& q, int) {
        return reply(std::stoi(q.request.query.id) % 2 ? "untucked" : "fully tucked in");
    });
    const double acc_full = eval::alignment_accuracy({"tucking style", "untucked", ids, &perfect, schema, {}, 0}, gen);
    const double acc_half = eval::alignment_accuracy({"tucking style", "untucked", ids, &half, schema, {}, 0}, gen);
    return {a == 44.64 && b == 23.13 && acc_full == 1.0 && acc_half == 0.5,
            fmt("base ratios %.2f%% / %.2f%%, mock-judge accuracy %.0f%% / %.0f%%", a, b, 100 * acc_full,
                100 * acc_half)};
}

Outcome non_reproducibility() {
    const auto& targets = eval::reference_targets();
    int asserted = 0;
    bool has_fid = false, has_align = false;
    for (const auto& t : targets) {
        if (t.reproducible_here && t.metric != "base_ratio") ++asserted;
        if (t.metric == "fid" && t.value == 8.54) has_fid = true;
        if (t.metric == "alignment_accuracy" && t.value == 0.8942) has_align = true;
    }
    return {asserted == 0 && has_fid && has_align,
            fmt("%zu full-scale published numbers (image quality, KID, trained-model alignment, diversity, STS) "
                "recorded as reference targets only; they need a pretrained backbone and GPU training and are not "
                "reproduced here. Acceptance rests on the other criteria",
                targets.size())};
}

Outcome captioner_contract() {
    const auto a = testing::make_sample(71), b = testing::make_sample(72), garment = testing::make_sample(73);
    const TryOnSample pa = synthetic::pair_unpaired(a, garment), pb = synthetic::pair_unpaired(b, garment);
    json fx;
    for (const auto* g : {&a, &b, &garment}) {
        fx["person"][g->sample.person_id] = g->attributes.person;
        fx["clothing"][g->sample.clothing_id] = g->attributes.clothing;
    }
    auto caption_all = [&] {
        FixtureLmmClient client(fx);
        std::vector<CaptionRecord> out;
        for (const TryOnSample* s : {&pa, &pb}) {
            out.push_back(caption_image(
                client, build_icl_request(default_schema(Subject::person, s->category), {}, {s->person_id, "p.png"}), 0,
                fixed_clock()));
            out.push_back(caption_image(
                client, build_icl_request(default_schema(Subject::clothing, s->category), {}, {s->clothing_id, "c.png"}),
                0, fixed_clock()));
        }
        return out;
    };
    const auto first = caption_all(), second = caption_all();
    const bool deterministic = first == second;
    const bool separated = first[1] == first[3] && !(first[0] == first[2]);

    int golden = 0;
    auto rec = [](Subject s, std::map<std::string, std::string> m) { return testing::record("g", s, std::move(m)); };
    const std::string upper = render_main_prompt(
        default_schema(Subject::person, Category::upper_body),
        rec(Subject::person, {{"body shape", "slim"}, {"gender", "woman"}, {"tucking style", "fully tucked in"},
                              {"fit", "tight fit"}, {"hand pose", "hands on hips"},
                              {"pose description", "standing upright facing the camera"}}),
        default_schema(Subject::clothing, Category::upper_body),
        rec(Subject::clothing, {{"cloth category", "white t-shirt"}, {"material", "cotton"},
                                {"sleeve length", "short sleeves"}, {"neckline", "crew neck"}})).main_prompt;
    golden += upper == "a slim woman wears white t-shirt, cotton, short sleeves, crew neck, fully tucked in, tight fit, "
                       "standing upright facing the camera, with hands on hips.";
    const std::string lower = render_main_prompt(
        default_schema(Subject::person, Category::lower_body),
        rec(Subject::person, {{"body shape", "average"}, {"gender", "man"}, {"fit", "regular fit"},
                              {"hand pose", "arms down by the sides"},
                              {"pose description", "standing upright facing the camera"}}),
        default_schema(Subject::clothing, Category::lower_body),
        rec(Subject::clothing, {{"cloth category", "blue trousers"}, {"material", "denim"}, {"length", "ankle length"}}))
                                  .main_prompt;
    golden += lower == "a average man wears blue trousers, denim, ankle length, regular fit, standing upright facing the "
                       "camera, with arms down by the sides.";
    const std::string dress = render_main_prompt(
        default_schema(Subject::person, Category::dresses),
        rec(Subject::person, {{"body shape", "curvy"}, {"gender", "woman"}, {"fit", "loose fit"},
                              {"hand pose", "hands in pockets"}, {"pose description", "walking"}}),
        default_schema(Subject::clothing, Category::dresses),
        rec(Subject::clothing, {{"cloth category", "red dress"}, {"material", "silk"}, {"sleeve length", "sleeveless"},
                                {"neckline", "v-neck"}, {"length", "knee length"}})).main_prompt;
    golden += dress == "a curvy woman wears red dress, silk, sleeveless, v-neck, knee length, loose fit, walking, with "
                       "hands in pockets.";
    return {deterministic && separated && golden == 3,
            fmt("deterministic=%s, clothing record shared across persons=%s, golden templates %d/3",
                deterministic ? "yes" : "no", separated ? "yes" : "no", golden)};
}

}  // namespace

int main() {
    std::vector<std::pair<std::string, Outcome>> rows;
    rows.emplace_back("dilation augment equals brute-force oracle", oracle_equivalence());
    rows.emplace_back("fine within dilated within coarse", nesting());
    rows.emplace_back("forward-process statistics and alpha_bar oracle", forward_process());
    rows.emplace_back("finite-difference gradient check", gradient_check());
    rows.emplace_back("reference key/value injection", attention_injection());
    const TrainingRun run = smoke_training();
    rows.emplace_back("reference U-Net frozen during training", frozen_reference(run));
    const PmgOutcomes pmg = pmg_checks(run);
    rows.emplace_back("prompt-aware mask step accounting and containment", pmg.accounting);
    rows.emplace_back("outside-mask preservation", pmg.preservation);
    rows.emplace_back("evaluation protocol", evaluation_protocol());
    rows.emplace_back("smoke training lowers the loss", smoke_loss(run));
    rows.emplace_back("published full-scale numbers are reference targets only", non_reproducibility());
    rows.emplace_back("captioner contract", captioner_contract());

    int failed = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& [name, o] = rows[i];
        std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, name.c_str(), o.detail.c_str());
        failed += o.pass ? 0 : 1;
    }
    std::fflush(stdout);
    return failed == 0 ? 0 : 1;
}
