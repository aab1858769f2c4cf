#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "support.hpp"
#include "vton/diffusion/checkpoint.hpp"
#include "vton/diffusion/sampler.hpp"
#include "vton/diffusion/trainer.hpp"

using namespace vton;
using namespace vton::diffusion;

namespace {

TrainingExample example_for(std::uint64_t seed, const DilationSpec& spec = {}) {
    const auto g = testing::make_sample(seed);
    return prepare_example(g.sample, testing::prompts_for(g), PatchCodec(), HashTextEncoder(), spec);
}

UNetConfig live_output() {
    UNetConfig c;
    c.zero_init_output = false;
    return c;
}

double max_abs(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Schedule

TEST_CASE("alpha_bar matches a 50-digit product") {
    using big = boost::multiprecision::cpp_bin_float_50;
    const auto s = make_schedule(1000, 1e-4, 0.02);
    big prod = 1;
    CHECK(s.alpha_bar(0) == 1.0);
    for (int t = 1; t <= 1000; ++t) {
        const big beta = big(1e-4) + (big(0.02) - big(1e-4)) * big(t - 1) / big(999);
        prod *= (1 - beta);
        const double oracle = prod.convert_to<double>();
        REQUIRE(std::abs(s.alpha_bar(t) - oracle) <= 1e-12 * oracle);
    }
    CHECK(s.beta(1) == doctest::Approx(1e-4));
    CHECK(s.beta(1000) == doctest::Approx(0.02));
    for (int t = 1; t <= 1000; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
}

TEST_CASE("schedule range checks") {
    CHECK_THROWS_AS(make_schedule(0), RangeViolation);
    CHECK_THROWS_AS(make_schedule(10, 0.0, 0.02), RangeViolation);
    CHECK_THROWS_AS(make_schedule(10, 1e-4, 1.0), RangeViolation);
    const auto s = make_schedule(10);
    CHECK_THROWS_AS(s.alpha_bar(11), TimestepOutOfRange);
    CHECK_THROWS_AS(s.alpha_bar(-1), TimestepOutOfRange);
}

TEST_CASE("forward noising has the right moments and predict_z0 inverts it") {
    const auto s = make_schedule();
    std::mt19937_64 rng(1);
    for (int t : {1, 250, 999}) {
        const int n = 200000;
        const Tensor z0({n}, 2.0);
        const Tensor eps = Tensor::randn({n}, rng);
        const Tensor zt = add_noise(z0, t, eps, s);
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < zt.numel(); ++i) mean += zt[i];
        mean /= n;
        for (std::size_t i = 0; i < zt.numel(); ++i) var += (zt[i] - mean) * (zt[i] - mean);
        var /= n - 1;
        const double ab = s.alpha_bar(t);
        CHECK(std::abs(mean - 2.0 * std::sqrt(ab)) < 0.01);
        CHECK(var == doctest::Approx(1.0 - ab).epsilon(0.02));
        CHECK(max_abs(predict_z0(zt, eps, t, s), z0) < 1e-9);
    }
}

// ---------------------------------------------------------------------------
// Codec and text

TEST_CASE("codec shapes, determinism and bounded round trip") {
    const PatchCodec codec;
    const auto g = testing::make_sample(4);
    const Tensor z = codec.encode(g.sample.person);
    CHECK(z.shape() == std::vector<int>{4, 8, 6});
    CHECK(codec.encode(g.sample.person) == z);
    const RgbImage back = codec.decode(z);
    CHECK(back.size() == g.sample.person.size());
    CHECK(codec.round_trip_error(g.sample.person) < 0.75f);
    // Flat colour lies in the basis span.
    CHECK(codec.round_trip_error(RgbImage(16, 16, 0.3f)) < 1e-5f);
    CHECK_THROWS_AS(codec.encode(RgbImage(12, 16, 0.f)), IndivisibleShape);
}

TEST_CASE("text encoder") {
    const HashTextEncoder enc;
    const auto a = enc.encode("a slim woman wears a shirt");
    CHECK(a.tokens.shape() == std::vector<int>{6, 32});
    CHECK(a.pooled.shape() == std::vector<int>{32});
    CHECK(enc.encode("a slim woman wears a shirt").tokens == a.tokens);
    CHECK_FALSE(enc.encode("a slim man wears a shirt").tokens == a.tokens);
    std::string long_text;
    for (int i = 0; i < 100; ++i) long_text += "w" + std::to_string(i) + " ";
    CHECK(enc.encode(long_text).tokens.dim(0) == 77);
    CHECK(enc.encode("").tokens.dim(0) >= 1);
}

// ---------------------------------------------------------------------------
// Attention

TEST_CASE("attention rows are stochastic and masking the reference recovers plain attention") {
    std::mt19937_64 rng(2);
    const ad::Var q = ad::constant(Tensor::randn({64, 32}, rng));
    const LayerKV main{ad::constant(Tensor::randn({64, 32}, rng)), ad::constant(Tensor::randn({64, 32}, rng)), 1};
    const LayerKV ref{ad::constant(Tensor::randn({64, 32}, rng)), ad::constant(Tensor::randn({64, 32}, rng)), 1};
    const LayerKV joint = inject_reference_kv(main, ref);
    CHECK(joint.length() == 128);

    const auto out = attend(q, joint);
    const Tensor& w = out.weights.value();
    REQUIRE(w.shape() == std::vector<int>{64, 128});
    for (int r = 0; r < 64; ++r) {
        double sum = 0.0;
        for (int c = 0; c < 128; ++c) {
            CHECK(w[r * 128 + c] >= 0.0);
            sum += w[r * 128 + c];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }

    const auto masked = attend(q, joint, mask_reference_columns(64, 64));
    const auto plain = attend(q, main);
    CHECK(max_abs(masked.output.value(), plain.output.value()) < 1e-5);
}

TEST_CASE("two-token attention closed form") {
    const ad::Var q = ad::constant(Tensor({1, 4}, {1.0, 0.0, 2.0, 0.0}));
    const ad::Var k = ad::constant(Tensor({2, 4}, {1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0}));
    const ad::Var v = ad::constant(Tensor({2, 4}, {1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0}));
    const auto out = attend(q, LayerKV{k, v, 1});
    const double l0 = 1.0 / 2.0, l1 = 2.0 / 2.0;
    const double w0 = std::exp(l0) / (std::exp(l0) + std::exp(l1));
    CHECK(out.output.value()[0] == doctest::Approx(w0).epsilon(1e-12));
    CHECK(out.output.value()[1] == doctest::Approx(1.0 - w0).epsilon(1e-12));
}

TEST_CASE("multi-head attention splits columns") {
    std::mt19937_64 rng(3);
    const ad::Var q = ad::constant(Tensor::randn({5, 8}, rng));
    const LayerKV kv{ad::constant(Tensor::randn({7, 8}, rng)), ad::constant(Tensor::randn({7, 8}, rng)), 2};
    const auto out = attend(q, kv);
    CHECK(out.output.value().shape() == std::vector<int>{5, 8});
    CHECK(out.weights.value().shape() == std::vector<int>{10, 7});
}

TEST_CASE("injection shape errors") {
    std::mt19937_64 rng(4);
    const LayerKV a{ad::constant(Tensor::randn({4, 32}, rng)), ad::constant(Tensor::randn({4, 32}, rng)), 1};
    const LayerKV b{ad::constant(Tensor::randn({4, 16}, rng)), ad::constant(Tensor::randn({4, 16}, rng)), 1};
    LayerKV c = a;
    c.heads = 2;
    CHECK_THROWS_AS(inject_reference_kv(a, b), LayerShapeMismatch);
    CHECK_THROWS_AS(inject_reference_kv(a, c), LayerShapeMismatch);
}

// ---------------------------------------------------------------------------
// U-Net and denoiser

TEST_CASE("toy U-Nets stay small and are deterministic") {
    const auto pair = make_models(UNetConfig{}, 7);
    CHECK(pair.main->parameter_count() <= 50000);
    CHECK(pair.reference->parameter_count() <= 50000);
    CHECK(pair.main->input_channels() == 9);
    CHECK(pair.reference->input_channels() == 4);
    CHECK(make_models(UNetConfig{}, 7).main->checksum() == pair.main->checksum());
    CHECK(make_models(UNetConfig{}, 8).main->checksum() != pair.main->checksum());
}

TEST_CASE("denoiser output shape and conditioning sensitivity") {
    const auto pair = make_models(live_output(), 3);
    TrainingExample ex = example_for(5);
    std::mt19937_64 rng(0);
    const Tensor z = Tensor::randn(ex.person_latent.shape(), rng);
    const Tensor e1 = denoiser_forward(*pair.main, *pair.reference, z, ex.inputs, 500);
    CHECK(e1.shape() == z.shape());
    CHECK(e1.all_finite());
    CHECK(denoiser_forward(*pair.main, *pair.reference, z, ex.inputs, 500) == e1);
    CHECK(denoiser_forward(*pair.main, *pair.reference, z, ex.inputs, 10) != e1);

    auto text = ex.inputs;
    text.main_text = HashTextEncoder().encode("a broad man wears a red shirt");
    CHECK(max_abs(denoiser_forward(*pair.main, *pair.reference, z, text, 500), e1) > 1e-9);

    auto cloth = ex.inputs;
    for (double& v : cloth.clothing_latent.values()) v = -v;
    CHECK(max_abs(denoiser_forward(*pair.main, *pair.reference, z, cloth, 500), e1) > 1e-9);

    auto bad = ex.inputs;
    bad.mask_latent = Tensor({1, 4, 4});
    CHECK_THROWS_AS(denoiser_forward(*pair.main, *pair.reference, z, bad, 500), ShapeMismatch);
}

TEST_CASE("zero-initialised output predicts zero noise") {
    const auto pair = make_models(UNetConfig{}, 3);
    TrainingExample ex = example_for(5);
    std::mt19937_64 rng(0);
    const Tensor z = Tensor::randn(ex.person_latent.shape(), rng);
    const Tensor e = denoiser_forward(*pair.main, *pair.reference, z, ex.inputs, 300);
    for (double v : e.values()) CHECK(v == 0.0);
}

TEST_CASE("ldm_loss") {
    std::mt19937_64 rng(5);
    const Tensor a = Tensor::randn({4, 3, 2}, rng);
    const Tensor b = Tensor::randn({4, 3, 2}, rng);
    CHECK(ldm_loss(a, a) == 0.0);
    CHECK(ldm_loss(Tensor({2, 2}, 1.0), Tensor({2, 2}, 0.0)) == 1.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    CHECK(ldm_loss(a, b) == doctest::Approx(acc / 24).epsilon(1e-14));
    CHECK_THROWS_AS(ldm_loss(a, Tensor({4, 3})), ShapeMismatch);
}

TEST_CASE("reference keys/values are cached per clothing input") {
    const auto pair = make_models(UNetConfig{}, 1);
    Denoiser d(*pair.main, *pair.reference);
    const auto ex = example_for(2);
    const auto a = d.reference_kv(ex.inputs);
    const auto b = d.reference_kv(ex.inputs);
    REQUIRE(a.size() == UNetToy::kSelfAttentionLayers);
    CHECK(a[0].keys.node() == b[0].keys.node());
    d.predict(ex.person_latent, 10, ex.inputs);
    d.predict(ex.person_latent, 20, ex.inputs);
    CHECK(d.calls() == 2);
}

// ---------------------------------------------------------------------------
// Training

TEST_CASE("analytic gradients match central differences") {
    auto pair = make_models(live_output(), 11);
    const auto ex = example_for(6);
    const auto s = make_schedule();
    std::mt19937_64 rng(12);
    const Tensor noise = Tensor::randn(ex.person_latent.shape(), rng);
    const int t = 400;

    auto& params = pair.main->parameters();
    zero_grads(params);
    {
        Denoiser d(*pair.main, *pair.reference);
        noise_prediction_loss(d, s, ex, t, noise);
    }

    std::uniform_int_distribution<std::size_t> pick_param(0, params.size() - 1);
    int probes = 0;
    double worst = 0.0;
    while (probes < 20) {
        auto& p = params[pick_param(rng)];
        if (p.var.grad().numel() == 0) continue;
        std::uniform_int_distribution<std::size_t> pick(0, p.var.value().numel() - 1);
        const std::size_t i = pick(rng);
        const double analytic = p.var.grad()[i];
        const double original = p.var.value()[i];
        const double h = 1e-5;
        auto loss_at = [&](double v) {
            p.var.mutable_value()[i] = v;
            Denoiser d(*pair.main, *pair.reference);
            return noise_prediction_loss(d, s, ex, t, noise, 1.0, false);
        };
        const double numeric = (loss_at(original + h) - loss_at(original - h)) / (2 * h);
        p.var.mutable_value()[i] = original;
        const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        worst = std::max(worst, rel);
        ++probes;
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("training leaves the reference frozen and lowers the loss") {
    auto pair = make_models(UNetConfig{}, 21);
    const auto s = make_schedule();
    std::vector<TrainingExample> data;
    for (std::uint64_t i = 0; i < 4; ++i) data.push_back(example_for(30 + i));
    const auto ref_sum = pair.reference->checksum();
    const auto main_sum = pair.main->checksum();
    Trainer trainer(*pair.main, *pair.reference, s, std::make_unique<Adam>(1e-3), 5);
    std::vector<double> losses;
    for (int step = 0; step < 50; ++step) losses.push_back(trainer.train_step(data));
    CHECK(pair.reference->checksum() == ref_sum);
    CHECK(pair.main->checksum() != main_sum);
    CHECK(trainer.steps_taken() == 50);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 10; ++i) {
        first += losses[i];
        last += losses[40 + i];
    }
    CHECK(last < first);
    CHECK_THROWS_AS(trainer.train_step({}), EmptyInput);
    CHECK_THROWS_AS(Trainer(*pair.reference, *pair.reference, s, std::make_unique<Sgd>(0.1), 0), Error);
}

TEST_CASE("non-finite loss aborts before the update") {
    auto pair = make_models(UNetConfig{}, 22);
    const auto s = make_schedule();
    pair.main->parameters().front().var.mutable_value()[0] = std::nan("");
    const auto before = pair.main->checksum();
    Trainer trainer(*pair.main, *pair.reference, s, std::make_unique<Sgd>(0.1), 0);
    CHECK_THROWS_AS(trainer.train_step({example_for(1)}), NonFiniteLoss);
    CHECK(pair.main->checksum() == before);

    Denoiser d(*pair.main, *pair.reference);
    const auto ex = example_for(1);
    CHECK_THROWS_AS(noise_prediction_loss(d, s, ex, 0, ex.person_latent), TimestepOutOfRange);
}

TEST_CASE("augmented training examples keep the agnostic image consistent with the mask") {
    const auto g = testing::make_sample(9);
    DilationSpec spec;
    spec.n_max = 4;
    spec.rng_seed = 3;
    const Mask fine = build_fine_mask(g.sample), coarse = build_coarse_mask(g.sample);
    const Mask md = random_dilation_augment(fine, coarse, spec);
    const auto ex = prepare_example(g.sample, testing::prompts_for(g), PatchCodec(), HashTextEncoder(), spec);
    const auto direct = prepare_example_with_mask(g.sample, md, testing::prompts_for(g), PatchCodec(), HashTextEncoder());
    CHECK(ex.inputs.mask_latent == direct.inputs.mask_latent);
    CHECK(ex.inputs.agnostic_latent == direct.inputs.agnostic_latent);
    const RgbImage ag = masked_agnostic(g.sample.person, md);
    for (int y = 0; y < ag.height(); ++y)
        for (int x = 0; x < ag.width(); ++x)
            if (!md.bits(y, x)) REQUIRE(ag.at(y, x, 0) == g.sample.person.at(y, x, 0));
}

// ---------------------------------------------------------------------------
// Sampler

TEST_CASE("sampling timesteps and early stopping") {
    const auto ts = sampling_timesteps(1000, 30);
    REQUIRE(ts.size() == 30);
    CHECK(ts.front() == 1000);
    CHECK(ts.back() == 33);
    for (std::size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);
    CHECK(executed_steps(30, 0.0) == 30);
    CHECK(executed_steps(30, 0.5) == 15);
    CHECK(executed_steps(30, 0.9) == 3);
    CHECK(executed_steps(30, 0.8) == 6);
    CHECK(executed_steps(7, 0.5) == 4);
    CHECK_THROWS_AS(executed_steps(30, 1.0), RangeViolation);
    CHECK_THROWS_AS(executed_steps(0, 0.5), RangeViolation);
}

TEST_CASE("sampler call counts, determinism and compositing") {
    const auto pair = make_models(live_output(), 4);
    const auto s = make_schedule();
    const auto ex = example_for(12);
    Denoiser d(*pair.main, *pair.reference);
    SamplerOptions o;
    for (auto [sigma, expected] : {std::pair{0.0, 30}, std::pair{0.5, 15}, std::pair{0.9, 3}}) {
        o.stop_fraction = sigma;
        d.reset_calls();
        const auto r = sample(d, s, ex.inputs, ex.person_latent, o);
        CHECK(r.steps_executed == expected);
        CHECK(r.denoiser_calls == expected);
        CHECK(d.calls() == expected);
    }
    o.stop_fraction = 0.0;
    const auto a = sample(d, s, ex.inputs, ex.person_latent, o);
    const auto b = sample(d, s, ex.inputs, ex.person_latent, o);
    CHECK(a.latent == b.latent);
    o.seed = 1;
    CHECK_FALSE(sample(d, s, ex.inputs, ex.person_latent, o).latent == a.latent);

    const Tensor& m = ex.inputs.mask_latent;
    const std::size_t plane = m.numel();
    for (int c = 0; c < a.latent.dim(0); ++c)
        for (std::size_t i = 0; i < plane; ++i)
            if (m[i] < 0.5) CHECK(a.latent[c * plane + i] == ex.person_latent[c * plane + i]);

    o.steps = 0;
    CHECK_THROWS_AS(sample(d, s, ex.inputs, ex.person_latent, o), RangeViolation);
}

// ---------------------------------------------------------------------------
// Checkpoints

TEST_CASE("checkpoint round trip and corruption") {
    testing::TempDir dir;
    const auto pair = make_models(live_output(), 13);
    const auto path = dir.path() / "m.ckpt";
    save_checkpoint(path, *pair.main, *pair.reference);
    const auto back = load_checkpoint(path);
    CHECK(back.main->checksum() == pair.main->checksum());
    CHECK(back.reference->checksum() == pair.reference->checksum());
    CHECK(back.main->config() == pair.main->config());

    CHECK_THROWS_AS(load_checkpoint(dir.path() / "none.ckpt"), MissingFile);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("XXXX", 4);
    }
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
    {
        std::ofstream f(dir.path() / "short.ckpt", std::ios::binary);
        f.write("VTONCKPT", 8);
    }
    CHECK_THROWS_AS(load_checkpoint(dir.path() / "short.ckpt"), CheckpointError);
}
