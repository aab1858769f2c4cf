#include "vton/pmg.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "vton/diffusion/trainer.hpp"
#include "vton/eval.hpp"
#include "vton/png_io.hpp"

namespace vton::pmg {

void validate(const PMGConfig& config) {
    if (!(config.sigma >= 0.0 && config.sigma < 1.0))
        throw RangeViolation("sigma must lie in [0, 1), got " + std::to_string(config.sigma));
    if (config.steps < 2) throw RangeViolation("PMG needs steps >= 2, got " + std::to_string(config.steps));
}

std::set<Label> garment_classes(Category category) {
    switch (category) {
        case Category::upper_body: return {Label::upper_clothes};
        case Category::lower_body: return {Label::lower_clothes};
        case Category::dresses: return {Label::dress};
    }
    return {};
}

ThresholdSegmenter::ThresholdSegmenter(std::vector<Entry> palette, float tolerance)
    : palette_(std::move(palette)), tolerance_(tolerance) {
    if (palette_.empty()) throw Error("threshold segmenter needs a palette");
}

ThresholdSegmenter ThresholdSegmenter::for_sample(const TryOnSample& sample, float tolerance) {
    const std::set<Label> garment = garment_classes(sample.category);
    std::vector<Entry> palette;

    const RgbImage& shop = sample.clothing;
    const float br = shop.at(0, 0, 0), bg = shop.at(0, 0, 1), bb = shop.at(0, 0, 2);
    double sum[3] = {0, 0, 0};
    std::size_t n = 0;
    for (int y = 0; y < shop.height(); ++y)
        for (int x = 0; x < shop.width(); ++x) {
            const float r = shop.at(y, x, 0), g = shop.at(y, x, 1), b = shop.at(y, x, 2);
            if (std::abs(r - br) + std::abs(g - bg) + std::abs(b - bb) < 0.05f) continue;
            sum[0] += r;
            sum[1] += g;
            sum[2] += b;
            ++n;
        }
    if (n == 0) throw EmptyRegion("shop image has no garment pixels");
    palette.push_back({static_cast<float>(sum[0] / n), static_cast<float>(sum[1] / n), static_cast<float>(sum[2] / n),
                       *garment.begin()});

    for (int l = 0; l < kLabelCount; ++l) {
        const auto label = static_cast<Label>(l);
        if (garment.count(label) != 0) continue;
        double s[3] = {0, 0, 0};
        std::size_t count = 0;
        for (int y = 0; y < sample.person.height(); ++y)
            for (int x = 0; x < sample.person.width(); ++x)
                if (sample.parsing(y, x) == l) {
                    for (int c = 0; c < 3; ++c) s[c] += sample.person.at(y, x, c);
                    ++count;
                }
        if (count == 0) continue;
        palette.push_back({static_cast<float>(s[0] / count), static_cast<float>(s[1] / count),
                           static_cast<float>(s[2] / count), label});
    }
    return ThresholdSegmenter(std::move(palette), tolerance);
}

LabelMap ThresholdSegmenter::segment(const RgbImage& image) const {
    LabelMap out(image.size(), 0);
    for (int y = 0; y < image.height(); ++y)
        for (int x = 0; x < image.width(); ++x) {
            float best = tolerance_;
            for (const Entry& e : palette_) {
                const float dr = image.at(y, x, 0) - e.r, dg = image.at(y, x, 1) - e.g, db = image.at(y, x, 2) - e.b;
                const float d = std::sqrt(dr * dr + dg * dg + db * db);
                if (d <= best) {
                    best = d;
                    out(y, x) = static_cast<std::uint8_t>(e.label);
                }
            }
        }
    return out;
}

ExternalCommandSegmenter::ExternalCommandSegmenter(std::string command, std::filesystem::path work_dir)
    : command_(std::move(command)), work_dir_(std::move(work_dir)) {
    if (command_.empty()) throw Error("external segmenter needs a command");
}

LabelMap ExternalCommandSegmenter::segment(const RgbImage& image) const {
    std::filesystem::create_directories(work_dir_);
    const auto input = work_dir_ / "segment_in.png";
    const auto output = work_dir_ / "segment_out.png";
    std::filesystem::remove(output);
    png::write_rgb(input, image);
    std::string cmd = command_;
    for (auto [key, value] : {std::pair{std::string("{input}"), input.string()}, std::pair{std::string("{output}"), output.string()}})
        for (auto pos = cmd.find(key); pos != std::string::npos; pos = cmd.find(key, pos + value.size()))
            cmd.replace(pos, key.size(), value);
    if (const int rc = std::system(cmd.c_str()); rc != 0)
        throw Error("segmenter command failed with status " + std::to_string(rc) + ": " + cmd);
    LabelMap labels = png::read_gray(output);
    for (std::uint8_t v : labels.values())
        if (v >= kLabelCount) throw LabelSetViolation("segmenter produced label " + std::to_string(v));
    return labels;
}

std::unique_ptr<Segmenter> make_segmenter(const PMGConfig& config, const TryOnSample& sample,
                                          const std::string& external_command, const std::filesystem::path& work_dir) {
    if (config.segmentation_backend == "threshold")
        return std::make_unique<ThresholdSegmenter>(ThresholdSegmenter::for_sample(sample));
    if (config.segmentation_backend == "external") return std::make_unique<ExternalCommandSegmenter>(external_command, work_dir);
    throw Error("unknown segmentation backend '" + config.segmentation_backend + "'");
}

PassResult run_pass(const Pipeline& pipeline, const TryOnSample& sample, const Mask& mask, const PromptPair& prompts,
                    const PMGConfig& config, double stop_fraction) {
    const diffusion::TrainingExample ex =
        diffusion::prepare_example_with_mask(sample, mask, prompts, pipeline.codec, pipeline.text);
    diffusion::Denoiser denoiser(pipeline.main, pipeline.reference);
    diffusion::SamplerOptions opts;
    opts.steps = config.steps;
    opts.stop_fraction = stop_fraction;
    opts.composite = config.composite;
    opts.seed = config.seed;
    opts.clip_z0 = config.clip_z0;
    const diffusion::SampleResult r = diffusion::sample(denoiser, pipeline.schedule, ex.inputs, ex.person_latent, opts);
    return {pipeline.codec.decode(r.latent), r.latent, r.denoiser_calls};
}

PassResult pmg_coarse_pass(const Pipeline& pipeline, const TryOnSample& sample, const Mask& coarse,
                           const PromptPair& prompts, const PMGConfig& config) {
    validate(config);
    if (coarse.kind != MaskKind::coarse) throw Error("PMG coarse pass needs a coarse mask");
    return run_pass(pipeline, sample, coarse, prompts, config, config.sigma);
}

Mask refine_mask(const RgbImage& x0_hat, const Mask& fine, const Segmenter& segmenter, const PMGConfig& config,
                 const LabelMap& parsing) {
    if (fine.kind != MaskKind::fine) throw Error("refine_mask needs a fine mask");
    if (fine.size() != x0_hat.size() || parsing.size() != x0_hat.size())
        throw ShapeMismatch("refine_mask: image, fine mask and parsing differ in size");
    const LabelMap labels = segmenter.segment(x0_hat);
    if (labels.size() != x0_hat.size())
        throw SegmenterShapeMismatch("segmenter '" + segmenter.id() + "' returned " +
                                     std::to_string(labels.height()) + "x" + std::to_string(labels.width()) +
                                     " for a " + std::to_string(x0_hat.height()) + "x" +
                                     std::to_string(x0_hat.width()) + " image");
    std::set<Label> targets = config.target_classes;
    if (targets.empty()) targets = {Label::upper_clothes, Label::lower_clothes, Label::dress};

    Plane<std::uint8_t> bits(x0_hat.size(), 0);
    const auto lv = labels.values();
    const auto pv = parsing.values();
    const auto fv = fine.bits.values();
    auto out = bits.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const bool target = targets.count(static_cast<Label>(lv[i])) != 0;
        out[i] = (target || fv[i] != 0) && !is_hand_or_foot(pv[i]) ? 1 : 0;
    }
    return Mask(std::move(bits), MaskKind::refined, "pmg:" + segmenter.id());
}

RgbImage paste_outside(const RgbImage& generated, const RgbImage& original, const Mask& mask) {
    if (generated.size() != original.size() || mask.size() != original.size())
        throw ShapeMismatch("paste_outside: sizes differ");
    RgbImage out = generated;
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x)
            if (mask.bits(y, x) == 0)
                out.set_pixel(y, x, original.at(y, x, 0), original.at(y, x, 1), original.at(y, x, 2));
    return out;
}

PMGResult generate_with_mask(const Pipeline& pipeline, const TryOnSample& sample, const Mask& mask,
                             const PromptPair& prompts, const PMGConfig& config) {
    validate(config);
    PMGResult r;
    r.fine = build_fine_mask(sample);
    r.coarse = build_coarse_mask(sample);
    r.refined = mask;
    const PassResult pass = run_pass(pipeline, sample, mask, prompts, config, 0.0);
    r.decoded = pass.decoded;
    r.final_calls = pass.denoiser_calls;
    r.image = config.composite ? paste_outside(pass.decoded, sample.person, mask) : pass.decoded;
    return r;
}

PMGResult pmg_generate(const Pipeline& pipeline, const TryOnSample& sample, const PromptPair& prompts,
                       const PMGConfig& config, const Segmenter& segmenter) {
    validate(config);
    PMGResult r;
    r.fine = build_fine_mask(sample);
    r.coarse = build_coarse_mask(sample);
    const PassResult coarse = pmg_coarse_pass(pipeline, sample, r.coarse, prompts, config);
    r.coarse_output = coarse.decoded;
    r.coarse_calls = coarse.denoiser_calls;
    r.refined = refine_mask(coarse.decoded, r.fine, segmenter, config, sample.parsing);
    const PassResult final_pass = run_pass(pipeline, sample, r.refined, prompts, config, 0.0);
    r.decoded = final_pass.decoded;
    r.final_calls = final_pass.denoiser_calls;
    r.image = config.composite ? paste_outside(final_pass.decoded, sample.person, r.refined) : final_pass.decoded;
    return r;
}

std::vector<AblationRow> sigma_ablation(const Pipeline& pipeline, const std::vector<TryOnSample>& samples,
                                        const std::vector<PromptPair>& prompts, const PMGConfig& base,
                                        const std::vector<double>& grid) {
    if (samples.empty()) throw EmptyInput("sigma ablation needs samples");
    if (samples.size() != prompts.size()) throw LengthMismatch("one prompt pair per sample is required");
    std::vector<AblationRow> rows;
    for (double sigma : grid) {
        PMGConfig cfg = base;
        cfg.sigma = sigma;
        AblationRow row;
        row.sigma = sigma;
        row.coarse_steps = diffusion::executed_steps(cfg.steps, sigma);
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const auto seg = make_segmenter(cfg, samples[i]);
            const PMGResult r = pmg_generate(pipeline, samples[i], prompts[i], cfg, *seg);
            row.denoiser_calls += r.coarse_calls + r.final_calls;
            row.ssim += eval::ssim(r.image, samples[i].person);
            row.refined_fraction += static_cast<double>(r.refined.count()) / static_cast<double>(r.refined.bits.values().size());
        }
        row.ssim /= static_cast<double>(samples.size());
        row.refined_fraction /= static_cast<double>(samples.size());
        rows.push_back(row);
    }
    return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << "sigma,SSIM,LPIPS,FID,KID,coarse_steps,denoiser_calls,refined_fraction\n";
    for (const auto& r : rows) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%.1f,%.4f,-,-,-,%d,%d,%.4f\n", r.sigma, r.ssim, r.coarse_steps, r.denoiser_calls,
                      r.refined_fraction);
        out << buf;
    }
    return out.str();
}

}  // namespace vton::pmg
