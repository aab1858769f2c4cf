#pragma once

#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "vton/captioner.hpp"
#include "vton/diffusion/sampler.hpp"
#include "vton/diffusion/schedule.hpp"
#include "vton/mask.hpp"

namespace vton::pmg {

/// Everything inference needs besides the sample: codec, text encoder, schedule, networks.
struct Pipeline {
    const diffusion::UNetToy& main;
    const diffusion::UNetToy& reference;
    diffusion::PatchCodec codec{};
    diffusion::HashTextEncoder text{};
    diffusion::NoiseSchedule schedule = diffusion::make_schedule();
};

struct PMGConfig {
    double sigma = 0.5;
    int steps = 30;
    std::string segmentation_backend = "threshold";
    std::set<Label> target_classes;  // empty: every garment label (upper, lower, dress)
    bool composite = true;
    std::uint64_t seed = 0;
    double clip_z0 = 3.0;
};

/// RangeViolation unless sigma in [0, 1) and steps >= 2.
void validate(const PMGConfig& config);

/// Garment labels treated as the region of interest for a category.
std::set<Label> garment_classes(Category category);

class Segmenter {
public:
    virtual ~Segmenter() = default;
    virtual std::string id() const = 0;
    /// Label raster of the same size as `image`.
    virtual LabelMap segment(const RgbImage& image) const = 0;
};

/// Deterministic mock parser: each pixel takes the label of the nearest palette colour
/// (Euclidean RGB) when that distance is within `tolerance`, background otherwise.
class ThresholdSegmenter final : public Segmenter {
public:
    struct Entry {
        float r, g, b;
        Label label;
    };
    ThresholdSegmenter(std::vector<Entry> palette, float tolerance);
    /// Palette = mean colour of every non-garment parse class of the person, plus the
    /// shop garment's mean colour (pixels that differ from its corner backdrop) as `garment`.
    static ThresholdSegmenter for_sample(const TryOnSample& sample, float tolerance = 0.5f);

    std::string id() const override { return "threshold"; }
    LabelMap segment(const RgbImage& image) const override;
    const std::vector<Entry>& palette() const { return palette_; }

private:
    std::vector<Entry> palette_;
    float tolerance_;
};

/// Adapter for an external human-parsing program. `command` may contain {input} and {output};
/// the program reads an RGB PNG and writes a grayscale PNG of label ids.
class ExternalCommandSegmenter final : public Segmenter {
public:
    ExternalCommandSegmenter(std::string command, std::filesystem::path work_dir);
    std::string id() const override { return "external"; }
    LabelMap segment(const RgbImage& image) const override;

private:
    std::string command_;
    std::filesystem::path work_dir_;
};

std::unique_ptr<Segmenter> make_segmenter(const PMGConfig& config, const TryOnSample& sample,
                                          const std::string& external_command = {},
                                          const std::filesystem::path& work_dir = {});

/// Result of one sampling pass decoded to pixels.
struct PassResult {
    RgbImage decoded;        // G(z0_hat)
    Tensor latent;
    int denoiser_calls = 0;
};

/// Runs the sampler with `mask` as the inpainting mask for ceil((1 - sigma) steps) steps.
PassResult run_pass(const Pipeline& pipeline, const TryOnSample& sample, const Mask& mask, const PromptPair& prompts,
                    const PMGConfig& config, double stop_fraction);

/// Early-stopped pass under the coarse mask, decoded once.
PassResult pmg_coarse_pass(const Pipeline& pipeline, const TryOnSample& sample, const Mask& coarse,
                           const PromptPair& prompts, const PMGConfig& config);

/// (target-class pixels of x0_hat) ∪ fine, minus the hand/foot pixels of `parsing`.
/// SegmenterShapeMismatch if the segmenter output does not match the image.
Mask refine_mask(const RgbImage& x0_hat, const Mask& fine, const Segmenter& segmenter, const PMGConfig& config,
                 const LabelMap& parsing);

/// Output raster with the original person pasted outside `mask`.
RgbImage paste_outside(const RgbImage& generated, const RgbImage& original, const Mask& mask);

struct PMGResult {
    RgbImage image;          // final output (original pixels outside the refined mask)
    RgbImage decoded;        // final pass decoded, before the pixel paste
    RgbImage coarse_output;  // x0_hat of the coarse pass
    Mask fine, coarse, refined;
    int coarse_calls = 0;
    int final_calls = 0;
};

/// Coarse pass, refine_mask, then a full `steps`-step pass with the refined mask.
PMGResult pmg_generate(const Pipeline& pipeline, const TryOnSample& sample, const PromptPair& prompts,
                       const PMGConfig& config, const Segmenter& segmenter);

/// Single pass with a caller-chosen mask (no prompt-aware refinement).
PMGResult generate_with_mask(const Pipeline& pipeline, const TryOnSample& sample, const Mask& mask,
                             const PromptPair& prompts, const PMGConfig& config);

struct AblationRow {
    double sigma = 0.0;
    int coarse_steps = 0;
    int denoiser_calls = 0;
    double ssim = 0.0;           // output vs person, averaged over samples
    double refined_fraction = 0.0;
};

/// Runs pmg_generate for each sigma of `grid` over all samples.
std::vector<AblationRow> sigma_ablation(const Pipeline& pipeline, const std::vector<TryOnSample>& samples,
                                        const std::vector<PromptPair>& prompts, const PMGConfig& base,
                                        const std::vector<double>& grid = {0.8, 0.7, 0.6, 0.5, 0.4, 0.3});

/// "sigma,SSIM,LPIPS,FID,KID" rows; metrics without a backend are written as "-".
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace vton::pmg
