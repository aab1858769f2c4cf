#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vton/captioner.hpp"
#include "vton/image.hpp"
#include "vton/kernels.hpp"

namespace vton::eval {

/// Case-folded, trimmed, internal whitespace collapsed to single spaces.
std::string normalize_caption(std::string_view text);
bool captions_match(std::string_view a, std::string_view b);

/// Fraction of labels equal to `target` after normalization. EmptyInput on an empty list.
double base_ratio(const std::vector<std::string>& labels, std::string_view target);

/// One generated image per test entry, with the attribute override applied.
using EditedImageGenerator = std::function<ImageRef(const std::string& entry_id, const std::string& attribute,
                                                    const std::string& caption)>;

struct AlignmentTask {
    std::string attribute;       // e.g. "tucking style"
    std::string target_caption;  // e.g. "untucked"
    std::vector<std::string> entry_ids;
    LmmClient* judge = nullptr;
    AttributeSchema schema;      // person schema the judge answers in
    ExemplarSet exemplars;
    int retries = 2;
};

/// Re-captions each edited image with the judge and returns the match ratio.
/// SchemaMismatch if the attribute is not in the schema; EmptyInput if there are no entries.
double alignment_accuracy(const AlignmentTask& task, const EditedImageGenerator& generator);

/// c1 = (0.01 L)^2, c2 = (0.03 L)^2 for dynamic range L, 11x11 Gaussian window with sigma 1.5.
kernels::SsimParams default_ssim_params(double dynamic_range = 1.0);

/// Mean over channels of the mean local SSIM over all valid window positions.
/// ShapeMismatch on differing shapes or images smaller than the window.
double ssim(const RgbImage& a, const RgbImage& b, const kernels::SsimParams& params = default_ssim_params());
double ssim_gray(const std::vector<double>& a, const std::vector<double>& b, int height, int width,
                 const kernels::SsimParams& params = default_ssim_params());

/// Pluggable perceptual distance (an LPIPS-style network); absent by default.
using PerceptualMetric = std::function<double(const RgbImage&, const RgbImage&)>;

struct DiversityResult {
    double ssim_mean = 0.0;
    std::optional<double> perceptual_mean;
    std::size_t pairs = 0;
};

using CaptionedGenerator = std::function<RgbImage(const std::string& entry_id, const std::string& attribute,
                                                  const std::string& caption)>;

/// Generates caption_a and caption_b variants per entry and averages SSIM between them.
DiversityResult diversity_pairs(const CaptionedGenerator& generator, const std::vector<std::string>& entry_ids,
                                const std::string& attribute, const std::string& caption_a,
                                const std::string& caption_b, const PerceptualMetric& perceptual = {});

/// Sentence similarity in [0, 1] (1 for identical strings).
using SentenceSimilarity = std::function<double(const std::string&, const std::string&)>;

/// Token-set Jaccard overlap of normalized captions; two empty strings count as identical.
double jaccard_similarity(const std::string& a, const std::string& b);

/// Mean over all pairs of label sets of the mean per-item similarity.
/// LengthMismatch if the sets differ in length, EmptyInput with fewer than two sets or empty sets.
double sts_agreement(const std::vector<std::vector<std::string>>& label_sets,
                     const SentenceSimilarity& similarity = jaccard_similarity);

/// Distribution-level metric slot (FID / KID style), computed from two image sets by an
/// external feature extractor. No implementation ships with the library.
using DistributionMetric = std::function<double(const std::vector<RgbImage>&, const std::vector<RgbImage>&)>;

struct MetricReport {
    std::map<std::string, double> metrics;  // base_ratio, alignment_accuracy, ssim_mean, diversity_ssim, ...
    std::size_t sample_count = 0;
    std::string config_fingerprint;

    /// RangeViolation if a ratio leaves [0, 1] or an SSIM leaves [-1, 1].
    void validate() const;
    nlohmann::ordered_json to_json() const;
    /// Header row of metric names, then one data row.
    std::string to_csv() const;
};

/// 16-hex-digit FNV-1a of the canonical JSON dump.
std::string fingerprint(const nlohmann::json& config);

/// Full-scale published results. A pretrained backbone, the real datasets and GPU training are
/// needed to approach them, so they are recorded for comparison and never asserted.
struct ReferenceTarget {
    std::string metric;
    std::string setting;
    double value = 0.0;
    bool reproducible_here = false;
};
const std::vector<ReferenceTarget>& reference_targets();

}  // namespace vton::eval
