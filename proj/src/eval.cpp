#include "vton/eval.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "vton/lmm_client.hpp"

namespace vton::eval {

std::string normalize_caption(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (char ch : text) {
        const auto uc = static_cast<unsigned char>(ch);
        if (std::isspace(uc)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(uc)));
    }
    return out;
}

bool captions_match(std::string_view a, std::string_view b) { return normalize_caption(a) == normalize_caption(b); }

double base_ratio(const std::vector<std::string>& labels, std::string_view target) {
    if (labels.empty()) throw EmptyInput("base_ratio needs at least one label");
    const std::string want = normalize_caption(target);
    std::size_t hits = 0;
    for (const auto& l : labels)
        if (normalize_caption(l) == want) ++hits;
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double alignment_accuracy(const AlignmentTask& task, const EditedImageGenerator& generator) {
    if (task.entry_ids.empty()) throw EmptyInput("alignment task has no test entries");
    if (task.judge == nullptr) throw Error("alignment task has no judge");
    if (!task.schema.contains(task.attribute))
        throw SchemaMismatch("attribute '" + task.attribute + "' is not in the " +
                             std::string(to_string(task.schema.subject)) + " schema");
    std::vector<std::string> judged;
    judged.reserve(task.entry_ids.size());
    for (const auto& id : task.entry_ids) {
        const ImageRef image = generator(id, task.attribute, task.target_caption);
        const ICLRequest request = build_icl_request(task.schema, task.exemplars, image);
        const CaptionRecord record = caption_image(*task.judge, request, task.retries, fixed_clock());
        judged.push_back(record.captions.at(task.attribute));
    }
    return base_ratio(judged, task.target_caption);
}

kernels::SsimParams default_ssim_params(double dynamic_range) {
    kernels::SsimParams p;
    p.window = 11;
    p.gaussian_sigma = 1.5;
    p.c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
    p.c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
    return p;
}

double ssim_gray(const std::vector<double>& a, const std::vector<double>& b, int height, int width,
                 const kernels::SsimParams& params) {
    if (a.size() != b.size() || a.size() != static_cast<std::size_t>(height) * width)
        throw ShapeMismatch("ssim: planes differ in size");
    if (height < params.window || width < params.window)
        throw ShapeMismatch("ssim: image " + std::to_string(height) + "x" + std::to_string(width) +
                            " smaller than the " + std::to_string(params.window) + "-pixel window");
    return kernels::parallel::ssim_channel(a, b, height, width, params);
}

double ssim(const RgbImage& a, const RgbImage& b, const kernels::SsimParams& params) {
    if (a.size() != b.size()) throw ShapeMismatch("ssim: images differ in size");
    const int h = a.height();
    const int w = a.width();
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        std::vector<double> pa(static_cast<std::size_t>(h) * w), pb(pa.size());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                pa[static_cast<std::size_t>(y) * w + x] = a.at(y, x, c);
                pb[static_cast<std::size_t>(y) * w + x] = b.at(y, x, c);
            }
        total += ssim_gray(pa, pb, h, w, params);
    }
    return total / 3.0;
}

DiversityResult diversity_pairs(const CaptionedGenerator& generator, const std::vector<std::string>& entry_ids,
                                const std::string& attribute, const std::string& caption_a,
                                const std::string& caption_b, const PerceptualMetric& perceptual) {
    if (entry_ids.empty()) throw EmptyInput("diversity measurement needs at least one entry");
    DiversityResult r;
    double ssim_sum = 0.0;
    double perceptual_sum = 0.0;
    for (const auto& id : entry_ids) {
        const RgbImage a = generator(id, attribute, caption_a);
        const RgbImage b = generator(id, attribute, caption_b);
        ssim_sum += ssim(a, b);
        if (perceptual) perceptual_sum += perceptual(a, b);
        ++r.pairs;
    }
    r.ssim_mean = ssim_sum / static_cast<double>(r.pairs);
    if (perceptual) r.perceptual_mean = perceptual_sum / static_cast<double>(r.pairs);
    return r;
}

double jaccard_similarity(const std::string& a, const std::string& b) {
    const auto tokens = [](const std::string& s) {
        std::set<std::string> out;
        std::istringstream in(normalize_caption(s));
        for (std::string t; in >> t;) out.insert(t);
        return out;
    };
    const auto ta = tokens(a);
    const auto tb = tokens(b);
    if (ta.empty() && tb.empty()) return 1.0;
    std::size_t common = 0;
    for (const auto& t : ta) common += tb.count(t);
    return static_cast<double>(common) / static_cast<double>(ta.size() + tb.size() - common);
}

double sts_agreement(const std::vector<std::vector<std::string>>& label_sets, const SentenceSimilarity& similarity) {
    if (label_sets.size() < 2) throw EmptyInput("STS agreement needs at least two label sets");
    const std::size_t n = label_sets.front().size();
    if (n == 0) throw EmptyInput("STS agreement needs nonempty label sets");
    for (const auto& s : label_sets)
        if (s.size() != n)
            throw LengthMismatch("label sets differ in length (" + std::to_string(s.size()) + " vs " +
                                 std::to_string(n) + ")");
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < label_sets.size(); ++i)
        for (std::size_t j = i + 1; j < label_sets.size(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += similarity(label_sets[i][k], label_sets[j][k]);
            total += acc / static_cast<double>(n);
            ++pairs;
        }
    return total / static_cast<double>(pairs);
}

void MetricReport::validate() const {
    for (const auto& [name, value] : metrics) {
        const bool is_ssim = name.find("ssim") != std::string::npos;
        const bool is_ratio = name == "base_ratio" || name == "alignment_accuracy" || name == "sts_mean";
        if (!std::isfinite(value)) throw RangeViolation("metric " + name + " is not finite");
        if (is_ssim && (value < -1.0 || value > 1.0)) throw RangeViolation("metric " + name + " outside [-1, 1]");
        if (is_ratio && (value < 0.0 || value > 1.0)) throw RangeViolation("metric " + name + " outside [0, 1]");
    }
}

nlohmann::ordered_json MetricReport::to_json() const {
    nlohmann::ordered_json j;
    j["metrics"] = nlohmann::ordered_json::object();
    for (const auto& [name, value] : metrics) j["metrics"][name] = value;
    j["sample_count"] = sample_count;
    j["config_fingerprint"] = config_fingerprint;
    return j;
}

std::string MetricReport::to_csv() const {
    std::ostringstream out;
    out << "samples";
    for (const auto& [name, value] : metrics) out << ',' << name;
    out << '\n' << sample_count;
    for (const auto& [name, value] : metrics) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", value);
        out << ',' << buf;
    }
    out << '\n';
    return out.str();
}

std::string fingerprint(const nlohmann::json& config) {
    const std::string text = config.dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

const std::vector<ReferenceTarget>& reference_targets() {
    static const std::vector<ReferenceTarget> targets = {
        {"ssim", "VITON-HD paired", 0.8686, false},
        {"lpips", "VITON-HD paired", 0.1119, false},
        {"fid", "VITON-HD unpaired", 8.54, false},
        {"kid", "VITON-HD unpaired (x1e3)", 0.67, false},
        {"fid", "SHHQ-1.0 cross-dataset", 23.46, false},
        {"kid", "SHHQ-1.0 cross-dataset (x1e3)", 6.18, false},
        {"alignment_accuracy", "untucked, trained model", 0.8942, false},
        {"alignment_accuracy", "tight fit, trained model", 0.6698, false},
        {"base_ratio", "untucked, unedited test set", 0.4464, true},
        {"base_ratio", "tight fit, unedited test set", 0.2313, true},
        {"diversity_ssim", "tucked vs untucked, trained model", 0.8702, false},
        {"diversity_ssim", "tucked vs untucked, IDM-VTON", 0.9401, false},
        {"sts_mean", "LMM vs human labels", 0.8622, false},
        {"sts_mean", "human vs human labels", 0.8889, false},
    };
    return targets;
}

}  // namespace vton::eval
