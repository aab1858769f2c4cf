#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vton/image.hpp"

namespace vton {

/// Fixed 12-class human parsing label set. Values are the ids stored in image-parse PNGs.
enum class Label : std::uint8_t {
    background = 0,
    hair = 1,
    face = 2,
    neck = 3,
    torso_skin = 4,
    upper_clothes = 5,
    dress = 6,
    lower_clothes = 7,
    arms = 8,
    hands = 9,
    legs = 10,
    feet = 11,
};

inline constexpr int kLabelCount = 12;

std::string_view label_name(Label label);
std::optional<Label> label_from_name(std::string_view name);
inline bool is_hand_or_foot(std::uint8_t id) {
    return id == static_cast<std::uint8_t>(Label::hands) || id == static_cast<std::uint8_t>(Label::feet);
}

enum class Category { upper_body, lower_body, dresses };
std::string_view to_string(Category category);
Category category_from_string(std::string_view text);

/// OpenPose COCO-18 keypoint order.
enum class Joint : int {
    nose = 0, neck = 1,
    r_shoulder = 2, r_elbow = 3, r_wrist = 4,
    l_shoulder = 5, l_elbow = 6, l_wrist = 7,
    r_hip = 8, r_knee = 9, r_ankle = 10,
    l_hip = 11, l_knee = 12, l_ankle = 13,
    r_eye = 14, l_eye = 15, r_ear = 16, l_ear = 17,
};
inline constexpr int kJointCount = 18;

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    double confidence = 0.0;
    bool operator==(const Keypoint&) const = default;
};

struct TryOnSample {
    std::string sample_id;
    std::string person_id;
    std::string clothing_id;
    RgbImage person;
    RgbImage clothing;
    RgbImage agnostic;
    LabelMap parsing;
    std::vector<Keypoint> pose;  // kJointCount entries
    Category category = Category::upper_body;

    Size size() const { return person.size(); }
    const Keypoint& joint(Joint j) const { return pose.at(static_cast<std::size_t>(j)); }
};

/// Throws ShapeMismatch / LabelSetViolation / Error when a sample breaks its invariants.
void validate_sample(const TryOnSample& sample);

enum class Split { train, test };
enum class Pairing { paired, unpaired };
std::string_view to_string(Split split);
std::string_view to_string(Pairing pairing);
Split split_from_string(std::string_view text);
Pairing pairing_from_string(std::string_view text);

struct IndexEntry {
    std::string person_id;
    std::string clothing_id;
    Category category = Category::upper_body;
    bool operator==(const IndexEntry&) const = default;
};

struct DatasetIndex {
    std::filesystem::path root;
    Split split = Split::test;
    Pairing pairing = Pairing::paired;
    std::vector<IndexEntry> entries;
};

/// Directory layout under a split root.
struct DatasetLayout {
    static constexpr const char* image_dir = "image";
    static constexpr const char* cloth_dir = "cloth";
    static constexpr const char* parse_dir = "image-parse";
    static constexpr const char* pose_dir = "pose";
    static constexpr const char* agnostic_dir = "agnostic";

    static std::filesystem::path split_root(const std::filesystem::path& root, Split split);
    static std::filesystem::path pairs_file(const std::filesystem::path& root, Split split, Pairing pairing);
    static std::filesystem::path person_image(const std::filesystem::path& split_root, const std::string& id);
    static std::filesystem::path cloth_image(const std::filesystem::path& split_root, const std::string& id);
    static std::filesystem::path parse_map(const std::filesystem::path& split_root, const std::string& id);
    static std::filesystem::path pose_file(const std::filesystem::path& split_root, const std::string& id);
    static std::filesystem::path agnostic_image(const std::filesystem::path& split_root, const std::string& id);
};

/// Reads `pairs_{paired,unpaired}.txt` (lines: person_id clothing_id [category]).
/// Every referenced asset must exist; entry order follows the file.
DatasetIndex build_index(const std::filesystem::path& root, Split split, Pairing pairing);

TryOnSample load_sample(const DatasetIndex& index, std::size_t entry_idx);

/// Writes every asset of the sample under `split_root` using the dataset layout.
void save_sample(const std::filesystem::path& split_root, const TryOnSample& sample);

std::vector<Keypoint> read_pose(const std::filesystem::path& path);
void write_pose(const std::filesystem::path& path, const std::vector<Keypoint>& pose);

// ---------------------------------------------------------------------------
// Captions

enum class Subject { person, clothing };
std::string_view to_string(Subject subject);
Subject subject_from_string(std::string_view text);

struct CaptionRecord {
    std::string image_id;
    Subject subject = Subject::person;
    std::map<std::string, std::string> captions;
    std::string lmm_model_id;
    std::string created_at;  // ISO-8601 UTC

    bool operator==(const CaptionRecord&) const = default;
};

/// Append-log caption store: one JSON record per line. Writes rewrite the
/// compacted log to a temporary file and rename it into place.
class CaptionStore {
public:
    explicit CaptionStore(std::filesystem::path path) : path_(std::move(path)) {}

    void put(const CaptionRecord& record) const;
    std::optional<CaptionRecord> get(const std::string& image_id, Subject subject) const;
    std::vector<CaptionRecord> all() const;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

std::string serialize_record(const CaptionRecord& record);
CaptionRecord parse_record(std::string_view line);

void cache_captions(const CaptionRecord& record, const std::filesystem::path& store_path);
std::optional<CaptionRecord> lookup_captions(const std::string& image_id, Subject subject,
                                             const std::filesystem::path& store_path);

}  // namespace vton
