#include "vton/data_model.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "vton/png_io.hpp"

namespace vton {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kLabelCount> kLabelNames = {
    "background", "hair", "face", "neck", "torso_skin", "upper_clothes",
    "dress", "lower_clothes", "arms", "hands", "legs", "feet",
};

void require_file(const fs::path& path) {
    if (!fs::exists(path)) throw MissingFile("missing file: " + path.string());
}

}  // namespace

std::string_view label_name(Label label) { return kLabelNames.at(static_cast<std::size_t>(label)); }

std::optional<Label> label_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kLabelNames.size(); ++i)
        if (kLabelNames[i] == name) return static_cast<Label>(i);
    return std::nullopt;
}

std::string_view to_string(Category category) {
    switch (category) {
        case Category::upper_body: return "upper_body";
        case Category::lower_body: return "lower_body";
        case Category::dresses: return "dresses";
    }
    return "upper_body";
}

Category category_from_string(std::string_view text) {
    if (text == "upper_body") return Category::upper_body;
    if (text == "lower_body") return Category::lower_body;
    if (text == "dresses") return Category::dresses;
    throw Error("unknown category '" + std::string(text) + "'");
}

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }
std::string_view to_string(Pairing pairing) { return pairing == Pairing::paired ? "paired" : "unpaired"; }

Split split_from_string(std::string_view text) {
    if (text == "train") return Split::train;
    if (text == "test") return Split::test;
    throw Error("unknown split '" + std::string(text) + "'");
}

Pairing pairing_from_string(std::string_view text) {
    if (text == "paired") return Pairing::paired;
    if (text == "unpaired") return Pairing::unpaired;
    throw Error("unknown pairing '" + std::string(text) + "'");
}

std::string_view to_string(Subject subject) { return subject == Subject::person ? "person" : "clothing"; }

Subject subject_from_string(std::string_view text) {
    if (text == "person") return Subject::person;
    if (text == "clothing") return Subject::clothing;
    throw Error("unknown subject '" + std::string(text) + "'");
}

void validate_sample(const TryOnSample& s) {
    const Size size = s.person.size();
    if (s.clothing.size() != size || s.agnostic.size() != size || s.parsing.size() != size)
        throw ShapeMismatch("sample " + s.sample_id + ": rasters do not share one size");
    for (std::uint8_t id : s.parsing.values())
        if (id >= kLabelCount)
            throw LabelSetViolation("sample " + s.sample_id + ": parse label " + std::to_string(id) + " not declared");
    if (s.pose.size() != static_cast<std::size_t>(kJointCount))
        throw Error("sample " + s.sample_id + ": expected " + std::to_string(kJointCount) + " keypoints");
    for (const Keypoint& k : s.pose) {
        if (k.confidence <= 0.0) continue;
        if (k.x < 0.0 || k.x >= size.width || k.y < 0.0 || k.y >= size.height)
            throw Error("sample " + s.sample_id + ": confident keypoint outside the frame");
    }
}

// ---------------------------------------------------------------------------
// Layout

fs::path DatasetLayout::split_root(const fs::path& root, Split split) { return root / std::string(to_string(split)); }

fs::path DatasetLayout::pairs_file(const fs::path& root, Split split, Pairing pairing) {
    return split_root(root, split) / ("pairs_" + std::string(to_string(pairing)) + ".txt");
}

fs::path DatasetLayout::person_image(const fs::path& r, const std::string& id) { return r / image_dir / (id + ".png"); }
fs::path DatasetLayout::cloth_image(const fs::path& r, const std::string& id) { return r / cloth_dir / (id + ".png"); }
fs::path DatasetLayout::parse_map(const fs::path& r, const std::string& id) { return r / parse_dir / (id + ".png"); }
fs::path DatasetLayout::pose_file(const fs::path& r, const std::string& id) { return r / pose_dir / (id + ".json"); }
fs::path DatasetLayout::agnostic_image(const fs::path& r, const std::string& id) { return r / agnostic_dir / (id + ".png"); }

DatasetIndex build_index(const fs::path& root, Split split, Pairing pairing) {
    const fs::path pairs = DatasetLayout::pairs_file(root, split, pairing);
    std::ifstream in(pairs);
    if (!in) throw MissingFile("missing pair list: " + pairs.string());

    DatasetIndex index{root, split, pairing, {}};
    const fs::path sroot = DatasetLayout::split_root(root, split);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream fields(line);
        IndexEntry entry;
        if (!(fields >> entry.person_id)) continue;
        if (!(fields >> entry.clothing_id))
            throw Error(pairs.string() + ":" + std::to_string(line_no) + ": expected two ids");
        std::string category;
        if (fields >> category) entry.category = category_from_string(category);
        if (pairing == Pairing::paired && entry.person_id != entry.clothing_id)
            throw Error(pairs.string() + ":" + std::to_string(line_no) + ": paired entry mixes ids");

        require_file(DatasetLayout::person_image(sroot, entry.person_id));
        require_file(DatasetLayout::parse_map(sroot, entry.person_id));
        require_file(DatasetLayout::pose_file(sroot, entry.person_id));
        require_file(DatasetLayout::agnostic_image(sroot, entry.person_id));
        require_file(DatasetLayout::cloth_image(sroot, entry.clothing_id));
        index.entries.push_back(std::move(entry));
    }
    return index;
}

std::vector<Keypoint> read_pose(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile("missing file: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw Error("cannot parse pose file " + path.string() + ": " + e.what());
    }
    std::vector<Keypoint> pose;
    for (const auto& k : doc.at("keypoints")) pose.push_back({k.at(0).get<double>(), k.at(1).get<double>(), k.at(2).get<double>()});
    return pose;
}

void write_pose(const fs::path& path, const std::vector<Keypoint>& pose) {
    json doc;
    doc["format"] = "coco18";
    doc["keypoints"] = json::array();
    for (const Keypoint& k : pose) doc["keypoints"].push_back({k.x, k.y, k.confidence});
    fs::create_directories(path.parent_path());
    std::ofstream(path) << doc.dump() << '\n';
}

TryOnSample load_sample(const DatasetIndex& index, std::size_t entry_idx) {
    if (entry_idx >= index.entries.size())
        throw IndexOutOfRange("entry " + std::to_string(entry_idx) + " out of range (" +
                              std::to_string(index.entries.size()) + " entries)");
    const IndexEntry& entry = index.entries[entry_idx];
    const fs::path sroot = DatasetLayout::split_root(index.root, index.split);

    TryOnSample s;
    s.person_id = entry.person_id;
    s.clothing_id = entry.clothing_id;
    s.sample_id = entry.person_id == entry.clothing_id ? entry.person_id : entry.person_id + "__" + entry.clothing_id;
    s.category = entry.category;
    s.person = png::read_rgb(DatasetLayout::person_image(sroot, entry.person_id));
    s.clothing = png::read_rgb(DatasetLayout::cloth_image(sroot, entry.clothing_id));
    s.agnostic = png::read_rgb(DatasetLayout::agnostic_image(sroot, entry.person_id));
    s.parsing = png::read_gray(DatasetLayout::parse_map(sroot, entry.person_id));
    s.pose = read_pose(DatasetLayout::pose_file(sroot, entry.person_id));
    validate_sample(s);
    return s;
}

void save_sample(const fs::path& split_root, const TryOnSample& s) {
    validate_sample(s);
    png::write_rgb(DatasetLayout::person_image(split_root, s.person_id), s.person);
    png::write_rgb(DatasetLayout::cloth_image(split_root, s.clothing_id), s.clothing);
    png::write_rgb(DatasetLayout::agnostic_image(split_root, s.person_id), s.agnostic);
    png::write_gray(DatasetLayout::parse_map(split_root, s.person_id), s.parsing);
    write_pose(DatasetLayout::pose_file(split_root, s.person_id), s.pose);
}

// ---------------------------------------------------------------------------
// Caption store

std::string serialize_record(const CaptionRecord& r) {
    json doc;
    doc["image_id"] = r.image_id;
    doc["subject"] = std::string(to_string(r.subject));
    doc["captions"] = r.captions;
    doc["lmm_model_id"] = r.lmm_model_id;
    doc["created_at"] = r.created_at;
    return doc.dump();
}

CaptionRecord parse_record(std::string_view line) {
    try {
        const json doc = json::parse(line);
        CaptionRecord r;
        r.image_id = doc.at("image_id").get<std::string>();
        r.subject = subject_from_string(doc.at("subject").get<std::string>());
        r.captions = doc.at("captions").get<std::map<std::string, std::string>>();
        r.lmm_model_id = doc.at("lmm_model_id").get<std::string>();
        r.created_at = doc.at("created_at").get<std::string>();
        return r;
    } catch (const json::exception& e) {
        throw StoreCorrupt(std::string("unparseable caption record: ") + e.what());
    } catch (const Error& e) {
        throw StoreCorrupt(std::string("invalid caption record: ") + e.what());
    }
}

namespace {

std::mutex& store_mutex() {
    static std::mutex m;
    return m;
}

/// Exclusive advisory lock on `<store>.lock`, serializing writers across processes.
class FileLock {
public:
    explicit FileLock(const fs::path& path) : fd_(::open(path.c_str(), O_CREAT | O_RDWR, 0644)) {
        if (fd_ < 0) throw Error("cannot open lock file " + path.string());
        ::flock(fd_, LOCK_EX);
    }
    ~FileLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_;
};

}  // namespace

std::vector<CaptionRecord> CaptionStore::all() const {
    std::vector<CaptionRecord> records;
    std::ifstream in(path_);
    if (!in) return records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        records.push_back(parse_record(line));
    }
    return records;
}

std::optional<CaptionRecord> CaptionStore::get(const std::string& image_id, Subject subject) const {
    std::optional<CaptionRecord> found;
    for (auto& r : all())
        if (r.image_id == image_id && r.subject == subject) found = std::move(r);
    return found;
}

void CaptionStore::put(const CaptionRecord& record) const {
    if (record.image_id.empty()) throw Error("caption record without image id");
    std::lock_guard guard(store_mutex());
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    FileLock lock(fs::path(path_.string() + ".lock"));

    // Compact: keep the latest record per key, in first-seen key order, then append the new one.
    std::vector<CaptionRecord> kept;
    for (auto& r : all()) {
        if (r.image_id == record.image_id && r.subject == record.subject) continue;
        auto same = std::find_if(kept.begin(), kept.end(), [&](const CaptionRecord& k) {
            return k.image_id == r.image_id && k.subject == r.subject;
        });
        if (same != kept.end())
            *same = std::move(r);
        else
            kept.push_back(std::move(r));
    }
    kept.push_back(record);

    const fs::path tmp = path_.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        for (const auto& r : kept) out << serialize_record(r) << '\n';
        out.flush();
        if (!out) throw Error("short write to " + tmp.string());
    }
    fs::rename(tmp, path_);
}

void cache_captions(const CaptionRecord& record, const fs::path& store_path) { CaptionStore(store_path).put(record); }

std::optional<CaptionRecord> lookup_captions(const std::string& image_id, Subject subject, const fs::path& store_path) {
    return CaptionStore(store_path).get(image_id, subject);
}

}  // namespace vton
