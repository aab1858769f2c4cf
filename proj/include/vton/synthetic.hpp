#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vton/data_model.hpp"

namespace vton::synthetic {

/// Ground-truth attributes the generator drew; they double as mock-LMM fixtures.
struct Attributes {
    std::map<std::string, std::string> person;
    std::map<std::string, std::string> clothing;
};

struct GeneratedSample {
    TryOnSample sample;
    Attributes attributes;
};

struct Options {
    Size size{64, 48};
    Category category = Category::upper_body;
    /// Force the tucking style ("fully tucked in" / "untucked"); empty draws it.
    std::string tucking;
};

/// Procedural person: background, head, torso garment, arms, hands, legs, feet.
/// Deterministic in (id, seed, options).
GeneratedSample generate(const std::string& id, std::uint64_t seed, const Options& options = {});

/// Swap the clothing of `person` for the garment of `garment_source` (same category).
TryOnSample pair_unpaired(const GeneratedSample& person, const GeneratedSample& garment_source);

/// Fine-region neutralization used for the agnostic image: masked pixels become mid gray.
RgbImage make_agnostic(const RgbImage& person, const LabelMap& parsing, Category category);

struct DatasetOptions {
    int train_count = 8;
    int test_count = 4;
    std::uint64_t seed = 1;
    Size size{64, 48};
    Category category = Category::upper_body;
};

/// Writes a complete dataset tree (both splits, paired and unpaired pair lists) plus
/// `fixtures/captions.json` (mock LMM answers) and `exemplars/{person,clothing}/`.
void write_dataset(const std::filesystem::path& root, const DatasetOptions& options);

/// Fixture document layout: {"person": {id: {attr: caption}}, "clothing": {...}}.
std::filesystem::path fixtures_path(const std::filesystem::path& root);

}  // namespace vton::synthetic
