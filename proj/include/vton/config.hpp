#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace vton {

/// Every configurable key with its default. Files and flags may only set keys present here.
nlohmann::ordered_json default_config();

/// Dotted paths of every leaf key, e.g. "sampler.steps".
std::vector<std::string> config_keys();

/// Overlays `overrides` on `base`. Unknown keys or wrong value types raise ConfigError
/// naming the dotted key path.
nlohmann::ordered_json merge_config(const nlohmann::ordered_json& base, const nlohmann::json& overrides);

nlohmann::ordered_json load_config_file(const std::filesystem::path& path);

/// Sets one leaf from its textual flag value, parsed according to the default's type.
void set_config_value(nlohmann::ordered_json& config, const std::string& dotted_key, const std::string& text);

struct RunConfig {
    // dataset
    std::filesystem::path dataset_root = "data";
    std::string split = "test";
    std::string pairing = "unpaired";
    int limit = 0;  // 0: all entries
    // captioner
    std::filesystem::path exemplars;  // empty: <dataset_root>/exemplars
    std::filesystem::path fixture;    // mock LMM answers; empty: use the HTTP endpoint
    std::string endpoint;
    std::string model_id = "gpt-4o";
    int retries = 2;
    std::filesystem::path caption_store;  // empty: <output>/captions.ndjson
    std::vector<std::string> overrides;   // "name=value"
    // model
    int base_channels = 16;
    int attention_width = 32;
    int heads = 1;
    int text_dim = 32;
    int time_dim = 32;
    std::filesystem::path checkpoint;  // empty: <output>/model.ckpt
    // schedule
    int timesteps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    // sampler / PMG
    int steps = 30;
    double sigma = 0.5;
    bool composite = true;
    double clip_z0 = 3.0;
    bool pmg = true;
    std::string segmenter = "threshold";
    std::string segmenter_command;
    bool dump_masks = false;
    // masks
    int n_max = 0;  // 0: ceil(max(H, W) / 16)
    std::string element = "square";
    int element_radius = 1;
    // training
    int train_steps = 200;
    int batch_size = 4;
    std::string optimizer = "adam";
    double learning_rate = 1e-3;
    // evaluation
    std::string eval_attribute = "tucking style";
    std::string eval_target = "untucked";
    std::string eval_caption_a = "fully tucked in";
    std::string eval_caption_b = "untucked";
    bool eval_sigma_ablation = false;
    // synthetic data
    int synthetic_train = 8;
    int synthetic_test = 4;
    std::string synthetic_category = "upper_body";
    int synthetic_height = 64;
    int synthetic_width = 48;
    // run
    std::uint64_t seed = 0;
    int workers = 1;
    std::filesystem::path output = "out";
};

/// Reads a merged config (ConfigError on out-of-range values).
RunConfig to_run_config(const nlohmann::ordered_json& config);

}  // namespace vton
