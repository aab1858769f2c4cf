#include "vton/config.hpp"

#include <fstream>

#include "vton/errors.hpp"

namespace vton {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json default_config() {
    return ordered_json::parse(R"({
  "dataset": {"root": "data", "split": "test", "pairing": "unpaired", "limit": 0},
  "captioner": {"exemplars": "", "fixture": "", "endpoint": "", "model": "gpt-4o", "retries": 2,
                "store": "", "overrides": []},
  "model": {"base_channels": 16, "attention_width": 32, "heads": 1, "text_dim": 32, "time_dim": 32,
            "checkpoint": ""},
  "schedule": {"timesteps": 1000, "beta_start": 0.0001, "beta_end": 0.02},
  "sampler": {"steps": 30, "sigma": 0.5, "composite": true, "clip_z0": 3.0},
  "pmg": {"enabled": true, "segmenter": "threshold", "segmenter_command": "", "dump_masks": false},
  "masks": {"n_max": 0, "element": "square", "radius": 1},
  "train": {"steps": 200, "batch": 4, "optimizer": "adam", "learning_rate": 0.001},
  "eval": {"attribute": "tucking style", "target": "untucked", "caption_a": "fully tucked in",
           "caption_b": "untucked", "sigma_ablation": false},
  "synthetic": {"train_count": 8, "test_count": 4, "category": "upper_body", "height": 64, "width": 48},
  "seed": 0,
  "workers": 1,
  "output": "out"
})");
}

namespace {

void collect_keys(const ordered_json& node, const std::string& prefix, std::vector<std::string>& out) {
    for (auto it = node.begin(); it != node.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it->is_object())
            collect_keys(*it, key, out);
        else
            out.push_back(key);
    }
}

const char* type_name(const ordered_json& v) {
    if (v.is_boolean()) return "a boolean";
    if (v.is_number_integer()) return "an integer";
    if (v.is_number()) return "a number";
    if (v.is_string()) return "a string";
    if (v.is_array()) return "a list";
    return "an object";
}

bool compatible(const ordered_json& def, const json& value) {
    if (def.is_boolean()) return value.is_boolean();
    if (def.is_number_integer()) return value.is_number_integer();
    if (def.is_number()) return value.is_number();
    if (def.is_string()) return value.is_string();
    if (def.is_array()) {
        if (!value.is_array()) return false;
        for (const auto& e : value)
            if (!e.is_string()) return false;
        return true;
    }
    return value.is_object();
}

void merge_into(ordered_json& base, const json& overrides, const std::string& prefix) {
    if (!overrides.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
    for (auto it = overrides.begin(); it != overrides.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
        ordered_json& slot = base[it.key()];
        if (!compatible(slot, *it))
            throw ConfigError("config key '" + key + "' expects " + type_name(slot));
        if (slot.is_object())
            merge_into(slot, *it, key);
        else
            slot = *it;
    }
}

ordered_json& leaf(ordered_json& config, const std::string& dotted) {
    ordered_json* node = &config;
    std::size_t start = 0;
    while (true) {
        const auto dot = dotted.find('.', start);
        const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + dotted + "'");
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    if (node->is_object()) throw ConfigError("config key '" + dotted + "' is a section, not a value");
    return *node;
}

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    collect_keys(default_config(), "", keys);
    return keys;
}

ordered_json merge_config(const ordered_json& base, const json& overrides) {
    ordered_json out = base;
    merge_into(out, overrides, "");
    return out;
}

ordered_json load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return merge_config(default_config(), doc);
}

void set_config_value(ordered_json& config, const std::string& dotted_key, const std::string& text) {
    ordered_json& slot = leaf(config, dotted_key);
    try {
        std::size_t used = 0;
        if (slot.is_boolean()) {
            if (text == "true" || text == "1" || text == "on")
                slot = true;
            else if (text == "false" || text == "0" || text == "off")
                slot = false;
            else
                throw ConfigError("");
        } else if (slot.is_number_integer()) {
            const long long v = std::stoll(text, &used);
            if (used != text.size()) throw ConfigError("");
            slot = v;
        } else if (slot.is_number()) {
            const double v = std::stod(text, &used);
            if (used != text.size()) throw ConfigError("");
            slot = v;
        } else if (slot.is_array()) {
            slot.push_back(text);
        } else {
            slot = text;
        }
    } catch (const std::exception&) {
        throw ConfigError("config key '" + dotted_key + "' expects " + type_name(slot) + ", got '" + text + "'");
    }
}

namespace {

void require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError("config key '" + key + "' " + what);
}

}  // namespace

RunConfig to_run_config(const ordered_json& c) {
    RunConfig r;
    const auto& d = c.at("dataset");
    r.dataset_root = d.at("root").get<std::string>();
    r.split = d.at("split");
    r.pairing = d.at("pairing");
    r.limit = d.at("limit");
    require(r.split == "train" || r.split == "test", "dataset.split", "must be train or test");
    require(r.pairing == "paired" || r.pairing == "unpaired", "dataset.pairing", "must be paired or unpaired");
    require(r.limit >= 0, "dataset.limit", "must be >= 0");

    const auto& cap = c.at("captioner");
    r.exemplars = cap.at("exemplars").get<std::string>();
    r.fixture = cap.at("fixture").get<std::string>();
    r.endpoint = cap.at("endpoint");
    r.model_id = cap.at("model");
    r.retries = cap.at("retries");
    r.caption_store = cap.at("store").get<std::string>();
    r.overrides = cap.at("overrides").get<std::vector<std::string>>();
    require(r.retries >= 0, "captioner.retries", "must be >= 0");

    const auto& m = c.at("model");
    r.base_channels = m.at("base_channels");
    r.attention_width = m.at("attention_width");
    r.heads = m.at("heads");
    r.text_dim = m.at("text_dim");
    r.time_dim = m.at("time_dim");
    r.checkpoint = m.at("checkpoint").get<std::string>();
    require(r.base_channels > 0, "model.base_channels", "must be positive");
    require(r.heads > 0 && r.attention_width % r.heads == 0, "model.heads", "must divide model.attention_width");
    require(r.text_dim > 0 && r.text_dim % 2 == 0, "model.text_dim", "must be a positive even number");
    require(r.time_dim > 0 && r.time_dim % 2 == 0, "model.time_dim", "must be a positive even number");

    const auto& s = c.at("schedule");
    r.timesteps = s.at("timesteps");
    r.beta_start = s.at("beta_start");
    r.beta_end = s.at("beta_end");
    require(r.timesteps >= 1, "schedule.timesteps", "must be >= 1");

    const auto& smp = c.at("sampler");
    r.steps = smp.at("steps");
    r.sigma = smp.at("sigma");
    r.composite = smp.at("composite");
    r.clip_z0 = smp.at("clip_z0");
    require(r.steps >= 2 && r.steps <= r.timesteps, "sampler.steps", "must lie in [2, schedule.timesteps]");
    require(r.sigma >= 0.0 && r.sigma < 1.0, "sampler.sigma", "must lie in [0, 1)");

    const auto& p = c.at("pmg");
    r.pmg = p.at("enabled");
    r.segmenter = p.at("segmenter");
    r.segmenter_command = p.at("segmenter_command");
    r.dump_masks = p.at("dump_masks");
    require(r.segmenter == "threshold" || r.segmenter == "external", "pmg.segmenter", "must be threshold or external");
    require(r.segmenter != "external" || !r.segmenter_command.empty(), "pmg.segmenter_command",
            "is required for the external segmenter");

    const auto& mk = c.at("masks");
    r.n_max = mk.at("n_max");
    r.element = mk.at("element");
    r.element_radius = mk.at("radius");
    require(r.n_max >= 0, "masks.n_max", "must be >= 0");
    require(r.element == "square" || r.element == "cross", "masks.element", "must be square or cross");
    require(r.element_radius >= 1, "masks.radius", "must be >= 1");

    const auto& t = c.at("train");
    r.train_steps = t.at("steps");
    r.batch_size = t.at("batch");
    r.optimizer = t.at("optimizer");
    r.learning_rate = t.at("learning_rate");
    require(r.train_steps >= 1, "train.steps", "must be >= 1");
    require(r.batch_size >= 1, "train.batch", "must be >= 1");
    require(r.optimizer == "sgd" || r.optimizer == "adam", "train.optimizer", "must be sgd or adam");
    require(r.learning_rate > 0.0, "train.learning_rate", "must be positive");

    const auto& e = c.at("eval");
    r.eval_attribute = e.at("attribute");
    r.eval_target = e.at("target");
    r.eval_caption_a = e.at("caption_a");
    r.eval_caption_b = e.at("caption_b");
    r.eval_sigma_ablation = e.at("sigma_ablation");

    const auto& syn = c.at("synthetic");
    r.synthetic_train = syn.at("train_count");
    r.synthetic_test = syn.at("test_count");
    r.synthetic_category = syn.at("category");
    r.synthetic_height = syn.at("height");
    r.synthetic_width = syn.at("width");
    require(r.synthetic_train >= 1 && r.synthetic_test >= 1, "synthetic.train_count", "and test_count must be >= 1");
    require(r.synthetic_height % 16 == 0 && r.synthetic_width % 16 == 0 && r.synthetic_height >= 16 &&
                r.synthetic_width >= 16,
            "synthetic.height", "and width must be positive multiples of 16");

    const long long seed = c.at("seed");
    require(seed >= 0, "seed", "must be >= 0");
    r.seed = static_cast<std::uint64_t>(seed);
    r.workers = c.at("workers");
    require(r.workers >= 1, "workers", "must be >= 1");
    r.output = c.at("output").get<std::string>();

    if (r.exemplars.empty()) r.exemplars = r.dataset_root / "exemplars";
    if (r.caption_store.empty()) r.caption_store = r.output / "captions.ndjson";
    if (r.checkpoint.empty()) r.checkpoint = r.output / "model.ckpt";
    return r;
}

}  // namespace vton
