#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "vton/captioner.hpp"
#include "vton/config.hpp"
#include "vton/diffusion/checkpoint.hpp"
#include "vton/diffusion/trainer.hpp"
#include "vton/eval.hpp"
#include "vton/lmm_client.hpp"
#include "vton/mask.hpp"
#include "vton/pmg.hpp"
#include "vton/png_io.hpp"
#include "vton/synthetic.hpp"

namespace vton::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string file_hash(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::uint64_t h = 1469598103934665603ULL;
    char buf[8192];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    return hex64(h);
}

struct Context {
    ordered_json config;
    RunConfig cfg;
    std::ostream& out;
};

/// Config fingerprint, versions, seed and output hashes; no timestamps so reruns are byte-identical.
void write_manifest(const Context& ctx, const std::string& command, const ordered_json& stats,
                    std::vector<fs::path> outputs) {
    std::sort(outputs.begin(), outputs.end());
    ordered_json files = ordered_json::array();
    for (const auto& p : outputs)
        files.push_back({{"path", fs::relative(p, ctx.cfg.output).generic_string()}, {"fnv1a64", file_hash(p)}});
    ordered_json m;
    m["command"] = command;
    m["versions"] = {{"tool", kToolVersion}, {"checkpoint_format", diffusion::kCheckpointVersion}};
    m["seed"] = ctx.cfg.seed;
    m["config_fingerprint"] = eval::fingerprint(json(ctx.config));
    m["config"] = ctx.config;
    m["stats"] = stats;
    m["outputs"] = files;
    const fs::path path = ctx.cfg.output / ("manifest-" + command + ".json");
    std::ofstream(path) << m.dump(2) << '\n';
    ctx.out << "wrote " << path.string() << '\n';
}

DatasetIndex open_index(const RunConfig& cfg, Split split, Pairing pairing) {
    DatasetIndex index = build_index(cfg.dataset_root, split, pairing);
    if (cfg.limit > 0 && index.entries.size() > static_cast<std::size_t>(cfg.limit))
        index.entries.resize(static_cast<std::size_t>(cfg.limit));
    if (index.entries.empty()) throw EmptyInput("dataset split has no entries: " + cfg.dataset_root.string());
    return index;
}

DatasetIndex open_index(const RunConfig& cfg) {
    return open_index(cfg, split_from_string(cfg.split), pairing_from_string(cfg.pairing));
}

std::unique_ptr<LmmClient> make_client(const RunConfig& cfg, bool required) {
    if (!cfg.fixture.empty()) return std::make_unique<FixtureLmmClient>(FixtureLmmClient::from_file(cfg.fixture));
    if (!cfg.endpoint.empty()) {
        HttpLmmOptions opts;
        opts.endpoint = cfg.endpoint;
        opts.model = cfg.model_id;
        return std::make_unique<HttpLmmClient>(opts);
    }
    if (required) throw ConfigError("config key 'captioner.fixture' or 'captioner.endpoint' must be set");
    return nullptr;
}

Clock clock_for(const RunConfig& cfg) { return cfg.fixture.empty() ? Clock{} : fixed_clock(); }

ImageRef person_ref(const DatasetIndex& index, const std::string& id) {
    return {id, DatasetLayout::person_image(DatasetLayout::split_root(index.root, index.split), id)};
}
ImageRef clothing_ref(const DatasetIndex& index, const std::string& id) {
    return {id, DatasetLayout::cloth_image(DatasetLayout::split_root(index.root, index.split), id)};
}

/// Captions from the store, or fetched with the configured client when the store lacks them.
class CaptionSource {
public:
    CaptionSource(const RunConfig& cfg) : cfg_(cfg), store_(cfg.caption_store) {}

    CaptionRecord get(const DatasetIndex& index, const std::string& id, Subject subject, Category category) {
        if (fs::exists(store_.path()))
            if (auto r = store_.get(id, subject)) return *r;
        if (!client_) client_ = make_client(cfg_, false);
        if (!client_)
            throw ConfigError("no stored captions for '" + id + "'; run `caption` first or set captioner.fixture");
        const AttributeSchema schema = default_schema(subject, category);
        const ExemplarSet ex = load_exemplars(cfg_.exemplars / std::string(to_string(subject)), subject);
        const ImageRef ref = subject == Subject::person ? person_ref(index, id) : clothing_ref(index, id);
        return caption_image(*client_, build_icl_request(schema, ex, ref), cfg_.retries, clock_for(cfg_));
    }

    PromptPair prompts(const DatasetIndex& index, const TryOnSample& sample,
                       const std::map<std::string, std::string>& overrides) {
        const CaptionRecord person = get(index, sample.person_id, Subject::person, sample.category);
        const CaptionRecord clothing = get(index, sample.clothing_id, Subject::clothing, sample.category);
        return render_main_prompt(default_schema(Subject::person, sample.category), person,
                                  default_schema(Subject::clothing, sample.category), clothing, overrides);
    }

private:
    const RunConfig& cfg_;
    CaptionStore store_;
    std::unique_ptr<LmmClient> client_;
};

std::map<std::string, std::string> parsed_overrides(const RunConfig& cfg) {
    std::map<std::string, std::string> out;
    for (const auto& o : cfg.overrides) {
        auto [k, v] = parse_override(o);
        out[k] = v;
    }
    return out;
}

diffusion::UNetConfig unet_config(const RunConfig& cfg) {
    diffusion::UNetConfig u;
    u.base_channels = cfg.base_channels;
    u.attention_width = cfg.attention_width;
    u.heads = cfg.heads;
    u.text_dim = cfg.text_dim;
    u.time_dim = cfg.time_dim;
    return u;
}

pmg::PMGConfig pmg_config(const RunConfig& cfg) {
    pmg::PMGConfig p;
    p.sigma = cfg.sigma;
    p.steps = cfg.steps;
    p.segmentation_backend = cfg.segmenter;
    p.composite = cfg.composite;
    p.seed = cfg.seed;
    p.clip_z0 = cfg.clip_z0;
    return p;
}

/// Runs fn(i) for i in [0, n) on `workers` threads; results are written by index so order is fixed.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        for (int w = 0; w < std::min<int>(workers, static_cast<int>(n)); ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
    }
    if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------

int cmd_gen_synthetic(const Context& ctx) {
    const RunConfig& cfg = ctx.cfg;
    synthetic::DatasetOptions opts;
    opts.train_count = cfg.synthetic_train;
    opts.test_count = cfg.synthetic_test;
    opts.seed = cfg.seed;
    opts.size = {cfg.synthetic_height, cfg.synthetic_width};
    opts.category = category_from_string(cfg.synthetic_category);
    synthetic::write_dataset(cfg.output, opts);
    std::vector<fs::path> outputs;
    for (const auto& e : fs::recursive_directory_iterator(cfg.output))
        if (e.is_regular_file() && e.path().filename().string().rfind("manifest-", 0) != 0) outputs.push_back(e.path());
    write_manifest(ctx, "gen-synthetic", {{"train_samples", opts.train_count}, {"test_samples", opts.test_count}},
                   outputs);
    return kOk;
}

int cmd_caption(const Context& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const DatasetIndex index = open_index(cfg);
    auto client = make_client(cfg, true);
    std::vector<ICLRequest> requests;
    std::set<std::pair<std::string, int>> seen;
    std::map<Subject, ExemplarSet> exemplars;
    for (Subject s : {Subject::person, Subject::clothing})
        exemplars[s] = load_exemplars(cfg.exemplars / std::string(to_string(s)), s);
    for (const auto& e : index.entries) {
        if (seen.insert({e.person_id, 0}).second)
            requests.push_back(build_icl_request(default_schema(Subject::person, e.category), exemplars[Subject::person],
                                                 person_ref(index, e.person_id)));
        if (seen.insert({e.clothing_id, 1}).second)
            requests.push_back(build_icl_request(default_schema(Subject::clothing, e.category),
                                                 exemplars[Subject::clothing], clothing_ref(index, e.clothing_id)));
    }
    const auto records = caption_batch(*client, requests, cfg.retries, cfg.workers, clock_for(cfg));
    CaptionStore store(cfg.caption_store);
    for (const auto& r : records) store.put(r);
    ctx.out << "captioned " << records.size() << " images into " << cfg.caption_store.string() << '\n';
    write_manifest(ctx, "caption", {{"records", records.size()}, {"model", client->model_id()}}, {cfg.caption_store});
    return kOk;
}

StructuringElement element_for(const RunConfig& cfg) {
    return cfg.element == "cross" ? StructuringElement::cross(cfg.element_radius)
                                  : StructuringElement::square(cfg.element_radius);
}

int cmd_build_masks(const Context& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const DatasetIndex index = open_index(cfg);
    const fs::path dir = cfg.output / "masks";
    std::vector<fs::path> outputs;
    ordered_json counts = ordered_json::object();
    for (std::size_t i = 0; i < index.entries.size(); ++i) {
        const TryOnSample s = load_sample(index, i);
        const Mask fine = build_fine_mask(s);
        const Mask coarse = build_coarse_mask(s);
        DilationSpec spec{element_for(cfg), cfg.n_max > 0 ? cfg.n_max : default_n_max(s.size()), cfg.seed + i};
        const Mask dilated = random_dilation_augment(fine, coarse, spec);
        for (const auto& [suffix, m] : {std::pair{"fine", &fine}, std::pair{"coarse", &coarse}, std::pair{"dilated", &dilated}}) {
            const fs::path p = dir / (s.sample_id + "_" + suffix + ".png");
            write_mask_png(p, *m);
            outputs.push_back(p);
        }
        counts[s.sample_id] = draw_dilation_count(spec);
    }
    ctx.out << "wrote masks for " << index.entries.size() << " samples to " << dir.string() << '\n';
    write_manifest(ctx, "build-masks", {{"samples", index.entries.size()}, {"dilation_n", counts}}, outputs);
    return kOk;
}

int cmd_train_toy(const Context& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const DatasetIndex index = open_index(cfg, Split::train, Pairing::paired);
    CaptionSource captions(cfg);
    std::vector<TryOnSample> samples;
    std::vector<PromptPair> prompts;
    for (std::size_t i = 0; i < index.entries.size(); ++i) {
        samples.push_back(load_sample(index, i));
        prompts.push_back(captions.prompts(index, samples.back(), {}));
    }

    diffusion::ModelPair models = diffusion::make_models(unet_config(cfg), cfg.seed);
    const std::uint64_t reference_before = models.reference->checksum();
    const diffusion::NoiseSchedule schedule = diffusion::make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);
    std::unique_ptr<diffusion::Optimizer> opt;
    if (cfg.optimizer == "sgd")
        opt = std::make_unique<diffusion::Sgd>(cfg.learning_rate);
    else
        opt = std::make_unique<diffusion::Adam>(cfg.learning_rate);
    diffusion::Trainer trainer(*models.main, *models.reference, schedule, std::move(opt), cfg.seed);
    const diffusion::PatchCodec codec;
    const diffusion::HashTextEncoder text(cfg.text_dim);

    const fs::path loss_path = cfg.output / "train_loss.csv";
    fs::create_directories(cfg.output);
    std::ofstream loss_log(loss_path);
    loss_log << "step,loss\n";
    std::vector<double> losses;
    for (int step = 0; step < cfg.train_steps; ++step) {
        std::vector<diffusion::TrainingExample> batch;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const std::size_t k = static_cast<std::size_t>(step * cfg.batch_size + b);
            const TryOnSample& s = samples[k % samples.size()];
            DilationSpec spec{element_for(cfg), cfg.n_max > 0 ? cfg.n_max : default_n_max(s.size()),
                              cfg.seed * 1000003ULL + k};
            batch.push_back(diffusion::prepare_example(s, prompts[k % samples.size()], codec, text, spec));
        }
        losses.push_back(trainer.train_step(batch));
        char buf[64];
        std::snprintf(buf, sizeof buf, "%d,%.9g\n", step, losses.back());
        loss_log << buf;
    }
    loss_log.close();
    diffusion::save_checkpoint(cfg.checkpoint, *models.main, *models.reference);

    const std::size_t window = std::min<std::size_t>(10, losses.size());
    double head = 0, tail = 0;
    for (std::size_t i = 0; i < window; ++i) {
        head += losses[i] / window;
        tail += losses[losses.size() - 1 - i] / window;
    }
    ctx.out << "trained " << cfg.train_steps << " steps: loss " << head << " -> " << tail << '\n';
    write_manifest(ctx, "train-toy",
                   {{"steps", cfg.train_steps},
                    {"parameters", models.main->parameter_count()},
                    {"initial_loss", head},
                    {"final_loss", tail},
                    {"reference_checksum_before", hex64(reference_before)},
                    {"reference_checksum_after", hex64(models.reference->checksum())}},
                   {cfg.checkpoint, loss_path});
    return kOk;
}

struct Generation {
    pmg::PMGResult result;
    std::string sample_id;
};

/// Try-on of one sample with the configured mask strategy.
pmg::PMGResult generate_one(const RunConfig& cfg, const pmg::Pipeline& pipe, const TryOnSample& sample,
                            const PromptPair& prompts, const fs::path& scratch) {
    const pmg::PMGConfig pc = pmg_config(cfg);
    if (!cfg.pmg) return pmg::generate_with_mask(pipe, sample, build_coarse_mask(sample), prompts, pc);
    const auto seg = pmg::make_segmenter(pc, sample, cfg.segmenter_command, scratch);
    return pmg::pmg_generate(pipe, sample, prompts, pc, *seg);
}

pmg::Pipeline make_pipeline(const RunConfig& cfg, const diffusion::ModelPair& models) {
    return pmg::Pipeline{*models.main, *models.reference, diffusion::PatchCodec{},
                         diffusion::HashTextEncoder(cfg.text_dim),
                         diffusion::make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)};
}

int cmd_tryon(const Context& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const DatasetIndex index = open_index(cfg);
    const diffusion::ModelPair models = diffusion::load_checkpoint(cfg.checkpoint);
    const pmg::Pipeline pipe = make_pipeline(cfg, models);
    CaptionSource captions(cfg);
    const auto overrides = parsed_overrides(cfg);

    const std::size_t n = index.entries.size();
    std::vector<TryOnSample> samples(n);
    std::vector<PromptPair> prompts(n);
    for (std::size_t i = 0; i < n; ++i) {
        samples[i] = load_sample(index, i);
        prompts[i] = captions.prompts(index, samples[i], overrides);
    }
    std::vector<pmg::PMGResult> results(n);
    parallel_for(n, cfg.workers, [&](std::size_t i) {
        results[i] = generate_one(cfg, pipe, samples[i], prompts[i], cfg.output / "tmp" / std::to_string(i));
    });

    const fs::path dir = cfg.output / "tryon";
    std::vector<fs::path> outputs;
    ordered_json per_sample = ordered_json::array();
    int coarse_calls = 0, final_calls = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const fs::path p = dir / (samples[i].sample_id + ".png");
        png::write_rgb(p, results[i].image);
        outputs.push_back(p);
        if (cfg.dump_masks) {
            const fs::path mp = dir / "masks" / (samples[i].sample_id + "_refined.png");
            write_mask_png(mp, results[i].refined);
            outputs.push_back(mp);
        }
        coarse_calls += results[i].coarse_calls;
        final_calls += results[i].final_calls;
        per_sample.push_back({{"sample", samples[i].sample_id},
                              {"main_prompt", prompts[i].main_prompt},
                              {"coarse_calls", results[i].coarse_calls},
                              {"final_calls", results[i].final_calls},
                              {"refined_pixels", results[i].refined.count()}});
    }
    fs::remove_all(cfg.output / "tmp");
    ctx.out << "generated " << n << " try-on images in " << dir.string() << '\n';
    write_manifest(ctx, "tryon",
                   {{"samples", n},
                    {"pmg", cfg.pmg},
                    {"coarse_steps_per_sample", cfg.pmg ? diffusion::executed_steps(cfg.steps, cfg.sigma) : 0},
                    {"final_steps_per_sample", cfg.steps},
                    {"coarse_calls", coarse_calls},
                    {"final_calls", final_calls},
                    {"per_sample", per_sample}},
                   outputs);
    return kOk;
}

int cmd_evaluate(const Context& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const DatasetIndex index = open_index(cfg);
    const DatasetIndex paired = open_index(cfg, split_from_string(cfg.split), Pairing::paired);
    const diffusion::ModelPair models = diffusion::load_checkpoint(cfg.checkpoint);
    const pmg::Pipeline pipe = make_pipeline(cfg, models);
    CaptionSource captions(cfg);
    auto judge = make_client(cfg, true);
    const fs::path dir = cfg.output / "eval";
    const fs::path scratch = cfg.output / "tmp";
    std::vector<fs::path> outputs;

    std::map<std::string, std::size_t> by_person;
    std::vector<TryOnSample> samples;
    for (std::size_t i = 0; i < index.entries.size(); ++i) {
        samples.push_back(load_sample(index, i));
        by_person[samples.back().person_id] = i;
    }
    const Category category = samples.front().category;
    const AttributeSchema person_schema = default_schema(Subject::person, category);
    if (!person_schema.contains(cfg.eval_attribute))
        throw ConfigError("config key 'eval.attribute' names '" + cfg.eval_attribute + "', not a person attribute");

    eval::MetricReport report;
    report.sample_count = samples.size();
    report.config_fingerprint = eval::fingerprint(json(ctx.config));

    // Base ratio over the stored captions of the unedited persons.
    std::vector<std::string> stored;
    for (const auto& s : samples)
        stored.push_back(captions.get(index, s.person_id, Subject::person, category).captions.at(cfg.eval_attribute));
    report.metrics["base_ratio"] = eval::base_ratio(stored, cfg.eval_target);

    const auto edited = [&](const TryOnSample& s, const std::string& caption) {
        auto overrides = parsed_overrides(cfg);
        overrides[cfg.eval_attribute] = caption;
        return generate_one(cfg, pipe, s, captions.prompts(index, s, overrides), scratch).image;
    };

    // Alignment: re-caption each edited image with the judge.
    eval::AlignmentTask task;
    task.attribute = cfg.eval_attribute;
    task.target_caption = cfg.eval_target;
    task.judge = judge.get();
    task.schema = person_schema;
    task.exemplars = load_exemplars(cfg.exemplars / "person", Subject::person);
    task.retries = cfg.retries;
    for (const auto& s : samples) task.entry_ids.push_back(s.person_id);
    report.metrics["alignment_accuracy"] = eval::alignment_accuracy(
        task, [&](const std::string& person_id, const std::string&, const std::string& caption) {
            const TryOnSample& s = samples[by_person.at(person_id)];
            const fs::path p = dir / "edited" / (s.sample_id + ".png");
            png::write_rgb(p, edited(s, caption));
            outputs.push_back(p);
            return ImageRef{person_id + "@edited", p};
        });

    // Agreement between stored captions and the judge on the unedited images.
    std::vector<std::string> rejudged;
    for (const auto& s : samples) {
        const ImageRef ref{s.person_id + "@original", person_ref(index, s.person_id).path};
        rejudged.push_back(caption_image(*judge, build_icl_request(person_schema, task.exemplars, ref), cfg.retries,
                                         clock_for(cfg))
                               .captions.at(cfg.eval_attribute));
    }
    report.metrics["sts_mean"] = eval::sts_agreement({stored, rejudged});

    // Paired reconstruction SSIM.
    double ssim_sum = 0.0;
    for (std::size_t i = 0; i < paired.entries.size(); ++i) {
        const TryOnSample s = load_sample(paired, i);
        const pmg::PMGResult r = generate_one(cfg, pipe, s, captions.prompts(paired, s, parsed_overrides(cfg)), scratch);
        ssim_sum += eval::ssim(r.image, s.person);
    }
    report.metrics["ssim_mean"] = ssim_sum / static_cast<double>(paired.entries.size());

    std::vector<std::string> ids;
    for (const auto& s : samples) ids.push_back(s.person_id);
    const eval::DiversityResult div = eval::diversity_pairs(
        [&](const std::string& person_id, const std::string&, const std::string& caption) {
            return edited(samples[by_person.at(person_id)], caption);
        },
        ids, cfg.eval_attribute, cfg.eval_caption_a, cfg.eval_caption_b);
    report.metrics["diversity_ssim"] = div.ssim_mean;
    report.validate();

    fs::create_directories(dir);
    const fs::path json_path = dir / "report.json";
    const fs::path csv_path = dir / "report.csv";
    const fs::path targets_path = dir / "reference_targets.json";
    std::ofstream(json_path) << report.to_json().dump(2) << '\n';
    std::ofstream(csv_path) << report.to_csv();
    ordered_json targets = ordered_json::array();
    for (const auto& t : eval::reference_targets())
        targets.push_back(
            {{"metric", t.metric}, {"setting", t.setting}, {"value", t.value}, {"reproducible_here", t.reproducible_here}});
    std::ofstream(targets_path) << targets.dump(2) << '\n';
    outputs.insert(outputs.end(), {json_path, csv_path, targets_path});

    if (cfg.eval_sigma_ablation) {
        std::vector<PromptPair> prompts;
        for (const auto& s : samples) prompts.push_back(captions.prompts(index, s, parsed_overrides(cfg)));
        const auto rows = pmg::sigma_ablation(pipe, samples, prompts, pmg_config(cfg));
        const fs::path p = dir / "sigma_ablation.csv";
        std::ofstream(p) << pmg::ablation_table(rows);
        outputs.push_back(p);
    }
    fs::remove_all(scratch);
    ctx.out << report.to_csv();
    write_manifest(ctx, "evaluate", report.to_json(), outputs);
    return kOk;
}

// ---------------------------------------------------------------------------

struct Flags {
    std::string config_file;
    std::map<std::string, std::vector<std::string>> values;  // dotted key -> flag values
};

/// Every config key becomes `--<dotted key>`; common ones also get a short alias.
void add_config_flags(CLI::App& cmd, Flags& flags) {
    cmd.add_option("--config", flags.config_file, "JSON config file (flags override it)");
    static const std::map<std::string, std::string> aliases = {
        {"sampler.steps", "--steps"},       {"sampler.sigma", "--sigma"},     {"seed", "--seed"},
        {"output", "--output,-o"},          {"dataset.root", "--data"},       {"dataset.split", "--split"},
        {"dataset.pairing", "--pairing"},   {"dataset.limit", "--limit"},     {"model.checkpoint", "--checkpoint"},
        {"workers", "--workers"},           {"captioner.overrides", "--override"},
        {"captioner.fixture", "--fixture"}, {"captioner.endpoint", "--endpoint"}};
    const ordered_json defaults = default_config();
    for (const std::string& key : config_keys()) {
        std::string names = "--" + key;
        if (const auto it = aliases.find(key); it != aliases.end()) names += "," + it->second;
        ordered_json node = defaults;
        for (std::size_t start = 0;;) {
            const auto dot = key.find('.', start);
            node = ordered_json(node.at(key.substr(start, dot == std::string::npos ? std::string::npos : dot - start)));
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        const std::string help = "default: " + node.dump();
        CLI::Option* opt = cmd.add_option(names, flags.values[key], help);
        if (node.is_array())
            opt->type_name("TEXT")->allow_extra_args(false);
        else
            opt->type_name("VALUE")->expected(1)->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
    cmd.add_flag_callback("--pmg", [&flags] { flags.values["pmg.enabled"].push_back("true"); }, "enable PMG");
    cmd.add_flag_callback("--no-pmg", [&flags] { flags.values["pmg.enabled"].push_back("false"); }, "disable PMG");
}

ordered_json resolve_config(const Flags& flags) {
    ordered_json config = flags.config_file.empty() ? default_config() : load_config_file(flags.config_file);
    for (const std::string& key : config_keys()) {
        const auto it = flags.values.find(key);
        if (it == flags.values.end() || it->second.empty()) continue;
        bool is_list = false;
        {
            ordered_json node = config;
            for (std::size_t start = 0;;) {
                const auto dot = key.find('.', start);
                node = ordered_json(node.at(key.substr(start, dot == std::string::npos ? std::string::npos : dot - start)));
                if (dot == std::string::npos) break;
                start = dot + 1;
            }
            is_list = node.is_array();
        }
        if (is_list) {
            for (const auto& v : it->second) set_config_value(config, key, v);
        } else {
            set_config_value(config, key, it->second.back());
        }
    }
    return config;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Text-editable virtual try-on toolkit (toy latent diffusion, PMG, evaluation)", "vton"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    struct Command {
        const char* name;
        const char* help;
        int (*fn)(const Context&);
    };
    static const Command commands[] = {
        {"gen-synthetic", "write a procedural dataset (both splits, pair lists, exemplars, mock LMM fixtures) to --output",
         cmd_gen_synthetic},
        {"caption", "caption person and garment images with in-context exemplars into the caption store", cmd_caption},
        {"build-masks", "write fine, coarse and dilation-augmented masks", cmd_build_masks},
        {"train-toy", "train the toy main U-Net on the train split (paired) and write a checkpoint", cmd_train_toy},
        {"tryon", "generate try-on images, optionally with prompt-aware mask generation", cmd_tryon},
        {"evaluate", "base ratio, text alignment, SSIM, diversity and agreement metrics", cmd_evaluate},
    };
    std::map<std::string, Flags> flags;
    std::map<std::string, CLI::App*> subs;
    for (const auto& c : commands) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        add_config_flags(*sub, flags[c.name]);
        subs[c.name] = sub;
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    for (const auto& c : commands) {
        if (!subs[c.name]->parsed()) continue;
        try {
            const ordered_json config = resolve_config(flags[c.name]);
            const RunConfig cfg = to_run_config(config);
            fs::create_directories(cfg.output);
            return c.fn(Context{config, cfg, out});
        } catch (const ConfigError& e) {
            err << "config error: " << e.what() << '\n';
            return kUsage;
        } catch (const Error& e) {
            err << "error (" << e.kind() << "): " << e.what() << '\n';
            return kRuntime;
        } catch (const std::exception& e) {
            err << "error: " << e.what() << '\n';
            return kRuntime;
        }
    }
    return kUsage;
}

}  // namespace vton::cli
