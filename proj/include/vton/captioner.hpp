#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vton/data_model.hpp"

namespace vton {

class LmmClient;

struct Attribute {
    std::string name;
    std::string description;
    std::vector<std::string> example_values;
};

/// Pre-defined attribute list for one subject and garment category.
struct AttributeSchema {
    Subject subject = Subject::person;
    Category category = Category::upper_body;
    std::vector<Attribute> attributes;

    std::size_t count() const { return attributes.size(); }
    std::vector<std::string> names() const;
    bool contains(std::string_view name) const;
    bool operator==(const AttributeSchema& other) const;
};

/// Throws SchemaMismatch for duplicate names.
void validate_schema(const AttributeSchema& schema);
/// Built-in attribute lists.
AttributeSchema default_schema(Subject subject, Category category);
/// Empty string when `captions` keys equal the schema names exactly, otherwise a description of the difference.
std::string schema_violation(const AttributeSchema& schema, const std::map<std::string, std::string>& captions);

struct ImageRef {
    std::string id;
    std::filesystem::path path;
    bool operator==(const ImageRef&) const = default;
};

struct Exemplar {
    ImageRef image;
    CaptionRecord labels;
};

struct ExemplarSet {
    std::vector<Exemplar> exemplars;
    std::size_t size() const { return exemplars.size(); }
};

/// Reads `<dir>/<id>.png` + `<dir>/<id>.json` pairs (sorted by id); at most `limit` of them.
ExemplarSet load_exemplars(const std::filesystem::path& dir, Subject subject, std::size_t limit = 3);

std::string default_system_prompt();
std::string default_task_description(const AttributeSchema& schema);

struct ICLRequest {
    std::string system_prompt;
    std::string task_description;
    ExemplarSet exemplars;
    ImageRef query;
    AttributeSchema response_schema;

    /// Chat-completions message list: system, task, each exemplar (image then its
    /// expected JSON answer), then the query image with the answer instruction.
    nlohmann::ordered_json messages() const;
    std::string serialize() const;
};

ICLRequest build_icl_request(const AttributeSchema& schema, const ExemplarSet& exemplars, const ImageRef& image);

/// Extracts the JSON object from an LMM reply and checks it against the schema.
/// Returns the captions or sets `error`.
std::map<std::string, std::string> parse_caption_response(const std::string& reply, const AttributeSchema& schema,
                                                          std::string& error);

using Clock = std::function<std::chrono::system_clock::time_point()>;
std::string iso8601(std::chrono::system_clock::time_point t);
/// Clock pinned to the Unix epoch, for reproducible records.
Clock fixed_clock();

/// Queries the LMM, re-prompting with the violation up to `retries` extra times.
CaptionRecord caption_image(LmmClient& client, const ICLRequest& request, int retries = 2, const Clock& clock = {});

/// Captions many requests with at most `max_in_flight` concurrent calls. Results follow input order.
std::vector<CaptionRecord> caption_batch(LmmClient& client, const std::vector<ICLRequest>& requests, int retries,
                                         int max_in_flight, const Clock& clock = {});

// ---------------------------------------------------------------------------
// Prompt rendering

/// Token count used for the 77-token text-encoder budget; default is a whitespace word count.
using TokenCounter = std::function<int(std::string_view)>;
int whitespace_token_count(std::string_view text);

inline constexpr int kTokenBudget = 77;

struct PromptPair {
    std::string reference_prompt;  // clothing captions only
    std::string main_prompt;        // person + clothing captions
    int token_count_main = 0;
    int token_count_ref = 0;
};

struct PromptTemplate {
    std::string body_shape = "body shape";
    std::string gender = "gender";
    std::string hand_pose = "hand pose";
};

/// "a {body shape} {gender} wears {clothing captions}, {other person captions}, with {hand pose}."
/// Overrides replace the caption of the named attribute (person or clothing); they are the
/// text-editing entry point. Refuses (TokenBudgetExceeded) rather than truncating.
PromptPair render_main_prompt(const AttributeSchema& person_schema, const CaptionRecord& person,
                              const AttributeSchema& clothing_schema, const CaptionRecord& clothing,
                              const std::map<std::string, std::string>& overrides = {},
                              const TokenCounter& counter = whitespace_token_count,
                              const PromptTemplate& tmpl = {});

/// Parses "name=value" (underscores in the name read as spaces, e.g. tucking_style=untucked).
std::pair<std::string, std::string> parse_override(std::string_view text);

}  // namespace vton
