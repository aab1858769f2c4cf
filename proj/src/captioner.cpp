#include "vton/captioner.hpp"

#include <algorithm>
#include <atomic>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "vton/lmm_client.hpp"

namespace vton {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::vector<std::string> AttributeSchema::names() const {
    std::vector<std::string> out;
    out.reserve(attributes.size());
    for (const auto& a : attributes) out.push_back(a.name);
    return out;
}

bool AttributeSchema::contains(std::string_view name) const {
    return std::any_of(attributes.begin(), attributes.end(), [&](const Attribute& a) { return a.name == name; });
}

bool AttributeSchema::operator==(const AttributeSchema& other) const {
    return subject == other.subject && category == other.category && names() == other.names();
}

void validate_schema(const AttributeSchema& schema) {
    std::set<std::string> seen;
    for (const auto& a : schema.attributes) {
        if (a.name.empty()) throw SchemaMismatch("schema attribute with empty name");
        if (!seen.insert(a.name).second) throw SchemaMismatch("duplicate schema attribute '" + a.name + "'");
    }
}

AttributeSchema default_schema(Subject subject, Category category) {
    AttributeSchema s{subject, category, {}};
    auto add = [&](std::string name, std::string description, std::vector<std::string> examples) {
        s.attributes.push_back({std::move(name), std::move(description), std::move(examples)});
    };
    if (subject == Subject::person) {
        add("body shape", "overall build of the person", {"slim", "average", "broad", "curvy"});
        add("gender", "apparent gender presentation", {"woman", "man"});
        if (category == Category::upper_body)
            add("tucking style", "how the top meets the bottoms", {"fully tucked in", "untucked", "french tucked"});
        add("fit", "how closely the worn garment follows the body", {"tight fit", "regular fit", "loose fit"});
        add("hand pose", "position of the hands and arms", {"arms down by the sides", "hands on hips", "hands in pockets"});
        add("pose description", "short description of the body pose", {"standing upright facing the camera"});
    } else {
        add("cloth category", "garment type, optionally with its main colour", {"t-shirt", "shirt", "trousers", "dress"});
        add("material", "dominant fabric", {"cotton", "denim", "knit", "silk"});
        switch (category) {
            case Category::upper_body:
                add("sleeve length", "sleeve length", {"short sleeves", "long sleeves", "sleeveless"});
                add("neckline", "neckline shape", {"crew neck", "v-neck", "collared"});
                break;
            case Category::lower_body:
                add("length", "hem position", {"ankle length", "above the knee"});
                break;
            case Category::dresses:
                add("sleeve length", "sleeve length", {"short sleeves", "long sleeves", "sleeveless"});
                add("neckline", "neckline shape", {"crew neck", "v-neck", "square neck"});
                add("length", "hem position", {"knee length", "maxi length", "mini length"});
                break;
        }
    }
    return s;
}

std::string schema_violation(const AttributeSchema& schema, const std::map<std::string, std::string>& captions) {
    std::vector<std::string> missing;
    std::vector<std::string> extra;
    for (const auto& a : schema.attributes)
        if (!captions.contains(a.name)) missing.push_back(a.name);
    for (const auto& [k, v] : captions)
        if (!schema.contains(k)) extra.push_back(k);
    if (missing.empty() && extra.empty()) return {};
    std::ostringstream out;
    if (!missing.empty()) {
        out << "missing keys:";
        for (const auto& m : missing) out << " '" << m << "'";
    }
    if (!extra.empty()) {
        if (!missing.empty()) out << "; ";
        out << "unexpected keys:";
        for (const auto& e : extra) out << " '" << e << "'";
    }
    return out.str();
}

ExemplarSet load_exemplars(const fs::path& dir, Subject subject, std::size_t limit) {
    if (!fs::is_directory(dir)) throw MissingFile("missing exemplar directory: " + dir.string());
    std::vector<fs::path> labels;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".json") labels.push_back(e.path());
    std::sort(labels.begin(), labels.end());
    ExemplarSet set;
    for (const auto& label_path : labels) {
        if (set.size() >= limit) break;
        const fs::path image = fs::path(label_path).replace_extension(".png");
        if (!fs::exists(image)) throw MissingFile("exemplar image missing for " + label_path.string());
        std::ifstream in(label_path);
        CaptionRecord r;
        r.image_id = label_path.stem().string();
        r.subject = subject;
        try {
            r.captions = json::parse(in).get<std::map<std::string, std::string>>();
        } catch (const json::exception& e) {
            throw Error("cannot parse exemplar labels " + label_path.string() + ": " + e.what());
        }
        r.lmm_model_id = "human";
        set.exemplars.push_back({{r.image_id, image}, std::move(r)});
    }
    return set;
}

std::string default_system_prompt() {
    return "You are a fashion annotation assistant. You look at one image at a time and describe only the "
           "requested attributes with short, concrete phrases.";
}

std::string default_task_description(const AttributeSchema& schema) {
    std::ostringstream out;
    out << "Annotate the " << (schema.subject == Subject::person ? "person" : "garment") << " image ("
        << to_string(schema.category) << ") with the following attributes:\n";
    for (const auto& a : schema.attributes) {
        out << "- " << a.name << ": " << a.description;
        if (!a.example_values.empty()) {
            out << " (e.g. ";
            for (std::size_t i = 0; i < a.example_values.size(); ++i) out << (i ? ", " : "") << a.example_values[i];
            out << ")";
        }
        out << "\n";
    }
    out << "Describe only what is visible. The labelled examples show the expected level of detail.";
    return out.str();
}

namespace {

ordered_json image_part(const ImageRef& ref) {
    ordered_json part;
    part["type"] = "image_url";
    part["image_url"] = {{"url", "file://" + ref.path.string()}};
    part["image_id"] = ref.id;
    return part;
}

ordered_json text_part(const std::string& text) {
    ordered_json part;
    part["type"] = "text";
    part["text"] = text;
    return part;
}

ordered_json message(const std::string& role, ordered_json content) {
    ordered_json m;
    m["role"] = role;
    m["content"] = std::move(content);
    return m;
}

/// Captions in schema order as a compact JSON object.
std::string answer_json(const AttributeSchema& schema, const std::map<std::string, std::string>& captions) {
    ordered_json answer = ordered_json::object();
    for (const auto& a : schema.attributes) answer[a.name] = captions.at(a.name);
    return answer.dump();
}

std::string key_list(const AttributeSchema& schema) {
    std::string out;
    for (std::size_t i = 0; i < schema.attributes.size(); ++i)
        out += (i ? ", " : "") + std::string("\"") + schema.attributes[i].name + "\"";
    return out;
}

}  // namespace

ordered_json ICLRequest::messages() const {
    ordered_json msgs = ordered_json::array();
    msgs.push_back(message("system", ordered_json::array({text_part(system_prompt)})));
    msgs.push_back(message("user", ordered_json::array({text_part(task_description)})));
    for (std::size_t i = 0; i < exemplars.exemplars.size(); ++i) {
        const auto& ex = exemplars.exemplars[i];
        msgs.push_back(message("user", ordered_json::array({text_part("Example " + std::to_string(i + 1) + ":"),
                                                            image_part(ex.image)})));
        msgs.push_back(message("assistant", ordered_json::array({text_part(answer_json(response_schema, ex.labels.captions))})));
    }
    msgs.push_back(message(
        "user", ordered_json::array({text_part("Now annotate this image. Reply with a single JSON object whose keys are "
                                               "exactly: " + key_list(response_schema) + "."),
                                     image_part(query)})));
    return msgs;
}

std::string ICLRequest::serialize() const {
    ordered_json doc;
    doc["subject"] = std::string(to_string(response_schema.subject));
    doc["category"] = std::string(to_string(response_schema.category));
    doc["attributes"] = response_schema.names();
    doc["messages"] = messages();
    return doc.dump();
}

ICLRequest build_icl_request(const AttributeSchema& schema, const ExemplarSet& exemplars, const ImageRef& image) {
    validate_schema(schema);
    for (const auto& ex : exemplars.exemplars) {
        if (ex.labels.subject != schema.subject)
            throw SchemaMismatch("exemplar " + ex.image.id + " labels a different subject");
        const std::string problem = schema_violation(schema, ex.labels.captions);
        if (!problem.empty()) throw SchemaMismatch("exemplar " + ex.image.id + " not labelled under the schema: " + problem);
    }
    return ICLRequest{default_system_prompt(), default_task_description(schema), exemplars, image, schema};
}

std::map<std::string, std::string> parse_caption_response(const std::string& reply, const AttributeSchema& schema,
                                                          std::string& error) {
    error.clear();
    const auto open = reply.find('{');
    const auto close = reply.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open) {
        error = "reply contains no JSON object";
        return {};
    }
    json doc;
    try {
        doc = json::parse(reply.substr(open, close - open + 1));
    } catch (const json::exception&) {
        error = "reply is not valid JSON";
        return {};
    }
    if (!doc.is_object()) {
        error = "reply is not a JSON object";
        return {};
    }
    std::map<std::string, std::string> captions;
    for (const auto& [k, v] : doc.items()) {
        if (!v.is_string()) {
            error = "value of '" + k + "' is not a string";
            return {};
        }
        captions[k] = v.get<std::string>();
    }
    error = schema_violation(schema, captions);
    if (!error.empty()) return {};
    return captions;
}

std::string iso8601(std::chrono::system_clock::time_point t) {
    const std::time_t secs = std::chrono::system_clock::to_time_t(t);
    std::tm utc{};
    gmtime_r(&secs, &utc);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
    return buf;
}

Clock fixed_clock() {
    return [] { return std::chrono::system_clock::time_point{}; };
}

CaptionRecord caption_image(LmmClient& client, const ICLRequest& request, int retries, const Clock& clock) {
    LmmQuery query{request, request.messages(), 0};
    std::string error;
    for (int attempt = 0; attempt <= std::max(0, retries); ++attempt) {
        query.attempt = attempt;
        const std::string reply = client.complete(query);
        auto captions = parse_caption_response(reply, request.response_schema, error);
        if (error.empty()) {
            CaptionRecord r;
            r.image_id = request.query.id;
            r.subject = request.response_schema.subject;
            r.captions = std::move(captions);
            r.lmm_model_id = client.model_id();
            r.created_at = iso8601(clock ? clock() : std::chrono::system_clock::now());
            return r;
        }
        query.messages.push_back(message("assistant", ordered_json::array({text_part(reply)})));
        query.messages.push_back(message(
            "user", ordered_json::array({text_part("That answer was invalid (" + error +
                                                   "). Reply with only a JSON object whose keys are exactly: " +
                                                   key_list(request.response_schema) + ".")})));
    }
    throw ResponseSchemaViolation("image " + request.query.id + ": " + error + " after " + std::to_string(retries) +
                                  " retries");
}

std::vector<CaptionRecord> caption_batch(LmmClient& client, const std::vector<ICLRequest>& requests, int retries,
                                         int max_in_flight, const Clock& clock) {
    std::vector<CaptionRecord> out(requests.size());
    std::vector<std::exception_ptr> errors(requests.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < requests.size(); i = next++) {
            try {
                out[i] = caption_image(client, requests[i], retries, clock);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int n = std::clamp(max_in_flight, 1, static_cast<int>(std::max<std::size_t>(1, requests.size())));
    {
        std::vector<std::jthread> pool;
        for (int i = 1; i < n; ++i) pool.emplace_back(worker);
        worker();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

// ---------------------------------------------------------------------------

int whitespace_token_count(std::string_view text) {
    std::istringstream in{std::string(text)};
    int n = 0;
    std::string word;
    while (in >> word) ++n;
    return n;
}

PromptPair render_main_prompt(const AttributeSchema& person_schema, const CaptionRecord& person,
                              const AttributeSchema& clothing_schema, const CaptionRecord& clothing,
                              const std::map<std::string, std::string>& overrides, const TokenCounter& counter,
                              const PromptTemplate& tmpl) {
    for (const auto& pair : {std::pair{&person_schema, &person}, std::pair{&clothing_schema, &clothing}}) {
        const std::string problem = schema_violation(*pair.first, pair.second->captions);
        if (!problem.empty())
            throw SchemaMismatch("record " + pair.second->image_id + " does not match its schema: " + problem);
    }
    for (const auto& [name, value] : overrides)
        if (!person_schema.contains(name) && !clothing_schema.contains(name))
            throw SchemaMismatch("override for unknown attribute '" + name + "'");

    auto caption = [&](const CaptionRecord& r, const std::string& name) -> std::string {
        if (auto it = overrides.find(name); it != overrides.end()) return it->second;
        return r.captions.at(name);
    };

    std::vector<std::string> lead;
    for (const auto& name : {tmpl.body_shape, tmpl.gender})
        if (person_schema.contains(name))
            if (auto c = caption(person, name); !c.empty()) lead.push_back(c);

    std::vector<std::string> clothing_parts;
    for (const auto& a : clothing_schema.attributes)
        if (auto c = caption(clothing, a.name); !c.empty()) clothing_parts.push_back(c);

    std::vector<std::string> middle = clothing_parts;
    for (const auto& a : person_schema.attributes) {
        if (a.name == tmpl.body_shape || a.name == tmpl.gender || a.name == tmpl.hand_pose) continue;
        if (auto c = caption(person, a.name); !c.empty()) middle.push_back(c);
    }
    std::string hand;
    if (person_schema.contains(tmpl.hand_pose)) hand = caption(person, tmpl.hand_pose);

    auto join = [](const std::vector<std::string>& parts, std::string_view sep) {
        std::string out;
        for (std::size_t i = 0; i < parts.size(); ++i) {
            if (i) out += sep;
            out += parts[i];
        }
        return out;
    };

    PromptPair p;
    p.main_prompt = "a " + (lead.empty() ? std::string("person") : join(lead, " ")) + " wears " +
                    (middle.empty() ? std::string("a garment") : join(middle, ", "));
    if (!hand.empty()) p.main_prompt += ", with " + hand;
    p.main_prompt += ".";
    p.reference_prompt = join(clothing_parts, ", ");
    p.token_count_main = counter(p.main_prompt);
    p.token_count_ref = counter(p.reference_prompt);
    if (p.token_count_main > kTokenBudget)
        throw TokenBudgetExceeded("main prompt has " + std::to_string(p.token_count_main) + " tokens (budget " +
                                  std::to_string(kTokenBudget) + ")");
    if (p.token_count_ref > kTokenBudget)
        throw TokenBudgetExceeded("reference prompt has " + std::to_string(p.token_count_ref) + " tokens (budget " +
                                  std::to_string(kTokenBudget) + ")");
    return p;
}

std::pair<std::string, std::string> parse_override(std::string_view text) {
    const auto eq = text.find('=');
    if (eq == std::string_view::npos || eq == 0) throw Error("override must look like name=value: " + std::string(text));
    std::string name(text.substr(0, eq));
    std::replace(name.begin(), name.end(), '_', ' ');
    return {name, std::string(text.substr(eq + 1))};
}

}  // namespace vton
