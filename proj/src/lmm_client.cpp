#include "vton/lmm_client.hpp"

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <regex>
#include <thread>

#include <httplib.h>

namespace vton {

using nlohmann::json;
using nlohmann::ordered_json;

FixtureLmmClient::FixtureLmmClient(json fixtures, std::string model)
    : fixtures_(std::move(fixtures)), model_(std::move(model)) {}

FixtureLmmClient FixtureLmmClient::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile("missing LMM fixture file: " + path.string());
    try {
        return FixtureLmmClient(json::parse(in));
    } catch (const json::exception& e) {
        throw Error("cannot parse LMM fixture file " + path.string() + ": " + e.what());
    }
}

std::string FixtureLmmClient::complete(const LmmQuery& query) {
    const auto& schema = query.request.response_schema;
    const std::string subject(to_string(schema.subject));
    std::string id = query.request.query.id;
    const json& table = fixtures_.contains(subject) ? fixtures_.at(subject) : json::object();
    if (!table.contains(id)) {
        const auto at = id.find('@');
        if (at != std::string::npos) id = id.substr(0, at);
    }
    if (!table.contains(id)) throw TransportError("fixture has no " + subject + " entry for image '" + id + "'");
    const json& known = table.at(id);
    ordered_json answer = ordered_json::object();
    for (const auto& a : schema.attributes)
        answer[a.name] = known.contains(a.name) ? known.at(a.name).get<std::string>() : std::string("unknown");
    return answer.dump();
}

FunctionLmmClient::FunctionLmmClient(Responder responder, std::string model)
    : responder_(std::move(responder)), model_(std::move(model)) {}

std::string FunctionLmmClient::complete(const LmmQuery& query) {
    const int index = calls_++;
    return responder_(query, index);
}

FunctionLmmClient scripted_client(std::vector<std::string> replies) {
    if (replies.empty()) throw Error("scripted client needs at least one reply");
    return FunctionLmmClient(
        [replies = std::move(replies)](const LmmQuery&, int call) {
            return replies[std::min<std::size_t>(static_cast<std::size_t>(call), replies.size() - 1)];
        },
        "mock-scripted");
}

// ---------------------------------------------------------------------------

namespace {

struct Endpoint {
    std::string scheme_host_port;
    std::string path;
};

Endpoint split_endpoint(const std::string& url) {
    static const std::regex pattern(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, pattern)) throw Error("invalid LMM endpoint URL: " + url);
    return {m[1].str(), m[2].matched ? m[2].str() : std::string("/")};
}

std::string data_url(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFile("missing image for LMM query: " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return "data:image/png;base64," + httplib::detail::base64_encode(bytes);
}

}  // namespace

HttpLmmClient::HttpLmmClient(HttpLmmOptions options) : options_(std::move(options)) {
    split_endpoint(options_.endpoint);
}

json HttpLmmClient::request_body(const LmmQuery& query) const {
    json messages = json::array();
    for (const auto& m : query.messages) {
        json out = {{"role", m.at("role")}, {"content", json::array()}};
        for (const auto& part : m.at("content")) {
            if (part.at("type") == "image_url") {
                std::string url = part.at("image_url").at("url").get<std::string>();
                if (url.rfind("file://", 0) == 0) url = data_url(url.substr(7));
                out["content"].push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
            } else {
                out["content"].push_back({{"type", "text"}, {"text", part.at("text")}});
            }
        }
        messages.push_back(std::move(out));
    }
    return {{"model", options_.model},
            {"messages", std::move(messages)},
            {"temperature", options_.temperature},
            {"response_format", {{"type", "json_object"}}}};
}

std::string HttpLmmClient::complete(const LmmQuery& query) {
    const Endpoint ep = split_endpoint(options_.endpoint);
    const std::string body = request_body(query).dump();
    httplib::Headers headers;
    if (const char* key = std::getenv(options_.api_key_env.c_str()); key != nullptr && *key != '\0')
        headers.emplace("Authorization", std::string("Bearer ") + key);

    std::string last_error;
    auto backoff = options_.initial_backoff;
    for (int attempt = 0; attempt <= options_.transport_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
        httplib::Client client(ep.scheme_host_port);
        client.set_connection_timeout(options_.timeout_seconds, 0);
        client.set_read_timeout(options_.timeout_seconds, 0);
        auto res = client.Post(ep.path, headers, body, "application/json");
        if (!res) {
            last_error = "request failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) throw TransportError("LMM endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body);
        try {
            const json doc = json::parse(res->body);
            return doc.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception& e) {
            throw TransportError(std::string("malformed chat-completions response: ") + e.what());
        }
    }
    throw TransportError("LMM endpoint unreachable after " + std::to_string(options_.transport_retries) +
                         " retries: " + last_error);
}

}  // namespace vton
