#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "vton/captioner.hpp"

namespace vton {

/// One call to the model: the structured request plus the message list actually sent
/// (the request's messages followed by any correction turns).
struct LmmQuery {
    const ICLRequest& request;
    nlohmann::ordered_json messages;
    int attempt = 0;
};

/// Large multimodal model endpoint. Implementations must be safe to call concurrently.
class LmmClient {
public:
    virtual ~LmmClient() = default;
    /// Returns the assistant's reply text. Throws TransportError when the model is unreachable.
    virtual std::string complete(const LmmQuery& query) = 0;
    virtual std::string model_id() const = 0;
};

/// Answers from a fixture document {"person": {id: {attr: caption}}, "clothing": {...}}.
/// The reply depends only on the query image id and the requested schema. Ids of the
/// form "<id>@<suffix>" fall back to "<id>" when not present themselves.
class FixtureLmmClient : public LmmClient {
public:
    explicit FixtureLmmClient(nlohmann::json fixtures, std::string model = "mock-fixture");
    static FixtureLmmClient from_file(const std::filesystem::path& path);

    std::string complete(const LmmQuery& query) override;
    std::string model_id() const override { return model_; }

private:
    nlohmann::json fixtures_;
    std::string model_;
};

/// Replies produced by a callback; the base for scripted test doubles.
class FunctionLmmClient : public LmmClient {
public:
    using Responder = std::function<std::string(const LmmQuery&, int call_index)>;
    explicit FunctionLmmClient(Responder responder, std::string model = "mock-function");

    std::string complete(const LmmQuery& query) override;
    std::string model_id() const override { return model_; }
    int calls() const { return calls_.load(); }

private:
    Responder responder_;
    std::string model_;
    std::atomic<int> calls_{0};
};

/// Returns the scripted replies in order, repeating the last one.
FunctionLmmClient scripted_client(std::vector<std::string> replies);

struct HttpLmmOptions {
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string model = "gpt-4o";
    std::string api_key_env = "VTON_LMM_API_KEY";
    int timeout_seconds = 60;
    int transport_retries = 4;
    std::chrono::milliseconds initial_backoff{500};
    double temperature = 0.0;
};

/// Chat-completions client over HTTP(S). Image parts referencing local files are sent
/// inline as base64 PNG data URLs. Transport failures, 429 and 5xx responses are retried
/// with exponential backoff.
class HttpLmmClient : public LmmClient {
public:
    explicit HttpLmmClient(HttpLmmOptions options);

    std::string complete(const LmmQuery& query) override;
    std::string model_id() const override { return options_.model; }

    /// The JSON body sent for a query (exposed for tests).
    nlohmann::json request_body(const LmmQuery& query) const;

private:
    HttpLmmOptions options_;
};

}  // namespace vton
