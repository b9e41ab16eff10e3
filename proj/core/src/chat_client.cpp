#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "medsynth/textgen.hpp"

namespace medsynth {
namespace {

struct Url {
    std::string origin;  // scheme://host[:port]
    std::string path;    // prefix without trailing slash
};

Url split_url(const std::string& base) {
    const auto scheme_end = base.find("://");
    if (scheme_end == std::string::npos) throw InvalidArgument("endpoint URL needs a scheme: " + base);
    const std::string scheme = base.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw InvalidArgument("unsupported URL scheme: " + scheme);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (scheme == "https") throw InvalidArgument("this build has no TLS support; use an http:// endpoint");
#endif
    const auto path_start = base.find('/', scheme_end + 3);
    Url u;
    u.origin = base.substr(0, path_start);
    u.path = path_start == std::string::npos ? "" : base.substr(path_start);
    while (!u.path.empty() && u.path.back() == '/') u.path.pop_back();
    return u;
}

bool retryable(int status) { return status == 408 || status == 429 || status >= 500; }

} // namespace

void EndpointConfig::validate() const {
    if (base_url.empty()) throw InvalidArgument("endpoint base URL is empty");
    split_url(base_url);
    if (model.empty()) throw InvalidArgument("model name is empty");
    if (!(timeout_seconds > 0.0)) throw InvalidArgument("timeout must be positive");
    if (max_retries < 0) throw InvalidArgument("max_retries must be >= 0");
    if (backoff_ms < 0) throw InvalidArgument("backoff must be >= 0");
    if (!std::isfinite(temperature) || temperature < 0.0) throw InvalidArgument("temperature must be >= 0");
}

nlohmann::json chat_request_body(const EndpointConfig& config, const Prompt& prompt) {
    nlohmann::json body = {
        {"model", config.model},
        {"temperature", config.temperature},
        {"messages",
         {{{"role", "system"}, {"content", prompt.system}}, {{"role", "user"}, {"content", prompt.user}}}},
    };
    if (config.response_format)
        body["response_format"] = {
            {"type", "json_schema"},
            {"json_schema", {{"name", "GeneratedSamples"}, {"strict", true}, {"schema", prompt.response_schema}}}};
    return body;
}

std::string extract_message_content(const std::string& response_body) {
    const auto doc = nlohmann::json::parse(response_body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw EndpointError(EndpointError::Kind::Protocol, "response body is not a JSON object");
    const auto choices = doc.find("choices");
    if (choices == doc.end() || !choices->is_array() || choices->empty())
        throw EndpointError(EndpointError::Kind::Protocol, "response has no choices");
    const auto& first = (*choices)[0];
    if (!first.is_object() || !first.contains("message") || !first["message"].is_object() ||
        !first["message"].contains("content") || !first["message"]["content"].is_string())
        throw EndpointError(EndpointError::Kind::Protocol, "response has no choices[0].message.content string");
    return first["message"]["content"].get<std::string>();
}

std::string request_generation(const EndpointConfig& config, const Prompt& prompt) {
    config.validate();
    const Url url = split_url(config.base_url);
    httplib::Client client(url.origin);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(config.timeout_seconds));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers headers;
    if (const char* token = std::getenv(config.token_env.c_str()); token && *token)
        headers.emplace("Authorization", std::string("Bearer ") + token);
    const std::string body = chat_request_body(config, prompt).dump();
    const std::string path = url.path + "/chat/completions";

    using Kind = EndpointError::Kind;
    Kind last_kind = Kind::Transport;
    int last_status = 0;
    std::string last_message;
    const int attempts = config.max_retries + 1;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        if (attempt > 1 && config.backoff_ms > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long long>(config.backoff_ms) << (attempt - 2)));
        const auto start = std::chrono::steady_clock::now();
        auto res = client.Post(path, headers, body, "application/json");
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (!res) {
            const auto err = res.error();
            last_status = 0;
            last_kind = (err == httplib::Error::ConnectionTimeout || ms >= config.timeout_seconds * 1000.0)
                            ? Kind::Timeout
                            : Kind::Transport;
            last_message = httplib::to_string(err);
            spdlog::warn("chat request attempt {}/{} failed after {:.0f} ms: {}", attempt, attempts, ms, last_message);
            continue;
        }
        spdlog::info("chat request attempt {}/{} status {} in {:.0f} ms", attempt, attempts, res->status, ms);
        if (res->status >= 200 && res->status < 300) return extract_message_content(res->body);
        last_status = res->status;
        last_kind = Kind::Status;
        last_message = "HTTP " + std::to_string(res->status);
        if (!retryable(res->status))
            throw EndpointError(Kind::Status, "endpoint returned HTTP " + std::to_string(res->status), res->status, attempt);
    }
    throw EndpointError(Kind::Exhausted, last_kind,
                        "gave up after " + std::to_string(attempts) + " attempt(s); last failure: " + last_message,
                        last_status, attempts);
}

HttpChatEndpoint::HttpChatEndpoint(EndpointConfig config) : config_(std::move(config)) { config_.validate(); }

std::string HttpChatEndpoint::complete(const Prompt& prompt) { return request_generation(config_, prompt); }

} // namespace medsynth
