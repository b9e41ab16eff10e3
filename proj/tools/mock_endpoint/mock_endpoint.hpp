#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

namespace medsynth::mock {

// Scripted behaviours, cycled per request.
enum class Reply {
    Valid,           // one sample per class
    Prose,           // valid object wrapped in chatter
    WrongType,       // target as a string
    DuplicateClass,  // one class twice, another missing
    CopyExemplar,    // first sample repeats an exemplar from the prompt
    EmptyText,       // first sample has an empty text
    Malformed,       // no JSON object at all
    ServerError,     // HTTP 500
};

Reply parse_reply(const std::string& name);
std::vector<Reply> parse_script(const std::string& comma_separated);

// Assistant message content for a chat request, deterministic in the
// request body. Not used for ServerError.
std::string mock_content(const nlohmann::json& request, Reply reply);

// Full /chat/completions response body wrapping `content`.
std::string completion_body(const std::string& content, long request_index);

// Minimal OpenAI-compatible server on 127.0.0.1 serving POST
// <prefix>/chat/completions.
class MockEndpoint {
public:
    explicit MockEndpoint(std::vector<Reply> script, std::string prefix = "/v1");
    ~MockEndpoint();
    MockEndpoint(const MockEndpoint&) = delete;
    MockEndpoint& operator=(const MockEndpoint&) = delete;

    // Binds (port 0 picks a free port) and serves on a background thread.
    int start(int port = 0);
    // Blocks serving on the calling thread.
    void serve(int port);
    void stop();

    int port() const noexcept { return port_; }
    std::string base_url() const;
    long requests() const noexcept { return requests_.load(); }
    std::string last_authorization() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::vector<Reply> script_;
    std::string prefix_;
    std::thread thread_;
    std::atomic<long> requests_{0};
    int port_ = 0;
    mutable std::mutex mutex_;
    std::string last_auth_;
};

} // namespace medsynth::mock
