#include "mock_endpoint.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <httplib.h>

namespace medsynth::mock {
namespace {

using ordered = nlohmann::ordered_json;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

const std::vector<std::vector<std::string>>& class_words() {
    static const std::vector<std::vector<std::string>> words = {
        {"great", "sunny", "friends", "coffee", "weekend", "laughing"},
        {"tired", "meh", "bored", "sleepy", "blah", "drained"},
        {"empty", "alone", "crying", "hopeless", "numb", "worthless"},
        {"unbearable", "goodbye", "pain", "dark", "ending", "trapped"},
    };
    return words;
}

std::string user_prompt(const nlohmann::json& request) {
    const auto& messages = request.at("messages");
    for (auto it = messages.rbegin(); it != messages.rend(); ++it)
        if (it->value("role", "") == "user") return it->value("content", "");
    return {};
}

int class_count(const nlohmann::json& request, const std::string& prompt) {
    try {
        return request.at("response_format").at("json_schema").at("schema").at("properties").at("samples").at("minItems").get<int>();
    } catch (const nlohmann::json::exception&) {
    }
    // Fall back to counting "<n> = ..." lines in the legend.
    int k = 0;
    std::istringstream lines(prompt);
    for (std::string line; std::getline(lines, line);)
        if (line.rfind(std::to_string(k) + " = ", 0) == 0) ++k;
    return k;
}

std::string first_exemplar(const std::string& prompt) {
    const auto begin = prompt.find("### Examples\n");
    if (begin == std::string::npos) return {};
    const auto line_start = begin + 13;
    const auto line_end = prompt.find('\n', line_start);
    const auto obj = nlohmann::json::parse(prompt.substr(line_start, line_end - line_start), nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) return {};
    for (const auto& [key, value] : obj.items())
        if (value.is_string()) return value.get<std::string>();
    return {};
}

} // namespace

Reply parse_reply(const std::string& name) {
    if (name == "valid") return Reply::Valid;
    if (name == "prose") return Reply::Prose;
    if (name == "wrong-type") return Reply::WrongType;
    if (name == "duplicate-class") return Reply::DuplicateClass;
    if (name == "copy-exemplar") return Reply::CopyExemplar;
    if (name == "empty-text") return Reply::EmptyText;
    if (name == "malformed") return Reply::Malformed;
    if (name == "server-error") return Reply::ServerError;
    throw std::invalid_argument("unknown mock reply '" + name + "'");
}

std::vector<Reply> parse_script(const std::string& comma_separated) {
    std::vector<Reply> out;
    std::istringstream in(comma_separated);
    for (std::string item; std::getline(in, item, ',');)
        if (!item.empty()) out.push_back(parse_reply(item));
    if (out.empty()) throw std::invalid_argument("mock script is empty");
    return out;
}

std::string mock_content(const nlohmann::json& request, Reply reply) {
    const std::string prompt = user_prompt(request);
    const int k = class_count(request, prompt);
    if (reply == Reply::Malformed) return "I'm sorry, I can't produce that list right now.";

    std::uint64_t h = fnv1a(prompt);
    ordered samples = ordered::array();
    for (int c = 0; c < k; ++c) {
        const auto& words = class_words()[static_cast<std::size_t>(c) % class_words().size()];
        char tag[24];
        std::snprintf(tag, sizeof tag, "%08llx", static_cast<unsigned long long>(h >> 32));
        std::string text = "note " + std::string(tag) + " feeling";
        for (int w = 0; w < 3; ++w) {
            h = h * 6364136223846793005ULL + 1442695040888963407ULL;
            text += " " + words[(h >> 33) % words.size()];
        }
        if (c >= static_cast<int>(class_words().size())) text += " topic" + std::to_string(c);
        ordered s;
        s["tweet"] = text;
        s["target"] = c;
        samples.push_back(s);
    }
    if (k > 0) {
        switch (reply) {
        case Reply::WrongType: samples[0]["target"] = "0"; break;
        case Reply::DuplicateClass: samples[k - 1]["target"] = k > 1 ? k - 2 : 0; break;
        case Reply::CopyExemplar: samples[0]["tweet"] = first_exemplar(prompt); break;
        case Reply::EmptyText: samples[0]["tweet"] = "   "; break;
        default: break;
        }
    }
    ordered obj;
    obj["samples"] = samples;
    const std::string json = obj.dump();
    if (reply == Reply::Prose) return "Sure! Here are the new samples you asked for:\n\n" + json + "\n\nLet me know if you need more.";
    return json;
}

std::string completion_body(const std::string& content, long request_index) {
    ordered msg;
    msg["role"] = "assistant";
    msg["content"] = content;
    ordered choice;
    choice["index"] = 0;
    choice["message"] = msg;
    choice["finish_reason"] = "stop";
    ordered body;
    body["id"] = "mock-" + std::to_string(request_index);
    body["object"] = "chat.completion";
    body["model"] = "mock";
    body["choices"] = ordered::array({choice});
    return body.dump();
}

struct MockEndpoint::Impl {
    httplib::Server server;
};

MockEndpoint::MockEndpoint(std::vector<Reply> script, std::string prefix)
    : impl_(std::make_unique<Impl>()), script_(std::move(script)), prefix_(std::move(prefix)) {
    if (script_.empty()) throw std::invalid_argument("mock script is empty");
    impl_->server.Post(prefix_ + "/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
        const long index = requests_.fetch_add(1);
        {
            std::lock_guard lock(mutex_);
            last_auth_ = req.get_header_value("Authorization");
        }
        const Reply reply = script_[static_cast<std::size_t>(index) % script_.size()];
        if (reply == Reply::ServerError) {
            res.status = 500;
            res.set_content(R"({"error":{"message":"scripted failure"}})", "application/json");
            return;
        }
        const auto request = nlohmann::json::parse(req.body, nullptr, false);
        if (request.is_discarded() || !request.contains("messages")) {
            res.status = 400;
            res.set_content(R"({"error":{"message":"bad request"}})", "application/json");
            return;
        }
        res.set_content(completion_body(mock_content(request, reply), index), "application/json");
    });
}

MockEndpoint::~MockEndpoint() { stop(); }

int MockEndpoint::start(int port) {
    port_ = port == 0 ? impl_->server.bind_to_any_port("127.0.0.1") : (impl_->server.bind_to_port("127.0.0.1", port) ? port : -1);
    if (port_ <= 0) throw std::runtime_error("mock endpoint could not bind a port");
    thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port_;
}

void MockEndpoint::serve(int port) {
    port_ = port;
    if (!impl_->server.listen("127.0.0.1", port)) throw std::runtime_error("mock endpoint could not listen");
}

void MockEndpoint::stop() {
    impl_->server.stop();
    if (thread_.joinable()) thread_.join();
}

std::string MockEndpoint::base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + prefix_; }

std::string MockEndpoint::last_authorization() const {
    std::lock_guard lock(mutex_);
    return last_auth_;
}

} // namespace medsynth::mock
