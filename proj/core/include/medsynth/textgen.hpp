#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medsynth/data_io.hpp"
#include "medsynth/error.hpp"

namespace medsynth {

// ---- schema ---------------------------------------------------------------

enum class FieldType { Text, Integer, Real, Binary };

std::string to_string(FieldType type);
FieldType parse_field_type(const std::string& name);

struct SchemaField {
    std::string name;
    FieldType type = FieldType::Text;
    std::string description;
};

// Declarative record layout. One Text field carries the sample text and one
// Integer field the class index; further fields are passed through, which is
// how tabular records are generated.
struct SampleSchema {
    std::string list_name = "samples";
    std::string object_name = "GeneratedSamples";
    std::string text_field = "tweet";
    std::string target_field = "target";
    std::vector<SchemaField> fields;

    const SchemaField& field(const std::string& name) const;
    void validate() const;

    // JSON Schema for an object holding exactly k records.
    nlohmann::json json_schema(int k) const;
};

// DEPTWEET layout: tweet + 4-level depression target.
SampleSchema deptweet_schema();
std::vector<std::string> deptweet_legend();

// target field description: "<prefix>: 0 = a, 1 = b, ..."
std::string legend_description(const std::string& prefix, const std::vector<std::string>& legend);

struct SampleRecord {
    std::string text;
    int target = 0;
    nlohmann::json extra = nlohmann::json::object();  // other declared fields

    friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct GeneratedBatch {
    std::vector<SampleRecord> samples;
};

// ---- prompt -----------------------------------------------------------------

struct Prompt {
    std::string system;
    std::string user;
    nlohmann::json response_schema;
};

inline constexpr const char* kExamplesBegin = "### Examples";
inline constexpr const char* kExamplesEnd = "### End of examples";

// exemplars[i] must have target i. class_descriptions is the label legend.
Prompt build_prompt(std::span<const SampleRecord> exemplars, const std::vector<std::string>& class_descriptions,
                    const SampleSchema& schema);

// ---- endpoint -----------------------------------------------------------------

struct EndpointConfig {
    std::string base_url = "http://127.0.0.1:8080/v1";  // "/chat/completions" is appended
    std::string model = "llama-3.1-8b-uncensored";
    double temperature = 1.0;
    double timeout_seconds = 60.0;
    int max_retries = 3;
    std::string token_env = "MEDSYNTH_API_KEY";
    int backoff_ms = 500;  // doubled after every failed attempt
    bool response_format = true;

    void validate() const;
};

class EndpointError : public Error {
public:
    enum class Kind { Timeout, Status, Transport, Exhausted, Protocol };

    EndpointError(Kind kind, const std::string& what, int status = 0, int attempts = 0)
        : EndpointError(kind, kind, what, status, attempts) {}
    EndpointError(Kind kind, Kind cause, const std::string& what, int status, int attempts)
        : Error(what), kind_(kind), cause_(cause), status_(status), attempts_(attempts) {}

    Kind kind() const noexcept { return kind_; }
    // For Exhausted: what made the last attempt fail. Otherwise equal to kind().
    Kind cause() const noexcept { return cause_; }
    // Last HTTP status seen, 0 when no response arrived.
    int status() const noexcept { return status_; }
    int attempts() const noexcept { return attempts_; }

private:
    Kind kind_;
    Kind cause_;
    int status_;
    int attempts_;
};

// Anything that turns a prompt into the assistant's message text.
class ChatEndpoint {
public:
    virtual ~ChatEndpoint() = default;
    virtual std::string complete(const Prompt& prompt) = 0;
};

// OpenAI-compatible /chat/completions client.
class HttpChatEndpoint final : public ChatEndpoint {
public:
    explicit HttpChatEndpoint(EndpointConfig config);
    std::string complete(const Prompt& prompt) override;
    const EndpointConfig& config() const noexcept { return config_; }

private:
    EndpointConfig config_;
};

nlohmann::json chat_request_body(const EndpointConfig& config, const Prompt& prompt);
// choices[0].message.content; EndpointError(Protocol) when absent.
std::string extract_message_content(const std::string& response_body);

std::string request_generation(const EndpointConfig& config, const Prompt& prompt);

// ---- parsing and validation ---------------------------------------------------------

class ParseError : public Error {
public:
    enum class Kind { Malformed, MissingField, WrongType };

    ParseError(Kind kind, std::string field, const std::string& what)
        : Error(what), kind_(kind), field_(std::move(field)) {}

    Kind kind() const noexcept { return kind_; }
    const std::string& field() const noexcept { return field_; }

private:
    Kind kind_;
    std::string field_;
};

std::string to_string(ParseError::Kind kind);

// Finds the first balanced {...} literal that parses as JSON, so prose around
// the object is tolerated.
std::optional<nlohmann::json> extract_json_object(std::string_view raw);

GeneratedBatch parse_structured(std::string_view raw, int k, const SampleSchema& schema = deptweet_schema());

struct Validation {
    bool accepted = true;
    std::vector<std::string> reasons;
};

Validation validate_batch(const GeneratedBatch& batch, int k, std::span<const SampleRecord> exemplars = {});

// ---- dataset generation ------------------------------------------------------------

struct RejectionRecord {
    std::string timestamp;
    long request = 0;
    std::string reason;
    std::string raw;
};

// {"timestamp":...,"request":...,"reason":...,"raw":...}
std::string format_rejection(const RejectionRecord& record);

// UTC ISO-8601 time; SOURCE_DATE_EPOCH overrides the clock when set.
std::string current_timestamp();

struct GenerationConfig {
    SampleSchema schema = deptweet_schema();
    std::vector<std::string> legend = deptweet_legend();
    std::uint64_t seed = 0;
    double max_request_factor = 5.0;  // abort after factor * n_per_class requests
    bool strict_dedup = false;        // reject batches repeating an accepted text
    int concurrency = 1;
    std::ostream* rejection_log = nullptr;  // JSONL
    std::function<std::string()> clock = current_timestamp;
};

struct GenerationStats {
    long requests = 0;
    long accepted = 0;
    long rejected = 0;
    long duplicates = 0;  // repeated texts kept (strict_dedup off)
    long discarded = 0;   // responses arriving after the set was complete
};

struct GenerationResult {
    LabeledTextSet set;
    std::vector<SampleRecord> records;  // parallel to set, with extra fields
    GenerationStats stats;
};

// Balanced synthetic set with n_per_class texts per class, ordered by class
// and then by acceptance.
GenerationResult generate_dataset(const LabeledTextSet& real_train, int n_per_class, ChatEndpoint& endpoint,
                                  const GenerationConfig& config);

} // namespace medsynth
