#include "medsynth/textgen.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <limits>
#include <set>
#include <thread>

#include <spdlog/spdlog.h>

#include "medsynth/rng.hpp"

namespace medsynth {
namespace {

using ordered = nlohmann::ordered_json;

const char* json_type(FieldType t) {
    switch (t) {
    case FieldType::Text: return "string";
    case FieldType::Integer: return "integer";
    case FieldType::Real: return "number";
    case FieldType::Binary: return "boolean";
    }
    return "string";
}

bool has_type(const nlohmann::json& v, FieldType t) {
    switch (t) {
    case FieldType::Text: return v.is_string();
    case FieldType::Integer: return v.is_number_integer();
    case FieldType::Real: return v.is_number();
    case FieldType::Binary: return v.is_boolean() || (v.is_number_integer() && (v == 0 || v == 1));
    }
    return false;
}

// Index of the brace closing the object that opens at `open`, skipping
// braces inside string literals.
std::size_t matching_brace(std::string_view s, std::size_t open) {
    int depth = 0;
    bool in_string = false, escaped = false;
    for (std::size_t i = open; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (escaped)
                escaped = false;
            else if (c == '\\')
                escaped = true;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"')
            in_string = true;
        else if (c == '{')
            ++depth;
        else if (c == '}' && --depth == 0)
            return i;
    }
    return std::string_view::npos;
}

std::string exemplar_line(const SampleRecord& r, const SampleSchema& schema) {
    ordered o;
    for (const auto& f : schema.fields) {
        if (f.name == schema.text_field)
            o[f.name] = r.text;
        else if (f.name == schema.target_field)
            o[f.name] = r.target;
        else if (r.extra.contains(f.name))
            o[f.name] = r.extra.at(f.name);
    }
    return o.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

} // namespace

std::string to_string(FieldType type) {
    switch (type) {
    case FieldType::Text: return "text";
    case FieldType::Integer: return "integer";
    case FieldType::Real: return "real";
    case FieldType::Binary: return "binary";
    }
    return "text";
}

FieldType parse_field_type(const std::string& name) {
    if (name == "text") return FieldType::Text;
    if (name == "integer") return FieldType::Integer;
    if (name == "real") return FieldType::Real;
    if (name == "binary") return FieldType::Binary;
    throw InvalidArgument("unknown field type '" + name + "' (expected text, integer, real or binary)");
}

const SchemaField& SampleSchema::field(const std::string& name) const {
    for (const auto& f : fields)
        if (f.name == name) return f;
    throw InvalidArgument("schema has no field '" + name + "'");
}

void SampleSchema::validate() const {
    std::set<std::string> seen;
    for (const auto& f : fields) {
        if (f.name.empty()) throw InvalidArgument("schema field names must be non-empty");
        if (!seen.insert(f.name).second) throw InvalidArgument("duplicate schema field '" + f.name + "'");
    }
    if (field(text_field).type != FieldType::Text) throw InvalidArgument("text field must have type text");
    if (field(target_field).type != FieldType::Integer) throw InvalidArgument("target field must have type integer");
    if (list_name.empty()) throw InvalidArgument("schema list name must be non-empty");
}

nlohmann::json SampleSchema::json_schema(int k) const {
    nlohmann::json props = nlohmann::json::object();
    nlohmann::json required = nlohmann::json::array();
    for (const auto& f : fields) {
        props[f.name] = {{"type", json_type(f.type)}, {"description", f.description}};
        required.push_back(f.name);
    }
    nlohmann::json item = {{"type", "object"}, {"properties", props}, {"required", required},
                           {"additionalProperties", false}};
    return {{"type", "object"},
            {"properties", {{list_name, {{"type", "array"}, {"items", item}, {"minItems", k}, {"maxItems", k}}}}},
            {"required", {list_name}},
            {"additionalProperties", false}};
}

std::vector<std::string> deptweet_legend() {
    return {"non-depressed", "mildly depressed", "moderately depressed", "severely depressed"};
}

std::string legend_description(const std::string& prefix, const std::vector<std::string>& legend) {
    std::string out = prefix + ": ";
    for (std::size_t i = 0; i < legend.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(i) + " = " + legend[i];
    }
    return out;
}

SampleSchema deptweet_schema() {
    SampleSchema s;
    s.fields = {{"tweet", FieldType::Text, "A social media comment extracted from Twitter"},
                {"target", FieldType::Integer, legend_description("Depression level", deptweet_legend())}};
    return s;
}

Prompt build_prompt(std::span<const SampleRecord> exemplars, const std::vector<std::string>& class_descriptions,
                    const SampleSchema& schema) {
    schema.validate();
    const int k = static_cast<int>(class_descriptions.size());
    if (k < 1) throw InvalidArgument("at least one class is required");
    if (exemplars.size() != class_descriptions.size())
        throw InvalidArgument("expected one exemplar per class (" + std::to_string(k) + "), got " +
                              std::to_string(exemplars.size()));
    std::vector<int> seen(k, 0);
    for (const auto& e : exemplars) {
        if (e.target < 0 || e.target >= k) throw InvalidArgument("exemplar target outside the label legend");
        if (seen[e.target]++) throw InvalidArgument("duplicate exemplar for class " + std::to_string(e.target));
    }
    std::vector<const SampleRecord*> ordered_exemplars(k);
    for (const auto& e : exemplars) ordered_exemplars[e.target] = &e;

    Prompt p;
    p.system = "You write realistic synthetic samples for a labeled text classification dataset. "
               "Answer with a single JSON object and no other text.";
    std::string u;
    u += "Create new samples for a dataset with " + std::to_string(k) + " classes.\n\n";
    u += "Each sample has these fields:\n";
    for (const auto& f : schema.fields)
        u += "- " + f.name + " (" + to_string(f.type) + "): " + f.description + "\n";
    u += "\nLabel legend:\n";
    for (int i = 0; i < k; ++i) u += std::to_string(i) + " = " + class_descriptions[i] + "\n";
    u += "\n" + std::string(kExamplesBegin) + "\n";
    for (const auto* e : ordered_exemplars) u += exemplar_line(*e, schema) + "\n";
    u += std::string(kExamplesEnd) + "\n\n";
    u += "Write exactly one new sample for every " + schema.target_field + " from 0 to " + std::to_string(k - 1) +
         ", " + std::to_string(k) + " samples in total. Match the tone of the examples but do not copy them.\n";
    u += "Return one JSON object whose only key is \"" + schema.list_name +
         "\", a list of objects with the fields above.\n";
    p.user = std::move(u);
    p.response_schema = schema.json_schema(k);
    return p;
}

std::string to_string(ParseError::Kind kind) {
    switch (kind) {
    case ParseError::Kind::Malformed: return "malformed";
    case ParseError::Kind::MissingField: return "missing_field";
    case ParseError::Kind::WrongType: return "wrong_type";
    }
    return "malformed";
}

std::optional<nlohmann::json> extract_json_object(std::string_view raw) {
    for (std::size_t open = raw.find('{'); open != std::string_view::npos; open = raw.find('{', open + 1)) {
        const std::size_t close = matching_brace(raw, open);
        if (close == std::string_view::npos) continue;
        auto parsed = nlohmann::json::parse(raw.substr(open, close - open + 1), nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object()) return parsed;
    }
    return std::nullopt;
}

GeneratedBatch parse_structured(std::string_view raw, int k, const SampleSchema& schema) {
    (void)k;
    const auto obj = extract_json_object(raw);
    if (!obj) throw ParseError(ParseError::Kind::Malformed, "", "no JSON object found in response");
    if (!obj->contains(schema.list_name))
        throw ParseError(ParseError::Kind::MissingField, schema.list_name, "missing field '" + schema.list_name + "'");
    const auto& list = obj->at(schema.list_name);
    if (!list.is_array())
        throw ParseError(ParseError::Kind::WrongType, schema.list_name, "field '" + schema.list_name + "' is not a list");

    GeneratedBatch batch;
    for (std::size_t i = 0; i < list.size(); ++i) {
        const auto& item = list[i];
        const std::string where = schema.list_name + "[" + std::to_string(i) + "]";
        if (!item.is_object()) throw ParseError(ParseError::Kind::WrongType, where, where + " is not an object");
        SampleRecord r;
        for (const auto& f : schema.fields) {
            const std::string name = where + "." + f.name;
            if (!item.contains(f.name))
                throw ParseError(ParseError::Kind::MissingField, name, "missing field '" + name + "'");
            const auto& v = item.at(f.name);
            if (!has_type(v, f.type))
                throw ParseError(ParseError::Kind::WrongType, name,
                                 "field '" + name + "' should be " + to_string(f.type) + ", got " + v.type_name());
            if (f.name == schema.text_field)
                r.text = v.get<std::string>();
            else if (f.name == schema.target_field) {
                const auto t = v.get<long long>();
                if (t < std::numeric_limits<int>::min() || t > std::numeric_limits<int>::max())
                    throw ParseError(ParseError::Kind::WrongType, name, "field '" + name + "' is out of integer range");
                r.target = static_cast<int>(t);
            } else
                r.extra[f.name] = v;
        }
        batch.samples.push_back(std::move(r));
    }
    return batch;
}

Validation validate_batch(const GeneratedBatch& batch, int k, std::span<const SampleRecord> exemplars) {
    Validation v;
    auto reject = [&](std::string reason) {
        v.accepted = false;
        v.reasons.push_back(std::move(reason));
    };
    if (static_cast<int>(batch.samples.size()) != k)
        reject("expected " + std::to_string(k) + " samples, got " + std::to_string(batch.samples.size()));
    std::vector<int> counts(static_cast<std::size_t>(std::max(k, 0)), 0);
    for (const auto& s : batch.samples) {
        if (s.target < 0 || s.target >= k)
            reject("target " + std::to_string(s.target) + " out of range");
        else
            ++counts[s.target];
    }
    for (int c = 0; c < k; ++c)
        if (counts[c] > 1) reject("duplicate class " + std::to_string(c));
    for (int c = 0; c < k; ++c)
        if (counts[c] == 0) reject("missing class " + std::to_string(c));
    for (std::size_t i = 0; i < batch.samples.size(); ++i) {
        const std::string text = trim(batch.samples[i].text);
        if (text.empty()) {
            reject("empty text in sample " + std::to_string(i));
            continue;
        }
        for (const auto& e : exemplars)
            if (trim(e.text) == text) {
                reject("sample " + std::to_string(i) + " copies an exemplar verbatim");
                break;
            }
    }
    return v;
}

std::string format_rejection(const RejectionRecord& r) {
    ordered o;
    o["timestamp"] = r.timestamp;
    o["request"] = r.request;
    o["reason"] = r.reason;
    o["raw"] = r.raw;
    return o.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::string current_timestamp() {
    std::time_t now = 0;
    if (const char* fixed = std::getenv("SOURCE_DATE_EPOCH"); fixed && *fixed)
        now = static_cast<std::time_t>(std::strtoll(fixed, nullptr, 10));
    else
        now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

GenerationResult generate_dataset(const LabeledTextSet& real_train, int n_per_class, ChatEndpoint& endpoint,
                                  const GenerationConfig& config) {
    real_train.validate();
    config.schema.validate();
    const int k = static_cast<int>(real_train.class_names.size());
    if (n_per_class < 1) throw InvalidArgument("n_per_class must be at least 1");
    if (config.concurrency < 1) throw InvalidArgument("concurrency must be at least 1");
    if (!(config.max_request_factor >= 1.0)) throw InvalidArgument("max_request_factor must be >= 1");
    const std::vector<std::string>& legend = config.legend.empty() ? real_train.class_names : config.legend;
    if (static_cast<int>(legend.size()) != k)
        throw InvalidArgument("label legend has " + std::to_string(legend.size()) + " entries for " +
                              std::to_string(k) + " classes");

    std::vector<std::vector<std::size_t>> pools(k);
    for (std::size_t i = 0; i < real_train.size(); ++i) pools[real_train.targets[i]].push_back(i);
    for (int c = 0; c < k; ++c)
        if (pools[c].empty()) throw InvalidArgument("class '" + real_train.class_names[c] + "' has no real samples");

    const long max_requests = static_cast<long>(std::ceil(config.max_request_factor * n_per_class));
    GenerationResult result;
    std::vector<std::vector<SampleRecord>> accepted(k);
    std::set<std::string> seen_texts;
    long batches = 0;

    struct Slot {
        std::vector<SampleRecord> exemplars;
        std::string raw;
        std::exception_ptr error;
    };

    auto log_rejection = [&](long request, const std::string& reason, const std::string& raw) {
        ++result.stats.rejected;
        spdlog::warn("request {} rejected: {}", request, reason);
        if (config.rejection_log)
            *config.rejection_log << format_rejection({config.clock ? config.clock() : std::string(), request, reason, raw})
                                  << '\n';
    };

    while (batches < n_per_class) {
        if (result.stats.requests >= max_requests)
            throw Error("rejection-rate ceiling exceeded: " + std::to_string(result.stats.requests) + " requests gave " +
                        std::to_string(batches) + " of " + std::to_string(n_per_class) + " accepted batches");
        const long round = std::min<long>(config.concurrency, max_requests - result.stats.requests);
        std::vector<Slot> slots(static_cast<std::size_t>(round));
        std::vector<Prompt> prompts(slots.size());
        for (long j = 0; j < round; ++j) {
            const long request = result.stats.requests + j;
            Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(request)));
            for (int c = 0; c < k; ++c) {
                const std::size_t idx = pools[c][rng.uniform_index(pools[c].size())];
                slots[j].exemplars.push_back({real_train.texts[idx], c, nlohmann::json::object()});
            }
            prompts[j] = build_prompt(slots[j].exemplars, legend, config.schema);
        }
        auto call = [&](long j) {
            try {
                slots[j].raw = endpoint.complete(prompts[j]);
            } catch (...) {
                slots[j].error = std::current_exception();
            }
        };
        if (round == 1) {
            call(0);
        } else {
            std::vector<std::jthread> workers;
            for (long j = 0; j < round; ++j) workers.emplace_back(call, j);
        }

        for (long j = 0; j < round; ++j) {
            const long request = result.stats.requests++;
            Slot& slot = slots[j];
            if (slot.error) std::rethrow_exception(slot.error);
            if (batches >= n_per_class) {
                ++result.stats.discarded;
                continue;
            }
            GeneratedBatch batch;
            try {
                batch = parse_structured(slot.raw, k, config.schema);
            } catch (const ParseError& e) {
                log_rejection(request, "parse error (" + to_string(e.kind()) + "): " + e.what(), slot.raw);
                continue;
            }
            Validation v = validate_batch(batch, k, slot.exemplars);
            long repeats = 0;
            for (const auto& s : batch.samples)
                if (seen_texts.count(trim(s.text))) ++repeats;
            if (v.accepted && repeats > 0 && config.strict_dedup) {
                v.accepted = false;
                v.reasons.push_back("repeats an earlier synthetic text");
            }
            if (!v.accepted) {
                std::string reason;
                for (const auto& r : v.reasons) reason += (reason.empty() ? "" : "; ") + r;
                log_rejection(request, reason, slot.raw);
                continue;
            }
            result.stats.duplicates += repeats;
            for (auto& s : batch.samples) {
                s.text = trim(s.text);
                seen_texts.insert(s.text);
                accepted[s.target].push_back(std::move(s));
            }
            ++batches;
            ++result.stats.accepted;
        }
    }

    result.set.class_names = real_train.class_names;
    for (int c = 0; c < k; ++c)
        for (auto& r : accepted[c]) {
            result.set.push_back(r.text, c);
            result.records.push_back(std::move(r));
        }
    for (std::size_t n : result.set.class_counts())
        if (n != static_cast<std::size_t>(n_per_class)) throw Error("generated set is not balanced");
    spdlog::info("generated {} samples from {} requests ({} rejected)", result.set.size(), result.stats.requests,
                 result.stats.rejected);
    return result;
}

} // namespace medsynth
