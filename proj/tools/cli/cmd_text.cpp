#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "medsynth/data_io.hpp"
#include "medsynth/error.hpp"
#include "medsynth/eval_harness.hpp"
#include "medsynth/textgen.hpp"

namespace medsynth::cli {
namespace {

SampleSchema schema_from(const GenTextOptions& o, const std::vector<std::string>& legend) {
    SampleSchema s;
    s.text_field = o.text_field;
    s.fields = {{o.text_field, FieldType::Text, o.text_description},
                {s.target_field, FieldType::Integer, legend_description(o.legend_prefix, legend)}};
    for (const auto& spec : o.extra_fields) {
        const auto a = spec.find(':');
        const auto b = a == std::string::npos ? a : spec.find(':', a + 1);
        if (b == std::string::npos) throw UsageError("--field expects name:type:description, got '" + spec + "'");
        try {
            s.fields.push_back({spec.substr(0, a), parse_field_type(spec.substr(a + 1, b - a - 1)), spec.substr(b + 1)});
        } catch (const InvalidArgument& e) {
            throw UsageError(e.what());
        }
    }
    try {
        s.validate();
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    return s;
}

std::vector<std::string> split_words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

} // namespace

int run_gen_text(const Common& common, const GenTextOptions& o) {
    if (!std::filesystem::is_regular_file(o.train)) throw UsageError("training file not found: " + o.train.string());
    if (o.n_per_class < 1) throw UsageError("--n-per-class must be at least 1");
    if (o.concurrency < 1) throw UsageError("--concurrency must be at least 1");
    if (!(o.max_request_factor >= 1.0)) throw UsageError("--max-request-factor must be >= 1");
    EndpointConfig endpoint;
    endpoint.base_url = o.endpoint;
    endpoint.model = o.model;
    endpoint.temperature = o.temperature;
    endpoint.timeout_seconds = o.timeout;
    endpoint.max_retries = o.retries;
    endpoint.backoff_ms = o.backoff_ms;
    endpoint.token_env = o.token_env;
    endpoint.response_format = !o.no_response_format;
    try {
        endpoint.validate();
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }

    const TextColumns columns{o.text_column, o.target_column};
    TextLoadReport load_report;
    const LabeledTextSet train = load_text_dataset(o.train, {columns, o.class_names}, &load_report);
    if (load_report.rejected > 0) spdlog::warn("{} training rows rejected", load_report.rejected);
    const std::size_t k = train.class_names.size();

    std::vector<std::string> legend = o.legend;
    if (legend.empty()) legend = k == deptweet_legend().size() ? deptweet_legend() : train.class_names;
    if (legend.size() != k)
        throw UsageError("legend has " + std::to_string(legend.size()) + " entries for " + std::to_string(k) + " classes");

    GenerationConfig config;
    config.schema = schema_from(o, legend);
    config.legend = legend;
    config.seed = o.seed;
    config.max_request_factor = o.max_request_factor;
    config.strict_dedup = o.strict_dedup;
    config.concurrency = o.concurrency;

    open_run_dir(common);
    std::ofstream log(artifact_path(common, "rejections.jsonl"), std::ios::binary);
    if (!log) throw Error("cannot write rejections.jsonl");
    config.rejection_log = &log;

    HttpChatEndpoint client(endpoint);
    const GenerationResult result = generate_dataset(train, o.n_per_class, client, config);
    log.flush();

    write_artifact(common, "synthetic.csv", format_text_dataset(result.set, columns));
    if (o.extra_fields.size() > 0) {
        std::string jsonl;
        for (const auto& r : result.records) {
            nlohmann::json j = r.extra;
            j[config.schema.text_field] = r.text;
            j[config.schema.target_field] = r.target;
            jsonl += j.dump() + "\n";
        }
        write_artifact(common, "records.jsonl", jsonl);
    }
    const auto& st = result.stats;
    write_artifact(common, "stats.txt",
                   "requests=" + std::to_string(st.requests) + "\naccepted=" + std::to_string(st.accepted) +
                       "\nrejected=" + std::to_string(st.rejected) + "\nduplicates=" + std::to_string(st.duplicates) +
                       "\ndiscarded=" + std::to_string(st.discarded) + "\n");
    spdlog::info("{} requests, {} accepted, {} rejected", st.requests, st.accepted, st.rejected);
    return kExitOk;
}

int run_eval_text(const Common& common, const EvalTextOptions& o) {
    const bool split_mode = !o.data.empty();
    if (split_mode == (!o.train.empty() || !o.test.empty()))
        throw UsageError("give either --data or both --train and --test");
    if (!split_mode && (o.train.empty() || o.test.empty())) throw UsageError("--train and --test go together");
    if (split_mode && !(o.test_fraction > 0.0 && o.test_fraction < 1.0))
        throw UsageError("--test-fraction must lie in (0, 1)");
    for (const auto& p : {o.data, o.train, o.test})
        if (!p.empty() && !std::filesystem::is_regular_file(p)) throw UsageError("file not found: " + p.string());

    std::vector<ExperimentKind> kinds;
    for (const auto& e : o.experiments) {
        try {
            kinds.push_back(parse_experiment_kind(e));
        } catch (const InvalidArgument& err) {
            throw UsageError(err.what());
        }
    }
    std::vector<std::pair<std::string, std::filesystem::path>> sources;
    for (const auto& s : o.synth) {
        const auto eq = s.find('=');
        std::pair<std::string, std::filesystem::path> src =
            eq == std::string::npos ? std::pair<std::string, std::filesystem::path>{"", s}
                                    : std::pair<std::string, std::filesystem::path>{s.substr(0, eq), s.substr(eq + 1)};
        if (!std::filesystem::is_regular_file(src.second))
            throw UsageError("synthetic file not found: " + src.second.string());
        sources.push_back(std::move(src));
    }
    for (auto kind : kinds)
        if (kind != ExperimentKind::Original && sources.empty())
            throw UsageError(to_string(kind) + " needs at least one --synth file");

    std::unique_ptr<Classifier> classifier;
    if (o.classifier == "baseline") {
        if (o.iterations < 0 || !(o.learning_rate > 0.0) || !(o.l2 >= 0.0))
            throw UsageError("invalid baseline classifier settings");
        classifier = std::make_unique<BaselineClassifier>(BaselineConfig{o.l2, o.learning_rate, o.iterations, {}});
    } else if (o.classifier == "external") {
        const auto command = split_words(o.external_command);
        if (command.empty()) throw UsageError("--classifier external needs --external-command");
        classifier = std::make_unique<ExternalClassifier>(o.external_name, command, common.run_dir / "external");
    } else {
        throw UsageError("--classifier must be baseline or external");
    }

    const TextLoadOptions load{{o.text_column, o.target_column}, o.class_names};
    LabeledTextSet train, test;
    if (split_mode) {
        std::tie(train, test) = split(load_text_dataset(o.data, load), o.test_fraction, o.split_seed, true);
    } else {
        train = load_text_dataset(o.train, load);
        TextLoadOptions test_load = load;
        if (test_load.class_names.empty()) test_load.class_names = train.class_names;
        test = load_text_dataset(o.test, test_load);
    }
    TextLoadOptions synth_load = load;
    if (synth_load.class_names.empty()) synth_load.class_names = train.class_names;
    std::vector<LabeledTextSet> synth_sets;
    for (const auto& [name, path] : sources) synth_sets.push_back(load_text_dataset(path, synth_load));

    open_run_dir(common);
    std::vector<ReportRow> rows;
    for (auto kind : kinds) {
        if (kind == ExperimentKind::Original) {
            spdlog::info("running {}", to_string(kind));
            rows.push_back(run_experiment(kind, train, test, LabeledTextSet{{}, {}, train.class_names}, *classifier, o.seed));
            continue;
        }
        for (std::size_t s = 0; s < sources.size(); ++s) {
            spdlog::info("running {} with '{}'", to_string(kind), sources[s].first);
            rows.push_back(run_experiment(kind, train, test, synth_sets[s], *classifier, o.seed, sources[s].first));
        }
    }
    sort_report(rows);
    write_artifact(common, "report.csv", format_report_csv(rows));
    write_artifact(common, "table.txt", render_text_table(rows));
    return kExitOk;
}

} // namespace medsynth::cli
