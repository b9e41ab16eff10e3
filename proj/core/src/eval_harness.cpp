#include "medsynth/eval_harness.hpp"

#include <spawn.h>
#include <sys/wait.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <tuple>

#include <spdlog/spdlog.h>

#include "medsynth/error.hpp"
#include "medsynth/history.hpp"
#include "medsynth/rng.hpp"
#include "medsynth/table.hpp"

extern char** environ;

namespace medsynth {
namespace {

void require_same_classes(const LabeledTextSet& a, const LabeledTextSet& b) {
    if (a.class_names != b.class_names) throw InvalidArgument("data sets use different class names");
}

LabeledTextSet concat(const LabeledTextSet& a, const LabeledTextSet& b) {
    LabeledTextSet out = a;
    out.texts.insert(out.texts.end(), b.texts.begin(), b.texts.end());
    out.targets.insert(out.targets.end(), b.targets.begin(), b.targets.end());
    return out;
}

ClassificationMetrics evaluate(const ClassifierModel& model, const LabeledTextSet& test) {
    const auto pred = model.predict(test.texts);
    return classification_metrics(test.targets, pred, static_cast<int>(test.class_names.size()));
}

std::string fixed3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

int run_process(const std::vector<std::string>& argv, std::uint64_t seed) {
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    std::vector<std::string> env_store;
    for (char** e = environ; e && *e; ++e)
        if (std::string_view(*e).substr(0, 13) != "MEDSYNTH_SEED") env_store.emplace_back(*e);
    env_store.push_back("MEDSYNTH_SEED=" + std::to_string(seed));
    std::vector<char*> env;
    for (auto& e : env_store) env.push_back(e.data());
    env.push_back(nullptr);
    pid_t pid = 0;
    if (posix_spawnp(&pid, args[0], nullptr, nullptr, args.data(), env.data()) != 0)
        throw Error("cannot start external classifier '" + argv[0] + "'");
    int status = 0;
    if (waitpid(pid, &status, 0) < 0) throw Error("waiting for external classifier failed");
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class ExternalModel final : public ClassifierModel {
public:
    ExternalModel(std::vector<std::string> command, std::filesystem::path model_dir, std::uint64_t seed)
        : command_(std::move(command)), model_dir_(std::move(model_dir)), seed_(seed) {}

    std::vector<int> predict(const std::vector<std::string>& texts) const override {
        const auto id = counter_.fetch_add(1);
        const auto input = model_dir_ / ("predict_" + std::to_string(id) + "_in.csv");
        const auto output = model_dir_ / ("predict_" + std::to_string(id) + "_out.csv");
        LabeledTextSet in;
        for (const auto& t : texts) in.push_back(t, -1);
        write_text_dataset(input, in);
        auto argv = command_;
        argv.insert(argv.end(), {"predict", model_dir_.string(), input.string(), output.string()});
        if (int rc = run_process(argv, seed_); rc != 0)
            throw Error("external classifier predict exited with status " + std::to_string(rc));
        const LabeledTextSet out = load_text_dataset(output, {});
        if (out.size() != texts.size()) throw DataError("external classifier returned a wrong number of predictions");
        return out.targets;
    }

private:
    std::vector<std::string> command_;
    std::filesystem::path model_dir_;
    std::uint64_t seed_;
    mutable std::atomic<long> counter_{0};
};

} // namespace

std::string to_string(ExperimentKind kind) {
    switch (kind) {
    case ExperimentKind::Original: return "Original";
    case ExperimentKind::Composite: return "Composite";
    case ExperimentKind::Synthetic: return "Synthetic";
    case ExperimentKind::Smote: return "SMOTE";
    }
    return "Original";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
    std::string s;
    for (char c : name) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (s == "original") return ExperimentKind::Original;
    if (s == "composite") return ExperimentKind::Composite;
    if (s == "synthetic") return ExperimentKind::Synthetic;
    if (s == "smote") return ExperimentKind::Smote;
    throw InvalidArgument("unknown experiment '" + name + "' (expected original, composite, synthetic or smote)");
}

ClassificationMetrics classification_metrics(std::span<const int> y_true, std::span<const int> y_pred, int n_classes) {
    if (y_true.size() != y_pred.size()) throw ShapeError("label and prediction counts differ");
    if (y_true.empty()) throw InvalidArgument("no labels to score");
    if (n_classes < 1) throw InvalidArgument("n_classes must be positive");
    std::vector<double> tp(n_classes), pred_count(n_classes), true_count(n_classes);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i], p = y_pred[i];
        if (t < 0 || t >= n_classes || p < 0 || p >= n_classes) throw InvalidArgument("label outside [0, n_classes)");
        ++true_count[t];
        ++pred_count[p];
        if (t == p) {
            ++tp[t];
            ++correct;
        }
    }
    ClassificationMetrics m;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(y_true.size());
    for (int c = 0; c < n_classes; ++c) {
        double p = 0.0, r = 0.0;
        if (pred_count[c] > 0)
            p = tp[c] / pred_count[c];
        else
            m.undefined_precision.push_back(c);
        if (true_count[c] > 0)
            r = tp[c] / true_count[c];
        else
            m.undefined_recall.push_back(c);
        m.precision.push_back(p);
        m.recall.push_back(r);
        m.f1.push_back(p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0);
    }
    const double k = n_classes;
    for (int c = 0; c < n_classes; ++c) {
        m.macro_precision += m.precision[c] / k;
        m.macro_recall += m.recall[c] / k;
        m.macro_f1 += m.f1[c] / k;
    }
    return m;
}

LabeledTextSet smote_balance(const LabeledTextSet& orig_train, const LabeledTextSet& synth, std::uint64_t seed,
                             BalanceReport* report) {
    orig_train.validate();
    synth.validate();
    require_same_classes(orig_train, synth);
    const auto counts = orig_train.class_counts();
    const std::size_t k = counts.size();
    const std::size_t majority = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
    std::vector<std::vector<std::size_t>> pools(k);
    for (std::size_t i = 0; i < synth.size(); ++i) pools[synth.targets[i]].push_back(i);

    BalanceReport local;
    BalanceReport& rep = report ? *report : local;
    rep = BalanceReport{};
    rep.drawn.assign(k, 0);
    rep.resampled.assign(k, 0);
    LabeledTextSet out = orig_train;
    for (std::size_t c = 0; c < k; ++c) {
        const std::size_t deficit = majority - counts[c];
        if (deficit == 0) continue;
        auto& pool = pools[c];
        if (pool.empty())
            throw InvalidArgument("class '" + orig_train.class_names[c] + "' needs " + std::to_string(deficit) +
                                  " samples but has no synthetic samples");
        Rng rng(derive_seed(seed, c));
        rng.shuffle(std::span<std::size_t>(pool));
        const std::size_t take = std::min(deficit, pool.size());
        for (std::size_t i = 0; i < take; ++i) out.push_back(synth.texts[pool[i]], static_cast<int>(c));
        for (std::size_t i = take; i < deficit; ++i)
            out.push_back(synth.texts[pool[rng.uniform_index(pool.size())]], static_cast<int>(c));
        rep.drawn[c] = deficit;
        rep.resampled[c] = deficit - take;
        if (deficit > take) {
            rep.warnings.push_back("class '" + orig_train.class_names[c] + "': " + std::to_string(pool.size()) +
                                   " synthetic samples for a deficit of " + std::to_string(deficit) + "; " +
                                   std::to_string(deficit - take) + " drawn again with replacement");
            spdlog::warn("{}", rep.warnings.back());
        }
    }
    return out;
}

LabeledTextSet assemble_training_set(ExperimentKind kind, const LabeledTextSet& orig_train,
                                     const LabeledTextSet& synth, std::uint64_t seed, BalanceReport* report) {
    switch (kind) {
    case ExperimentKind::Original:
        if (orig_train.empty()) throw InvalidArgument("original training set is empty");
        return orig_train;
    case ExperimentKind::Composite:
        require_same_classes(orig_train, synth);
        return concat(orig_train, synth);
    case ExperimentKind::Synthetic:
        require_same_classes(orig_train, synth);
        if (synth.empty()) throw InvalidArgument("synthetic training set is empty");
        return synth;
    case ExperimentKind::Smote: return smote_balance(orig_train, synth, seed, report);
    }
    throw InvalidArgument("unknown experiment kind");
}

std::vector<SplitIndices> kfold_split(std::span<const int> labels, int k_folds, std::uint64_t seed) {
    if (k_folds < 2) throw InvalidArgument("k_folds must be at least 2");
    if (labels.size() < static_cast<std::size_t>(k_folds))
        throw InvalidArgument("set of " + std::to_string(labels.size()) + " items is too small for " +
                              std::to_string(k_folds) + " folds");
    int max_label = -1;
    for (int l : labels) {
        if (l < 0) throw InvalidArgument("negative label");
        max_label = std::max(max_label, l);
    }
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(max_label + 1));
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

    Rng rng(seed);
    std::vector<std::vector<std::size_t>> members(k_folds);
    std::size_t next = 0;
    for (auto& cls : by_class) {
        rng.shuffle(std::span<std::size_t>(cls));
        for (std::size_t i : cls) members[next++ % k_folds].push_back(i);
    }
    std::vector<SplitIndices> folds(k_folds);
    for (int f = 0; f < k_folds; ++f) {
        auto& val = folds[f].test;
        val = members[f];
        std::sort(val.begin(), val.end());
        for (int g = 0; g < k_folds; ++g)
            if (g != f) folds[f].train.insert(folds[f].train.end(), members[g].begin(), members[g].end());
        std::sort(folds[f].train.begin(), folds[f].train.end());
    }
    return folds;
}

ReportRow run_experiment(ExperimentKind kind, const LabeledTextSet& orig_train, const LabeledTextSet& orig_test,
                         const LabeledTextSet& synth, const Classifier& classifier, std::uint64_t seed,
                         const std::string& source) {
    if (orig_test.empty()) throw InvalidArgument("test set is empty");
    orig_test.validate();
    require_same_classes(orig_train, orig_test);

    ReportRow row;
    row.kind = kind;
    row.source = kind == ExperimentKind::Original ? "" : source;
    row.classifier = classifier.name();

    if (kind != ExperimentKind::Synthetic) {
        const LabeledTextSet train = assemble_training_set(kind, orig_train, synth, derive_seed(seed, 1));
        const auto model = classifier.train(train, derive_seed(seed, 2));
        row.mean = evaluate(*model, orig_test);
        row.folds = {row.mean};
        row.models = 1;
        return row;
    }

    const LabeledTextSet pool = assemble_training_set(kind, orig_train, synth, seed);
    const auto folds = kfold_split(pool.targets, kSyntheticFolds, derive_seed(seed, 3));
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const LabeledTextSet part = subset(pool, folds[f].train);
        const auto model = classifier.train(part, derive_seed(seed, 10 + f));
        row.folds.push_back(evaluate(*model, orig_test));
    }
    row.models = static_cast<int>(folds.size());

    auto field_stats = [&](auto getter, double& mean, double& sd) {
        double s = 0.0;
        for (const auto& m : row.folds) s += getter(m);
        mean = s / row.folds.size();
        double ss = 0.0;
        for (const auto& m : row.folds) ss += (getter(m) - mean) * (getter(m) - mean);
        sd = std::sqrt(ss / (row.folds.size() - 1));
    };
    ClassificationMetrics sd;
    field_stats([](const ClassificationMetrics& m) { return m.accuracy; }, row.mean.accuracy, sd.accuracy);
    field_stats([](const ClassificationMetrics& m) { return m.macro_precision; }, row.mean.macro_precision,
                sd.macro_precision);
    field_stats([](const ClassificationMetrics& m) { return m.macro_recall; }, row.mean.macro_recall, sd.macro_recall);
    field_stats([](const ClassificationMetrics& m) { return m.macro_f1; }, row.mean.macro_f1, sd.macro_f1);
    row.stddev = sd;
    return row;
}

void sort_report(std::vector<ReportRow>& rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
        return std::tie(a.kind, a.source, a.classifier) < std::tie(b.kind, b.source, b.classifier);
    });
}

std::string format_report_csv(const std::vector<ReportRow>& rows) {
    std::string out = "experiment,source,classifier,models,accuracy,precision,recall,f1,accuracy_std,precision_std,"
                      "recall_std,f1_std\n";
    for (const auto& r : rows) {
        out += to_string(r.kind) + "," + csv_field(r.source) + "," + csv_field(r.classifier) + "," +
               std::to_string(r.models) + "," + format_number(r.mean.accuracy) + "," +
               format_number(r.mean.macro_precision) + "," + format_number(r.mean.macro_recall) + "," +
               format_number(r.mean.macro_f1);
        if (r.stddev)
            out += "," + format_number(r.stddev->accuracy) + "," + format_number(r.stddev->macro_precision) + "," +
                   format_number(r.stddev->macro_recall) + "," + format_number(r.stddev->macro_f1);
        else
            out += ",,,,";
        out += "\n";
    }
    return out;
}

std::vector<ReportRow> parse_report_csv(std::string_view content) {
    const auto table = parse_csv(content);
    if (table.empty() || table[0].size() != 12 || table[0][0] != "experiment")
        throw DataError("not a report file: unexpected header");
    auto number = [](const std::string& s) {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw DataError("bad number '" + s + "' in report");
        return v;
    };
    std::vector<ReportRow> rows;
    for (std::size_t i = 1; i < table.size(); ++i) {
        const auto& f = table[i];
        if (f.size() == 1 && f[0].empty()) continue;
        if (f.size() != 12) throw DataError("report row " + std::to_string(i) + " has " + std::to_string(f.size()) + " fields");
        ReportRow r;
        try {
            r.kind = parse_experiment_kind(f[0]);
            r.source = f[1];
            r.classifier = f[2];
            r.models = std::stoi(f[3]);
            r.mean.accuracy = number(f[4]);
            r.mean.macro_precision = number(f[5]);
            r.mean.macro_recall = number(f[6]);
            r.mean.macro_f1 = number(f[7]);
            if (!f[8].empty()) {
                ClassificationMetrics sd;
                sd.accuracy = number(f[8]);
                sd.macro_precision = number(f[9]);
                sd.macro_recall = number(f[10]);
                sd.macro_f1 = number(f[11]);
                r.stddev = sd;
            }
        } catch (const std::logic_error&) {
            throw DataError("malformed report row " + std::to_string(i));
        } catch (const InvalidArgument&) {
            throw DataError("unknown experiment in report row " + std::to_string(i));
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string render_text_table(const std::vector<ReportRow>& rows) {
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows) {
        std::string censored = "---";
        if (r.source == "censored")
            censored = "✓";
        else if (r.source == "uncensored")
            censored = "×";
        else if (!r.source.empty())
            censored = r.source;
        auto cell = [&](double mean, double sd) {
            return r.stddev ? fixed3(mean) + " ± " + fixed3(sd) : fixed3(mean);
        };
        const ClassificationMetrics sd = r.stddev.value_or(ClassificationMetrics{});
        cells.push_back({to_string(r.kind), censored, r.classifier, cell(r.mean.accuracy, sd.accuracy),
                         cell(r.mean.macro_precision, sd.macro_precision), cell(r.mean.macro_recall, sd.macro_recall),
                         cell(r.mean.macro_f1, sd.macro_f1)});
    }
    return render_table({"Exp.", "Censored?", "Model", "Acc. ↑", "Prec. ↑", "Recall ↑", "F1 ↑"},
                        {Align::Left, Align::Left, Align::Left, Align::Right, Align::Right, Align::Right, Align::Right},
                        cells);
}

ExternalClassifier::ExternalClassifier(std::string display_name, std::vector<std::string> command,
                                       std::filesystem::path work_dir)
    : name_(std::move(display_name)), command_(std::move(command)), work_dir_(std::move(work_dir)) {
    if (command_.empty()) throw InvalidArgument("external classifier command is empty");
}

std::unique_ptr<ClassifierModel> ExternalClassifier::train(const LabeledTextSet& set, std::uint64_t seed,
                                                           std::span<const double> weights) const {
    if (!weights.empty()) throw InvalidArgument("external classifiers do not take sample weights");
    static std::atomic<long> counter{0};
    const auto model_dir = work_dir_ / ("model_" + std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(model_dir);
    const auto train_file = model_dir / "train.csv";
    write_text_dataset(train_file, set);
    auto argv = command_;
    argv.insert(argv.end(), {"train", train_file.string(), model_dir.string()});
    if (int rc = run_process(argv, seed); rc != 0)
        throw Error("external classifier train exited with status " + std::to_string(rc));
    return std::make_unique<ExternalModel>(command_, model_dir, seed);
}

} // namespace medsynth
