#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "medsynth/data_io.hpp"

namespace medsynth {

enum class ExperimentKind { Original, Composite, Synthetic, Smote };

std::string to_string(ExperimentKind kind);
// Accepts original, composite, synthetic, smote (any case).
ExperimentKind parse_experiment_kind(const std::string& name);

// ---- classifiers ----------------------------------------------------------

class ClassifierModel {
public:
    virtual ~ClassifierModel() = default;
    virtual std::vector<int> predict(const std::vector<std::string>& texts) const = 0;
};

class Classifier {
public:
    virtual ~Classifier() = default;
    virtual std::string name() const = 0;
    // weights: optional per-sample weights parallel to the set.
    virtual std::unique_ptr<ClassifierModel> train(const LabeledTextSet& set, std::uint64_t seed,
                                                   std::span<const double> weights = {}) const = 0;
};

// Lowercased word tokens; runs of ASCII letters, digits and apostrophes, with
// any non-ASCII byte treated as a letter.
std::vector<std::string> tokenize(std::string_view text);

// Unigram and bigram ("a b") terms of a document, stop words removed first.
std::vector<std::string> document_terms(std::string_view text, const std::vector<std::string>& stop_words = {});

struct BaselineConfig {
    double l2 = 1e-4;
    double learning_rate = 2.0;
    int iterations = 300;
    std::vector<std::string> stop_words;
};

// TF-IDF (idf = ln(N / df) + 1, rows L2-normalized) feeding a multinomial
// logistic regression fit by full-batch gradient descent. The loss is the
// weight-normalized mean cross-entropy plus l2/2 ||W||^2, so duplicating the
// training set leaves the fit unchanged.
class BaselineClassifier final : public Classifier {
public:
    explicit BaselineClassifier(BaselineConfig config = {}) : config_(std::move(config)) {}
    std::string name() const override { return "TF-IDF+LR"; }
    std::unique_ptr<ClassifierModel> train(const LabeledTextSet& set, std::uint64_t seed,
                                           std::span<const double> weights = {}) const override;

private:
    BaselineConfig config_;
};

// Runs `<command> train <train-file> <model-dir>` and
// `<command> predict <model-dir> <input-file> <output-file>`. Files use the
// text,target CSV layout; the input file's target column is left at -1 and
// the output file must list the predicted target for each input row in order.
// The seed is passed in the MEDSYNTH_SEED environment variable.
class ExternalClassifier final : public Classifier {
public:
    ExternalClassifier(std::string display_name, std::vector<std::string> command, std::filesystem::path work_dir);
    std::string name() const override { return name_; }
    std::unique_ptr<ClassifierModel> train(const LabeledTextSet& set, std::uint64_t seed,
                                           std::span<const double> weights = {}) const override;

private:
    std::string name_;
    std::vector<std::string> command_;
    std::filesystem::path work_dir_;
};

// ---- metrics ------------------------------------------------------------------

struct ClassificationMetrics {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> precision;  // per class
    std::vector<double> recall;
    std::vector<double> f1;
    // Classes whose precision (no predictions) or recall (no true samples)
    // had a zero denominator; they count as 0 in the macro averages.
    std::vector<int> undefined_precision;
    std::vector<int> undefined_recall;
};

ClassificationMetrics classification_metrics(std::span<const int> y_true, std::span<const int> y_pred, int n_classes);

// ---- protocol -------------------------------------------------------------------

struct BalanceReport {
    std::vector<std::size_t> drawn;       // synthetic samples added per class
    std::vector<std::size_t> resampled;   // of those, drawn with replacement
    std::vector<std::string> warnings;
};

// Tops every class up to the majority count with that class's synthetic
// samples: a seeded draw without replacement when the pool suffices, else the
// whole pool plus seeded draws with replacement (reported as a warning). All
// original samples are kept. This injects generated samples rather than
// interpolating features.
LabeledTextSet smote_balance(const LabeledTextSet& orig_train, const LabeledTextSet& synth, std::uint64_t seed,
                             BalanceReport* report = nullptr);

LabeledTextSet assemble_training_set(ExperimentKind kind, const LabeledTextSet& orig_train,
                                     const LabeledTextSet& synth, std::uint64_t seed, BalanceReport* report = nullptr);

// Stratified folds: sizes differ by at most one, overall and per class.
std::vector<SplitIndices> kfold_split(std::span<const int> labels, int k_folds, std::uint64_t seed);

inline constexpr int kSyntheticFolds = 5;

struct ReportRow {
    ExperimentKind kind = ExperimentKind::Original;
    std::string source;      // e.g. "censored", "uncensored"; empty for Original
    std::string classifier;
    ClassificationMetrics mean;
    std::optional<ClassificationMetrics> stddev;  // Synthetic only (sample std over folds)
    std::vector<ClassificationMetrics> folds;
    int models = 1;
};

// Original, Composite and Smote train once; Synthetic trains one model per
// fold of the synthetic set on the remaining folds. Every model is scored on
// orig_test.
ReportRow run_experiment(ExperimentKind kind, const LabeledTextSet& orig_train, const LabeledTextSet& orig_test,
                         const LabeledTextSet& synth, const Classifier& classifier, std::uint64_t seed,
                         const std::string& source = "");

// Sorted by experiment, source, classifier.
void sort_report(std::vector<ReportRow>& rows);

// "experiment,source,classifier,models,accuracy,precision,recall,f1,
//  accuracy_std,precision_std,recall_std,f1_std"
std::string format_report_csv(const std::vector<ReportRow>& rows);
// Inverse of format_report_csv for the summary columns; folds and per-class
// metrics are not stored and come back empty.
std::vector<ReportRow> parse_report_csv(std::string_view content);

// Exp. | Censored? | Model | Acc. ↑ | Prec. ↑ | Recall ↑ | F1 ↑, three decimals.
// Sources "censored" and "uncensored" show as ✓ and ×, others verbatim, none
// as ---. Synthetic cells read "mean ± std".
std::string render_text_table(const std::vector<ReportRow>& rows);

} // namespace medsynth
