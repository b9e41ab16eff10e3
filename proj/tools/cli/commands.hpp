#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace medsynth::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Bad or inconsistent configuration; reported with exit code 2 before any
// file is written.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Common {
    std::filesystem::path run_dir;
    int threads = 1;
    std::string effective_config;  // echoed to <run_dir>/config.ini
};

struct ToyData {
    bool enabled = false;
    int per_class = 512;
    std::uint64_t seed = 1;
};

struct TrainImageOptions {
    std::filesystem::path data;
    ToyData toy;
    int image_size = 32;
    int base_channels = 16;
    int embed_dim = 32;
    int steps = 400;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int epochs = 100;
    int batch_size = 128;
    double learning_rate = 1e-4;
    double p_drop = 0.1;
    std::uint64_t seed = 0;
    int eval_every = 50;
    int eval_per_class = 64;
    double eval_w = 2.0;
    std::uint64_t eval_seed = 1;
    int checkpoint_every = 0;
    std::filesystem::path resume;
};

struct SampleCommandOptions {
    std::filesystem::path checkpoint;
    int class_label = 0;
    int count = 0;
    double w = 2.0;
    std::uint64_t seed = 0;
    int sample_steps = 0;
    int chunk = 8;
    std::string format = "pgm";
};

struct EvalImageOptions {
    std::filesystem::path real;
    ToyData toy;
    int image_size = 0;  // 0: taken from the checkpoint or the generated set
    std::filesystem::path generated;
    std::filesystem::path checkpoint;
    int per_class = 64;
    std::vector<double> w{2.0};
    bool w_sweep = false;
    std::uint64_t sample_seed = 0;
    int sample_steps = 0;
    std::filesystem::path features_real;
    std::filesystem::path features_generated;
    std::string pairing = "random";
    std::uint64_t pairing_seed = 0;
    std::string dataset_name;
    std::string model_name = "Diffusion (Proposed)";
};

struct GenTextOptions {
    std::filesystem::path train;
    std::string text_column = "text";
    std::string target_column = "target";
    std::vector<std::string> class_names;
    std::vector<std::string> legend;
    std::string legend_prefix = "Depression level";
    std::string text_field = "tweet";
    std::string text_description = "A social media comment extracted from Twitter";
    std::vector<std::string> extra_fields;  // name:type:description
    int n_per_class = 10;
    std::string endpoint = "http://127.0.0.1:8080/v1";
    std::string model = "llama-3.1-8b-uncensored";
    double temperature = 1.0;
    double timeout = 60.0;
    int retries = 3;
    int backoff_ms = 500;
    std::string token_env = "MEDSYNTH_API_KEY";
    bool no_response_format = false;
    int concurrency = 1;
    double max_request_factor = 5.0;
    bool strict_dedup = false;
    std::uint64_t seed = 0;
};

struct EvalTextOptions {
    std::filesystem::path train;
    std::filesystem::path test;
    std::filesystem::path data;
    double test_fraction = 0.2;
    std::uint64_t split_seed = 0;
    std::vector<std::string> synth;  // source=path
    std::vector<std::string> experiments{"original", "composite", "synthetic", "smote"};
    std::vector<std::string> class_names;
    std::string text_column = "text";
    std::string target_column = "target";
    std::string classifier = "baseline";
    std::string external_command;
    std::string external_name = "external";
    double l2 = 1e-4;
    double learning_rate = 2.0;
    int iterations = 300;
    std::uint64_t seed = 0;
};

struct ReportOptions {
    std::filesystem::path history;
    std::filesystem::path text_report;
    std::vector<std::filesystem::path> image_metrics;  // metrics.csv files from eval-image
    std::filesystem::path real;
    std::filesystem::path generated;
    int image_size = 32;
    int grid_rows = 2;
    int grid_columns = 8;
};

int run_train_image(const Common& common, const TrainImageOptions& options);
int run_sample(const Common& common, const SampleCommandOptions& options);
int run_eval_image(const Common& common, const EvalImageOptions& options);
int run_gen_text(const Common& common, const GenTextOptions& options);
int run_eval_text(const Common& common, const EvalTextOptions& options);
int run_report(const Common& common, const ReportOptions& options);

// ---- run directory helpers -------------------------------------------------

// Creates the run directory and writes config.ini.
void open_run_dir(const Common& common);
// Writes <run_dir>/<relative>; the path must stay inside the run directory.
void write_artifact(const Common& common, const std::filesystem::path& relative, const std::string& content);
std::filesystem::path artifact_path(const Common& common, const std::filesystem::path& relative);

std::string fixed(double value, int decimals);

} // namespace medsynth::cli
