#include "cli.hpp"

#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "medsynth/error.hpp"

namespace medsynth::cli {
namespace {

void add_toy(CLI::App* cmd, ToyData& toy) {
    cmd->add_flag("--toy", toy.enabled, "Use the procedural two-class shape set");
    cmd->add_option("--toy-per-class", toy.per_class, "Toy images per class")->capture_default_str();
    cmd->add_option("--toy-seed", toy.seed, "Toy generator seed")->capture_default_str();
}

void configure_logging(const std::string& level) {
    static auto logger = [] {
        auto l = spdlog::stderr_color_mt("medsynth");
        spdlog::set_default_logger(l);
        spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
        return l;
    }();
    const auto lvl = spdlog::level::from_str(level);
    if (lvl == spdlog::level::off && level != "off") throw UsageError("unknown log level '" + level + "'");
    logger->set_level(lvl);
}

// Global keys plus those of the selected subcommand. An empty list option is
// left out, since reading `key=""` back would give a list with one empty entry.
std::string effective_config(const std::string& all, const CLI::App& command) {
    const std::string prefix = command.get_name() + ".";
    std::istringstream in(all);
    std::string out;
    for (std::string line; std::getline(in, line);) {
        const auto eq = line.find('=');
        const auto dot = line.find('.');
        if (eq == std::string::npos) continue;
        const bool global = dot == std::string::npos || dot > eq;
        if (!global && line.compare(0, prefix.size(), prefix) != 0) continue;
        if (!global && line.compare(eq, std::string::npos, "=\"\"") == 0) {
            const auto* opt = command.get_option_no_throw("--" + line.substr(prefix.size(), eq - prefix.size()));
            if (opt != nullptr && opt->get_items_expected_max() > 1) continue;
        }
        out += line + "\n";
    }
    return out;
}

} // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Class-conditional diffusion and LLM text generation toolkit", "medsynth"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "INI/TOML file with option values");

    Common common;
    std::string log_level = "info";
    app.add_option("--run-dir", common.run_dir, "Directory receiving all artifacts")->required();
    app.add_option("--threads", common.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--log-level", log_level, "trace, debug, info, warn, err or off")->capture_default_str();

    TrainImageOptions ti;
    auto* train = app.add_subcommand("train-image", "Train the conditional denoiser");
    train->add_option("--data", ti.data, "Image root with one subdirectory per class");
    add_toy(train, ti.toy);
    train->add_option("--image-size", ti.image_size)->capture_default_str();
    train->add_option("--base-channels", ti.base_channels)->capture_default_str();
    train->add_option("--embed-dim", ti.embed_dim)->capture_default_str();
    train->add_option("--steps", ti.steps, "Diffusion steps T")->capture_default_str();
    train->add_option("--beta-start", ti.beta_start)->capture_default_str();
    train->add_option("--beta-end", ti.beta_end)->capture_default_str();
    train->add_option("--epochs", ti.epochs)->capture_default_str();
    train->add_option("--batch-size", ti.batch_size)->capture_default_str();
    train->add_option("--lr", ti.learning_rate)->capture_default_str();
    train->add_option("--p-drop", ti.p_drop, "Context drop probability")->capture_default_str();
    train->add_option("--seed", ti.seed)->capture_default_str();
    train->add_option("--eval-every", ti.eval_every, "0 disables evaluation")->capture_default_str();
    train->add_option("--eval-per-class", ti.eval_per_class)->capture_default_str();
    train->add_option("--eval-w", ti.eval_w)->capture_default_str();
    train->add_option("--eval-seed", ti.eval_seed)->capture_default_str();
    train->add_option("--checkpoint-every", ti.checkpoint_every)->capture_default_str();
    train->add_option("--resume", ti.resume, "Checkpoint written by an earlier run");

    SampleCommandOptions so;
    auto* smp = app.add_subcommand("sample", "Draw images of one class from a checkpoint");
    smp->add_option("--checkpoint", so.checkpoint)->required();
    smp->add_option("--class", so.class_label)->required();
    smp->add_option("--count", so.count)->required();
    smp->add_option("--w", so.w, "Guidance strength")->capture_default_str();
    smp->add_option("--seed", so.seed)->capture_default_str();
    smp->add_option("--sample-steps", so.sample_steps, "0 runs the full chain")->capture_default_str();
    smp->add_option("--chunk", so.chunk)->capture_default_str();
    smp->add_option("--format", so.format, "pgm or png")->capture_default_str();

    EvalImageOptions ei;
    auto* evi = app.add_subcommand("eval-image", "FID, SSIM and PSNR of generated images");
    evi->add_option("--real", ei.real);
    add_toy(evi, ei.toy);
    evi->add_option("--image-size", ei.image_size)->capture_default_str();
    evi->add_option("--generated", ei.generated);
    evi->add_option("--checkpoint", ei.checkpoint);
    evi->add_option("--per-class", ei.per_class)->capture_default_str();
    evi->add_option("--w", ei.w, "One or more guidance strengths")->delimiter(',')->capture_default_str();
    evi->add_flag("--w-sweep", ei.w_sweep, "Sweep w over 0.5, 1.0, ..., 4.0");
    evi->add_option("--sample-seed", ei.sample_seed)->capture_default_str();
    evi->add_option("--sample-steps", ei.sample_steps)->capture_default_str();
    evi->add_option("--features-real", ei.features_real);
    evi->add_option("--features-generated", ei.features_generated);
    evi->add_option("--pairing", ei.pairing, "random or identity")->capture_default_str();
    evi->add_option("--pairing-seed", ei.pairing_seed)->capture_default_str();
    evi->add_option("--dataset-name", ei.dataset_name);
    evi->add_option("--model-name", ei.model_name)->capture_default_str();

    GenTextOptions gt;
    auto* gen = app.add_subcommand("gen-text", "Generate a balanced synthetic text set through a chat endpoint");
    gen->add_option("--train", gt.train)->required();
    gen->add_option("--text-column", gt.text_column)->capture_default_str();
    gen->add_option("--target-column", gt.target_column)->capture_default_str();
    gen->add_option("--class-names", gt.class_names);
    gen->add_option("--legend", gt.legend, "Label description per class");
    gen->add_option("--legend-prefix", gt.legend_prefix)->capture_default_str();
    gen->add_option("--text-field", gt.text_field)->capture_default_str();
    gen->add_option("--text-description", gt.text_description)->capture_default_str();
    gen->add_option("--field", gt.extra_fields, "Extra field as name:type:description");
    gen->add_option("--n-per-class", gt.n_per_class)->capture_default_str();
    gen->add_option("--endpoint", gt.endpoint)->capture_default_str();
    gen->add_option("--model", gt.model)->capture_default_str();
    gen->add_option("--temperature", gt.temperature)->capture_default_str();
    gen->add_option("--timeout", gt.timeout, "Seconds per request")->capture_default_str();
    gen->add_option("--retries", gt.retries)->capture_default_str();
    gen->add_option("--backoff-ms", gt.backoff_ms)->capture_default_str();
    gen->add_option("--token-env", gt.token_env, "Environment variable holding the bearer token")->capture_default_str();
    gen->add_flag("--no-response-format", gt.no_response_format, "Omit the JSON schema response_format");
    gen->add_option("--concurrency", gt.concurrency)->capture_default_str();
    gen->add_option("--max-request-factor", gt.max_request_factor)->capture_default_str();
    gen->add_flag("--strict-dedup", gt.strict_dedup);
    gen->add_option("--seed", gt.seed)->capture_default_str();

    EvalTextOptions et;
    auto* evt = app.add_subcommand("eval-text", "Run the augmentation experiments");
    evt->add_option("--train", et.train);
    evt->add_option("--test", et.test);
    evt->add_option("--data", et.data, "Single file split into train and test");
    evt->add_option("--test-fraction", et.test_fraction)->capture_default_str();
    evt->add_option("--split-seed", et.split_seed)->capture_default_str();
    evt->add_option("--synth", et.synth, "Synthetic set as source=path");
    evt->add_option("--experiments", et.experiments)->delimiter(',')->capture_default_str();
    evt->add_option("--class-names", et.class_names);
    evt->add_option("--text-column", et.text_column)->capture_default_str();
    evt->add_option("--target-column", et.target_column)->capture_default_str();
    evt->add_option("--classifier", et.classifier, "baseline or external")->capture_default_str();
    evt->add_option("--external-command", et.external_command);
    evt->add_option("--external-name", et.external_name)->capture_default_str();
    evt->add_option("--l2", et.l2)->capture_default_str();
    evt->add_option("--lr", et.learning_rate)->capture_default_str();
    evt->add_option("--iterations", et.iterations)->capture_default_str();
    evt->add_option("--seed", et.seed)->capture_default_str();

    ReportOptions ro;
    auto* rep = app.add_subcommand("report", "Render curves, tables and image grids");
    rep->add_option("--history", ro.history);
    rep->add_option("--text-report", ro.text_report);
    rep->add_option("--image-metrics", ro.image_metrics);
    rep->add_option("--real", ro.real);
    rep->add_option("--generated", ro.generated);
    rep->add_option("--image-size", ro.image_size)->capture_default_str();
    rep->add_option("--grid-rows", ro.grid_rows)->capture_default_str();
    rep->add_option("--grid-columns", ro.grid_columns)->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        configure_logging(log_level);
        common.effective_config = effective_config(app.config_to_str(true, false), *app.get_subcommands().front());
        if (*train) return run_train_image(common, ti);
        if (*smp) return run_sample(common, so);
        if (*evi) return run_eval_image(common, ei);
        if (*gen) return run_gen_text(common, gt);
        if (*evt) return run_eval_text(common, et);
        return run_report(common, ro);
    } catch (const UsageError& e) {
        std::cerr << "medsynth: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "medsynth: error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

} // namespace medsynth::cli
