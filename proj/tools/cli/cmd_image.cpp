#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "medsynth/checkpoint.hpp"
#include "medsynth/data_io.hpp"
#include "medsynth/diffusion.hpp"
#include "medsynth/error.hpp"
#include "medsynth/image_metrics.hpp"
#include "plots.hpp"

namespace medsynth::cli {
namespace {

constexpr const char* kClassesKey = "data.classes";

template <typename F>
auto as_usage(F&& f) {
    try {
        return f();
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
}

std::vector<std::string> checkpoint_classes(const Checkpoint& c) {
    if (auto it = c.metadata.find(kClassesKey); it != c.metadata.end()) {
        const auto j = nlohmann::json::parse(it->second, nullptr, false);
        if (j.is_array()) {
            std::vector<std::string> names;
            for (const auto& n : j) names.push_back(n.get<std::string>());
            if (static_cast<int>(names.size()) == c.params.config.n_classes) return names;
        }
    }
    std::vector<std::string> names;
    for (int i = 0; i < c.params.config.n_classes; ++i) names.push_back(std::to_string(i));
    return names;
}

LabeledImageSet load_real(const std::filesystem::path& dir, const ToyData& toy, int size) {
    if (toy.enabled) return make_toy_shapes(toy.per_class, size, toy.seed);
    ImageLoadReport report;
    LabeledImageSet set = load_image_dataset(dir, size, &report);
    spdlog::info("loaded {} images from {} ({} skipped)", report.loaded, dir.string(), report.skipped);
    return set;
}

std::vector<GridRow> comparison_grid(const LabeledImageSet& generated, const LabeledImageSet& real, int rows, int cols) {
    std::vector<GridRow> grid;
    for (std::size_t c = 0; c < generated.class_names.size(); ++c) {
        const std::string& name = generated.class_names[c];
        auto pick = [&](const LabeledImageSet& set, int want_label) {
            std::vector<ImageTensor> out;
            for (std::size_t i = 0; i < set.size(); ++i)
                if (set.labels[i] == want_label) out.push_back(set.images[i]);
            return out;
        };
        const auto real_label = std::find(real.class_names.begin(), real.class_names.end(), name);
        const auto gen = pick(generated, static_cast<int>(c));
        const auto act = real_label == real.class_names.end()
                             ? std::vector<ImageTensor>{}
                             : pick(real, static_cast<int>(real_label - real.class_names.begin()));
        auto add_rows = [&](const std::vector<ImageTensor>& imgs, const std::string& tag) {
            for (int r = 0; r < rows; ++r) {
                GridRow row{name + " " + tag, {}};
                for (int k = 0; k < cols; ++k) {
                    const std::size_t idx = static_cast<std::size_t>(r * cols + k);
                    if (idx < imgs.size()) row.images.push_back(imgs[idx]);
                }
                if (!row.images.empty()) grid.push_back(std::move(row));
            }
        };
        add_rows(gen, "synthetic");
        add_rows(act, "real");
    }
    return grid;
}

} // namespace

int run_train_image(const Common& common, const TrainImageOptions& o) {
    if (o.data.empty() == !o.toy.enabled) throw UsageError("give exactly one of --data or --toy");
    TrainConfig tc;
    tc.epochs = o.epochs;
    tc.batch_size = o.batch_size;
    tc.learning_rate = o.learning_rate;
    tc.p_drop = o.p_drop;
    tc.seed = o.seed;
    tc.eval_every = o.eval_every;
    as_usage([&] { tc.validate(); return 0; });
    const NoiseSchedule schedule = as_usage([&] { return build_schedule(o.steps, o.beta_start, o.beta_end); });
    NetworkConfig net{2, o.base_channels, o.image_size, o.embed_dim};
    as_usage([&] { net.validate(); return 0; });
    if (o.eval_every > 0 && o.image_size % 8 != 0) throw UsageError("evaluation needs an image size divisible by 8");
    if (o.eval_every > 0 && o.eval_per_class < 2) throw UsageError("--eval-per-class must be at least 2");
    if (o.checkpoint_every < 0) throw UsageError("--checkpoint-every must be >= 0");
    if (!o.resume.empty() && !std::filesystem::exists(o.resume)) throw UsageError("resume checkpoint not found");
    if (!o.data.empty() && !std::filesystem::is_directory(o.data)) throw UsageError("data directory not found");

    const LabeledImageSet dataset = load_real(o.data, o.toy, o.image_size);
    net.n_classes = static_cast<int>(dataset.class_names.size());
    as_usage([&] { net.validate(); return 0; });

    TrainOptions options;
    if (!o.resume.empty()) options.resume = load_checkpoint(o.resume);
    open_run_dir(common);
    options.checkpoint_dir = artifact_path(common, "checkpoints");
    options.checkpoint_every = o.checkpoint_every;
    options.metadata[kClassesKey] = nlohmann::json(dataset.class_names).dump();
    options.on_epoch = [](int epoch, double loss) { spdlog::info("epoch {} loss {:.6f}", epoch, loss); };
    if (o.eval_every > 0) {
        options.evaluate = [&](const NetworkParams& params, int epoch) {
            const LabeledImageSet gen =
                sample_dataset(params, schedule, dataset.class_names, o.eval_per_class, {o.eval_w, 0},
                               derive_seed(o.eval_seed, static_cast<std::uint64_t>(epoch)), {common.threads, 8});
            const MetricsReport r = evaluate_generation(dataset, gen, Pool8Extractor{},
                                                        derive_seed(o.eval_seed, static_cast<std::uint64_t>(epoch)),
                                                        Pairing::RandomSameClass, common.threads);
            spdlog::info("epoch {} fid {:.4f} ssim {:.4f} psnr {:.4f}", epoch, r.fid, r.ssim, r.psnr);
            return EvalPoint{r.fid, r.ssim, r.psnr};
        };
    }

    const TrainResult result = train(dataset, net, tc, schedule, options);

    write_artifact(common, "history.csv", format_history_csv(result.history));
    std::string losses = "epoch,loss\n";
    const int first = tc.epochs - static_cast<int>(result.epoch_losses.size()) + 1;
    std::vector<double> xs;
    for (std::size_t i = 0; i < result.epoch_losses.size(); ++i) {
        losses += std::to_string(first + static_cast<int>(i)) + "," + format_number(result.epoch_losses[i]) + "\n";
        xs.push_back(first + static_cast<double>(i));
    }
    write_artifact(common, "losses.csv", losses);
    if (!result.epoch_losses.empty())
        write_artifact(common, "loss.svg", line_chart_svg("Training loss", "Epoch", "Loss", {{"loss", xs, result.epoch_losses}}));
    bool has_metrics = false;
    for (const auto& r : result.history.records) has_metrics |= std::isfinite(r.fid);
    if (has_metrics) write_artifact(common, "curves.svg", history_curves_svg(result.history));
    return kExitOk;
}

int run_sample(const Common& common, const SampleCommandOptions& o) {
    if (o.count < 0) throw UsageError("--count must be >= 0");
    if (o.format != "pgm" && o.format != "png") throw UsageError("--format must be pgm or png");
    if (o.chunk < 1) throw UsageError("--chunk must be positive");
    if (!std::filesystem::exists(o.checkpoint)) throw UsageError("checkpoint not found: " + o.checkpoint.string());
    const Checkpoint ckpt = load_checkpoint(o.checkpoint);
    if (o.class_label < 0 || o.class_label >= ckpt.params.config.n_classes)
        throw UsageError("--class must lie in [0, " + std::to_string(ckpt.params.config.n_classes) + ")");
    const GuidanceConfig guidance{o.w, o.sample_steps};
    as_usage([&] { guidance.validate(ckpt.schedule); return 0; });

    open_run_dir(common);
    const auto images = sample(ckpt.params, ckpt.schedule, o.class_label, o.count, guidance, o.seed, {common.threads, o.chunk});
    const std::string cls = checkpoint_classes(ckpt)[static_cast<std::size_t>(o.class_label)];
    for (std::size_t i = 0; i < images.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "class%d_%04zu.%s", o.class_label, i, o.format.c_str());
        const auto path = artifact_path(common, std::filesystem::path("samples") / name);
        std::filesystem::create_directories(path.parent_path());
        if (o.format == "pgm")
            write_pgm(path, to_file_range(images[i]));
        else
            write_png(path, to_file_range(images[i]));
    }
    spdlog::info("wrote {} samples of class '{}'", images.size(), cls);
    return kExitOk;
}

int run_eval_image(const Common& common, const EvalImageOptions& o) {
    if (o.real.empty() == !o.toy.enabled) throw UsageError("give exactly one of --real or --toy");
    if (o.generated.empty() == o.checkpoint.empty()) throw UsageError("give exactly one of --generated or --checkpoint");
    if (o.features_real.empty() != o.features_generated.empty())
        throw UsageError("--features-real and --features-generated go together");
    if (!o.features_real.empty() && !o.checkpoint.empty())
        throw UsageError("external features apply to --generated image sets only");
    if (o.pairing != "random" && o.pairing != "identity") throw UsageError("--pairing must be random or identity");
    if (o.per_class < 2) throw UsageError("--per-class must be at least 2");
    for (double w : o.w)
        if (!(w >= 0.0)) throw UsageError("guidance weights must be >= 0");
    const Pairing pairing = o.pairing == "random" ? Pairing::RandomSameClass : Pairing::Identity;

    std::optional<Checkpoint> ckpt;
    int size = o.image_size;
    if (!o.checkpoint.empty()) {
        if (!std::filesystem::exists(o.checkpoint)) throw UsageError("checkpoint not found: " + o.checkpoint.string());
        ckpt = load_checkpoint(o.checkpoint);
        if (size == 0) size = ckpt->params.config.image_size;
        if (size != ckpt->params.config.image_size) throw UsageError("--image-size differs from the checkpoint");
    }
    if (size == 0) size = 32;
    if (o.features_real.empty() && size % 8 != 0) throw UsageError("pool8 features need an image size divisible by 8");
    std::vector<double> ws = o.w;
    if (o.w_sweep) {
        ws.clear();
        for (int i = 1; i <= 8; ++i) ws.push_back(0.5 * i);
    }
    if (ckpt)
        for (double w : ws) as_usage([&] { GuidanceConfig{w, o.sample_steps}.validate(ckpt->schedule); return 0; });

    const LabeledImageSet real = load_real(o.real, o.toy, size);
    const std::string dataset_name = !o.dataset_name.empty() ? o.dataset_name
                                     : o.toy.enabled          ? std::string("Toy shapes")
                                                              : o.real.filename().string();
    open_run_dir(common);

    struct Entry {
        double w;
        MetricsReport metrics;
        LabeledImageSet generated;
    };
    std::vector<Entry> entries;
    if (ckpt) {
        const auto names = checkpoint_classes(*ckpt);
        for (double w : ws) {
            spdlog::info("sampling {} images per class at w = {}", o.per_class, w);
            LabeledImageSet gen = sample_dataset(ckpt->params, ckpt->schedule, names, o.per_class, {w, o.sample_steps},
                                                 o.sample_seed, {common.threads, 8});
            save_image_dataset(artifact_path(common, std::filesystem::path("generated") / ("w_" + fixed(w, 1))), gen);
            MetricsReport m = evaluate_generation(real, gen, Pool8Extractor{}, o.pairing_seed, pairing, common.threads);
            entries.push_back({w, m, std::move(gen)});
        }
    } else {
        LabeledImageSet gen = load_image_dataset(o.generated, size);
        MetricsReport m;
        if (!o.features_real.empty())
            m = evaluate_generation(real, gen, read_feature_file(o.features_real), read_feature_file(o.features_generated),
                                    o.pairing_seed, pairing);
        else
            m = evaluate_generation(real, gen, Pool8Extractor{}, o.pairing_seed, pairing, common.threads);
        entries.push_back({std::nan(""), m, std::move(gen)});
    }

    std::string csv = "dataset,model,w,fid,ssim,psnr,pairs\n";
    std::vector<ImageTableRow> rows;
    std::size_t best = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        const std::string model = entries.size() > 1 ? o.model_name + " w=" + fixed(e.w, 1) : o.model_name;
        csv += csv_field(dataset_name) + "," + csv_field(model) + "," + (std::isnan(e.w) ? std::string() : fixed(e.w, 1)) +
               "," + format_number(e.metrics.fid) + "," + format_number(e.metrics.ssim) + "," +
               format_number(e.metrics.psnr) + "," + std::to_string(e.metrics.pairs) + "\n";
        rows.push_back({dataset_name, model, e.metrics});
        if (e.metrics.fid < entries[best].metrics.fid) best = i;
    }
    write_artifact(common, "metrics.csv", csv);
    write_artifact(common, "table.txt", render_image_table(rows));

    std::string summary = format_metrics_record(entries[best].metrics);
    if (!std::isnan(entries[best].w)) {
        summary = "best_w=" + fixed(entries[best].w, 1) + "\n" + summary;
        if (entries.size() > 2)
            summary += std::string("best_w_interior=") +
                       ((best > 0 && best + 1 < entries.size()) ? "true" : "false") + "\n";
    }
    write_artifact(common, "summary.txt", summary);
    if (entries.size() > 1) {
        Series fid{"FID", {}, {}};
        for (const auto& e : entries) {
            fid.x.push_back(e.w);
            fid.y.push_back(e.metrics.fid);
        }
        write_artifact(common, "w_sweep.svg", line_chart_svg("FID across guidance strength", "w", "FID", {fid}));
    }
    write_artifact(common, "grid.svg", image_grid_svg(comparison_grid(entries[best].generated, real, 2, 8)));
    return kExitOk;
}

} // namespace medsynth::cli
