// Runs every acceptance criterion and prints one PASS/FAIL line for each.
// Tolerances and budgets are fixed here; nothing is read from the environment.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "cli.hpp"
#include "gradcheck.hpp"
#include "medsynth/data_io.hpp"
#include "medsynth/diffusion.hpp"
#include "medsynth/eval_harness.hpp"
#include "medsynth/image_metrics.hpp"
#include "medsynth/schedule.hpp"
#include "medsynth/textgen.hpp"
#include "mock_endpoint.hpp"
#include "reference_tables.hpp"
#include "support.hpp"

namespace medsynth {
namespace {

namespace fs = std::filesystem;

// Collects failed checks with a short description each.
class Checks {
public:
    void expect(bool ok, const std::string& what) {
        ++total_;
        if (!ok) failures_.push_back(what);
    }
    void near(double got, double want, double tol, const std::string& what) {
        std::ostringstream s;
        s.precision(12);
        s << what << ": got " << got << ", want " << want << " +- " << tol;
        expect(std::abs(got - want) <= tol, s.str());
    }
    void note(const std::string& line) { notes_.push_back(line); }

    bool ok() const { return failures_.empty(); }
    int total() const { return total_; }
    const std::vector<std::string>& failures() const { return failures_; }
    const std::vector<std::string>& notes() const { return notes_; }

private:
    int total_ = 0;
    std::vector<std::string> failures_;
    std::vector<std::string> notes_;
};

struct Criterion {
    int id;
    std::string title;
    double budget_seconds;
    std::function<void(Checks&)> body;
};

// ---- 1. math oracles ----

void math_oracles(Checks& c) {
    const NoiseSchedule s = build_schedule();
    bool monotone = true, bounded = true;
    for (int t = 1; t <= s.steps; ++t) {
        bounded &= s.beta_at(t) > 0 && s.beta_at(t) < 1 && s.alpha_bar_at(t) > 0 && s.alpha_bar_at(t) < 1;
        if (t > 1) monotone &= s.alpha_bar_at(t) < s.alpha_bar_at(t - 1);
        bounded &= std::abs(s.alpha_at(t) - (1.0 - s.beta_at(t))) < 1e-15;
    }
    c.expect(monotone, "alpha_bar strictly decreasing");
    c.expect(bounded, "schedule values in (0, 1) with alpha = 1 - beta");
    c.near(s.beta_at(1), kDefaultBetaStart, 1e-15, "beta_1");
    c.near(s.beta_at(s.steps), kDefaultBetaEnd, 1e-15, "beta_T");

    Rng rng(17);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const ImageTensor x0 = test::random_image(8, 8, rng, -1.0, 1.0);
        const ImageTensor eps = test::normal_image(8, 8, rng);
        for (int t = 1; t <= s.steps; ++t) {
            const ImageTensor back = predict_x0(q_sample(x0, t, eps, s), t, eps, s);
            for (std::size_t k = 0; k < x0.size(); ++k) worst = std::max(worst, std::abs(back.values[k] - x0.values[k]));
        }
    }
    c.near(worst, 0.0, 1e-5, "q_sample/predict_x0 round trip");

    NoiseSchedule hand;
    hand.steps = 2;
    hand.beta = {0.2, 0.1};
    hand.alpha = {0.8, 0.9};
    hand.alpha_bar = {0.8, 0.72};
    const ImageTensor one(1, 1, 1.0);
    c.near(reverse_step(one, 2, one, one, hand).values[0], 1.1711155511838989, 1e-9, "reverse_step hand value");
    c.near(reverse_step(one, 2, one, ImageTensor(1, 1, 0.0), hand).values[0], 0.8548877851670609, 1e-9,
           "reverse_step hand value without noise");
    c.near(cfg_combine(1.0, 0.5, 2.0), 2.0, 1e-9, "cfg_combine w=2");
    c.near(cfg_combine(1.0, 0.5, 0.0), 1.0, 1e-9, "cfg_combine w=0");
    c.near(cfg_combine(-0.25, 0.75, 1.0), -1.25, 1e-9, "cfg_combine w=1");

    // Diagonal covariances: sum (mu1-mu2)^2 + (sqrt(v1) - sqrt(v2))^2.
    FrechetStats a, b;
    a.dim = b.dim = 3;
    a.mu = {0.5, -1.0, 2.0};
    b.mu = {0.0, 1.0, 2.5};
    a.sigma = {4, 0, 0, 0, 1, 0, 0, 0, 0.25};
    b.sigma = {1, 0, 0, 0, 9, 0, 0, 0, 0.25};
    const double closed = 0.25 + 4.0 + 0.25 + 1.0 + 4.0 + 0.0;
    c.near(frechet_distance(a, b), closed, 1e-8, "Frechet diagonal closed form");

    const ImageTensor img = test::random_image(16, 16, rng, 0.0, 1.0);
    c.near(ssim(img, img), 1.0, 1e-12, "SSIM self-similarity");
    c.near(psnr(ImageTensor(8, 8, 0.2), ImageTensor(8, 8, 0.7)), 6.0206, 1e-3, "PSNR constant offset 0.5");
}

// ---- 2. gradient check ----

void gradient_check(Checks& c) {
    const NetworkConfig tiny{2, 4, 8, 8};
    const auto r = test::gradient_check(tiny, 5, 40);
    c.expect(r.checked >= 25, "at least 25 parameters checked");
    c.expect(r.worst_relative_error < 1e-3, "worst relative error " + std::to_string(r.worst_relative_error) + " at " +
                                                r.worst_parameter);
    std::ostringstream s;
    s << r.checked << " parameters, worst relative error " << r.worst_relative_error;
    c.note(s.str());
}

// ---- 3. smoke training ----

struct ToyModel {
    Checkpoint checkpoint;
    LabeledImageSet real;
    bool trained = false;
};

ToyModel& toy_model() {
    static ToyModel model;
    return model;
}

LabeledImageSet only_class(const LabeledImageSet& set, int c) {
    LabeledImageSet out{{}, {}, set.class_names};
    for (std::size_t i = 0; i < set.size(); ++i)
        if (set.labels[i] == c) {
            out.images.push_back(set.images[i]);
            out.labels.push_back(c);
        }
    return out;
}

constexpr int kToyPerClass = 512;
constexpr int kToySize = 16;
constexpr int kToyEpochs = 30;
constexpr int kToySamples = 64;
constexpr double kToyW = 2.0;

void smoke_training(Checks& c) {
    ToyModel& m = toy_model();
    m.real = make_toy_shapes(kToyPerClass, kToySize, 1);
    const NetworkConfig net{2, 8, kToySize, 16};
    TrainConfig cfg;
    cfg.epochs = kToyEpochs;
    cfg.batch_size = 64;
    cfg.learning_rate = 2e-3;
    cfg.seed = 1;
    cfg.eval_every = 0;
    const NoiseSchedule schedule = build_schedule(kDefaultSteps);
    const TrainResult r = train(m.real, net, cfg, schedule);
    m.checkpoint = r.checkpoint;
    m.trained = true;

    const auto& l = r.epoch_losses;
    c.expect(static_cast<int>(l.size()) == kToyEpochs, "one loss per epoch");
    if (l.size() < 10) return;
    double first = 0, last = 0;
    for (int i = 0; i < 5; ++i) {
        first += l[i] / 5.0;
        last += l[l.size() - 5 + i] / 5.0;
    }
    c.expect(last < 0.5 * first, "final-5 mean loss " + std::to_string(last) + " < 0.5 x first-5 mean " +
                                     std::to_string(first));
    c.note("loss first-5 mean " + std::to_string(first) + ", last-5 mean " + std::to_string(last));

    const LabeledImageSet gen =
        sample_dataset(m.checkpoint.params, schedule, m.real.class_names, kToySamples, {kToyW, 0}, 2);
    Rng rng(3);
    LabeledImageSet noise = gen;
    for (auto& img : noise.images)
        for (double& v : img.values) v = (std::clamp(rng.normal(), -1.0, 1.0) + 1.0) / 2.0;
    const Pool8Extractor pool8;
    for (int cls = 0; cls < 2; ++cls) {
        const LabeledImageSet real_c = only_class(m.real, cls);
        const double fid_gen = evaluate_generation(real_c, only_class(gen, cls), pool8, 4).fid;
        const double fid_noise = evaluate_generation(real_c, only_class(noise, cls), pool8, 4).fid;
        const std::string name = m.real.class_names[cls];
        c.expect(fid_gen < fid_noise, name + ": FID(generated) " + std::to_string(fid_gen) + " < FID(noise) " +
                                          std::to_string(fid_noise));
        c.note(name + ": FID generated " + std::to_string(fid_gen) + ", noise " + std::to_string(fid_noise));
    }
}

// ---- 4. guidance behaviour ----

void guidance_behaviour(Checks& c) {
    ToyModel& m = toy_model();
    c.expect(m.trained, "toy model from criterion 3 is available");
    if (!m.trained) return;
    const NetworkParams& p = m.checkpoint.params;
    const NoiseSchedule& s = m.checkpoint.schedule;
    const int n = 4;

    // One image per forward pass matches the reference's batch shape bit for bit.
    const SampleOptions single{1, 1};
    const auto w0 = sample(p, s, 1, n, {0.0, 0}, 9, single);
    const auto w2 = sample(p, s, 1, n, {2.0, 0}, 9, single);
    const auto w0_batched = sample(p, s, 1, n, {0.0, 0}, 9);
    bool differs = false;
    for (int i = 0; i < n; ++i) differs |= to_file_range(w0[i]).values != to_file_range(w2[i]).values;
    c.expect(differs, "w=0 and w=2 give different images");

    // Conditional-only chain, one image at a time.
    const NoisePredictor net = network_predictor(p);
    bool identical = true;
    double batched_dev = 0.0;
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(9, static_cast<std::uint64_t>(i)));
        ImageTensor x(kToySize, kToySize);
        for (double& v : x.values) v = rng.normal();
        for (int t = s.steps; t >= 1; --t) {
            NetworkInput in;
            in.steps = s.steps;
            in.xt = {x};
            in.t = {t};
            in.mask.keep = {1};
            in.classes = OneHotBatch::from_labels(std::vector<int>{1}, p.config.n_classes);
            const ImageTensor eps = net(in)[0];
            ImageTensor z(kToySize, kToySize, 0.0);
            if (t > 1)
                for (double& v : z.values) v = rng.normal();
            x = reverse_step(x, t, eps, z, s);
        }
        for (double& v : x.values) v = std::clamp(v, -1.0, 1.0);
        identical &= x.values == w0[i].values;
        for (std::size_t k = 0; k < x.size(); ++k) batched_dev = std::max(batched_dev, std::abs(x.values[k] - w0_batched[i].values[k]));
    }
    c.expect(identical, "w=0 equals conditional-only sampling exactly");
    c.near(batched_dev, 0.0, 1e-9, "w=0 with batched forward passes, largest deviation");

    // With the unconditional branch forced onto the conditional one, guidance
    // is the identity.
    // Every row sees the class-1 context whatever its mask, so both branches agree
    // and guidance must be the identity.
    const NoisePredictor blind = [&](const NetworkInput& in) {
        NetworkInput cond = in;
        cond.classes = OneHotBatch::from_labels(std::vector<int>(in.xt.size(), 1), p.config.n_classes);
        std::fill(cond.mask.keep.begin(), cond.mask.keep.end(), 1);
        return net(cond);
    };
    const auto g0 = sample_with(blind, s, p.config.n_classes, kToySize, 1, n, {0.0, 0}, 9, single);
    const auto g2 = sample_with(blind, s, p.config.n_classes, kToySize, 1, n, {2.0, 0}, 9, single);
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
        identical &= g0[i].values == w0[i].values;
        for (std::size_t k = 0; k < g0[i].size(); ++k) worst = std::max(worst, std::abs(g0[i].values[k] - g2[i].values[k]));
    }
    c.expect(identical, "forced-equal branches at w=0 reproduce conditional-only sampling");
    c.near(worst, 0.0, 1e-9, "forced-equal branches make w=2 match w=0");
}

// ---- 5. text pipeline ----

LabeledTextSet deptweet_like() {
    static const char* seeds[4][3] = {
        {"great day at the beach with friends", "coffee and a good book this morning", "cant stop laughing at this"},
        {"kinda tired of everything lately", "meh day, nothing feels fun", "sleepy and unmotivated again"},
        {"feel empty most days now", "crying alone in my room again", "nothing i do matters"},
        {"i dont want to wake up anymore", "the pain never stops", "i keep thinking about ending it"},
    };
    LabeledTextSet s{{}, {}, {"0", "1", "2", "3"}};
    for (int c = 0; c < 4; ++c)
        for (const char* t : seeds[c]) s.push_back(t, c);
    return s;
}

struct TextRun {
    std::string csv;
    std::string log;
    GenerationStats stats;
    std::vector<std::size_t> counts;
};

TextRun text_run() {
    using mock::Reply;
    mock::MockEndpoint server({Reply::Valid, Reply::Malformed, Reply::Valid, Reply::WrongType, Reply::Prose,
                               Reply::DuplicateClass, Reply::Valid, Reply::CopyExemplar, Reply::EmptyText});
    server.start();
    EndpointConfig ec;
    ec.base_url = server.base_url();
    ec.backoff_ms = 0;
    HttpChatEndpoint client(ec);
    std::ostringstream log;
    GenerationConfig gc;
    gc.seed = 21;
    gc.rejection_log = &log;
    gc.clock = [] { return std::string("2024-01-01T00:00:00Z"); };
    const GenerationResult r = generate_dataset(deptweet_like(), 10, client, gc);
    return {format_text_dataset(r.set), log.str(), r.stats, r.set.class_counts()};
}

void text_pipeline(Checks& c) {
    c.expect(deptweet_legend().size() == 4 && deptweet_legend()[0] == "non-depressed", "four-level label legend");
    const TextRun a = text_run();
    const TextRun b = text_run();
    c.expect(a.counts == std::vector<std::size_t>{10, 10, 10, 10}, "10 samples per class");
    c.expect(a.stats.accepted * 4 == 40, "40 samples in total");
    c.expect(a.stats.rejected > 0, "scripted invalid responses were rejected");
    const long logged = std::count(a.log.begin(), a.log.end(), '\n');
    c.expect(logged == a.stats.rejected, "every rejection logged");
    c.expect(a.csv == b.csv && a.log == b.log, "byte-identical across two runs");
    c.note(std::to_string(a.stats.requests) + " requests, " + std::to_string(a.stats.rejected) + " rejected");
}

// ---- 6. harness protocol ----

LabeledTextSet corpus(const std::map<int, int>& counts, int offset) {
    static const char* words[3][4] = {{"good", "great", "fine", "nice"},
                                      {"bad", "awful", "poor", "sad"},
                                      {"odd", "weird", "strange", "curious"}};
    LabeledTextSet s{{}, {}, {"a", "b", "c"}};
    for (auto [c, n] : counts)
        for (int i = 0; i < n; ++i)
            s.push_back(std::string(words[c][i % 4]) + " " + words[c][(i / 4 + offset) % 4] + " item" + std::to_string(i + offset), c);
    return s;
}

void harness_protocol(Checks& c) {
    const LabeledTextSet orig = corpus({{0, 60}, {1, 25}, {2, 15}}, 0);
    const LabeledTextSet synth = corpus({{0, 20}, {1, 20}, {2, 20}}, 500);
    const LabeledTextSet test = corpus({{0, 10}, {1, 10}, {2, 10}}, 900);

    const LabeledTextSet comp = assemble_training_set(ExperimentKind::Composite, orig, synth, 1);
    c.expect(comp.size() == orig.size() + synth.size(), "Composite size is additive");

    BalanceReport rep;
    const LabeledTextSet bal = smote_balance(orig, corpus({{1, 50}, {2, 20}}, 700), 2, &rep);
    c.expect(bal.class_counts() == std::vector<std::size_t>{60, 60, 60}, "smote_balance equalizes to the majority");
    c.expect(rep.resampled[2] == 25 && rep.warnings.size() == 1, "small pool resampled with a warning");

    const auto folds = kfold_split(synth.targets, kSyntheticFolds, 3);
    std::vector<int> seen(synth.size(), 0);
    bool sizes = true;
    for (const auto& f : folds) {
        for (auto i : f.test) ++seen[i];
        sizes &= f.test.size() == 12 && f.train.size() == 48;
    }
    c.expect(folds.size() == 5 && sizes && std::all_of(seen.begin(), seen.end(), [](int n) { return n == 1; }),
             "5 folds partition the set exactly");

    const BaselineClassifier clf;
    const ReportRow syn = run_experiment(ExperimentKind::Synthetic, orig, test, synth, clf, 4, "uncensored");
    c.expect(syn.models == 5 && syn.folds.size() == 5 && syn.stddev.has_value(), "Synthetic reports mean +- std of 5 models");
    c.expect(render_text_table({syn}).find(" ± ") != std::string::npos, "table cell reads mean ± std");

    LabeledTextSet noisy = orig;
    for (std::size_t i = 0; i < noisy.size(); i += 7) noisy.targets[i] = (noisy.targets[i] + 1) % 3;
    const ReportRow dup = run_experiment(ExperimentKind::Composite, noisy, test, noisy, clf, 5);
    const std::vector<double> twice(noisy.size(), 2.0);
    const auto direct = classification_metrics(test.targets, clf.train(noisy, 5, twice)->predict(test.texts), 3);
    const double diff = std::max({std::abs(dup.mean.accuracy - direct.accuracy),
                                  std::abs(dup.mean.macro_precision - direct.macro_precision),
                                  std::abs(dup.mean.macro_recall - direct.macro_recall),
                                  std::abs(dup.mean.macro_f1 - direct.macro_f1)});
    c.near(diff, 0.0, 1e-9, "duplication equivalence, largest metric difference");
}

// ---- 7. report fidelity ----

void report_fidelity(Checks& c) {
    const std::vector<int> t{0, 0, 1, 1}, p{0, 1, 1, 1};
    const auto m = classification_metrics(t, p, 2);
    c.near(m.accuracy, 0.75, 1e-6, "accuracy");
    c.near(m.macro_precision, 5.0 / 6.0, 1e-6, "macro precision");
    c.near(m.macro_recall, 0.75, 1e-6, "macro recall");
    c.near(m.macro_f1, 0.7333, 1e-4, "macro F1 (4 d.p.)");
    c.near(m.macro_f1, 11.0 / 15.0, 1e-6, "macro F1");

    const std::string table_i = render_image_table(test::reference_table_i());
    const std::string table_ii = render_text_table(test::reference_table_ii());
    c.expect(table_i == test::read_file(test::source_dir() / "golden/table_i.txt"), "Table I layout matches golden");
    c.expect(table_ii == test::read_file(test::source_dir() / "golden/table_ii.txt"), "Table II layout matches golden");
    c.expect(table_i.find("Diffusion (Proposed) | 203.1043 | 0.2097 | 10.8449") != std::string::npos,
             "diffusion row values rendered verbatim");
    c.expect(table_i.rfind("Dataset", 0) == 0 && table_i.find("FID ↓ | SSIM ↑ |  PSNR ↑") != std::string::npos,
             "Table I header");
    c.expect(table_ii.find("Exp.") == 0 && table_ii.find("| Censored? | Model") != std::string::npos,
             "Table II header");
}

// ---- 8. determinism ----

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        const std::string rel = fs::relative(e.path(), root).generic_string();
        std::string content = test::read_file(e.path());
        if (rel == "config.ini") {
            // The run directory itself is the only key allowed to differ.
            std::istringstream in(content);
            std::string kept;
            for (std::string line; std::getline(in, line);)
                if (line.rfind("run-dir=", 0) != 0) kept += line + "\n";
            content = kept;
        }
        out[rel] = std::move(content);
    }
    return out;
}

// Runs a subcommand, then reruns it from nothing but the echoed config.
bool rerun_matches(Checks& c, const fs::path& base, const std::string& name, const std::vector<std::string>& args,
                   const std::function<void()>& between = {}) {
    const fs::path first = base / (name + "_1"), second = base / (name + "_2");
    std::vector<std::string> argv{"--run-dir", first.string(), "--log-level", "off"};
    argv.insert(argv.end(), args.begin(), args.end());
    const int rc1 = cli::run(argv);
    const std::string sub = args.front();
    if (between) between();
    const int rc2 = cli::run({"--config", (first / "config.ini").string(), "--run-dir", second.string(), sub});
    c.expect(rc1 == 0 && rc2 == 0, name + ": both runs succeed");
    if (rc1 != 0 || rc2 != 0) return false;
    const auto a = snapshot(first), b = snapshot(second);
    bool same = a.size() == b.size();
    for (const auto& [path, content] : a) {
        const auto it = b.find(path);
        const bool eq = it != b.end() && it->second == content;
        if (!eq) c.expect(false, name + ": " + path + " differs on rerun");
        same &= eq;
    }
    c.expect(a.size() == b.size(), name + ": same artifact list");
    c.note(name + ": " + std::to_string(a.size()) + " artifacts compared");
    return same;
}

void determinism(Checks& c) {
    ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
    test::TempDir dir;
    const fs::path base = dir.path();

    LabeledImageSet toy = make_toy_shapes(24, 16, 5);
    save_image_dataset(base / "images", toy);
    rerun_matches(c, base, "train-image",
                  {"train-image", "--data", (base / "images").string(), "--image-size", "16", "--base-channels", "4",
                   "--embed-dim", "8", "--steps", "30", "--epochs", "4", "--batch-size", "16", "--eval-every", "2",
                   "--eval-per-class", "8", "--checkpoint-every", "2", "--seed", "7"});
    const fs::path ckpt = base / "train-image_1" / "checkpoints" / "final.ckpt";
    rerun_matches(c, base, "sample",
                  {"sample", "--checkpoint", ckpt.string(), "--class", "1", "--count", "3", "--seed", "2", "--format", "png"});
    rerun_matches(c, base, "eval-image",
                  {"eval-image", "--real", (base / "images").string(), "--checkpoint", ckpt.string(), "--per-class", "8",
                   "--w", "0,2", "--dataset-name", "Toy"});

    write_text_dataset(base / "text_train.csv", deptweet_like());
    const auto script = mock::parse_script("valid,malformed,valid,wrong-type");
    auto server = std::make_unique<mock::MockEndpoint>(script);
    const int port = server->start();
    // The rerun talks to a fresh endpoint replaying the same script on the same port.
    const auto restart = [&] {
        server.reset();
        server = std::make_unique<mock::MockEndpoint>(script);
        server->start(port);
    };
    rerun_matches(c, base, "gen-text",
                  {"gen-text", "--train", (base / "text_train.csv").string(), "--endpoint", server->base_url(),
                   "--n-per-class", "3", "--backoff-ms", "0", "--seed", "8"},
                  restart);
    // The rejection log must carry the pinned clock, not wall time.
    c.expect(test::read_file(base / "gen-text_1" / "rejections.jsonl").find("2023-11-14T22:13:20Z") != std::string::npos,
             "gen-text: SOURCE_DATE_EPOCH timestamps");

    write_text_dataset(base / "t_train.csv", corpus({{0, 20}, {1, 12}, {2, 8}}, 0));
    write_text_dataset(base / "t_test.csv", corpus({{0, 6}, {1, 6}, {2, 6}}, 300));
    rerun_matches(c, base, "eval-text",
                  {"eval-text", "--train", (base / "t_train.csv").string(), "--test", (base / "t_test.csv").string(),
                   "--synth", "uncensored=" + (base / "gen-text_1" / "synthetic.csv").string(), "--synth",
                   "censored=" + (base / "t_train.csv").string(), "--experiments", "original,composite,synthetic,smote",
                   "--class-names", "0", "--class-names", "1", "--class-names", "2", "--iterations", "60"});
    rerun_matches(c, base, "report",
                  {"report", "--history", (base / "train-image_1" / "history.csv").string(), "--text-report",
                   (base / "eval-text_1" / "report.csv").string(), "--image-metrics",
                   (base / "eval-image_1" / "metrics.csv").string(), "--real", (base / "images").string(),
                   "--generated", (base / "eval-image_1" / "generated" / "w_2.0").string(), "--image-size", "16"});
    ::unsetenv("SOURCE_DATE_EPOCH");
}

} // namespace
} // namespace medsynth

int main() {
    using namespace medsynth;
    spdlog::set_level(spdlog::level::off);
    const std::vector<Criterion> criteria{
        {1, "math oracles", 10, math_oracles},
        {2, "gradient check", 60, gradient_check},
        {3, "smoke training on toy shapes", 600, smoke_training},
        {4, "classifier-free guidance behaviour", 120, guidance_behaviour},
        {5, "text pipeline against mock endpoint", 5, text_pipeline},
        {6, "harness protocol", 30, harness_protocol},
        {7, "metric report fidelity", 10, report_fidelity},
        {8, "determinism of every subcommand", 300, determinism},
    };
    int failed = 0;
    for (const auto& cr : criteria) {
        Checks checks;
        const auto start = std::chrono::steady_clock::now();
        try {
            cr.body(checks);
        } catch (const std::exception& e) {
            checks.expect(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        checks.expect(secs <= cr.budget_seconds, "runtime " + std::to_string(secs) + " s exceeds budget " +
                                                     std::to_string(cr.budget_seconds) + " s");
        const bool ok = checks.ok();
        failed += !ok;
        std::printf("[%s] criterion %d: %s (%d checks, %.1f s, budget %.0f s)\n", ok ? "PASS" : "FAIL", cr.id,
                    cr.title.c_str(), checks.total(), secs, cr.budget_seconds);
        for (const auto& n : checks.notes()) std::printf("       %s\n", n.c_str());
        for (const auto& f : checks.failures()) std::printf("       failed: %s\n", f.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
