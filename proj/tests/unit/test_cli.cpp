#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include <gtest/gtest.h>

#include "cli.hpp"
#include "commands.hpp"
#include "medsynth/data_io.hpp"
#include "medsynth/error.hpp"
#include "medsynth/eval_harness.hpp"
#include "mock_endpoint.hpp"
#include "plots.hpp"
#include "support.hpp"

namespace medsynth {
namespace {

namespace fs = std::filesystem;
using test::TempDir;

int run_binary(const std::string& args) {
    const std::string cmd = std::string(MEDSYNTH_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<fs::path> files_under(const fs::path& root) {
    std::vector<fs::path> out;
    if (!fs::exists(root)) return out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
    std::sort(out.begin(), out.end());
    return out;
}

// Three classes of 16x16 shapes on disk.
fs::path write_image_data(const fs::path& root) {
    LabeledImageSet toy = make_toy_shapes(6, 16, 2);
    LabeledImageSet inv = make_toy_shapes(6, 16, 3);
    toy.class_names = {"a_disk", "b_cross", "c_ring"};
    for (std::size_t i = 0; i < inv.size(); ++i)
        if (inv.labels[i] == 0) {
            for (double& v : inv.images[i].values) v = 1.0 - v;
            toy.images.push_back(inv.images[i]);
            toy.labels.push_back(2);
        }
    save_image_dataset(root, toy);
    return root;
}

fs::path train_tiny(const TempDir& dir) {
    const fs::path data = write_image_data(dir / "data");
    const int rc = cli::run({"--run-dir", (dir / "train").string(), "--log-level", "off", "train-image", "--data",
                             data.string(), "--image-size", "16", "--base-channels", "4", "--embed-dim", "8", "--steps",
                             "20", "--epochs", "2", "--batch-size", "8", "--eval-every", "0", "--seed", "3"});
    EXPECT_EQ(rc, 0);
    const fs::path ckpt = dir / "train" / "checkpoints" / "final.ckpt";
    EXPECT_TRUE(fs::exists(ckpt)) << "contents: " << files_under(dir / "train").size();
    return ckpt;
}

TEST(Usage, MissingRequiredFlagWritesNothing) {
    TempDir dir;
    EXPECT_EQ(run_binary("--run-dir " + (dir / "run").string() + " sample --class 1 --count 2"), cli::kExitUsage);
    EXPECT_FALSE(fs::exists(dir / "run"));
    EXPECT_EQ(run_binary("sample --checkpoint x --class 1 --count 2"), cli::kExitUsage);
    EXPECT_EQ(run_binary("--run-dir " + (dir / "run").string() + " frobnicate"), cli::kExitUsage);
    EXPECT_EQ(run_binary("--run-dir " + (dir / "run").string() + " sample --checkpoint x --class 1 --count 2 --bogus"),
              cli::kExitUsage);
    EXPECT_FALSE(fs::exists(dir / "run"));
}

TEST(Usage, HelpExitsZero) {
    EXPECT_EQ(run_binary("--help"), cli::kExitOk);
    EXPECT_EQ(run_binary("sample --help"), cli::kExitOk);
}

TEST(Usage, SemanticErrorsAreUsageErrors) {
    TempDir dir;
    const fs::path run = dir / "run";
    EXPECT_EQ(cli::run({"--run-dir", run.string(), "sample", "--checkpoint", (dir / "none.ckpt").string(), "--class",
                        "0", "--count", "1"}),
              cli::kExitUsage);
    EXPECT_EQ(cli::run({"--run-dir", run.string(), "eval-text", "--data", (dir / "none.csv").string()}), cli::kExitUsage);
    EXPECT_EQ(cli::run({"--run-dir", run.string(), "report"}), cli::kExitUsage);
    EXPECT_EQ(cli::run({"--run-dir", run.string(), "--threads", "0", "report"}), cli::kExitUsage);
    EXPECT_FALSE(fs::exists(run));
}

TEST(Usage, RuntimeFailureExitsOne) {
    TempDir dir;
    test::write_file(dir / "bad.ckpt", "not a checkpoint");
    EXPECT_EQ(cli::run({"--run-dir", (dir / "run").string(), "--log-level", "off", "sample", "--checkpoint",
                        (dir / "bad.ckpt").string(), "--class", "0", "--count", "1"}),
              cli::kExitRuntime);
}

TEST(Sample, FourDeterministicPgms) {
    TempDir dir;
    const fs::path ckpt = train_tiny(dir);
    auto sample_into = [&](const std::string& name, const std::string& seed) {
        return cli::run({"--run-dir", (dir / name).string(), "--log-level", "off", "sample", "--checkpoint",
                         ckpt.string(), "--class", "2", "--count", "4", "--w", "2.0", "--seed", seed});
    };
    ASSERT_EQ(sample_into("s1", "7"), 0);
    ASSERT_EQ(sample_into("s2", "7"), 0);
    ASSERT_EQ(sample_into("s3", "8"), 0);
    std::vector<fs::path> pgms;
    for (const auto& f : files_under(dir / "s1"))
        if (f.extension() == ".pgm") pgms.push_back(f);
    ASSERT_EQ(pgms.size(), 4u);
    EXPECT_EQ(pgms[0], fs::path("samples/class2_0000.pgm"));
    bool any_differs = false;
    for (const auto& f : pgms) {
        EXPECT_EQ(test::read_file(dir / "s1" / f), test::read_file(dir / "s2" / f));
        any_differs |= test::read_file(dir / "s1" / f) != test::read_file(dir / "s3" / f);
        const ImageTensor img = read_pgm(dir / "s1" / f);
        EXPECT_EQ(img.height, 16);
    }
    EXPECT_TRUE(any_differs);
    EXPECT_EQ(cli::run({"--run-dir", (dir / "s4").string(), "sample", "--checkpoint", ckpt.string(), "--class", "3",
                        "--count", "1"}),
              cli::kExitUsage);
}

TEST(Config, EchoedConfigReproducesRun) {
    TempDir dir;
    const fs::path ckpt = train_tiny(dir);
    test::write_file(dir / "base.ini", "log-level=off\n[sample]\ncheckpoint=" + ckpt.string() +
                                           "\nclass=1\ncount=2\nseed=5\nw=1.5\n");
    // Flags win over the file.
    ASSERT_EQ(cli::run({"--config", (dir / "base.ini").string(), "--run-dir", (dir / "r1").string(), "sample", "--seed",
                        "9"}),
              0);
    const std::string echoed = test::read_file(dir / "r1" / "config.ini");
    EXPECT_NE(echoed.find("sample.seed=9"), std::string::npos) << echoed;
    EXPECT_NE(echoed.find("sample.w=1.5"), std::string::npos) << echoed;
    EXPECT_EQ(echoed.find("train-image."), std::string::npos) << echoed;

    ASSERT_EQ(cli::run({"--config", (dir / "r1" / "config.ini").string(), "--run-dir", (dir / "r2").string(), "sample"}), 0);
    const auto files = files_under(dir / "r1");
    ASSERT_EQ(files, files_under(dir / "r2"));
    for (const auto& f : files) {
        if (f != "config.ini") {
            EXPECT_EQ(test::read_file(dir / "r1" / f), test::read_file(dir / "r2" / f)) << f;
        }
    }
}

TEST(Config, TrainingEchoIncludesSeeds) {
    TempDir dir;
    train_tiny(dir);
    const std::string echoed = test::read_file(dir / "train" / "config.ini");
    for (const char* key : {"train-image.seed=3", "train-image.eval-seed=", "train-image.steps=20"})
        EXPECT_NE(echoed.find(key), std::string::npos) << key << "\n" << echoed;
    for (const char* f : {"history.csv", "losses.csv", "loss.svg"}) EXPECT_TRUE(fs::exists(dir / "train" / f)) << f;
}

TEST(Config, EmptyListOptionsAreNotEchoed) {
    TempDir dir;
    write_text_dataset(dir / "train.csv", LabeledTextSet{{"a", "b"}, {0, 1}, {"0", "1"}});
    // The endpoint is unreachable; the echo is written before any request.
    EXPECT_EQ(cli::run({"--run-dir", (dir / "r1").string(), "--log-level", "off", "gen-text", "--train",
                        (dir / "train.csv").string(), "--endpoint", "http://127.0.0.1:9", "--retries", "0"}),
              cli::kExitRuntime);
    const std::string echoed = test::read_file(dir / "r1" / "config.ini");
    for (const char* key : {"gen-text.field=", "gen-text.legend=", "gen-text.class-names="})
        EXPECT_EQ(echoed.find(key), std::string::npos) << key << "\n" << echoed;
    EXPECT_NE(echoed.find("gen-text.text-field=\"tweet\""), std::string::npos) << echoed;
}

LabeledTextSet text_corpus(int per_class, int offset) {
    static const char* words[4][4] = {{"sunny", "friends", "coffee", "laughing"},
                                      {"tired", "meh", "bored", "sleepy"},
                                      {"empty", "alone", "crying", "numb"},
                                      {"dark", "pain", "trapped", "goodbye"}};
    LabeledTextSet s{{}, {}, {"0", "1", "2", "3"}};
    for (int c = 0; c < 4; ++c)
        for (int i = 0; i < per_class; ++i)
            s.push_back(std::string(words[c][i % 4]) + " " + words[c][(i + offset) % 4] + " day " + std::to_string(i + offset), c);
    return s;
}

TEST(EvalText, AllFourSections) {
    TempDir dir;
    write_text_dataset(dir / "train.csv", text_corpus(12, 0));
    write_text_dataset(dir / "test.csv", text_corpus(5, 100));
    write_text_dataset(dir / "synth.csv", text_corpus(10, 50));
    ASSERT_EQ(cli::run({"--run-dir", (dir / "run").string(), "--log-level", "off", "eval-text", "--train",
                        (dir / "train.csv").string(), "--test", (dir / "test.csv").string(), "--synth",
                        "uncensored=" + (dir / "synth.csv").string(), "--experiments",
                        "original,composite,synthetic,smote", "--iterations", "50"}),
              0);
    const auto rows = parse_report_csv(test::read_file(dir / "run" / "report.csv"));
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].kind, ExperimentKind::Original);
    EXPECT_EQ(rows[1].kind, ExperimentKind::Composite);
    EXPECT_EQ(rows[2].kind, ExperimentKind::Synthetic);
    EXPECT_EQ(rows[2].models, 5);
    EXPECT_EQ(rows[3].kind, ExperimentKind::Smote);
    const std::string table = test::read_file(dir / "run" / "table.txt");
    for (const char* s : {"Original", "Composite", "Synthetic", "SMOTE", "±", "×"})
        EXPECT_NE(table.find(s), std::string::npos) << s;

    EXPECT_EQ(cli::run({"--run-dir", (dir / "rep").string(), "report", "--text-report",
                        (dir / "run" / "report.csv").string()}),
              0);
    EXPECT_EQ(test::read_file(dir / "rep" / "table_ii.txt"), table);
}

TEST(GenText, BalancedSetFromMockEndpoint) {
    TempDir dir;
    write_text_dataset(dir / "train.csv", text_corpus(4, 0));
    mock::MockEndpoint server(mock::parse_script("valid,malformed"));
    server.start();
    ASSERT_EQ(cli::run({"--run-dir", (dir / "run").string(), "--log-level", "off", "gen-text", "--train",
                        (dir / "train.csv").string(), "--endpoint", server.base_url(), "--n-per-class", "3",
                        "--backoff-ms", "0", "--seed", "4"}),
              0);
    const LabeledTextSet synth = load_text_dataset(dir / "run" / "synthetic.csv");
    EXPECT_EQ(synth.class_counts(), (std::vector<std::size_t>{3, 3, 3, 3}));
    EXPECT_EQ(test::read_file(dir / "run" / "stats.txt"),
              "requests=5\naccepted=3\nrejected=2\nduplicates=0\ndiscarded=0\n");
    std::ifstream log(dir / "run" / "rejections.jsonl");
    int lines = 0;
    for (std::string line; std::getline(log, line);) ++lines;
    EXPECT_EQ(lines, 2);
}

TEST(Report, GridAndCurves) {
    TempDir dir;
    LabeledImageSet real = make_toy_shapes(20, 16, 1), gen = make_toy_shapes(20, 16, 2);
    save_image_dataset(dir / "real", real);
    save_image_dataset(dir / "gen", gen);
    test::write_file(dir / "history.csv", "epoch,loss,fid,ssim,psnr\n50,0.5,300,0.1,9\n100,0.4,200,0.3,11\n");
    const std::vector<std::string> args{"--run-dir", (dir / "run").string(), "report", "--history",
                                        (dir / "history.csv").string(), "--real", (dir / "real").string(),
                                        "--generated", (dir / "gen").string(), "--image-size", "16",
                                        "--grid-rows", "2", "--grid-columns", "8"};
    ASSERT_EQ(cli::run(args), 0);
    const std::string grid = test::read_file(dir / "run" / "grid.svg");
    // Per class: two synthetic rows, then two real rows.
    std::vector<std::size_t> at;
    for (const char* label : {">cross synthetic<", ">cross real<", ">disk synthetic<", ">disk real<"}) {
        std::size_t pos = 0, n = 0;
        while ((pos = grid.find(label, pos)) != std::string::npos) ++n, ++pos;
        EXPECT_EQ(n, 2u) << label;
        at.push_back(grid.find(label));
    }
    EXPECT_TRUE(std::is_sorted(at.begin(), at.end()));
    const std::string curves = test::read_file(dir / "run" / "curves.svg");
    ASSERT_EQ(cli::run({"--run-dir", (dir / "run2").string(), "report", "--history", (dir / "history.csv").string()}), 0);
    EXPECT_EQ(test::read_file(dir / "run2" / "curves.svg"), curves);
}

TEST(Plots, LineChartContract) {
    const std::vector<cli::Series> one{{"fid", {1, 2, 3}, {5, 4, 6}}};
    const std::string svg = cli::line_chart_svg("FID", "Epoch", "Score", one);
    std::size_t polylines = 0;
    for (std::size_t p = 0; (p = svg.find("<polyline", p)) != std::string::npos; ++p) ++polylines;
    EXPECT_EQ(polylines, 1u);
    EXPECT_NE(svg.find(">Epoch<"), std::string::npos);
    EXPECT_NE(svg.find(">Score<"), std::string::npos);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_EQ(cli::line_chart_svg("FID", "Epoch", "Score", one), svg);
    EXPECT_THROW(cli::line_chart_svg("x", "x", "y", {}), InvalidArgument);
    EXPECT_THROW(cli::history_curves_svg(TrainingHistory{}), InvalidArgument);
    EXPECT_THROW(cli::image_grid_svg({}), InvalidArgument);
}

TEST(RunDir, ArtifactsStayInside) {
    const cli::Common common{"/tmp/medsynth-run", 1, ""};
    EXPECT_EQ(cli::artifact_path(common, "samples/a.pgm"), fs::path("/tmp/medsynth-run/samples/a.pgm"));
    EXPECT_THROW(cli::artifact_path(common, "../escape.txt"), std::logic_error);
    EXPECT_THROW(cli::artifact_path(common, "a/../../escape.txt"), std::logic_error);
    EXPECT_THROW(cli::artifact_path(common, "/etc/passwd"), std::logic_error);
}

TEST(RunDir, NothingWrittenOutside) {
    TempDir dir;
    write_text_dataset(dir / "in" / "train.csv", text_corpus(6, 0));
    write_text_dataset(dir / "in" / "test.csv", text_corpus(3, 100));
    const auto before = files_under(dir.path());
    ASSERT_EQ(cli::run({"--run-dir", (dir / "run").string(), "--log-level", "off", "eval-text", "--train",
                        (dir / "in" / "train.csv").string(), "--test", (dir / "in" / "test.csv").string(),
                        "--experiments", "original", "--iterations", "10"}),
              0);
    std::vector<fs::path> outside;
    for (const auto& f : files_under(dir.path()))
        if (*f.begin() != "run") outside.push_back(f);
    EXPECT_EQ(outside, before);
}

} // namespace
} // namespace medsynth
