#include <algorithm>
#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "medsynth/data_io.hpp"
#include "medsynth/error.hpp"
#include "support.hpp"

namespace medsynth {
namespace {

using test::TempDir;

double max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) worst = std::max(worst, std::abs(a.values[i] - b.values[i]));
    return worst;
}

ImageTensor quantized(ImageTensor img) {
    for (double& v : img.values) v = std::round(v * 255.0) / 255.0;
    return img;
}

TEST(Luminance, Bt601Weights) {
    EXPECT_NEAR(luminance(255, 0, 0), 0.299, 1e-12);
    EXPECT_NEAR(luminance(0, 255, 0), 0.587, 1e-12);
    EXPECT_NEAR(luminance(0, 0, 255), 0.114, 1e-12);
    EXPECT_NEAR(luminance(255, 255, 255), 1.0, 1e-12);
}

TEST(Luminance, RgbPngMatchesIndependentConversion) {
    const auto o = test::frozen("luminance");
    const ImageTensor img = read_png(test::source_dir() / "oracles/frozen/rgb_5x3.png");
    ASSERT_EQ(img.height, 3);
    ASSERT_EQ(img.width, 5);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 5; ++x) {
            const auto& px = o["rgb"][y][x];
            EXPECT_NEAR(img.at(y, x), o["gray"][y][x].get<double>(), 1e-6);
            EXPECT_NEAR(luminance(px[0], px[1], px[2]), o["gray"][y][x].get<double>(), 1e-6);
        }
}

TEST(Resize, MatchesIndependentBilinear) {
    const auto o = test::frozen("bilinear");
    ImageTensor src(64, 64);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) src.at(y, x) = o["source"][y][x].get<int>() / 255.0;
    TempDir dir;
    write_png(dir / "board.png", src);
    const ImageTensor loaded = read_image(dir / "board.png");
    EXPECT_EQ(max_abs_diff(loaded, src), 0.0);
    const ImageTensor small = resize_bilinear(loaded, 32, 32);
    double worst = 0.0;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) worst = std::max(worst, std::abs(small.at(y, x) - o["expected"][y][x].get<double>()));
    EXPECT_LE(worst, 1.0 / 255.0);
}

TEST(Resize, SameSizeIsIdentityAndBadSizesThrow) {
    Rng rng(1);
    const ImageTensor img = test::random_image(9, 7, rng, 0, 1);
    EXPECT_EQ(max_abs_diff(resize_bilinear(img, 9, 7), img), 0.0);
    const ImageTensor flat(5, 5, 0.3);
    for (double v : resize_bilinear(flat, 11, 3).values) EXPECT_NEAR(v, 0.3, 1e-15);
    EXPECT_THROW(resize_bilinear(img, 0, 4), InvalidArgument);
}

TEST(ImageFiles, GrayscaleRoundTripWithinQuantization) {
    Rng rng(2);
    const ImageTensor img = test::random_image(32, 32, rng, 0, 1);
    TempDir dir;
    write_png(dir / "a.png", img);
    write_pgm(dir / "a.pgm", img);
    EXPECT_LE(max_abs_diff(read_image(dir / "a.png"), img), 0.5 / 255.0 + 1e-12);
    EXPECT_LE(max_abs_diff(read_image(dir / "a.pgm"), img), 0.5 / 255.0 + 1e-12);
    EXPECT_EQ(max_abs_diff(read_image(dir / "a.png"), read_image(dir / "a.pgm")), 0.0);
}

TEST(ImageFiles, ClampsOutOfRangeValues) {
    ImageTensor img(2, 2);
    img.values = {-0.5, 0.0, 1.0, 1.7};
    TempDir dir;
    write_pgm(dir / "c.pgm", img);
    EXPECT_EQ(read_pgm(dir / "c.pgm").values, (std::vector<double>{0, 0, 1, 1}));
}

TEST(ImageFiles, AsciiAndWidePgm) {
    TempDir dir;
    test::write_file(dir / "p2.pgm", "P2\n# comment\n3 1\n10\n0 5 10\n");
    EXPECT_EQ(read_pgm(dir / "p2.pgm").values, (std::vector<double>{0, 0.5, 1}));
    test::write_file(dir / "wide.pgm", std::string("P5 2 1 65535\n") + std::string("\xff\xff\x00\x00", 4));
    EXPECT_EQ(read_pgm(dir / "wide.pgm").values, (std::vector<double>{1, 0}));
    test::write_file(dir / "short.pgm", "P5 4 4 255\nab");
    EXPECT_THROW(read_pgm(dir / "short.pgm"), DataError);
    test::write_file(dir / "junk.png", "not an image");
    EXPECT_THROW(read_image(dir / "junk.png"), DataError);
}

TEST(ImageDataset, LexicographicClassesAndSkippedFiles) {
    TempDir dir;
    const ImageTensor img(40, 40, 0.25);
    write_png(dir / "b" / "1.png", img);
    write_pgm(dir / "a" / "x.pgm", img);
    write_pgm(dir / "a" / "y.pgm", img);
    test::write_file(dir / "b" / "broken.png", "garbage");
    ImageLoadReport report;
    const LabeledImageSet set = load_image_dataset(dir.path(), 32, &report);
    EXPECT_EQ(set.class_names, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(set.labels, (std::vector<int>{0, 0, 1}));
    EXPECT_EQ(report.loaded, 3u);
    EXPECT_EQ(report.skipped, 1u);
    for (const auto& im : set.images) {
        EXPECT_EQ(im.height, 32);
        EXPECT_NEAR(im.values[0], 0.25, 1.0 / 255.0);
    }
}

TEST(ImageDataset, EmptyClassDirectoryIsAnError) {
    TempDir dir;
    write_pgm(dir / "a" / "x.pgm", ImageTensor(8, 8, 0.5));
    std::filesystem::create_directories(dir / "b");
    EXPECT_THROW(load_image_dataset(dir.path(), 8), DataError);
    EXPECT_THROW(load_image_dataset(dir / "missing", 8), DataError);
}

TEST(ImageDataset, GrayscaleInputUnchangedUpToQuantization) {
    Rng rng(5);
    TempDir dir;
    const ImageTensor img = test::random_image(32, 32, rng, 0, 1);
    write_png(dir / "only" / "0.png", img);
    const LabeledImageSet set = load_image_dataset(dir.path(), 32);
    EXPECT_LE(max_abs_diff(set.images[0], img), 1.0 / 255.0);
}

TEST(ImageDataset, LoadSaveLoadIsIdempotent) {
    TempDir dir;
    LabeledImageSet toy = make_toy_shapes(3, 16, 4);
    for (auto& im : toy.images) im = quantized(im);
    save_image_dataset(dir / "one", toy);
    const LabeledImageSet first = load_image_dataset(dir / "one", 16);
    save_image_dataset(dir / "two", first);
    const LabeledImageSet second = load_image_dataset(dir / "two", 16);
    ASSERT_EQ(first.size(), second.size());
    EXPECT_EQ(first.class_names, second.class_names);
    EXPECT_EQ(first.labels, second.labels);
    for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(first.images[i].values, second.images[i].values);
}

TEST(ToyShapes, ShapeAndDeterminism) {
    const LabeledImageSet a = make_toy_shapes(5, 16, 3), b = make_toy_shapes(5, 16, 3);
    EXPECT_NO_THROW(a.validate());
    EXPECT_EQ(a.class_counts(), (std::vector<std::size_t>{5, 5}));
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.images[i].values, b.images[i].values);
        for (double v : a.images[i].values) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
    EXPECT_NE(make_toy_shapes(5, 16, 4).images[0].values, a.images[0].values);
}

TEST(Csv, QuotedFieldsRoundTrip) {
    LabeledTextSet set{{}, {}, {"0", "1"}};
    set.push_back("plain", 0);
    set.push_back("has, commas", 1);
    set.push_back("line one\nline two", 0);
    set.push_back("she said \"hi\"", 1);
    set.push_back("crlf\r\nand, \"all\" of it", 0);
    const std::string written = format_text_dataset(set);
    const LabeledTextSet back = parse_text_dataset(written, {{}, {"0", "1"}});
    EXPECT_EQ(back, set);
    EXPECT_EQ(format_text_dataset(back), written);

    TempDir dir;
    write_text_dataset(dir / "t.csv", set);
    EXPECT_EQ(load_text_dataset(dir / "t.csv", {{}, {"0", "1"}}), set);
}

TEST(Csv, Parser) {
    const auto rows = parse_csv("a,b\n\"x,1\",\"\"\"q\"\"\"\n,\n");
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[1], (std::vector<std::string>{"x,1", "\"q\""}));
    EXPECT_EQ(rows[2], (std::vector<std::string>{"", ""}));
    EXPECT_THROW(parse_csv("a\n\"open"), DataError);
    EXPECT_EQ(csv_field("simple"), "simple");
    EXPECT_EQ(csv_field("a\"b"), "\"a\"\"b\"");
}

TEST(TextDataset, EmptyDataSectionIsEmptySet) {
    const LabeledTextSet set = parse_text_dataset("text,target\n");
    EXPECT_TRUE(set.empty());
    EXPECT_THROW(parse_text_dataset(""), DataError);
}

TEST(TextDataset, TargetRangeBoundary) {
    TextLoadReport report;
    const LabeledTextSet set =
        parse_text_dataset("text,target\nok,3\nbad,4\n", {{}, {"a", "b", "c", "d"}}, &report);
    ASSERT_EQ(set.size(), 1u);
    EXPECT_EQ(set.targets[0], 3);
    EXPECT_EQ(report.accepted, 1u);
    EXPECT_EQ(report.rejected, 1u);
}

TEST(TextDataset, RejectsMalformedRowsAndMissingColumns) {
    TextLoadReport report;
    const LabeledTextSet set = parse_text_dataset("id,text,target\n1,  ,0\n2,fine,x\n3,good,1\n4\n", {}, &report);
    EXPECT_EQ(set.texts, (std::vector<std::string>{"good"}));
    EXPECT_EQ(set.class_names.size(), 2u);
    EXPECT_EQ(report.rejected, 3u);
    EXPECT_THROW(parse_text_dataset("body,target\nx,0\n"), DataError);
    EXPECT_THROW(parse_text_dataset("text,label\nx,0\n"), DataError);
    const LabeledTextSet custom = parse_text_dataset("body,label\nx,1\n", {{"body", "label"}, {}});
    EXPECT_EQ(custom.targets, (std::vector<int>{1}));
}

TEST(Split, SizesAndMultisetUnion) {
    std::vector<int> labels(100);
    for (int i = 0; i < 100; ++i) labels[i] = i % 3;
    const SplitIndices s = split_indices(labels, 0.2, 9, false);
    EXPECT_EQ(s.train.size(), 80u);
    EXPECT_EQ(s.test.size(), 20u);
    std::vector<std::size_t> all = s.train;
    all.insert(all.end(), s.test.begin(), s.test.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
    EXPECT_TRUE(std::is_sorted(s.train.begin(), s.train.end()));
}

TEST(Split, StratifiedPerClassRounding) {
    std::vector<int> labels;
    for (int c = 0; c < 3; ++c) labels.insert(labels.end(), c == 0 ? 60 : 20, c);
    const SplitIndices s = split_indices(labels, 0.25, 4, true);
    std::map<int, int> test_counts;
    for (auto i : s.test) ++test_counts[labels[i]];
    EXPECT_EQ(test_counts[0], 15);
    EXPECT_EQ(test_counts[1], 5);
    EXPECT_EQ(test_counts[2], 5);
}

TEST(Split, StratifiedProportionsWithinOneItem) {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> labels;
        std::map<int, int> totals;
        for (int c = 0; c < 4; ++c) {
            const int n = 2 + static_cast<int>(rng.uniform() * 40);
            labels.insert(labels.end(), n, c);
            totals[c] = n;
        }
        const double f = 0.1 + 0.8 * rng.uniform();
        const SplitIndices s = split_indices(labels, f, trial, true);
        std::map<int, int> test_counts;
        for (auto i : s.test) ++test_counts[labels[i]];
        for (auto [c, n] : totals) {
            EXPECT_LE(std::abs(test_counts[c] - f * n), 1.0);
            EXPECT_GE(test_counts[c], 1);
            EXPECT_LT(test_counts[c], n);
        }
    }
}

TEST(Split, DeterministicPerSeed) {
    const LabeledTextSet set = [] {
        LabeledTextSet s{{}, {}, {"a", "b"}};
        for (int i = 0; i < 30; ++i) s.push_back("t" + std::to_string(i), i % 2);
        return s;
    }();
    const auto [tr1, te1] = split(set, 0.3, 5, true);
    const auto [tr2, te2] = split(set, 0.3, 5, true);
    EXPECT_EQ(tr1, tr2);
    EXPECT_EQ(te1, te2);
    const auto [tr3, te3] = split(set, 0.3, 6, true);
    EXPECT_NE(te1, te3);
}

TEST(Split, BadArguments) {
    const std::vector<int> labels{0, 0, 1};
    EXPECT_THROW(split_indices(labels, 0.0, 1, false), InvalidArgument);
    EXPECT_THROW(split_indices(labels, 1.0, 1, false), InvalidArgument);
    EXPECT_THROW(split_indices(labels, 0.5, 1, true), InvalidArgument);
    EXPECT_NO_THROW(split_indices(labels, 0.5, 1, false));
}

} // namespace
} // namespace medsynth
