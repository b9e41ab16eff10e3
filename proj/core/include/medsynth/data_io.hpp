#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "medsynth/image.hpp"

namespace medsynth {

// Images in [0, 1] with class indices into class_names.
struct LabeledImageSet {
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    std::vector<std::string> class_names;

    std::size_t size() const noexcept { return images.size(); }
    bool empty() const noexcept { return images.empty(); }
    void validate() const;
    std::vector<std::size_t> class_counts() const;
};

struct LabeledTextSet {
    std::vector<std::string> texts;
    std::vector<int> targets;
    std::vector<std::string> class_names;

    std::size_t size() const noexcept { return texts.size(); }
    bool empty() const noexcept { return texts.empty(); }
    void validate() const;
    std::vector<std::size_t> class_counts() const;
    void push_back(std::string text, int target) {
        texts.push_back(std::move(text));
        targets.push_back(target);
    }

    friend bool operator==(const LabeledTextSet&, const LabeledTextSet&) = default;
};

// ---- images -------------------------------------------------------------

// BT.601 luma of 8-bit RGB, scaled to [0, 1].
double luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b);

// Bilinear resampling with half-pixel centres (edge samples clamped).
ImageTensor resize_bilinear(const ImageTensor& image, int height, int width);

// PNG (8-bit gray or color; alpha ignored) or PGM (P2/P5), as grayscale [0, 1].
ImageTensor read_image(const std::filesystem::path& path);
ImageTensor read_pgm(const std::filesystem::path& path);
ImageTensor read_png(const std::filesystem::path& path);

// 8-bit writers; values are clamped to [0, 1] and rounded to 1/255 steps.
void write_pgm(const std::filesystem::path& path, const ImageTensor& image);
void write_png(const std::filesystem::path& path, const ImageTensor& image);

struct ImageLoadReport {
    std::size_t loaded = 0;
    std::size_t skipped = 0;
    std::vector<std::string> warnings;
};

// One subdirectory per class, classes ordered by directory name, files by
// path. Images are converted to grayscale and resized to target_size^2.
LabeledImageSet load_image_dataset(const std::filesystem::path& root, int target_size,
                                   ImageLoadReport* report = nullptr);

// Writes <root>/<class name>/<index>.pgm for each image.
void save_image_dataset(const std::filesystem::path& root, const LabeledImageSet& set);

// Two procedural classes: 0 = filled disks, 1 = plus-shaped crosses, each
// with random centre jitter and size.
LabeledImageSet make_toy_shapes(int per_class, int size, std::uint64_t seed);

// ---- text ---------------------------------------------------------------

struct TextColumns {
    std::string text = "text";
    std::string target = "target";
};

struct TextLoadOptions {
    TextColumns columns;
    // When empty, the class count is inferred as max(target) + 1.
    std::vector<std::string> class_names;
};

struct TextLoadReport {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::vector<std::string> reasons;
};

// RFC-4180 style: comma separated, double-quote quoting with "" escapes,
// quoted fields may hold commas and line breaks.
std::vector<std::vector<std::string>> parse_csv(std::string_view content);
std::string csv_field(std::string_view value);

LabeledTextSet parse_text_dataset(std::string_view content, const TextLoadOptions& options = {},
                                  TextLoadReport* report = nullptr);
LabeledTextSet load_text_dataset(const std::filesystem::path& path, const TextLoadOptions& options = {},
                                 TextLoadReport* report = nullptr);
std::string format_text_dataset(const LabeledTextSet& set, const TextColumns& columns = {});
void write_text_dataset(const std::filesystem::path& path, const LabeledTextSet& set,
                        const TextColumns& columns = {});

std::string trim(std::string_view s);

// ---- splits -------------------------------------------------------------

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Disjoint, exhaustive split. Stratified mode rounds each class's test share
// separately; both index lists come back in ascending order.
SplitIndices split_indices(std::span<const int> labels, double test_fraction, std::uint64_t seed, bool stratified);

LabeledImageSet subset(const LabeledImageSet& set, std::span<const std::size_t> indices);
LabeledTextSet subset(const LabeledTextSet& set, std::span<const std::size_t> indices);

template <typename Set>
std::pair<Set, Set> split(const Set& set, double test_fraction, std::uint64_t seed, bool stratified) {
    const auto& labels = [&]() -> const std::vector<int>& {
        if constexpr (requires { set.targets; })
            return set.targets;
        else
            return set.labels;
    }();
    SplitIndices idx = split_indices(labels, test_fraction, seed, stratified);
    return {subset(set, idx.train), subset(set, idx.test)};
}

} // namespace medsynth
