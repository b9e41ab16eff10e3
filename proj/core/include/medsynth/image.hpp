#pragma once

#include <cstddef>
#include <vector>

namespace medsynth {

// Single-channel image, row-major. Files and metrics use [0, 1]; the
// diffusion model works in [-1, 1] (see to_model_range / to_file_range).
struct ImageTensor {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    ImageTensor() = default;
    ImageTensor(int h, int w, double fill = 0.0)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}
    ImageTensor(int h, int w, std::vector<double> v) : height(h), width(w), values(std::move(v)) {}

    std::size_t size() const noexcept { return values.size(); }
    double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }

    bool same_shape(const ImageTensor& other) const noexcept {
        return height == other.height && width == other.width;
    }
    bool all_finite() const noexcept;

    friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

// [0, 1] -> [-1, 1]
ImageTensor to_model_range(const ImageTensor& image);
// [-1, 1] -> [0, 1]
ImageTensor to_file_range(const ImageTensor& image);

} // namespace medsynth
