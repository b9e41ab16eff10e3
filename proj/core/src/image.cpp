#include "medsynth/image.hpp"

#include <algorithm>
#include <cmath>

namespace medsynth {

bool ImageTensor::all_finite() const noexcept {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

ImageTensor to_model_range(const ImageTensor& image) {
    ImageTensor out(image.height, image.width);
    std::transform(image.values.begin(), image.values.end(), out.values.begin(),
                   [](double v) { return 2.0 * v - 1.0; });
    return out;
}

ImageTensor to_file_range(const ImageTensor& image) {
    ImageTensor out(image.height, image.width);
    std::transform(image.values.begin(), image.values.end(), out.values.begin(),
                   [](double v) { return (v + 1.0) * 0.5; });
    return out;
}

} // namespace medsynth
