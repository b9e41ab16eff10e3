#pragma once

#include <string>
#include <vector>

#include "medsynth/history.hpp"
#include "medsynth/image.hpp"

namespace medsynth::cli {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;  // non-finite points break the line
};

// Line chart with axes, ticks, labels and a legend. Series with no finite
// point are left out.
std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series);

// Min-max normalized FID, SSIM and PSNR against epoch.
std::string history_curves_svg(const TrainingHistory& history);

struct GridRow {
    std::string label;
    std::vector<ImageTensor> images;  // [0, 1]
};

// Montage of grayscale images, one rect per pixel.
std::string image_grid_svg(const std::vector<GridRow>& rows, int pixel = 3);

} // namespace medsynth::cli
