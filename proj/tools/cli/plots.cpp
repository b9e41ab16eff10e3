#include "plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "medsynth/error.hpp"
#include "medsynth/image_metrics.hpp"

namespace medsynth::cli {
namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 400;
constexpr int kLeft = 70, kRight = 150, kTop = 40, kBottom = 60;
constexpr const char* kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

} // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    std::vector<const Series*> shown;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw ShapeError("series x and y lengths differ");
        bool any = false;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            any = true;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
        if (any) shown.push_back(&s);
    }
    if (shown.empty()) throw InvalidArgument("nothing to plot: no series has a finite point");
    if (x1 == x0) x0 -= 0.5, x1 += 0.5;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;

    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return kTop + ph - (y - y0) / (y1 - y0) * ph; };

    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kWidth) + "\" height=\"" +
                      std::to_string(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + num(kWidth / 2.0) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) +
           "</text>\n";
    // axes
    out += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(kLeft + pw) + "\" y2=\"" +
           num(kTop + ph) + "\" stroke=\"black\"/>\n";
    out += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" + num(kTop + ph) +
           "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
        out += "<line x1=\"" + num(px(xv)) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(px(xv)) + "\" y2=\"" +
               num(kTop + ph + 5) + "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + num(px(xv)) + "\" y=\"" + num(kTop + ph + 18) + "\" text-anchor=\"middle\">" +
               tick_label(xv) + "</text>\n";
        out += "<line x1=\"" + num(kLeft - 5) + "\" y1=\"" + num(py(yv)) + "\" x2=\"" + num(kLeft) + "\" y2=\"" +
               num(py(yv)) + "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(py(yv) + 4) + "\" text-anchor=\"end\">" + tick_label(yv) +
               "</text>\n";
    }
    out += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 15.0) + "\" text-anchor=\"middle\">" +
           escape(x_label) + "</text>\n";
    out += "<text x=\"18\" y=\"" + num(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
           num(kTop + ph / 2) + ")\">" + escape(y_label) + "</text>\n";

    for (std::size_t k = 0; k < shown.size(); ++k) {
        const Series& s = *shown[k];
        const std::string colour = kColours[k % std::size(kColours)];
        std::string points;
        auto flush = [&] {
            if (!points.empty())
                out += "<polyline fill=\"none\" stroke=\"" + colour + "\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
            points.clear();
        };
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
                flush();
                continue;
            }
            if (!points.empty()) points += ' ';
            points += num(px(s.x[i])) + "," + num(py(s.y[i]));
            out += "<circle cx=\"" + num(px(s.x[i])) + "\" cy=\"" + num(py(s.y[i])) + "\" r=\"2.5\" fill=\"" + colour +
                   "\"/>\n";
        }
        flush();
        const double ly = kTop + 10 + 20.0 * static_cast<double>(k);
        out += "<line x1=\"" + num(kLeft + pw + 15) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(kLeft + pw + 40) +
               "\" y2=\"" + num(ly) + "\" stroke=\"" + colour + "\" stroke-width=\"2\"/>\n";
        out += "<text x=\"" + num(kLeft + pw + 46) + "\" y=\"" + num(ly + 4) + "\">" + escape(s.name) + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

std::string history_curves_svg(const TrainingHistory& history) {
    if (history.empty()) throw InvalidArgument("training history is empty");
    const NormalizedCurves c = normalize_curves(history);
    std::vector<double> x(c.epochs.begin(), c.epochs.end());
    return line_chart_svg("Normalized evaluation scores", "Epoch", "Normalized score",
                          {{"FID", x, c.fid}, {"SSIM", x, c.ssim}, {"PSNR", x, c.psnr}});
}

std::string image_grid_svg(const std::vector<GridRow>& rows, int pixel) {
    if (rows.empty()) throw InvalidArgument("image grid has no rows");
    if (pixel < 1) throw InvalidArgument("pixel size must be positive");
    int cell_h = 0, cell_w = 0;
    std::size_t cols = 0;
    for (const auto& r : rows) {
        cols = std::max(cols, r.images.size());
        for (const auto& img : r.images) {
            cell_h = std::max(cell_h, img.height);
            cell_w = std::max(cell_w, img.width);
        }
    }
    if (cols == 0) throw InvalidArgument("image grid has no images");
    constexpr int kLabel = 120, kGap = 4;
    const int width = kLabel + static_cast<int>(cols) * (cell_w * pixel + kGap);
    const int height = static_cast<int>(rows.size()) * (cell_h * pixel + kGap) + kGap;
    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
                      std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"12\" shape-rendering=\"crispEdges\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const int top = kGap + static_cast<int>(r) * (cell_h * pixel + kGap);
        out += "<text x=\"4\" y=\"" + std::to_string(top + cell_h * pixel / 2 + 4) + "\">" + escape(rows[r].label) +
               "</text>\n";
        for (std::size_t c = 0; c < rows[r].images.size(); ++c) {
            const ImageTensor& img = rows[r].images[c];
            const int left = kLabel + static_cast<int>(c) * (cell_w * pixel + kGap);
            out += "<g transform=\"translate(" + std::to_string(left) + "," + std::to_string(top) + ")\">\n";
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x) {
                    const int v = static_cast<int>(std::lround(std::clamp(img.at(y, x), 0.0, 1.0) * 255.0));
                    char fill[8];
                    std::snprintf(fill, sizeof fill, "#%02x%02x%02x", v, v, v);
                    out += "<rect x=\"" + std::to_string(x * pixel) + "\" y=\"" + std::to_string(y * pixel) +
                           "\" width=\"" + std::to_string(pixel) + "\" height=\"" + std::to_string(pixel) +
                           "\" fill=\"" + fill + "\"/>\n";
                }
            out += "</g>\n";
        }
    }
    out += "</svg>\n";
    return out;
}

} // namespace medsynth::cli
