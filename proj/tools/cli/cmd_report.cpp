#include <cmath>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "medsynth/data_io.hpp"
#include "medsynth/error.hpp"
#include "medsynth/eval_harness.hpp"
#include "medsynth/history.hpp"
#include "medsynth/image_metrics.hpp"
#include "plots.hpp"

namespace medsynth::cli {
namespace {

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double parse_double(const std::string& s) {
    if (s == "inf") return INFINITY;
    if (s == "nan") return NAN;
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw DataError("bad number '" + s + "'");
    return v;
}

// Rows of eval-image metrics.csv files.
std::vector<ImageTableRow> read_image_rows(const std::filesystem::path& path) {
    const auto table = parse_csv(slurp(path));
    if (table.empty() || table[0].size() != 7 || table[0][0] != "dataset")
        throw DataError(path.string() + " is not an eval-image metrics file");
    std::vector<ImageTableRow> rows;
    for (std::size_t i = 1; i < table.size(); ++i) {
        const auto& f = table[i];
        if (f.size() == 1 && f[0].empty()) continue;
        if (f.size() != 7) throw DataError(path.string() + ": row " + std::to_string(i) + " has the wrong width");
        try {
            ImageTableRow r{f[0], f[1], {}};
            r.metrics.fid = parse_double(f[3]);
            r.metrics.ssim = parse_double(f[4]);
            r.metrics.psnr = parse_double(f[5]);
            r.metrics.pairs = static_cast<std::size_t>(std::stoul(f[6]));
            rows.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw DataError(path.string() + ": malformed row " + std::to_string(i));
        }
    }
    return rows;
}

} // namespace

int run_report(const Common& common, const ReportOptions& o) {
    if (o.history.empty() && o.text_report.empty() && o.image_metrics.empty() && o.generated.empty())
        throw UsageError("nothing to report: give --history, --text-report, --image-metrics or --generated");
    if (o.generated.empty() != o.real.empty()) throw UsageError("--real and --generated go together");
    if (o.grid_rows < 1 || o.grid_columns < 1) throw UsageError("grid dimensions must be positive");
    if (o.image_size < 1) throw UsageError("--image-size must be positive");
    std::vector<std::filesystem::path> inputs = o.image_metrics;
    for (const auto& p : {o.history, o.text_report, o.real, o.generated})
        if (!p.empty()) inputs.push_back(p);
    for (const auto& p : inputs)
        if (!std::filesystem::exists(p)) throw UsageError("input not found: " + p.string());

    open_run_dir(common);
    if (!o.history.empty()) {
        const TrainingHistory history = parse_history_csv(slurp(o.history));
        write_artifact(common, "curves.svg", history_curves_svg(history));
    }
    if (!o.text_report.empty()) {
        auto rows = parse_report_csv(slurp(o.text_report));
        sort_report(rows);
        write_artifact(common, "table_ii.txt", render_text_table(rows));
    }
    if (!o.image_metrics.empty()) {
        std::vector<ImageTableRow> rows;
        for (const auto& p : o.image_metrics) {
            auto part = read_image_rows(p);
            rows.insert(rows.end(), part.begin(), part.end());
        }
        write_artifact(common, "table_i.txt", render_image_table(rows));
    }
    if (!o.generated.empty()) {
        const LabeledImageSet real = load_image_dataset(o.real, o.image_size);
        const LabeledImageSet gen = load_image_dataset(o.generated, o.image_size);
        std::vector<GridRow> grid;
        const int per_set = o.grid_rows * o.grid_columns;
        for (std::size_t c = 0; c < gen.class_names.size(); ++c) {
            for (const auto* set : {&gen, &real}) {
                const std::string tag = set == &gen ? " synthetic" : " real";
                int taken = 0;
                GridRow row{gen.class_names[c] + tag, {}};
                for (std::size_t i = 0; i < set->size() && taken < per_set; ++i) {
                    if (set->class_names[static_cast<std::size_t>(set->labels[i])] != gen.class_names[c]) continue;
                    row.images.push_back(set->images[i]);
                    ++taken;
                    if (static_cast<int>(row.images.size()) == o.grid_columns) {
                        grid.push_back(std::move(row));
                        row = GridRow{gen.class_names[c] + tag, {}};
                    }
                }
                if (!row.images.empty()) grid.push_back(std::move(row));
            }
        }
        write_artifact(common, "grid.svg", image_grid_svg(grid));
    }
    return kExitOk;
}

} // namespace medsynth::cli
