#include "medsynth/data_io.hpp"

#include <png.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "medsynth/error.hpp"
#include "medsynth/rng.hpp"

namespace medsynth {
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + path.string());
}

std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

// Next whitespace-separated PNM header token, skipping comments.
std::string pnm_token(const std::string& data, std::size_t& pos) {
    while (pos < data.size()) {
        if (data[pos] == '#') {
            while (pos < data.size() && data[pos] != '\n') ++pos;
        } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
            ++pos;
        } else {
            break;
        }
    }
    std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    return data.substr(start, pos - start);
}

int pnm_int(const std::string& data, std::size_t& pos, int lo, int hi) {
    std::string tok = pnm_token(data, pos);
    int v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size() || v < lo || v > hi) throw DataError("malformed PGM data");
    return v;
}

bool parse_int(std::string_view s, int& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size();
}

} // namespace

// ---- set invariants ------------------------------------------------------

void LabeledImageSet::validate() const {
    if (images.size() != labels.size()) throw DataError("image and label counts differ");
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= static_cast<int>(class_names.size()))
            throw DataError("image label out of range");
        if (!images[i].same_shape(images.front())) throw DataError("images must share one size");
    }
}

std::vector<std::size_t> LabeledImageSet::class_counts() const {
    std::vector<std::size_t> counts(class_names.size(), 0);
    for (int l : labels) ++counts.at(static_cast<std::size_t>(l));
    return counts;
}

void LabeledTextSet::validate() const {
    if (texts.size() != targets.size()) throw DataError("text and target counts differ");
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (targets[i] < 0 || targets[i] >= static_cast<int>(class_names.size()))
            throw DataError("text target out of range");
        if (trim(texts[i]).empty()) throw DataError("empty text");
    }
}

std::vector<std::size_t> LabeledTextSet::class_counts() const {
    std::vector<std::size_t> counts(class_names.size(), 0);
    for (int t : targets) ++counts.at(static_cast<std::size_t>(t));
    return counts;
}

// ---- images -------------------------------------------------------------

double luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    return (0.299 * r + 0.587 * g + 0.114 * b) / 255.0;
}

ImageTensor resize_bilinear(const ImageTensor& image, int height, int width) {
    if (height < 1 || width < 1) throw InvalidArgument("resize target must be positive");
    if (image.height < 1 || image.width < 1) throw InvalidArgument("cannot resize an empty image");
    if (image.height == height && image.width == width) return image;
    ImageTensor out(height, width);
    const double sy = static_cast<double>(image.height) / height;
    const double sx = static_cast<double>(image.width) / width;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, image.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, image.width - 1);
            const double wx = fx - x0;
            const double top = image.at(y0, x0) * (1.0 - wx) + image.at(y0, x1) * wx;
            const double bottom = image.at(y1, x0) * (1.0 - wx) + image.at(y1, x1) * wx;
            out.at(y, x) = top * (1.0 - wy) + bottom * wy;
        }
    }
    return out;
}

ImageTensor read_pgm(const fs::path& path) {
    const std::string data = read_file(path);
    std::size_t pos = 0;
    const std::string magic = pnm_token(data, pos);
    if (magic != "P5" && magic != "P2") throw DataError(path.string() + ": not a PGM file");
    const int width = pnm_int(data, pos, 1, 1 << 15);
    const int height = pnm_int(data, pos, 1, 1 << 15);
    const int maxval = pnm_int(data, pos, 1, 65535);
    ImageTensor img(height, width);
    const std::size_t n = img.size();
    if (magic == "P2") {
        for (std::size_t i = 0; i < n; ++i) {
            const int v = pnm_int(data, pos, 0, maxval);
            img.values[i] = static_cast<double>(v) / maxval;
        }
        return img;
    }
    ++pos;  // single whitespace after maxval
    const std::size_t bytes_per = maxval < 256 ? 1 : 2;
    if (data.size() < pos + n * bytes_per) throw DataError(path.string() + ": truncated PGM data");
    for (std::size_t i = 0; i < n; ++i) {
        unsigned v = static_cast<unsigned char>(data[pos + i * bytes_per]);
        if (bytes_per == 2) v = (v << 8) | static_cast<unsigned char>(data[pos + i * 2 + 1]);
        img.values[i] = static_cast<double>(v) / maxval;
    }
    return img;
}

ImageTensor read_png(const fs::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    const std::string p = path.string();
    if (!png_image_begin_read_from_file(&png, p.c_str()))
        throw DataError(p + ": " + png.message);
    const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
    png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
        std::string msg = png.message;
        png_image_free(&png);
        throw DataError(p + ": " + msg);
    }
    ImageTensor img(static_cast<int>(png.height), static_cast<int>(png.width));
    for (std::size_t i = 0; i < img.size(); ++i) {
        img.values[i] = color ? luminance(buffer[3 * i], buffer[3 * i + 1], buffer[3 * i + 2])
                              : static_cast<double>(buffer[i]) / 255.0;
    }
    return img;
}

ImageTensor read_image(const fs::path& path) {
    const std::string ext = lower(path.extension().string());
    if (ext == ".png") return read_png(path);
    if (ext == ".pgm") return read_pgm(path);
    throw DataError(path.string() + ": unsupported image format");
}

void write_pgm(const fs::path& path, const ImageTensor& image) {
    std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    out.reserve(out.size() + image.size());
    for (double v : image.values) out.push_back(static_cast<char>(quantize(v)));
    write_file(path, out);
}

void write_png(const fs::path& path, const ImageTensor& image) {
    std::vector<std::uint8_t> buffer(image.size());
    std::transform(image.values.begin(), image.values.end(), buffer.begin(), quantize);
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_GRAY;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const std::string p = path.string();
    if (!png_image_write_to_file(&png, p.c_str(), 0, buffer.data(), 0, nullptr))
        throw Error(p + ": " + png.message);
}

LabeledImageSet load_image_dataset(const fs::path& root, int target_size, ImageLoadReport* report) {
    if (target_size < 1) throw InvalidArgument("target size must be positive");
    if (!fs::is_directory(root)) throw DataError(root.string() + " is not a directory");
    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) class_dirs.push_back(entry.path());
    std::sort(class_dirs.begin(), class_dirs.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    if (class_dirs.empty()) throw DataError(root.string() + " has no class directories");

    ImageLoadReport local;
    ImageLoadReport& rep = report != nullptr ? *report : local;
    LabeledImageSet set;
    for (std::size_t c = 0; c < class_dirs.size(); ++c) {
        set.class_names.push_back(class_dirs[c].filename().string());
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(class_dirs[c]))
            if (entry.is_regular_file()) files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        std::size_t loaded = 0;
        for (const auto& file : files) {
            try {
                ImageTensor img = read_image(file);
                set.images.push_back(resize_bilinear(img, target_size, target_size));
                set.labels.push_back(static_cast<int>(c));
                ++loaded;
            } catch (const DataError& e) {
                ++rep.skipped;
                rep.warnings.push_back(e.what());
                spdlog::warn("skipping {}", e.what());
            }
        }
        if (loaded == 0) throw DataError("class directory " + class_dirs[c].string() + " holds no readable images");
        rep.loaded += loaded;
    }
    return set;
}

void save_image_dataset(const fs::path& root, const LabeledImageSet& set) {
    set.validate();
    std::vector<std::size_t> next(set.class_names.size(), 0);
    for (std::size_t i = 0; i < set.size(); ++i) {
        const int c = set.labels[i];
        char name[32];
        std::snprintf(name, sizeof name, "%05zu.pgm", next[c]++);
        write_pgm(root / set.class_names[c] / name, set.images[i]);
    }
}

LabeledImageSet make_toy_shapes(int per_class, int size, std::uint64_t seed) {
    if (per_class < 0 || size < 8) throw InvalidArgument("toy shapes need per_class >= 0 and size >= 8");
    LabeledImageSet set;
    set.class_names = {"disk", "cross"};
    Rng rng(seed);
    const double s = size;
    for (int cls = 0; cls < 2; ++cls) {
        for (int i = 0; i < per_class; ++i) {
            const double cx = s / 2 + (rng.uniform() - 0.5) * s * 0.25;
            const double cy = s / 2 + (rng.uniform() - 0.5) * s * 0.25;
            const double r = s * (0.22 + 0.1 * rng.uniform());
            const double arm = std::max(1.0, s * 0.07);
            ImageTensor img(size, size);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                    bool on = false;
                    if (cls == 0)
                        on = dx * dx + dy * dy <= r * r;
                    else
                        on = (std::abs(dx) <= arm && std::abs(dy) <= r) || (std::abs(dy) <= arm && std::abs(dx) <= r);
                    img.at(y, x) = on ? 1.0 : 0.0;
                }
            set.images.push_back(std::move(img));
            set.labels.push_back(cls);
        }
    }
    return set;
}

// ---- text ---------------------------------------------------------------

std::string trim(std::string_view s) {
    const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::vector<std::string>> parse_csv(std::string_view content) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t i = 0;
    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(std::move(row));
        row.clear();
    };
    while (i < content.size()) {
        const char c = content[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    field.push_back('"');
                    i += 2;
                    continue;
                }
                in_quotes = false;
            } else {
                field.push_back(c);
            }
            ++i;
            continue;
        }
        if (c == '"' && !field_started) {
            in_quotes = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\n' || c == '\r') {
            end_row();
            if (c == '\r' && i + 1 < content.size() && content[i + 1] == '\n') ++i;
        } else {
            field.push_back(c);
            field_started = true;
        }
        ++i;
    }
    if (in_quotes) throw DataError("unterminated quoted CSV field");
    if (field_started || !field.empty() || !row.empty()) end_row();
    return rows;
}

std::string csv_field(std::string_view value) {
    const bool quote = value.find_first_of(",\"\r\n") != std::string_view::npos ||
                       (!value.empty() && (std::isspace(static_cast<unsigned char>(value.front())) ||
                                           std::isspace(static_cast<unsigned char>(value.back()))));
    if (!quote) return std::string(value);
    std::string out = "\"";
    for (char c : value) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

LabeledTextSet parse_text_dataset(std::string_view content, const TextLoadOptions& options, TextLoadReport* report) {
    TextLoadReport local;
    TextLoadReport& rep = report != nullptr ? *report : local;
    auto rows = parse_csv(content);
    if (rows.empty()) throw DataError("text dataset has no header row");
    const auto& header = rows.front();
    const auto find_col = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError("text dataset lacks column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t text_col = find_col(options.columns.text);
    const std::size_t target_col = find_col(options.columns.target);

    struct Row {
        std::string text;
        int target;
    };
    std::vector<Row> parsed;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() == 1 && row[0].empty()) continue;  // blank line
        const auto reject = [&](const std::string& why) {
            ++rep.rejected;
            rep.reasons.push_back("row " + std::to_string(r) + ": " + why);
        };
        if (row.size() <= std::max(text_col, target_col)) {
            reject("too few fields");
            continue;
        }
        std::string text = trim(row[text_col]);
        if (text.empty()) {
            reject("empty text");
            continue;
        }
        int target = 0;
        if (!parse_int(trim(row[target_col]), target) || target < 0) {
            reject("target is not a non-negative integer");
            continue;
        }
        parsed.push_back({std::move(text), target});
    }

    LabeledTextSet set;
    set.class_names = options.class_names;
    if (set.class_names.empty()) {
        int max_target = -1;
        for (const auto& row : parsed) max_target = std::max(max_target, row.target);
        for (int k = 0; k <= max_target; ++k) set.class_names.push_back(std::to_string(k));
    }
    for (auto& row : parsed) {
        if (row.target >= static_cast<int>(set.class_names.size())) {
            ++rep.rejected;
            rep.reasons.push_back("target " + std::to_string(row.target) + " out of range");
            continue;
        }
        set.push_back(std::move(row.text), row.target);
        ++rep.accepted;
    }
    return set;
}

LabeledTextSet load_text_dataset(const fs::path& path, const TextLoadOptions& options, TextLoadReport* report) {
    TextLoadReport local;
    TextLoadReport& rep = report != nullptr ? *report : local;
    LabeledTextSet set = parse_text_dataset(read_file(path), options, &rep);
    if (rep.rejected > 0) spdlog::warn("{}: rejected {} rows", path.string(), rep.rejected);
    return set;
}

std::string format_text_dataset(const LabeledTextSet& set, const TextColumns& columns) {
    std::string out = csv_field(columns.text) + "," + csv_field(columns.target) + "\n";
    for (std::size_t i = 0; i < set.size(); ++i)
        out += csv_field(set.texts[i]) + "," + std::to_string(set.targets[i]) + "\n";
    return out;
}

void write_text_dataset(const fs::path& path, const LabeledTextSet& set, const TextColumns& columns) {
    write_file(path, format_text_dataset(set, columns));
}

// ---- splits -------------------------------------------------------------

SplitIndices split_indices(std::span<const int> labels, double test_fraction, std::uint64_t seed, bool stratified) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InvalidArgument("test_fraction must lie in (0, 1)");
    Rng rng(seed);
    SplitIndices out;
    std::map<int, std::vector<std::size_t>> groups;
    if (stratified) {
        for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
        for (const auto& [label, members] : groups)
            if (members.size() < 2)
                throw InvalidArgument("class " + std::to_string(label) + " has fewer than 2 items for a stratified split");
    } else {
        auto& all = groups[0];
        for (std::size_t i = 0; i < labels.size(); ++i) all.push_back(i);
    }
    for (auto& [label, members] : groups) {
        rng.shuffle(std::span<std::size_t>(members));
        const auto n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(members.size())));
        out.test.insert(out.test.end(), members.begin(), members.begin() + static_cast<long>(n_test));
        out.train.insert(out.train.end(), members.begin() + static_cast<long>(n_test), members.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

LabeledImageSet subset(const LabeledImageSet& set, std::span<const std::size_t> indices) {
    LabeledImageSet out;
    out.class_names = set.class_names;
    for (std::size_t i : indices) {
        out.images.push_back(set.images.at(i));
        out.labels.push_back(set.labels.at(i));
    }
    return out;
}

LabeledTextSet subset(const LabeledTextSet& set, std::span<const std::size_t> indices) {
    LabeledTextSet out;
    out.class_names = set.class_names;
    for (std::size_t i : indices) out.push_back(set.texts.at(i), set.targets.at(i));
    return out;
}

} // namespace medsynth
