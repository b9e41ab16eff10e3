#include "medsynth/history.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "medsynth/error.hpp"

namespace medsynth {
namespace {

double parse_number(const std::string& s) {
    if (s == "inf" || s == "identical") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw DataError("bad number in history: " + s);
    return v;
}

} // namespace

std::string format_number(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, p);
}

std::string history_csv_header() { return "epoch,loss,fid,ssim,psnr"; }

std::string history_csv_row(const HistoryRecord& r) {
    return std::to_string(r.epoch) + "," + format_number(r.loss) + "," + format_number(r.fid) + "," +
           format_number(r.ssim) + "," + format_number(r.psnr);
}

std::string format_history_csv(const TrainingHistory& history) {
    std::string out = history_csv_header() + "\n";
    for (const auto& r : history.records) out += history_csv_row(r) + "\n";
    return out;
}

TrainingHistory parse_history_csv(std::string_view content) {
    std::istringstream in{std::string(content)};
    std::string line;
    if (!std::getline(in, line) || line != history_csv_header()) throw DataError("history file lacks the expected header");
    TrainingHistory history;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream row(line);
        for (std::string f; std::getline(row, f, ',');) fields.push_back(f);
        if (fields.size() != 5) throw DataError("history row needs 5 fields: " + line);
        HistoryRecord r;
        r.epoch = static_cast<int>(parse_number(fields[0]));
        r.loss = parse_number(fields[1]);
        r.fid = parse_number(fields[2]);
        r.ssim = parse_number(fields[3]);
        r.psnr = parse_number(fields[4]);
        if (!history.records.empty() && r.epoch <= history.records.back().epoch)
            throw DataError("history epochs must increase");
        history.records.push_back(r);
    }
    return history;
}

} // namespace medsynth
