#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace medsynth {

// One evaluation point during training. Metrics are NaN when no evaluation
// hook ran.
struct HistoryRecord {
    int epoch = 0;
    double loss = 0.0;
    double fid = 0.0;
    double ssim = 0.0;
    double psnr = 0.0;
};

struct TrainingHistory {
    std::vector<HistoryRecord> records;

    bool empty() const noexcept { return records.empty(); }
    std::size_t size() const noexcept { return records.size(); }
};

// "epoch,loss,fid,ssim,psnr" header plus one row per record.
std::string history_csv_header();
std::string history_csv_row(const HistoryRecord& record);
std::string format_history_csv(const TrainingHistory& history);
TrainingHistory parse_history_csv(std::string_view content);

// Shortest round-trip decimal form; "inf", "-inf" and "nan" for specials.
std::string format_number(double value);

} // namespace medsynth
