#include "medsynth/table.hpp"

#include <algorithm>

#include "medsynth/error.hpp"

namespace medsynth {

std::size_t display_width(const std::string& utf8) {
    return static_cast<std::size_t>(
        std::count_if(utf8.begin(), utf8.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

std::string render_table(const std::vector<std::string>& headers, const std::vector<Align>& align,
                         const std::vector<std::vector<std::string>>& rows) {
    if (align.size() != headers.size()) throw InvalidArgument("render_table: one alignment per column");
    std::vector<std::size_t> width(headers.size());
    for (std::size_t c = 0; c < headers.size(); ++c) width[c] = display_width(headers[c]);
    for (const auto& row : rows) {
        if (row.size() != headers.size()) throw InvalidArgument("render_table: ragged row");
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], display_width(row[c]));
    }
    auto line = [&](const std::vector<std::string>& cells) {
        std::string out;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const std::string pad(width[c] - display_width(cells[c]), ' ');
            if (c > 0) out += " | ";
            out += align[c] == Align::Left ? cells[c] + pad : pad + cells[c];
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        return out + "\n";
    };
    std::string out = line(headers);
    for (std::size_t c = 0; c < headers.size(); ++c) {
        if (c > 0) out += "-|-";
        out += std::string(width[c], '-');
    }
    out += "\n";
    for (const auto& row : rows) out += line(row);
    return out;
}

} // namespace medsynth
