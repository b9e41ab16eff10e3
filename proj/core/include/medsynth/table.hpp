#pragma once

#include <string>
#include <vector>

namespace medsynth {

enum class Align { Left, Right };

// Pipe-delimited text table. Column widths count UTF-8 code points, so
// headers such as "FID ↓" line up.
std::string render_table(const std::vector<std::string>& headers, const std::vector<Align>& align,
                         const std::vector<std::vector<std::string>>& rows);

std::size_t display_width(const std::string& utf8);

} // namespace medsynth
