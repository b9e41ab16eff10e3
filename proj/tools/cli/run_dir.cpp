#include <algorithm>
#include <cstdio>
#include <fstream>

#include "commands.hpp"

namespace medsynth::cli {

std::filesystem::path artifact_path(const Common& common, const std::filesystem::path& relative) {
    if (relative.is_absolute()) throw std::logic_error("artifact paths are relative to the run directory");
    const auto full = (common.run_dir / relative).lexically_normal();
    const auto root = common.run_dir.lexically_normal();
    auto [r, f] = std::mismatch(root.begin(), root.end(), full.begin(), full.end());
    if (r != root.end() && !r->empty()) throw std::logic_error("artifact escapes the run directory: " + relative.string());
    return full;
}

void write_artifact(const Common& common, const std::filesystem::path& relative, const std::string& content) {
    const auto path = artifact_path(common, relative);
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

void open_run_dir(const Common& common) {
    std::filesystem::create_directories(common.run_dir);
    write_artifact(common, "config.ini", common.effective_config);
}

std::string fixed(double value, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
    return buf;
}

} // namespace medsynth::cli
