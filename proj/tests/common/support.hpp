#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "medsynth/image.hpp"
#include "medsynth/rng.hpp"

namespace medsynth::test {

inline std::filesystem::path source_dir() { return MEDSYNTH_TEST_SOURCE_DIR; }

inline nlohmann::json frozen(const std::string& name) {
    std::ifstream in(source_dir() / "oracles" / "frozen" / (name + ".json"));
    if (!in) throw std::runtime_error("missing frozen oracle " + name);
    return nlohmann::json::parse(in);
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << content;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("medsynth_test_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

// Compares against tests/golden/<name>. With MEDSYNTH_UPDATE_GOLDEN=1 the file
// is rewritten instead, for review before committing.
inline ::testing::AssertionResult matches_golden(const std::string& name, const std::string& content) {
    const auto path = source_dir() / "golden" / name;
    if (const char* up = std::getenv("MEDSYNTH_UPDATE_GOLDEN"); up != nullptr && std::string(up) == "1") {
        write_file(path, content);
        return ::testing::AssertionSuccess();
    }
    if (!std::filesystem::exists(path)) return ::testing::AssertionFailure() << "missing golden file " << path;
    const std::string want = read_file(path);
    if (want == content) return ::testing::AssertionSuccess();
    return ::testing::AssertionFailure() << "differs from " << path << "\n--- expected\n" << want << "--- actual\n" << content;
}

inline ImageTensor random_image(int h, int w, Rng& rng, double lo = -1.0, double hi = 1.0) {
    ImageTensor img(h, w);
    for (double& v : img.values) v = lo + (hi - lo) * rng.uniform();
    return img;
}

inline ImageTensor normal_image(int h, int w, Rng& rng) {
    ImageTensor img(h, w);
    for (double& v : img.values) v = rng.normal();
    return img;
}

} // namespace medsynth::test
