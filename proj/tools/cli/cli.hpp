#pragma once

#include <string>
#include <vector>

namespace medsynth::cli {

// Parses arguments (without the program name) and runs the chosen command.
// Returns the process exit code.
int run(const std::vector<std::string>& args);

} // namespace medsynth::cli
