#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "medsynth/context_unet.hpp"
#include "medsynth/schedule.hpp"

namespace medsynth {

// Portable checkpoint container.
//
//   magic      8 bytes  "MSYNCKPT"
//   version    u32      1
//   meta_len   u32      length of the metadata block
//   metadata   UTF-8    "key=value\n" lines (network config, schedule, extras)
//   count      u32      number of tensors
//   per tensor:
//     name_len u32, name bytes
//     kind     u32      0 parameter, 1 buffer, 2 optimizer state
//     rank     u32, dims u32[rank]
//     values   f32[prod(dims)]
// All integers and floats are little-endian.
struct Checkpoint {
    NetworkParams params;
    NoiseSchedule schedule;
    std::map<std::string, std::string> metadata;  // extra keys, e.g. training state
    std::vector<NamedTensor> optimizer;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace medsynth
