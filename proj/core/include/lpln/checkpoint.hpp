#pragma once

// Single-file checkpoint. Layout, all integers little-endian:
//   "LPLN" | u32 version | u64 config hash | u32 segment count
//   per segment: name | manifest entries (name, shape, u64 byte offset into
//   the segment's data blob) | u64 blob size | f64 parameter values
// Only parameter values persist; optimizer state starts fresh after a load.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lpln/params.hpp"

namespace lpln::agentloop {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    std::uint32_t version = 0;
    std::uint64_t config_hash = 0;
};

void save_checkpoint(const std::string& path, std::uint64_t config_hash,
                     const std::vector<std::pair<std::string, const diffmath::ParameterSet*>>&
                         segments);

// Targets must already have the exact parameter names and shapes (they come
// from the same config); mismatches throw and leave the sets untouched.
CheckpointMeta load_checkpoint(
    const std::string& path,
    const std::vector<std::pair<std::string, diffmath::ParameterSet*>>& segments);

CheckpointMeta read_checkpoint_meta(const std::string& path);

}  // namespace lpln::agentloop
