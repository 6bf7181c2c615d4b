#pragma once

#include <filesystem>

#include "ppl/detector.hpp"

namespace ppl {

// Checkpoint file layout:
//   line 1: JSON header {format_version, config, tensors:[{name, shape}]}
//   u64 LE payload byte length
//   payload: float32 LE tensor data, concatenated in header order
//   u64 LE FNV-1a checksum of the payload bytes
// Round trips are bit-exact.
void save_checkpoint(const DetectorParams& params,
                     const std::filesystem::path& path);
DetectorParams load_checkpoint(const std::filesystem::path& path);

}  // namespace ppl
