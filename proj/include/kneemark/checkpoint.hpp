#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kneemark/model.hpp"

namespace kneemark {

inline constexpr int kCheckpointFormatVersion = 1;

// A checkpoint is a directory holding manifest.json (format version, model
// config and the ordered parameter table with shapes and byte offsets) and
// params.bin (little-endian IEEE-754 binary32 values in manifest order).
void save_checkpoint(const HourglassModel<float>& model, const std::filesystem::path& dir);

// Throws CheckpointError; kind() tells a bad manifest, a version mismatch, a
// truncated blob, and parameter names or shapes that disagree with the
// architecture described by the stored config.
HourglassModel<float> load_checkpoint(const std::filesystem::path& dir);

ModelConfig read_checkpoint_config(const std::filesystem::path& dir);

std::vector<std::uint8_t> encode_f32_le(std::span<const float> values);
std::vector<float> decode_f32_le(std::span<const std::uint8_t> bytes);

}  // namespace kneemark
