#pragma once

#include <filesystem>

#include "kneemark/imaging.hpp"

namespace kneemark {

// Reads an 8- or 16-bit single-channel PNG; intensities are divided by the
// type maximum. Other colour types are rejected with IoError.
Image read_png(const std::filesystem::path& path, double spacing);

// Writes intensities quantized to 16 bits (round to nearest).
void write_png16(const Image& img, const std::filesystem::path& path);
void write_png8(const Image& img, const std::filesystem::path& path);

}  // namespace kneemark
