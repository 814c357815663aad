#include "kneemark/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace kneemark {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_to_exception(png_structp, png_const_charp message) { throw IoError(message); }
void png_warning_ignored(png_structp, png_const_charp) {}

void write_png(const Image& img, const std::filesystem::path& path, int bit_depth) {
  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_to_exception, png_warning_ignored);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  const double max_value = bit_depth == 16 ? 65535.0 : 255.0;
  const int bytes = bit_depth / 8;
  std::vector<png_byte> row(size_t(img.width()) * size_t(bytes));
  try {
    png_init_io(png, file.get());
    png_set_IHDR(png, info, png_uint_32(img.width()), png_uint_32(img.height()), bit_depth, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        const double v = std::clamp(double(img.pixels(y, x)), 0.0, 1.0);
        const auto q = static_cast<unsigned>(std::lround(v * max_value));
        if (bytes == 2) {
          row[size_t(2 * x)] = png_byte(q >> 8);  // PNG samples are big-endian
          row[size_t(2 * x + 1)] = png_byte(q & 0xFF);
        } else {
          row[size_t(x)] = png_byte(q);
        }
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image read_png(const std::filesystem::path& path, double spacing) {
  if (!(spacing > 0.0)) throw InvalidArgument("read_png: spacing must be > 0");
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path.string());
  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw IoError(path.string() + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_to_exception, png_warning_ignored);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialisation failed");
  }
  Image img;
  img.spacing = spacing;
  img.id = path.filename().string();
  try {
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (color != PNG_COLOR_TYPE_GRAY) throw IoError(path.string() + ": only single-channel grayscale PNG is supported");
    if (depth < 8) {
      png_set_expand_gray_1_2_4_to_8(png);
      depth = 8;
    }
    png_read_update_info(png, info);
    const int width = int(png_get_image_width(png, info));
    const int height = int(png_get_image_height(png, info));
    const size_t stride = png_get_rowbytes(png, info);
    std::vector<png_byte> row(stride);
    img.pixels.resize(height, width);
    const double max_value = depth == 16 ? 65535.0 : 255.0;
    for (int y = 0; y < height; ++y) {
      png_read_row(png, row.data(), nullptr);
      for (int x = 0; x < width; ++x) {
        const unsigned v = depth == 16 ? (unsigned(row[size_t(2 * x)]) << 8) | row[size_t(2 * x + 1)] : row[size_t(x)];
        img.pixels(y, x) = float(v / max_value);
      }
    }
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png16(const Image& img, const std::filesystem::path& path) { write_png(img, path, 16); }
void write_png8(const Image& img, const std::filesystem::path& path) { write_png(img, path, 8); }

}  // namespace kneemark
