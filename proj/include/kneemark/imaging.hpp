#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kneemark/errors.hpp"

namespace kneemark {

using PixelArray = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Grayscale raster, intensities in [0, 1], isotropic spacing in mm per pixel.
// Pixel (row y, column x) has its centre at coordinate (x, y).
struct Image {
  PixelArray pixels;
  double spacing = 1.0;
  std::string id;

  int width() const { return int(pixels.cols()); }
  int height() const { return int(pixels.rows()); }
  // Throws InvalidArgument when spacing <= 0 or a value leaves [0, 1].
  void validate() const;

  static Image filled(int width, int height, double spacing, float value, std::string id = {});
};

enum class Frame { kPixel, kNormalized };

// Ordered points (row i = landmark i). Knee sets hold 16 points: 0-8 tibia,
// 9-15 femur, numbered left to right in the image.
struct LandmarkSet {
  Eigen::MatrixX2d points;
  Frame frame = Frame::kPixel;

  int size() const { return int(points.rows()); }
  bool operator==(const LandmarkSet& other) const {
    return frame == other.frame && points.rows() == other.points.rows() && points == other.points;
  }
};

inline constexpr int kKneeLandmarks = 16;
inline constexpr int kTibialLandmarks = 9;
inline constexpr int kTibialCenter = 4;

// Index permutation applied by a horizontal flip. For 16-point knee sets the
// order is reversed inside the tibial and femoral groups so numbering stays
// left to right; other sizes keep their order. The permutation is an involution.
std::vector<int> flip_permutation(int count);

enum class Side { kLeft, kRight };

struct AnnotationRecord {
  std::string image;
  double spacing = 0.0;
  std::string patient_id;
  Side side = Side::kRight;
  int kl = 0;
  LandmarkSet landmarks;  // 1 (joint centre) or 16 points, pixel frame
  std::optional<Eigen::Vector2d> center;
  bool exclude = false;

  bool operator==(const AnnotationRecord&) const = default;
  // Throws SchemaError.
  void validate() const;
};

// Maps source pixels to an extracted region: crop at an integer origin, resize
// to the output size (pixel-centre convention), optionally mirror.
struct RoiTransform {
  std::string source_id;
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();     // source coords of crop pixel (0, 0)
  Eigen::Vector2i crop_size = Eigen::Vector2i::Zero();  // source pixels covered
  Eigen::Vector2i output_size = Eigen::Vector2i::Zero();
  bool flipped = false;
  bool center_outside = false;  // requested centre fell outside the source image

  Eigen::Vector2d scale() const {
    return {double(output_size.x()) / crop_size.x(), double(output_size.y()) / crop_size.y()};
  }
  Eigen::Vector2d to_roi(const Eigen::Vector2d& source_point) const;
  Eigen::Vector2d to_source(const Eigen::Vector2d& roi_point) const;
};

// Coordinates and flip-reindexing through a transform.
LandmarkSet to_roi(const LandmarkSet& source, const RoiTransform& transform);
LandmarkSet to_source(const LandmarkSet& roi, const RoiTransform& transform);

// Bilinear resize with pixel-centre alignment. Spacing follows the x ratio.
Image resize(const Image& img, int width, int height);
// Output sides are round(side * spacing / target_spacing).
Image resample(const Image& img, double target_spacing);

// Axis-aligned crop with zero padding outside the source.
Image crop(const Image& img, const Eigen::Vector2i& origin, const Eigen::Vector2i& size);

// Square crop of side round(size_mm / spacing) centred on center_mm / spacing.
std::pair<Image, RoiTransform> crop_roi(const Image& img, const Eigen::Vector2d& center_mm, double size_mm);
// Same in pixel units.
std::pair<Image, RoiTransform> crop_roi_px(const Image& img, const Eigen::Vector2d& center_px, int side_px);

// Crop (origin, size), resize to output_size, mirror when flip is set.
std::pair<Image, RoiTransform> extract_region(const Image& img, const Eigen::Vector2i& origin,
                                              const Eigen::Vector2i& size, const Eigen::Vector2i& output_size,
                                              bool flip);

Image flip_image(const Image& img);
LandmarkSet flip_landmarks(const LandmarkSet& lms, int image_width);
std::pair<Image, LandmarkSet> flip_horizontal(const Image& img, const LandmarkSet& lms);

// Left half is columns [0, width / 2), right half the rest.
std::pair<Image, Image> split_bilateral(const Image& img);
Image hconcat(const Image& left, const Image& right);

LandmarkSet to_normalized(const LandmarkSet& lms, const Image& img);
LandmarkSet to_pixels(const LandmarkSet& lms, const Image& img);
LandmarkSet to_normalized(const LandmarkSet& lms, int width, int height);
LandmarkSet to_pixels(const LandmarkSet& lms, int width, int height);

}  // namespace kneemark
