#include "kneemark/imaging.hpp"

#include <algorithm>
#include <cmath>

namespace kneemark {

void Image::validate() const {
  if (!(spacing > 0.0)) throw InvalidArgument("image '" + id + "': spacing must be > 0");
  if (pixels.size() > 0 && (pixels.minCoeff() < 0.0f || pixels.maxCoeff() > 1.0f)) {
    throw InvalidArgument("image '" + id + "': intensities must lie in [0, 1]");
  }
}

Image Image::filled(int width, int height, double spacing, float value, std::string id) {
  Image img;
  img.pixels = PixelArray::Constant(height, width, value);
  img.spacing = spacing;
  img.id = std::move(id);
  return img;
}

std::vector<int> flip_permutation(int count) {
  std::vector<int> perm(size_t(std::max(count, 0)));
  for (int i = 0; i < count; ++i) perm[size_t(i)] = i;
  if (count == kKneeLandmarks) {
    for (int i = 0; i < kTibialLandmarks; ++i) perm[size_t(i)] = kTibialLandmarks - 1 - i;
    for (int i = kTibialLandmarks; i < kKneeLandmarks; ++i) perm[size_t(i)] = kKneeLandmarks - 1 + kTibialLandmarks - i;
  }
  return perm;
}

void AnnotationRecord::validate() const {
  if (kl < 0 || kl > 4) throw SchemaError("record '" + image + "': KL grade " + std::to_string(kl) + " outside 0..4");
  if (!(spacing > 0.0)) throw SchemaError("record '" + image + "': spacing must be > 0");
  const int m = landmarks.size();
  if (m != 1 && m != kKneeLandmarks) {
    throw SchemaError("record '" + image + "': " + std::to_string(m) + " landmarks (expected 1 or 16)");
  }
  if (landmarks.frame != Frame::kPixel) throw SchemaError("record '" + image + "': landmarks must be in pixel frame");
}

Eigen::Vector2d RoiTransform::to_roi(const Eigen::Vector2d& p) const {
  Eigen::Vector2d q = (p - origin + Eigen::Vector2d::Constant(0.5)).cwiseProduct(scale()) -
                      Eigen::Vector2d::Constant(0.5);
  if (flipped) q.x() = double(output_size.x() - 1) - q.x();
  return q;
}

Eigen::Vector2d RoiTransform::to_source(const Eigen::Vector2d& roi_point) const {
  Eigen::Vector2d q = roi_point;
  if (flipped) q.x() = double(output_size.x() - 1) - q.x();
  return (q + Eigen::Vector2d::Constant(0.5)).cwiseQuotient(scale()) - Eigen::Vector2d::Constant(0.5) + origin;
}

namespace {

LandmarkSet map_points(const LandmarkSet& lms, const RoiTransform& t, bool forward) {
  if (lms.frame != Frame::kPixel) throw InvalidArgument("ROI mapping needs pixel-frame landmarks");
  LandmarkSet out;
  out.frame = Frame::kPixel;
  out.points.resize(lms.points.rows(), 2);
  const auto perm = t.flipped ? flip_permutation(lms.size()) : flip_permutation(0);
  for (int i = 0; i < lms.size(); ++i) {
    const int src = t.flipped ? perm[size_t(i)] : i;
    const Eigen::Vector2d p = lms.points.row(src).transpose();
    out.points.row(i) = (forward ? t.to_roi(p) : t.to_source(p)).transpose();
  }
  return out;
}

// Bilinear sample in lerp form so constant neighbourhoods reproduce exactly.
float sample_clamped(const PixelArray& px, double x, double y) {
  const int w = int(px.cols());
  const int h = int(px.rows());
  x = std::clamp(x, 0.0, double(w - 1));
  y = std::clamp(y, 0.0, double(h - 1));
  const int x0 = std::min(int(std::floor(x)), w - 1);
  const int y0 = std::min(int(std::floor(y)), h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = px(y0, x0) + fx * (double(px(y0, x1)) - px(y0, x0));
  const double bottom = px(y1, x0) + fx * (double(px(y1, x1)) - px(y1, x0));
  return float(top + fy * (bottom - top));
}

}  // namespace

LandmarkSet to_roi(const LandmarkSet& source, const RoiTransform& t) { return map_points(source, t, true); }
LandmarkSet to_source(const LandmarkSet& roi, const RoiTransform& t) { return map_points(roi, t, false); }

Image resize(const Image& img, int width, int height) {
  if (width < 1 || height < 1) throw InvalidArgument("resize: output sides must be >= 1");
  if (img.width() < 1 || img.height() < 1) throw InvalidArgument("resize: empty image");
  Image out;
  out.id = img.id;
  out.spacing = img.spacing * double(img.width()) / width;
  out.pixels.resize(height, width);
  const double rx = double(img.width()) / width;
  const double ry = double(img.height()) / height;
  for (int v = 0; v < height; ++v) {
    const double y = (v + 0.5) * ry - 0.5;
    for (int u = 0; u < width; ++u) out.pixels(v, u) = sample_clamped(img.pixels, (u + 0.5) * rx - 0.5, y);
  }
  return out;
}

Image resample(const Image& img, double target_spacing) {
  if (!(target_spacing > 0.0)) throw InvalidArgument("resample: target spacing must be > 0");
  if (!(img.spacing > 0.0)) throw InvalidArgument("resample: source spacing must be > 0");
  const int w = std::max(1, int(std::lround(img.width() * img.spacing / target_spacing)));
  const int h = std::max(1, int(std::lround(img.height() * img.spacing / target_spacing)));
  Image out = resize(img, w, h);
  out.spacing = target_spacing;
  return out;
}

Image crop(const Image& img, const Eigen::Vector2i& origin, const Eigen::Vector2i& size) {
  if (size.x() < 1 || size.y() < 1) throw InvalidArgument("crop: size must be positive");
  Image out = Image::filled(size.x(), size.y(), img.spacing, 0.0f, img.id);
  const int x0 = std::max(origin.x(), 0);
  const int y0 = std::max(origin.y(), 0);
  const int x1 = std::min(origin.x() + size.x(), img.width());
  const int y1 = std::min(origin.y() + size.y(), img.height());
  if (x1 > x0 && y1 > y0) {
    out.pixels.block(y0 - origin.y(), x0 - origin.x(), y1 - y0, x1 - x0) = img.pixels.block(y0, x0, y1 - y0, x1 - x0);
  }
  return out;
}

std::pair<Image, RoiTransform> extract_region(const Image& img, const Eigen::Vector2i& origin,
                                              const Eigen::Vector2i& size, const Eigen::Vector2i& output_size,
                                              bool flip) {
  Image region = crop(img, origin, size);
  if (output_size != size) region = resize(region, output_size.x(), output_size.y());
  if (flip) region = flip_image(region);
  RoiTransform t;
  t.source_id = img.id;
  t.origin = origin.cast<double>();
  t.crop_size = size;
  t.output_size = output_size;
  t.flipped = flip;
  return {std::move(region), t};
}

std::pair<Image, RoiTransform> crop_roi_px(const Image& img, const Eigen::Vector2d& center_px, int side_px) {
  if (side_px < 1) throw InvalidArgument("crop_roi: side must be >= 1 px");
  const double half = (side_px - 1) / 2.0;
  const Eigen::Vector2i origin(int(std::lround(center_px.x() - half)), int(std::lround(center_px.y() - half)));
  auto result = extract_region(img, origin, Eigen::Vector2i::Constant(side_px), Eigen::Vector2i::Constant(side_px),
                               false);
  result.second.center_outside = center_px.x() < 0.0 || center_px.y() < 0.0 || center_px.x() > img.width() - 1 ||
                                 center_px.y() > img.height() - 1;
  return result;
}

std::pair<Image, RoiTransform> crop_roi(const Image& img, const Eigen::Vector2d& center_mm, double size_mm) {
  if (!(size_mm > 0.0)) throw InvalidArgument("crop_roi: size must be > 0 mm");
  if (!(img.spacing > 0.0)) throw InvalidArgument("crop_roi: image spacing must be > 0");
  const int side = std::max(1, int(std::lround(size_mm / img.spacing)));
  return crop_roi_px(img, center_mm / img.spacing, side);
}

Image flip_image(const Image& img) {
  Image out = img;
  out.pixels = img.pixels.rowwise().reverse();
  return out;
}

LandmarkSet flip_landmarks(const LandmarkSet& lms, int image_width) {
  if (lms.frame != Frame::kPixel) throw InvalidArgument("flip_horizontal: landmarks must be in the pixel frame");
  const auto perm = flip_permutation(lms.size());
  LandmarkSet out;
  out.frame = Frame::kPixel;
  out.points.resize(lms.points.rows(), 2);
  for (int i = 0; i < lms.size(); ++i) {
    const int src = perm[size_t(i)];
    out.points(i, 0) = double(image_width - 1) - lms.points(src, 0);
    out.points(i, 1) = lms.points(src, 1);
  }
  return out;
}

std::pair<Image, LandmarkSet> flip_horizontal(const Image& img, const LandmarkSet& lms) {
  return {flip_image(img), flip_landmarks(lms, img.width())};
}

std::pair<Image, Image> split_bilateral(const Image& img) {
  if (img.width() < 2) throw InvalidArgument("split_bilateral: width must be >= 2");
  const int half = img.width() / 2;
  Image left;
  Image right;
  left.spacing = right.spacing = img.spacing;
  left.id = img.id + "#left";
  right.id = img.id + "#right";
  left.pixels = img.pixels.leftCols(half);
  right.pixels = img.pixels.rightCols(img.width() - half);
  return {std::move(left), std::move(right)};
}

Image hconcat(const Image& left, const Image& right) {
  if (left.height() != right.height()) throw ShapeError("hconcat: heights differ");
  Image out;
  out.spacing = left.spacing;
  out.id = left.id;
  out.pixels.resize(left.height(), left.width() + right.width());
  out.pixels << left.pixels, right.pixels;
  return out;
}

LandmarkSet to_normalized(const LandmarkSet& lms, int width, int height) {
  if (lms.frame != Frame::kPixel) throw InvalidArgument("to_normalized: landmarks are not in the pixel frame");
  LandmarkSet out;
  out.frame = Frame::kNormalized;
  out.points.resize(lms.points.rows(), 2);
  out.points.col(0) = lms.points.col(0) / double(width);
  out.points.col(1) = lms.points.col(1) / double(height);
  if (out.points.size() > 0 && (out.points.minCoeff() < 0.0 || out.points.maxCoeff() > 1.0)) {
    throw RangeError("to_normalized: landmark falls outside the image");
  }
  return out;
}

LandmarkSet to_pixels(const LandmarkSet& lms, int width, int height) {
  if (lms.frame != Frame::kNormalized) throw InvalidArgument("to_pixels: landmarks are not normalized");
  if (lms.points.size() > 0 && (lms.points.minCoeff() < 0.0 || lms.points.maxCoeff() > 1.0)) {
    throw RangeError("to_pixels: normalized coordinate outside [0, 1]");
  }
  LandmarkSet out;
  out.frame = Frame::kPixel;
  out.points.resize(lms.points.rows(), 2);
  out.points.col(0) = lms.points.col(0) * double(width);
  out.points.col(1) = lms.points.col(1) * double(height);
  return out;
}

LandmarkSet to_normalized(const LandmarkSet& lms, const Image& img) {
  return to_normalized(lms, img.width(), img.height());
}
LandmarkSet to_pixels(const LandmarkSet& lms, const Image& img) { return to_pixels(lms, img.width(), img.height()); }

}  // namespace kneemark
