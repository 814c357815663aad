#include "kneemark/samples.hpp"

#include <cmath>

#include "kneemark/png_io.hpp"

namespace kneemark {

std::string to_string(Stage stage) { return stage == Stage::kRoi ? "roi" : "landmarks"; }

std::pair<Image, Eigen::Vector2i> knee_half(const Image& bilateral, Side side) {
  auto [left, right] = split_bilateral(bilateral);
  if (side == Side::kRight) return {std::move(left), Eigen::Vector2i::Zero()};
  return {std::move(right), Eigen::Vector2i(bilateral.width() / 2, 0)};
}

Sample roi_input(const Image& bilateral, Side side, const SamplingOptions& options) {
  auto [half, offset] = knee_half(bilateral, side);
  const int s = options.input_side;
  Sample sample;
  sample.input = resize(resample(half, options.roi_spacing), s, s);
  sample.input.id = bilateral.id;
  // Resample then resize composes into one pixel-centre scaling of the half.
  sample.transform.source_id = bilateral.id;
  sample.transform.origin = offset.cast<double>();
  sample.transform.crop_size = Eigen::Vector2i(half.width(), half.height());
  sample.transform.output_size = Eigen::Vector2i(s, s);
  sample.source_spacing = bilateral.spacing;
  sample.side = side;
  return sample;
}

Sample landmark_input(const Image& source, const Eigen::Vector2d& center_px, Side side,
                      const SamplingOptions& options) {
  // Cropping round(crop_mm / spacing) source pixels and resizing to S is the
  // resample-to-landmark_spacing crop expressed in source pixels.
  const double native = std::lround(options.crop_mm / options.landmark_spacing) * options.landmark_spacing;
  const int side_px = std::max(1, int(std::lround(native / source.spacing)));
  const double half = (side_px - 1) / 2.0;
  const Eigen::Vector2i origin(int(std::lround(center_px.x() - half)), int(std::lround(center_px.y() - half)));
  const int s = options.input_side;
  auto [input, transform] = extract_region(source, origin, Eigen::Vector2i::Constant(side_px),
                                           Eigen::Vector2i::Constant(s), side == Side::kLeft);
  transform.center_outside = center_px.x() < 0.0 || center_px.y() < 0.0 || center_px.x() > source.width() - 1 ||
                             center_px.y() > source.height() - 1;
  Sample sample;
  sample.input = std::move(input);
  sample.transform = transform;
  sample.source_spacing = source.spacing;
  sample.side = side;
  return sample;
}

ImageCache::ImageCache(std::vector<Image> images) {
  for (auto& img : images) images_.emplace(img.id, std::move(img));
}

const Image& ImageCache::get(const AnnotationRecord& record) {
  auto it = images_.find(record.image);
  if (it != images_.end()) return it->second;
  if (dir_.empty()) throw IoError("image '" + record.image + "' is not loaded");
  Image img = read_png(dir_ / record.image, record.spacing);
  img.id = record.image;
  return images_.emplace(record.image, std::move(img)).first->second;
}

std::vector<Sample> prepare_samples(const std::vector<AnnotationRecord>& records, const std::vector<int>& indices,
                                    ImageCache& images, Stage stage, const SamplingOptions& options) {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (int index : indices) {
    const AnnotationRecord& r = records.at(size_t(index));
    const Image& img = images.get(r);
    Sample sample;
    if (stage == Stage::kRoi) {
      Eigen::Vector2d center;
      if (r.center) {
        center = *r.center;
      } else if (r.landmarks.size() == kKneeLandmarks) {
        center = r.landmarks.points.row(kTibialCenter).transpose();
      } else {
        center = r.landmarks.points.row(0).transpose();
      }
      sample = roi_input(img, r.side, options);
      sample.source_truth = LandmarkSet{center.transpose(), Frame::kPixel};
    } else {
      if (r.landmarks.size() != kKneeLandmarks) {
        throw SchemaError("record '" + r.image + "' has no 16-landmark annotation for the landmark stage");
      }
      sample = landmark_input(img, r.landmarks.points.row(kTibialCenter).transpose(), r.side, options);
      sample.source_truth = r.landmarks;
    }
    sample.target = to_roi(sample.source_truth, sample.transform);
    sample.record = index;
    sample.kl = r.kl;
    out.push_back(std::move(sample));
  }
  return out;
}

Tensor<float> stack_inputs(const std::vector<const Image*>& images) {
  if (images.empty()) throw InvalidArgument("stack_inputs: empty batch");
  const int h = images.front()->height();
  const int w = images.front()->width();
  Tensor<float> batch(Shape{int(images.size()), 1, h, w});
  for (size_t i = 0; i < images.size(); ++i) {
    if (images[i]->height() != h || images[i]->width() != w) throw ShapeError("stack_inputs: images differ in size");
    std::copy(images[i]->pixels.data(), images[i]->pixels.data() + images[i]->pixels.size(), batch.sample(int(i)));
  }
  return batch;
}

Tensor<float> stack_targets(const std::vector<const LandmarkSet*>& targets, int side) {
  if (targets.empty()) throw InvalidArgument("stack_targets: empty batch");
  const int m = targets.front()->size();
  Tensor<float> out(Shape{int(targets.size()), m, 1, 2});
  for (size_t i = 0; i < targets.size(); ++i) {
    if (targets[i]->size() != m) throw ShapeError("stack_targets: landmark counts differ");
    for (int k = 0; k < m; ++k) {
      out(int(i), k, 0, 0) = float(targets[i]->points(k, 0) / side);
      out(int(i), k, 0, 1) = float(targets[i]->points(k, 1) / side);
    }
  }
  return out;
}

}  // namespace kneemark
