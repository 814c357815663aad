#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "kneemark/imaging.hpp"
#include "kneemark/tensor.hpp"

namespace kneemark {

enum class Stage { kRoi, kLandmarks };

std::string to_string(Stage stage);

struct SamplingOptions {
  double roi_spacing = 1.0;       // mm per px before resizing ROI inputs
  double landmark_spacing = 0.3;  // mm per px of the landmark crop
  double crop_mm = 140.0;
  int input_side = 256;
};

// One network input with its target and the way back to the source image.
struct Sample {
  Image input;               // input_side x input_side
  LandmarkSet target;        // pixel frame of input
  LandmarkSet source_truth;  // pixel frame of the source image
  RoiTransform transform;    // source -> input
  double source_spacing = 1.0;
  int record = -1;
  int kl = 0;
  Side side = Side::kRight;
};

// Knee half of a bilateral image: right knees occupy the left half.
std::pair<Image, Eigen::Vector2i> knee_half(const Image& bilateral, Side side);

// ROI input: the knee's half, resampled to roi_spacing and resized to S; the
// target is the joint centre.
Sample roi_input(const Image& bilateral, Side side, const SamplingOptions& options);
// Landmark input: crop_mm square around center_px at landmark_spacing, left
// knees mirrored, resized to S.
Sample landmark_input(const Image& source, const Eigen::Vector2d& center_px, Side side,
                      const SamplingOptions& options);

// Loads images on demand from a directory, keyed by file name.
class ImageCache {
 public:
  explicit ImageCache(std::filesystem::path dir) : dir_(std::move(dir)) {}
  ImageCache(std::vector<Image> images);
  const Image& get(const AnnotationRecord& record);

 private:
  std::filesystem::path dir_;
  std::map<std::string, Image> images_;
};

// Builds the samples for the given record indices. ROI samples need a centre;
// landmark samples need 16 landmarks and are centred on landmark 4.
std::vector<Sample> prepare_samples(const std::vector<AnnotationRecord>& records, const std::vector<int>& indices,
                                    ImageCache& images, Stage stage, const SamplingOptions& options);

// Stacks inputs into (B, 1, S, S) and targets into (B, M, 1, 2) normalized by S.
Tensor<float> stack_inputs(const std::vector<const Image*>& images);
Tensor<float> stack_targets(const std::vector<const LandmarkSet*>& targets, int side);

}  // namespace kneemark
