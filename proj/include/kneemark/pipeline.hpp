#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kneemark/model.hpp"
#include "kneemark/samples.hpp"

namespace kneemark {

struct PipelineConfig {
  std::filesystem::path roi_checkpoint;
  std::filesystem::path landmark_checkpoint;
  double roi_spacing = 1.0;
  double landmark_spacing = 0.3;
  double crop_mm = 140.0;
  int stages = 1;  // 2 re-centres the crop on the predicted landmark 4 and runs the landmark model again

  // Throws ConfigError.
  void validate() const;
};

struct KneePrediction {
  Side side = Side::kRight;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();  // source px
  LandmarkSet landmarks;                             // source px
  RoiTransform transform;                            // of the final landmark crop
};

// Stage A: joint centre from the knee's half.
Eigen::Vector2d predict_center(HourglassModel<float>& roi_model, const Image& bilateral, Side side,
                               const PipelineConfig& config);
// Stage B around a given centre, with the optional second pass.
KneePrediction predict_landmarks(HourglassModel<float>& landmark_model, const Image& source,
                                 const Eigen::Vector2d& center, Side side, const PipelineConfig& config);

// Both knees of a bilateral image, right knee first.
std::vector<KneePrediction> infer(HourglassModel<float>& roi_model, HourglassModel<float>& landmark_model,
                                  const Image& bilateral, const PipelineConfig& config);

struct PredictionRow {
  std::string image;
  Side side = Side::kRight;
  int id = 0;
  double x = 0.0;
  double y = 0.0;
};

// CSV `image,knee_side,id,x_px,y_px`.
std::string predictions_csv(const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> parse_predictions(const std::string& text);
void append_rows(std::vector<PredictionRow>& rows, const std::string& image, const KneePrediction& knee);

}  // namespace kneemark
