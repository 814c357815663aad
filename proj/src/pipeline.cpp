#include "kneemark/pipeline.hpp"

#include <sstream>

#include "kneemark/annotations.hpp"
#include "kneemark/training.hpp"

namespace kneemark {

namespace {

SamplingOptions sampling_for(const PipelineConfig& config, int input_side) {
  SamplingOptions o;
  o.roi_spacing = config.roi_spacing;
  o.landmark_spacing = config.landmark_spacing;
  o.crop_mm = config.crop_mm;
  o.input_side = input_side;
  return o;
}

LandmarkSet predict_one(HourglassModel<float>& model, const Sample& sample) {
  return to_source(predict(model, {sample}, 1).front(), sample.transform);
}

}  // namespace

void PipelineConfig::validate() const {
  if (!(roi_spacing > 0.0 && landmark_spacing > 0.0 && crop_mm > 0.0)) {
    throw ConfigError("pipeline spacings and crop size must be > 0");
  }
  if (stages != 1 && stages != 2) throw ConfigError("stages must be 1 or 2, got " + std::to_string(stages));
}

Eigen::Vector2d predict_center(HourglassModel<float>& roi_model, const Image& bilateral, Side side,
                               const PipelineConfig& config) {
  const Sample sample = roi_input(bilateral, side, sampling_for(config, roi_model.config().input_side));
  const LandmarkSet pts = predict_one(roi_model, sample);
  const int row = pts.size() == kKneeLandmarks ? kTibialCenter : 0;
  return pts.points.row(row).transpose();
}

KneePrediction predict_landmarks(HourglassModel<float>& landmark_model, const Image& source,
                                 const Eigen::Vector2d& center, Side side, const PipelineConfig& config) {
  config.validate();
  if (config.stages == 2 && landmark_model.config().landmarks != kKneeLandmarks) {
    throw ConfigError("two-stage inference needs a 16-landmark model");
  }
  const SamplingOptions options = sampling_for(config, landmark_model.config().input_side);
  KneePrediction out;
  out.side = side;
  out.center = center;
  for (int pass = 0; pass < config.stages; ++pass) {
    if (pass > 0) out.center = out.landmarks.points.row(kTibialCenter).transpose();
    const Sample sample = landmark_input(source, out.center, side, options);
    out.landmarks = predict_one(landmark_model, sample);
    out.transform = sample.transform;
  }
  return out;
}

std::vector<KneePrediction> infer(HourglassModel<float>& roi_model, HourglassModel<float>& landmark_model,
                                  const Image& bilateral, const PipelineConfig& config) {
  config.validate();
  std::vector<KneePrediction> out;
  for (Side side : {Side::kRight, Side::kLeft}) {
    const Eigen::Vector2d center = predict_center(roi_model, bilateral, side, config);
    out.push_back(predict_landmarks(landmark_model, bilateral, center, side, config));
  }
  return out;
}

std::string predictions_csv(const std::vector<PredictionRow>& rows) {
  std::ostringstream out;
  out << "image,knee_side,id,x_px,y_px\n";
  for (const auto& r : rows) {
    out << r.image << ',' << (r.side == Side::kLeft ? 'L' : 'R') << ',' << r.id << ',' << format_double(r.x) << ','
        << format_double(r.y) << '\n';
  }
  return out.str();
}

std::vector<PredictionRow> parse_predictions(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::vector<PredictionRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "image,knee_side,id,x_px,y_px") throw ParseError("unexpected predictions header '" + line + "'", 1);
      continue;
    }
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 5) throw ParseError("expected 5 columns, found " + std::to_string(cells.size()), line_no);
    PredictionRow r;
    r.image = cells[0];
    if (cells[1] == "L") {
      r.side = Side::kLeft;
    } else if (cells[1] == "R") {
      r.side = Side::kRight;
    } else {
      throw ParseError("knee side must be L or R", line_no);
    }
    try {
      r.id = std::stoi(cells[2]);
      r.x = parse_double(cells[3]);
      r.y = parse_double(cells[4]);
    } catch (const std::exception&) {
      throw ParseError("malformed number", line_no);
    }
    rows.push_back(r);
  }
  if (line_no == 0) throw ParseError("missing predictions header", 1);
  return rows;
}

void append_rows(std::vector<PredictionRow>& rows, const std::string& image, const KneePrediction& knee) {
  for (int i = 0; i < knee.landmarks.size(); ++i) {
    rows.push_back({image, knee.side, i, knee.landmarks.points(i, 0), knee.landmarks.points(i, 1)});
  }
}

}  // namespace kneemark
