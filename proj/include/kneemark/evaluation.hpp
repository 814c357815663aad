#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "kneemark/imaging.hpp"

namespace kneemark {

// Radial errors in mm, one row per image and one column per landmark, with a
// KL grade and dataset tag per image.
struct ErrorMatrix {
  Eigen::ArrayXXd mm;
  std::vector<int> kl;
  std::vector<std::string> dataset;

  int images() const { return int(mm.rows()); }
  int landmarks() const { return int(mm.cols()); }

  // Appends one image row.
  void append(const Eigen::VectorXd& errors, int kl_grade = 0, const std::string& tag = {});
  // Rows whose KL grade equals kl_grade.
  ErrorMatrix select_kl(int kl_grade) const;
  // Throws InvalidArgument on negative or non-finite cells or mismatched tags.
  void validate() const;
};

// Euclidean distance per landmark times spacing. Both sets must share M and
// the pixel frame.
Eigen::VectorXd radial_errors(const LandmarkSet& pred, const LandmarkSet& gt, double spacing);

inline const std::vector<double> kPckRadiiMm{1.0, 1.5, 2.0, 2.5};
inline constexpr double kOutlierMm = 10.0;

// Named landmark subsets: "ablation" {0, 8, 9, 15}, "test" {0, 4, 8, 9, 12, 15},
// "all" {0..M-1}. Throws InvalidArgument for unknown names or indices >= M.
std::vector<int> landmark_subset(const std::string& name, int landmarks);

// Percent of cells in the subset columns with error <= r.
double pck(const ErrorMatrix& errors, double r, const std::vector<int>& subset);
// Percent of all cells with error > threshold.
double outlier_rate(const ErrorMatrix& errors, double threshold = kOutlierMm);

struct CdfPoint {
  double threshold_mm;
  double recall_pct;
};
// Thresholds are every distinct subset error plus the grid 0, 0.1, ..., 10 mm, ascending.
std::vector<CdfPoint> cumulative_distribution(const ErrorMatrix& errors, const std::vector<int>& subset);
std::string cdf_csv(const std::vector<CdfPoint>& cdf);

struct EvaluationReport {
  std::string dataset;
  std::string fold;  // fold index as text, or "all"
  std::string subset_name;
  std::vector<int> subset;
  std::vector<double> radii;
  std::vector<double> pck;  // aligned with radii
  double outliers = 0.0;
  int images = 0;
};

EvaluationReport evaluate(const ErrorMatrix& errors, const std::string& subset_name, const std::string& dataset = "data",
                          const std::string& fold = "all", const std::vector<double>& radii = kPckRadiiMm);

// Population mean and standard deviation over folds; std is absent for one fold.
struct Aggregate {
  double mean = 0.0;
  std::optional<double> std;
  // "a ± b" with two decimals, or "a" alone.
  std::string str() const;
};
Aggregate aggregate(const std::vector<double>& values);

struct FoldSummary {
  std::vector<double> radii;
  std::vector<Aggregate> pck;
  Aggregate outliers;
  int folds = 0;
};
// Reports must share radii. Throws InvalidArgument for an empty list.
FoldSummary aggregate_folds(const std::vector<EvaluationReport>& reports);

nlohmann::json to_json(const EvaluationReport& report);
nlohmann::json to_json(const FoldSummary& summary);

// Flat rows `dataset,fold,metric,r,subset,value`, header included.
std::string report_csv(const std::vector<EvaluationReport>& reports);

}  // namespace kneemark
