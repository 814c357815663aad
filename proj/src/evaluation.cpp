#include "kneemark/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "kneemark/annotations.hpp"

namespace kneemark {

namespace {

void check_subset(const ErrorMatrix& errors, const std::vector<int>& subset) {
  if (subset.empty()) throw InvalidArgument("landmark subset is empty");
  for (int id : subset) {
    if (id < 0 || id >= errors.landmarks()) {
      throw InvalidArgument("landmark " + std::to_string(id) + " outside 0.." + std::to_string(errors.landmarks() - 1));
    }
  }
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

void ErrorMatrix::append(const Eigen::VectorXd& errors, int kl_grade, const std::string& tag) {
  if (mm.size() > 0 && errors.size() != mm.cols()) {
    throw InvalidArgument("error row has " + std::to_string(errors.size()) + " landmarks, expected " +
                          std::to_string(mm.cols()));
  }
  Eigen::ArrayXXd grown(mm.rows() + 1, errors.size());
  if (mm.rows() > 0) grown.topRows(mm.rows()) = mm;
  grown.row(mm.rows()) = errors.transpose().array();
  mm = std::move(grown);
  kl.push_back(kl_grade);
  dataset.push_back(tag);
}

ErrorMatrix ErrorMatrix::select_kl(int kl_grade) const {
  ErrorMatrix out;
  for (int i = 0; i < images(); ++i) {
    if (kl[size_t(i)] == kl_grade) out.append(mm.row(i).transpose().matrix(), kl[size_t(i)], dataset[size_t(i)]);
  }
  return out;
}

void ErrorMatrix::validate() const {
  if (kl.size() != size_t(images()) || dataset.size() != size_t(images())) {
    throw InvalidArgument("error matrix tags do not match its row count");
  }
  if (!mm.isFinite().all() || (mm < 0.0).any()) throw InvalidArgument("error matrix holds negative or non-finite values");
}

Eigen::VectorXd radial_errors(const LandmarkSet& pred, const LandmarkSet& gt, double spacing) {
  if (pred.frame != Frame::kPixel || gt.frame != Frame::kPixel) {
    throw InvalidArgument("radial_errors: both landmark sets must be in the pixel frame");
  }
  if (pred.size() != gt.size()) {
    throw InvalidArgument("radial_errors: " + std::to_string(pred.size()) + " predictions for " +
                          std::to_string(gt.size()) + " ground-truth landmarks");
  }
  if (!(spacing > 0.0)) throw InvalidArgument("radial_errors: spacing must be > 0");
  return (pred.points - gt.points).rowwise().norm() * spacing;
}

std::vector<int> landmark_subset(const std::string& name, int landmarks) {
  std::vector<int> ids;
  if (name == "ablation") {
    ids = {0, 8, 9, 15};
  } else if (name == "test") {
    ids = {0, 4, 8, 9, 12, 15};
  } else if (name == "all") {
    for (int i = 0; i < landmarks; ++i) ids.push_back(i);
  } else {
    throw InvalidArgument("unknown landmark subset '" + name + "' (expected ablation, test or all)");
  }
  for (int id : ids) {
    if (id >= landmarks) {
      throw InvalidArgument("subset '" + name + "' needs landmark " + std::to_string(id) + " but M = " +
                            std::to_string(landmarks));
    }
  }
  return ids;
}

double pck(const ErrorMatrix& errors, double r, const std::vector<int>& subset) {
  check_subset(errors, subset);
  if (errors.images() == 0) throw InvalidArgument("pck of an empty error matrix");
  long long hits = 0;
  for (int id : subset) hits += (errors.mm.col(id) <= r).count();
  const long long total = (long long)errors.images() * (long long)subset.size();
  return 100.0 * double(hits) / double(total);
}

double outlier_rate(const ErrorMatrix& errors, double threshold) {
  if (errors.mm.size() == 0) throw InvalidArgument("outlier rate of an empty error matrix");
  const long long outliers = (errors.mm > threshold).count();
  return 100.0 * double(outliers) / double(errors.mm.size());
}

std::vector<CdfPoint> cumulative_distribution(const ErrorMatrix& errors, const std::vector<int>& subset) {
  check_subset(errors, subset);
  std::vector<double> values;
  for (int id : subset) {
    for (int i = 0; i < errors.images(); ++i) values.push_back(errors.mm(i, id));
  }
  if (values.empty()) throw InvalidArgument("cumulative distribution of an empty error matrix");
  std::vector<double> thresholds = values;
  for (int k = 0; k <= 100; ++k) thresholds.push_back(k / 10.0);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  std::sort(values.begin(), values.end());
  std::vector<CdfPoint> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    const auto hits = std::upper_bound(values.begin(), values.end(), t) - values.begin();
    out.push_back({t, 100.0 * double(hits) / double(values.size())});
  }
  return out;
}

std::string cdf_csv(const std::vector<CdfPoint>& cdf) {
  std::string out = "threshold_mm,recall_pct\n";
  for (const auto& p : cdf) out += format_double(p.threshold_mm) + "," + format_double(p.recall_pct) + "\n";
  return out;
}

EvaluationReport evaluate(const ErrorMatrix& errors, const std::string& subset_name, const std::string& dataset,
                          const std::string& fold, const std::vector<double>& radii) {
  EvaluationReport report;
  report.dataset = dataset;
  report.fold = fold;
  report.subset_name = subset_name;
  report.subset = landmark_subset(subset_name, errors.landmarks());
  report.radii = radii;
  for (double r : radii) report.pck.push_back(pck(errors, r, report.subset));
  report.outliers = outlier_rate(errors);
  report.images = errors.images();
  return report;
}

std::string Aggregate::str() const { return std ? fixed2(mean) + " ± " + fixed2(*std) : fixed2(mean); }

Aggregate aggregate(const std::vector<double>& values) {
  if (values.empty()) throw InvalidArgument("aggregate of no values");
  const Eigen::Map<const Eigen::ArrayXd> v(values.data(), Eigen::Index(values.size()));
  Aggregate a;
  a.mean = v.mean();
  if (values.size() >= 2) a.std = std::sqrt((v - a.mean).square().sum() / double(values.size()));
  return a;
}

FoldSummary aggregate_folds(const std::vector<EvaluationReport>& reports) {
  if (reports.empty()) throw InvalidArgument("aggregate_folds needs at least one report");
  FoldSummary s;
  s.radii = reports.front().radii;
  s.folds = int(reports.size());
  for (const auto& r : reports) {
    if (r.radii != s.radii) throw InvalidArgument("fold reports use different PCK radii");
  }
  for (size_t k = 0; k < s.radii.size(); ++k) {
    std::vector<double> values;
    for (const auto& r : reports) values.push_back(r.pck[k]);
    s.pck.push_back(aggregate(values));
  }
  std::vector<double> outliers;
  for (const auto& r : reports) outliers.push_back(r.outliers);
  s.outliers = aggregate(outliers);
  return s;
}

nlohmann::json to_json(const EvaluationReport& report) {
  nlohmann::json pck_table = nlohmann::json::object();
  for (size_t k = 0; k < report.radii.size(); ++k) pck_table[format_double(report.radii[k])] = report.pck[k];
  return {{"dataset", report.dataset}, {"fold", report.fold},       {"subset", report.subset_name},
          {"landmarks", report.subset}, {"images", report.images}, {"pck", pck_table},
          {"outliers", report.outliers}};
}

nlohmann::json to_json(const FoldSummary& summary) {
  auto entry = [](const Aggregate& a) {
    nlohmann::json j = {{"mean", a.mean}, {"text", a.str()}};
    if (a.std) j["std"] = *a.std;
    return j;
  };
  nlohmann::json pck_table = nlohmann::json::object();
  for (size_t k = 0; k < summary.radii.size(); ++k) pck_table[format_double(summary.radii[k])] = entry(summary.pck[k]);
  return {{"folds", summary.folds}, {"pck", pck_table}, {"outliers", entry(summary.outliers)}};
}

std::string report_csv(const std::vector<EvaluationReport>& reports) {
  std::ostringstream out;
  out << "dataset,fold,metric,r,subset,value\n";
  for (const auto& r : reports) {
    for (size_t k = 0; k < r.radii.size(); ++k) {
      out << r.dataset << ',' << r.fold << ",pck," << format_double(r.radii[k]) << ',' << r.subset_name << ','
          << format_double(r.pck[k]) << '\n';
    }
    out << r.dataset << ',' << r.fold << ",outliers," << format_double(kOutlierMm) << ",all,"
        << format_double(r.outliers) << '\n';
  }
  return out.str();
}

}  // namespace kneemark
