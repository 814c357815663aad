#include <doctest.h>

#include <cmath>

#include "kneemark/evaluation.hpp"

using namespace kneemark;

namespace {

ErrorMatrix matrix(std::initializer_list<std::initializer_list<double>> rows, std::vector<int> kl = {}) {
  ErrorMatrix e;
  int i = 0;
  for (const auto& r : rows) {
    Eigen::VectorXd v(Eigen::Index(r.size()));
    Eigen::Index j = 0;
    for (double x : r) v[j++] = x;
    e.append(v, kl.empty() ? 0 : kl[size_t(i)]);
    ++i;
  }
  return e;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("radial errors") {
  LandmarkSet a, b;
  a.points.resize(2, 2);
  b.points.resize(2, 2);
  a.points << 0, 0, 1, 1;
  b.points << 3, 4, 1, 1;
  const Eigen::VectorXd e = radial_errors(a, b, 0.5);
  CHECK(e[0] == 2.5);
  CHECK(e[1] == 0.0);
  b.points.resize(1, 2);
  CHECK_THROWS_AS(radial_errors(a, b, 0.5), InvalidArgument);
}

TEST_CASE("landmark subsets") {
  CHECK(landmark_subset("ablation", 16) == std::vector<int>{0, 8, 9, 15});
  CHECK(landmark_subset("test", 16) == std::vector<int>{0, 4, 8, 9, 12, 15});
  CHECK(landmark_subset("all", 3) == std::vector<int>{0, 1, 2});
  CHECK_THROWS_AS(landmark_subset("test", 4), InvalidArgument);
  CHECK_THROWS_AS(landmark_subset("most", 16), InvalidArgument);
}

TEST_CASE("pck and outliers on a hand example") {
  const ErrorMatrix e = matrix({{0.5, 1.0, 12.0}, {1.5, 2.6, 10.0}});
  CHECK(pck(e, 1.0, {0, 1, 2}) == doctest::Approx(100.0 * 2 / 6));
  CHECK(pck(e, 1.5, {0}) == 100.0);
  CHECK(pck(e, 2.5, {1}) == 50.0);
  CHECK(outlier_rate(e) == doctest::Approx(100.0 / 6));
  CHECK(pck(e, 10.0, {0, 1, 2}) + outlier_rate(e) == 100.0);
}

TEST_CASE("cumulative distribution") {
  const ErrorMatrix e = matrix({{0.05, 3.0}, {0.05, 20.0}});
  const auto cdf = cumulative_distribution(e, {0, 1});
  REQUIRE(!cdf.empty());
  CHECK(cdf.front().threshold_mm == 0.0);
  CHECK(cdf.front().recall_pct == 0.0);
  for (size_t i = 1; i < cdf.size(); ++i) {
    CHECK(cdf[i].threshold_mm > cdf[i - 1].threshold_mm);
    CHECK(cdf[i].recall_pct >= cdf[i - 1].recall_pct);
  }
  CHECK(cdf.back().threshold_mm == 20.0);
  CHECK(cdf.back().recall_pct == 100.0);
  for (const auto& p : cdf) {
    if (p.threshold_mm == 0.05) CHECK(p.recall_pct == 50.0);
    if (p.threshold_mm == 3.0) CHECK(p.recall_pct == 75.0);
  }
  CHECK(cdf_csv(cdf).rfind("threshold_mm,recall_pct\n", 0) == 0);
}

TEST_CASE("kl selection and validation") {
  const ErrorMatrix e = matrix({{1.0}, {2.0}, {3.0}}, {0, 2, 2});
  const ErrorMatrix two = e.select_kl(2);
  CHECK(two.images() == 2);
  CHECK(two.mm(1, 0) == 3.0);
  CHECK(e.select_kl(4).images() == 0);
  ErrorMatrix bad = e;
  bad.mm(0, 0) = -1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad.mm(0, 0) = std::nan("");
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("fold aggregation") {
  const Aggregate one = aggregate({3.0});
  CHECK(!one.std);
  CHECK(one.str() == "3.00");
  const Aggregate two = aggregate({1.0, 3.0});
  CHECK(two.mean == 2.0);
  CHECK(*two.std == 1.0);
  CHECK(two.str() == "2.00 ± 1.00");

  const ErrorMatrix a = matrix({{0.5, 0.5, 0.5, 0.5}});
  const ErrorMatrix b = matrix({{5.0, 5.0, 5.0, 12.0}});
  const auto ra = evaluate(a, "all", "phantom", "0");
  const auto rb = evaluate(b, "all", "phantom", "1");
  CHECK(ra.pck == std::vector<double>{100, 100, 100, 100});
  const FoldSummary s = aggregate_folds({ra, rb});
  CHECK(s.folds == 2);
  CHECK(s.pck[0].mean == 50.0);
  CHECK(*s.pck[0].std == 50.0);
  CHECK(s.outliers.mean == 12.5);
  CHECK_THROWS_AS(aggregate_folds({}), InvalidArgument);

  const std::string csv = report_csv({ra});
  CHECK(csv.rfind("dataset,fold,metric,r,subset,value\n", 0) == 0);
  CHECK(csv.find("phantom,0,pck,1,all,100") != std::string::npos);
  const auto j = to_json(ra);
  CHECK(j.at("images").get<int>() == 1);
  CHECK(to_json(s).at("folds").get<int>() == 2);
}

}  // TEST_SUITE
