#include <doctest.h>

#include "fixtures.hpp"
#include "kneemark/annotations.hpp"
#include "kneemark/phantom.hpp"
#include "kneemark/png_io.hpp"

using namespace kneemark;
using namespace kneemark::testing;

namespace {

bool increasing(const Eigen::MatrixX2d& p, int from, int to) {
  for (int i = from + 1; i < to; ++i) {
    if (!(p(i, 0) > p(i - 1, 0))) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("phantom") {

TEST_CASE("generation is a function of the seed") {
  const PhantomCorpus a = generate(small_phantoms(3, 11));
  const PhantomCorpus b = generate(small_phantoms(3, 11));
  const PhantomCorpus c = generate(small_phantoms(3, 12));
  REQUIRE(a.images.size() == 3);
  REQUIRE(a.records.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK((a.images[i].pixels == b.images[i].pixels).all());
    CHECK(a.records[i] == b.records[i]);
  }
  CHECK(!(a.images[0].pixels == c.images[0].pixels).all());
}

TEST_CASE("single-knee records") {
  const PhantomSpec spec = small_phantoms(6, 4);
  const PhantomCorpus corpus = generate(spec);
  for (size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& r = corpus.records[i];
    const Image& img = corpus.images[i];
    CAPTURE(i);
    CHECK(r.image == img.id);
    CHECK(r.spacing == spec.spacing);
    CHECK(r.patient_id == corpus.records[i - i % 2].patient_id);
    CHECK(r.side == (i % 2 == 0 ? Side::kRight : Side::kLeft));
    CHECK(r.kl >= 0);
    CHECK(r.kl <= 4);
    CHECK_NOTHROW(r.validate());
    CHECK_NOTHROW(img.validate());
    const auto& p = r.landmarks.points;
    REQUIRE(p.rows() == 16);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(p.col(0).maxCoeff() <= img.width() - 1);
    CHECK(p.col(1).maxCoeff() <= img.height() - 1);
    CHECK(increasing(p, 0, 9));
    CHECK(increasing(p, 9, 16));
    CHECK(r.center->isApprox(p.row(4).transpose()));
    // femoral points lie above the tibial ones across the gap
    CHECK(p(12, 1) < p(4, 1));
  }
}

TEST_CASE("landmarks sit on intensity edges") {
  PhantomSpec spec = small_phantoms(4, 8);
  spec.side = 480;
  spec.spacing = 0.3;
  spec.noise_sigma = 0.0;
  const PhantomCorpus corpus = generate(spec);
  for (size_t i = 0; i < corpus.images.size(); ++i) {
    const auto& p = corpus.records[i].landmarks.points;
    const Image& img = corpus.images[i];
    auto at = [&](double x, double y) { return double(img.pixels(int(std::lround(y)), int(std::lround(x)))); };
    double tibial = 0.0, femoral = 0.0;
    for (int k = 2; k <= 6; ++k) tibial += at(p(k, 0), p(k, 1) + 4) - at(p(k, 0), p(k, 1) - 3);
    for (int k = 11; k <= 13; ++k) femoral += at(p(k, 0), p(k, 1) - 4) - at(p(k, 0), p(k, 1) + 3);
    CAPTURE(i);
    CHECK(tibial / 5 > 0.1);
    CHECK(femoral / 3 > 0.1);
  }
}

TEST_CASE("bilateral images") {
  const PhantomSpec spec = small_phantoms(2, 6, true);
  const PhantomCorpus corpus = generate_bilateral(spec);
  REQUIRE(corpus.images.size() == 2);
  REQUIRE(corpus.records.size() == 4);
  for (size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& r = corpus.records[i];
    const Image& img = corpus.images[i / 2];
    CHECK(img.width() == 2 * spec.side);
    CHECK(r.image == img.id);
    CHECK(r.patient_id == corpus.records[i - i % 2].patient_id);
    const auto& x = r.landmarks.points.col(0);
    if (r.side == Side::kRight) {
      CHECK(x.maxCoeff() < spec.side);
    } else {
      CHECK(x.minCoeff() >= spec.side);
    }
    CHECK(increasing(r.landmarks.points, 0, 9));
  }
  CHECK(corpus.records[0].side == Side::kRight);
  CHECK(corpus.records[1].side == Side::kLeft);
}

TEST_CASE("corpus files round trip") {
  TempDir tmp("phantom");
  const PhantomCorpus corpus = generate(small_phantoms(2, 1));
  write_corpus(corpus, tmp.path());
  const auto records = read_annotations(tmp / "annotations.csv");
  CHECK(records == corpus.records);
  for (const auto& img : corpus.images) {
    const Image back = read_png(tmp / img.id, img.spacing);
    CHECK((back.pixels - img.pixels).abs().maxCoeff() <= 0.5f / 65535.0f + 1e-7f);
  }
}

TEST_CASE("spec validation") {
  PhantomSpec s;
  s.side = 10;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = PhantomSpec{};
  s.count = 0;
  CHECK_THROWS_AS(generate(s), ConfigError);
}

}  // TEST_SUITE
