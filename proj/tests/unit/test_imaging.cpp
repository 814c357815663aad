#include <doctest.h>

#include <filesystem>
#include <random>

#include "kneemark/annotations.hpp"
#include "kneemark/imaging.hpp"
#include "kneemark/png_io.hpp"

using namespace kneemark;

namespace {

Image random_image(int w, int h, double spacing, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img = Image::filled(w, h, spacing, 0.0f, "rand");
  for (Eigen::Index i = 0; i < img.pixels.size(); ++i) img.pixels.data()[i] = u(rng);
  return img;
}

LandmarkSet knee_points(std::uint64_t seed, double w, double h) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(0.0, w - 1), uy(0.0, h - 1);
  LandmarkSet lms;
  lms.points.resize(16, 2);
  for (int i = 0; i < 16; ++i) lms.points.row(i) << ux(rng), uy(rng);
  return lms;
}

AnnotationRecord full_record() {
  AnnotationRecord r;
  r.image = "knee_01.png";
  r.spacing = 0.3;
  r.patient_id = "9001";
  r.side = Side::kLeft;
  r.kl = 3;
  r.landmarks = knee_points(5, 400, 300);
  r.center = Eigen::Vector2d(200.25, 150.125);
  return r;
}

}  // namespace

TEST_SUITE("imaging") {

TEST_CASE("resample at the same spacing is the identity") {
  const Image img = random_image(37, 23, 0.3, 1);
  const Image out = resample(img, 0.3);
  CHECK(out.width() == 37);
  CHECK(out.height() == 23);
  CHECK((out.pixels == img.pixels).all());
}

TEST_CASE("resample keeps constants and sizes by rounding") {
  const Image img = Image::filled(100, 80, 0.15, 0.5f);
  const Image out = resample(img, 0.3);
  CHECK(out.width() == 50);
  CHECK(out.height() == 40);
  CHECK(out.spacing == 0.3);
  CHECK((out.pixels == 0.5f).all());
  const Image up = resample(img, 0.07);
  CHECK(up.width() == 214);  // round(100 * 0.15 / 0.07)
  CHECK((up.pixels == 0.5f).all());
  CHECK_THROWS_AS(resample(img, 0.0), InvalidArgument);
  CHECK_THROWS_AS(resample(img, -1.0), InvalidArgument);
}

TEST_CASE("resample stays in [0, 1]") {
  const Image out = resample(random_image(64, 64, 0.3, 2), 0.71);
  CHECK(out.pixels.minCoeff() >= 0.0f);
  CHECK(out.pixels.maxCoeff() <= 1.0f);
}

TEST_CASE("crop_roi side and centring") {
  const Image img = random_image(600, 500, 0.3, 3);
  auto [roi, t] = crop_roi(img, Eigen::Vector2d(250.0 * 0.3, 240.0 * 0.3), 140.0);
  CHECK(roi.width() == 467);
  CHECK(roi.height() == 467);
  const Eigen::Vector2d c = t.to_roi(Eigen::Vector2d(250.0, 240.0));
  CHECK(std::abs(c.x() - 233.0) <= 0.5);
  CHECK(std::abs(c.y() - 233.0) <= 0.5);

  const Image coarse = Image::filled(300, 300, 1.0, 0.2f);
  CHECK(crop_roi(coarse, Eigen::Vector2d(150, 150), 140.0).first.width() == 140);
}

TEST_CASE("crop outside the image is zero padded and flagged") {
  const Image img = Image::filled(50, 50, 1.0, 1.0f);
  auto [roi, t] = crop_roi(img, Eigen::Vector2d(-200.0, 25.0), 20.0);
  CHECK(t.center_outside);
  CHECK((roi.pixels == 0.0f).all());
  auto [edge, t2] = crop_roi(img, Eigen::Vector2d(0.0, 25.0), 20.0);
  CHECK_FALSE(t2.center_outside);
  CHECK(edge.pixels(10, 0) == 0.0f);
  CHECK(edge.pixels(10, 19) == 1.0f);
}

TEST_CASE("RoiTransform round trip on random points") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 400.0);
  const Image img = Image::filled(400, 400, 0.3, 0.0f);
  for (bool flip : {false, true}) {
    auto [roi, t] = extract_region(img, Eigen::Vector2i(31, -7), Eigen::Vector2i(211, 211), Eigen::Vector2i(64, 64), flip);
    for (int i = 0; i < 1000; ++i) {
      const Eigen::Vector2d p(u(rng), u(rng));
      CHECK((t.to_source(t.to_roi(p)) - p).norm() < 1e-9);
    }
  }
}

TEST_CASE("flip_horizontal mirrors and reindexes") {
  const Image img = random_image(100, 40, 0.3, 5);
  LandmarkSet lms = knee_points(6, 100, 40);
  lms.points(0, 0) = 10.0;
  auto [fi, fl] = flip_horizontal(img, lms);
  CHECK(fi.pixels(3, 99) == img.pixels(3, 0));
  CHECK(fl.points(8, 0) == 89.0);  // ID 0 now sits in ID 8's slot
  CHECK(fl.points(8, 1) == lms.points(0, 1));
  CHECK(fl.points(15, 0) == 99.0 - lms.points(9, 0));
  auto [back_img, back_lms] = flip_horizontal(fi, fl);
  CHECK((back_img.pixels == img.pixels).all());
  CHECK((back_lms.points - lms.points).cwiseAbs().maxCoeff() < 1e-12);

  LandmarkSet single;
  single.points.resize(1, 2);
  single.points << 3.0, 4.0;
  CHECK(flip_horizontal(img, single).second.points(0, 0) == 96.0);

  LandmarkSet normalized = single;
  normalized.frame = Frame::kNormalized;
  CHECK_THROWS_AS(flip_horizontal(img, normalized), InvalidArgument);
}

TEST_CASE("flip permutation is an involution") {
  for (int m : {1, 2, 16}) {
    const auto p = flip_permutation(m);
    for (int i = 0; i < m; ++i) CHECK(p[size_t(p[size_t(i)])] == i);
  }
}

TEST_CASE("split_bilateral partitions the columns") {
  const Image even = random_image(200, 10, 0.3, 7);
  auto [l, r] = split_bilateral(even);
  CHECK(l.width() == 100);
  CHECK(r.width() == 100);
  CHECK(l.spacing == 0.3);
  const Image odd = random_image(201, 10, 0.3, 8);
  auto [l2, r2] = split_bilateral(odd);
  CHECK(l2.width() == 100);
  CHECK(r2.width() == 101);
  CHECK((hconcat(l2, r2).pixels == odd.pixels).all());
  CHECK_THROWS_AS(split_bilateral(Image::filled(1, 5, 1.0, 0.0f)), InvalidArgument);
}

TEST_CASE("normalized frame conversions") {
  const Image img = Image::filled(467, 300, 0.3, 0.0f);
  LandmarkSet p;
  p.points.resize(2, 2);
  p.points << 0.0, 0.0, 233.5, 150.0;
  const LandmarkSet n = to_normalized(p, img);
  CHECK(n.frame == Frame::kNormalized);
  CHECK(n.points(0, 0) == 0.0);
  CHECK(n.points(1, 0) == 0.5);
  CHECK(n.points(1, 1) == 0.5);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LandmarkSet r;
  r.frame = Frame::kNormalized;
  r.points.resize(200, 2);
  for (int i = 0; i < 200; ++i) r.points.row(i) << u(rng), u(rng);
  CHECK((to_normalized(to_pixels(r, img), img).points - r.points).cwiseAbs().maxCoeff() <= 1e-12);

  r.points(3, 0) = 1.5;
  CHECK_THROWS_AS(to_pixels(r, img), RangeError);
  CHECK_THROWS_AS(to_pixels(p, img), InvalidArgument);
}

TEST_CASE("annotation CSV round trip") {
  AnnotationRecord low;
  low.image = "knee_02.png";
  low.spacing = 0.15;
  low.patient_id = "9002";
  low.side = Side::kRight;
  low.kl = 0;
  low.center = Eigen::Vector2d(12.5, 99.0);
  low.landmarks.points = low.center->transpose();
  const std::vector<AnnotationRecord> records{full_record(), low};
  const std::string text = format_annotations(records);
  CHECK(parse_annotations(text) == records);

  const auto dir = std::filesystem::temp_directory_path() / "kneemark_ann_test";
  std::filesystem::create_directories(dir);
  write_annotations(records, dir / "a.csv");
  CHECK(read_annotations(dir / "a.csv") == records);

  auto excluded = records;
  excluded[1].exclude = true;
  CHECK(parse_annotations(format_annotations(excluded)) == excluded);
}

TEST_CASE("annotation parsing errors") {
  const std::string header = format_annotations({});
  CHECK(parse_annotations(header).empty());

  std::string text = format_annotations({full_record()});
  text.replace(text.find(",0.3,"), 5, ",0.3x,");
  CHECK_THROWS_AS(parse_annotations(text), ParseError);

  std::string bad = format_annotations({full_record()});
  bad.replace(bad.find(",L,"), 3, ",X,");
  try {
    parse_annotations(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
  }

  // Seven landmarks: x7..x15 and y7..y15 left empty.
  AnnotationRecord r = full_record();
  std::string seven = format_annotations({r});
  auto cells = split_csv_line(seven.substr(seven.find('\n') + 1, seven.size() - seven.find('\n') - 2));
  for (size_t i = 7 + 2 * 7; i < cells.size(); ++i) cells[i].clear();
  std::string row;
  for (size_t i = 0; i < cells.size(); ++i) row += (i ? "," : "") + cells[i];
  CHECK_THROWS_AS(parse_annotations(header + row + "\n"), SchemaError);
}

TEST_CASE("PNG round trip at 16 bits") {
  Image img = Image::filled(17, 9, 0.3, 0.0f);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 17; ++x) img.pixels(y, x) = float((x * 9 + y) % 65536) / 65535.0f * 100.0f;
  img.pixels = img.pixels.min(1.0f);
  const auto path = std::filesystem::temp_directory_path() / "kneemark_png_test.png";
  write_png16(img, path);
  const Image back = read_png(path, 0.3);
  CHECK(back.width() == 17);
  CHECK(back.height() == 9);
  CHECK((back.pixels - img.pixels).abs().maxCoeff() <= 0.5f / 65535.0f + 1e-7f);
  write_png8(img, path);
  CHECK((read_png(path, 0.3).pixels - img.pixels).abs().maxCoeff() <= 0.5f / 255.0f + 1e-6f);
  CHECK_THROWS_AS(read_png(std::filesystem::temp_directory_path() / "does_not_exist.png", 0.3), IoError);
}

}  // TEST_SUITE
