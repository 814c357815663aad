#include "kneemark/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "kneemark/annotations.hpp"
#include "kneemark/png_io.hpp"
#include "kneemark/random.hpp"

namespace kneemark {

namespace {

constexpr double kBackground = 0.18;
constexpr double kBone = 0.55;
constexpr double kRim = 0.3;
constexpr double kEdgeMm = 0.35;
constexpr int kMaxRedraws = 32;

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

double harmonics(double u, const std::array<double, 3>& amp, const std::array<double, 3>& phase) {
  double v = 0.0;
  for (size_t k = 0; k < amp.size(); ++k) v += amp[k] * std::sin(std::numbers::pi * double(k + 2) * u + phase[k]);
  return v;
}

// Bone occupancy and rim brightness for a bone bounded by an edge at y_edge
// that extends away from the joint in direction dir (+1 down, -1 up).
double bone_intensity(double x, double y, double cx, double half_width, double y_edge, double dir) {
  const double depth = (y - y_edge) * dir;
  const double inside_edge = sigmoid(depth / kEdgeMm);
  const double narrowing = 1.0 - 0.25 * std::clamp(depth / 40.0, 0.0, 1.0);
  const double inside_side = sigmoid((half_width * narrowing - std::abs(x - cx)) / kEdgeMm);
  const double occupancy = inside_edge * inside_side;
  const double rim = kRim * std::exp(-std::max(depth, 0.0) / 2.0);
  return occupancy * (kBone + rim);
}

bool inside(const Eigen::MatrixX2d& px, int width, int height) {
  return (px.col(0).array() >= 2.0).all() && (px.col(0).array() <= width - 3.0).all() &&
         (px.col(1).array() >= 2.0).all() && (px.col(1).array() <= height - 3.0).all();
}

// Bone edges must stay at least min_gap apart across the joint.
bool gap_open(const KneeGeometry& k, double min_gap) {
  const double half = std::min(k.tibial_half_width, k.femoral_half_width);
  for (int i = -100; i <= 100; ++i) {
    const double x = k.cx + half * i / 100.0;
    const double yt = k.tibial_y((x - k.cx) / k.tibial_half_width);
    const double yf = k.femoral_y((x - k.cx) / k.femoral_half_width);
    if (yt - yf < min_gap) return false;
  }
  return true;
}

AnnotationRecord make_record(const std::string& image, double spacing, const std::string& patient, Side side, int kl,
                             const Eigen::MatrixX2d& landmarks_px) {
  AnnotationRecord r;
  r.image = image;
  r.spacing = spacing;
  r.patient_id = patient;
  r.side = side;
  r.kl = kl;
  r.landmarks.points = landmarks_px;
  r.landmarks.frame = Frame::kPixel;
  r.center = landmarks_px.row(kTibialCenter).transpose();
  return r;
}

std::string numbered(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%04d", prefix, i);
  return buf;
}

struct RenderedKnee {
  Image image;
  Eigen::MatrixX2d landmarks_px;
  int kl;
};

// Draws until every landmark is inside the frame, then renders.
RenderedKnee make_knee(const PhantomSpec& spec, std::uint64_t knee_seed, int width, int height) {
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    const std::uint64_t seed = mix_seed({knee_seed, std::uint64_t(attempt)});
    const KneeGeometry knee = draw_knee(spec, seed, width * spec.spacing, height * spec.spacing);
    const Eigen::MatrixX2d px = knee.landmarks_mm() / spec.spacing;
    if (!inside(px, width, height) || !gap_open(knee, 1.0)) continue;
    return {render_knee(knee, width, height, spec.spacing, spec.noise_sigma, mix_seed({seed, 0x6e6f697365})), px,
            knee.kl};
  }
  throw RangeError("no valid phantom geometry after " + std::to_string(kMaxRedraws) + " draws");
}

}  // namespace

void PhantomSpec::validate() const {
  if (side < 64) throw ConfigError("phantom side must be >= 64 px");
  if (count < 1) throw ConfigError("phantom count must be >= 1");
  if (!(spacing > 0.0)) throw ConfigError("phantom spacing must be > 0");
  if (!(noise_sigma >= 0.0)) throw ConfigError("phantom noise sigma must be >= 0");
  if (!(tibial_half_width_mm > 0.0 && femoral_half_width_mm > 0.0 && joint_gap_mm > 0.0)) {
    throw ConfigError("phantom bone dimensions must be > 0");
  }
}

double KneeGeometry::tibial_y(double u) const {
  return cy + gap / 2.0 - spine_height * std::exp(-(u * u) / 0.01) + plateau_droop * std::pow(u, 4) + tilt * u +
         harmonics(u, tibial_amp, tibial_phase);
}

double KneeGeometry::femoral_y(double u) const {
  return cy - gap / 2.0 - notch_depth * std::exp(-(u * u) / 0.03) - condyle_curl * std::pow(u, 4) + tilt * u +
         harmonics(u, femoral_amp, femoral_phase);
}

Eigen::MatrixX2d KneeGeometry::landmarks_mm() const {
  Eigen::MatrixX2d pts(kKneeLandmarks, 2);
  for (int k = 0; k < kTibialLandmarks; ++k) {
    const double u = -0.95 + 1.9 * k / 8.0;
    pts.row(k) << cx + u * tibial_half_width, tibial_y(u);
  }
  for (int k = 0; k < kKneeLandmarks - kTibialLandmarks; ++k) {
    const double u = -0.95 + 1.9 * k / 6.0;
    pts.row(kTibialLandmarks + k) << cx + u * femoral_half_width, femoral_y(u);
  }
  return pts;
}

KneeGeometry draw_knee(const PhantomSpec& spec, std::uint64_t seed, double width_mm, double height_mm) {
  std::mt19937_64 rng(seed);
  KneeGeometry k;
  k.kl = std::uniform_int_distribution<int>(0, 4)(rng);
  k.cx = (width_mm - spec.spacing) / 2.0 + uniform_in(rng, -spec.center_jitter_mm, spec.center_jitter_mm);
  k.cy = (height_mm - spec.spacing) / 2.0 + uniform_in(rng, -spec.center_jitter_mm, spec.center_jitter_mm);
  k.tibial_half_width = spec.tibial_half_width_mm * uniform_in(rng, 0.9, 1.1);
  k.femoral_half_width = spec.femoral_half_width_mm * uniform_in(rng, 0.9, 1.1);
  k.gap = std::max(spec.joint_gap_mm - 1.0 * k.kl, 2.0) * uniform_in(rng, 0.85, 1.15);
  k.spine_height = uniform_in(rng, 1.0, 2.5);
  k.plateau_droop = uniform_in(rng, 2.0, 5.0);
  k.notch_depth = uniform_in(rng, 3.0, 6.0);
  k.condyle_curl = uniform_in(rng, 4.0, 9.0);
  k.tilt = uniform_in(rng, -2.0, 2.0);
  const double irregularity = 0.15 + 0.25 * k.kl;  // mm
  for (size_t h = 0; h < 3; ++h) {
    k.tibial_amp[h] = irregularity * uniform_in(rng, 0.0, 1.0) / double(h + 1);
    k.tibial_phase[h] = uniform_in(rng, 0.0, 2.0 * std::numbers::pi);
    k.femoral_amp[h] = irregularity * uniform_in(rng, 0.0, 1.0) / double(h + 1);
    k.femoral_phase[h] = uniform_in(rng, 0.0, 2.0 * std::numbers::pi);
  }
  return k;
}

Image render_knee(const KneeGeometry& knee, int width, int height, double spacing, double noise_sigma,
                  std::uint64_t noise_seed) {
  Image img = Image::filled(width, height, spacing, 0.0f);
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int x = 0; x < width; ++x) {
    const double xm = x * spacing;
    const double ut = std::clamp((xm - knee.cx) / knee.tibial_half_width, -1.0, 1.0);
    const double uf = std::clamp((xm - knee.cx) / knee.femoral_half_width, -1.0, 1.0);
    const double yt = knee.tibial_y(ut);
    const double yf = knee.femoral_y(uf);
    for (int y = 0; y < height; ++y) {
      const double ym = y * spacing;
      const double v = kBackground + bone_intensity(xm, ym, knee.cx, knee.tibial_half_width, yt, 1.0) +
                 bone_intensity(xm, ym, knee.cx, knee.femoral_half_width, yf, -1.0);
      img.pixels(y, x) = float(v);
    }
  }
  if (noise_sigma > 0.0) {
    for (Eigen::Index i = 0; i < img.pixels.size(); ++i) img.pixels.data()[i] += float(noise_sigma * noise(rng));
  }
  img.pixels = img.pixels.max(0.0f).min(1.0f);
  return img;
}

PhantomCorpus generate(const PhantomSpec& spec) {
  spec.validate();
  if (spec.bilateral) return generate_bilateral(spec);
  PhantomCorpus corpus;
  for (int i = 0; i < spec.count; ++i) {
    const int patient = i / 2;
    const Side side = i % 2 == 0 ? Side::kRight : Side::kLeft;
    RenderedKnee knee = make_knee(spec, mix_seed({spec.seed, std::uint64_t(i)}), spec.side, spec.side);
    LandmarkSet lms{knee.landmarks_px, Frame::kPixel};
    Image img = std::move(knee.image);
    if (side == Side::kLeft) std::tie(img, lms) = flip_horizontal(img, lms);
    img.id = numbered("phantom_", i) + ".png";
    corpus.records.push_back(make_record(img.id, spec.spacing, numbered("P", patient), side, knee.kl, lms.points));
    corpus.images.push_back(std::move(img));
  }
  return corpus;
}

PhantomCorpus generate_bilateral(PhantomSpec spec) {
  spec.bilateral = true;
  spec.validate();
  PhantomCorpus corpus;
  for (int i = 0; i < spec.count; ++i) {
    const std::uint64_t base = mix_seed({spec.seed, std::uint64_t(i), 0x62696c});
    RenderedKnee right = make_knee(spec, mix_seed({base, 0}), spec.side, spec.side);
    RenderedKnee left = make_knee(spec, mix_seed({base, 1}), spec.side, spec.side);
    auto [left_img, left_lms] = flip_horizontal(left.image, LandmarkSet{left.landmarks_px, Frame::kPixel});
    Image img = hconcat(right.image, left_img);
    img.id = numbered("bilateral_", i) + ".png";
    Eigen::MatrixX2d left_points = left_lms.points;
    left_points.col(0).array() += spec.side;
    const std::string patient = numbered("B", i);
    corpus.records.push_back(make_record(img.id, spec.spacing, patient, Side::kRight, right.kl, right.landmarks_px));
    corpus.records.push_back(make_record(img.id, spec.spacing, patient, Side::kLeft, left.kl, left_points));
    corpus.images.push_back(std::move(img));
  }
  return corpus;
}

void write_corpus(const PhantomCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& img : corpus.images) write_png16(img, dir / img.id);
  write_annotations(corpus.records, dir / "annotations.csv");
}

}  // namespace kneemark
