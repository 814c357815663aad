#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "kneemark/imaging.hpp"

namespace kneemark {

// Synthetic knee radiographs: a femoral and a tibial bone edge facing each
// other across a joint gap, with exact landmark positions.
struct PhantomSpec {
  int side = 480;         // image height in px; single knees are square, bilateral images are 2 * side wide
  double spacing = 0.3;   // mm per px
  int count = 16;         // images
  std::uint64_t seed = 0;
  bool bilateral = false;
  double noise_sigma = 0.03;
  double center_jitter_mm = 8.0;
  double tibial_half_width_mm = 38.0;
  double femoral_half_width_mm = 40.0;
  double joint_gap_mm = 6.0;  // at KL 0; narrows by 1 mm per grade, floor 2 mm

  // Throws ConfigError.
  void validate() const;
};

// Shape of one right knee in mm, relative to the image it is rendered into.
struct KneeGeometry {
  double cx = 0.0;  // horizontal position of the joint centre
  double cy = 0.0;  // vertical position of the joint gap middle
  double tibial_half_width = 38.0;
  double femoral_half_width = 40.0;
  double gap = 6.0;
  double spine_height = 1.5;
  double plateau_droop = 3.0;
  double notch_depth = 4.0;
  double condyle_curl = 6.0;
  double tilt = 0.0;  // mm of vertical change per unit of the contour parameter
  int kl = 0;
  std::array<double, 3> tibial_amp{};  // irregularity harmonics, scaled by KL
  std::array<double, 3> tibial_phase{};
  std::array<double, 3> femoral_amp{};
  std::array<double, 3> femoral_phase{};

  // Contours in mm as functions of u in [-1, 1] (left to right).
  double tibial_y(double u) const;
  double femoral_y(double u) const;
  // 16 landmarks in mm: 9 tibial at u = -0.95 + 1.9 k / 8, 7 femoral at u = -0.95 + 1.9 k / 6.
  Eigen::MatrixX2d landmarks_mm() const;
};

KneeGeometry draw_knee(const PhantomSpec& spec, std::uint64_t seed, double width_mm, double height_mm);

// Renders a right knee; noise comes from noise_seed.
Image render_knee(const KneeGeometry& knee, int width, int height, double spacing, double noise_sigma,
                  std::uint64_t noise_seed);

struct PhantomCorpus {
  std::vector<Image> images;
  std::vector<AnnotationRecord> records;  // one per knee; bilateral images have two
};

// Single-knee images: image i belongs to patient i / 2, right knees at even i
// and left knees (mirrored renderings) at odd i. Bilateral images put the right
// knee in the left half and the mirrored left knee in the right half, with
// landmarks in whole-image coordinates.
PhantomCorpus generate(const PhantomSpec& spec);
PhantomCorpus generate_bilateral(PhantomSpec spec);

// PNG images plus annotations.csv in dir.
void write_corpus(const PhantomCorpus& corpus, const std::filesystem::path& dir);

}  // namespace kneemark
