#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "kneemark/imaging.hpp"

namespace kneemark {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

// Probabilities and magnitudes of the training-time transforms. Geometric
// ranges are drawn uniformly and composed about the image centre.
struct AugmentationConfig {
  double p_geometric = 1.0;
  Range rotation_deg{-10.0, 10.0};
  Range translate_frac{-0.05, 0.05};  // fraction of the image side, per axis
  Range scale{0.9, 1.1};
  Range shear_deg{-5.0, 5.0};
  Range projective{-1e-4, 1e-4};  // bottom-row coefficients, per px

  double p_gamma = 0.5;
  Range gamma{0.5, 2.0};
  double p_salt_pepper = 0.3;
  double salt_pepper_max = 0.02;
  double p_median = 0.2;
  std::vector<int> median_kernels{3};
  double p_gaussian_blur = 0.2;
  std::vector<int> gaussian_kernels{3, 5};
  Range gaussian_sigma{0.5, 1.0};
  double p_noise = 0.5;
  double noise_sigma_max = 0.02;

  double p_cutout = 0.5;
  double cutout_fraction = 0.0;  // of the image area; 0 disables
  double jitter_px = 0.0;        // uniform target noise amplitude; 0 disables

  // Samples with more than this share of landmarks outside the frame are re-drawn.
  double max_out_of_frame = 0.25;

  // Throws ConfigError.
  void validate() const;
  // Every transform off.
  static AugmentationConfig none();
};

using Homography = Eigen::Matrix3d;

Homography sample_homography(const AugmentationConfig& config, std::mt19937_64& rng, int width, int height);

Eigen::Vector2d apply_homography(const Homography& h, const Eigen::Vector2d& p);

// Inverse-mapped bilinear warp with zero fill; landmarks follow the forward
// projective map. Throws DegenerateTransform if a landmark maps to infinity.
std::pair<Image, LandmarkSet> warp(const Image& img, const LandmarkSet& lms, const Homography& h);
LandmarkSet warp_landmarks(const LandmarkSet& lms, const Homography& h);

Image apply_gamma(const Image& img, double gamma);
Image salt_and_pepper(const Image& img, double fraction, std::mt19937_64& rng);
Image median_blur(const Image& img, int kernel);
Image gaussian_blur(const Image& img, int kernel, double sigma);
Image add_gaussian_noise(const Image& img, double sigma, std::mt19937_64& rng);

// Each photometric transform applied with its configured probability; output clipped to [0, 1].
Image photometric(const Image& img, const AugmentationConfig& config, std::mt19937_64& rng);

// Zeroes one square of side round(sqrt(fraction * area)) at a uniform position, clipped to the image.
Image cutout(const Image& img, double fraction, std::mt19937_64& rng);

// Adds U(-amplitude, amplitude) to every coordinate independently.
LandmarkSet jitter_targets(const LandmarkSet& lms, double amplitude_px, std::mt19937_64& rng);

struct AugmentedSample {
  Image image;
  LandmarkSet landmarks;
  Homography homography = Homography::Identity();
};

// Full training-time pipeline: geometric, photometric, cutout, target jitter.
AugmentedSample augment_sample(const Image& img, const LandmarkSet& lms, const AugmentationConfig& config,
                               std::mt19937_64& rng);

}  // namespace kneemark
