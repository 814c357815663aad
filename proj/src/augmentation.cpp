#include "kneemark/augmentation.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "kneemark/random.hpp"

namespace kneemark {

namespace {

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("augmentation: ") + name + " must lie in [0, 1]");
}

void check_range(const Range& r, const char* name) {
  if (!(r.lo <= r.hi)) throw ConfigError(std::string("augmentation: range ") + name + " has lo > hi");
}

bool coin(std::mt19937_64& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

int pick_kernel(const std::vector<int>& kernels, std::mt19937_64& rng) {
  return kernels[std::uniform_int_distribution<size_t>(0, kernels.size() - 1)(rng)];
}

Eigen::Matrix3d translation(double tx, double ty) {
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  t(0, 2) = tx;
  t(1, 2) = ty;
  return t;
}

float sample_zero_fill(const PixelArray& px, double x, double y) {
  const int w = int(px.cols());
  const int h = int(px.rows());
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  if (fx0 < -1.0 || fy0 < -1.0 || fx0 > w - 1 || fy0 > h - 1) return 0.0f;
  const int x0 = int(fx0);
  const int y0 = int(fy0);
  auto at = [&](int xx, int yy) -> double {
    return (xx >= 0 && xx < w && yy >= 0 && yy < h) ? double(px(yy, xx)) : 0.0;
  };
  const double fx = x - fx0;
  const double fy = y - fy0;
  const double a = at(x0, y0);
  const double b = at(x0 + 1, y0);
  const double c = at(x0, y0 + 1);
  const double d = at(x0 + 1, y0 + 1);
  const double top = a + fx * (b - a);
  const double bottom = c + fx * (d - c);
  return float(top + fy * (bottom - top));
}

Image clip01(Image img) {
  img.pixels = img.pixels.max(0.0f).min(1.0f);
  return img;
}

float replicate(const PixelArray& px, int x, int y) {
  return px(std::clamp(y, 0, int(px.rows()) - 1), std::clamp(x, 0, int(px.cols()) - 1));
}

}  // namespace

void AugmentationConfig::validate() const {
  for (auto [p, name] : {std::pair{p_geometric, "p_geometric"}, {p_gamma, "p_gamma"},
                         {p_salt_pepper, "p_salt_pepper"}, {p_median, "p_median"},
                         {p_gaussian_blur, "p_gaussian_blur"}, {p_noise, "p_noise"}, {p_cutout, "p_cutout"},
                         {salt_pepper_max, "salt_pepper_max"}, {max_out_of_frame, "max_out_of_frame"}}) {
    check_probability(p, name);
  }
  for (auto [r, name] : {std::pair{rotation_deg, "rotation_deg"}, {translate_frac, "translate_frac"},
                         {scale, "scale"}, {shear_deg, "shear_deg"}, {projective, "projective"}, {gamma, "gamma"},
                         {gaussian_sigma, "gaussian_sigma"}}) {
    check_range(r, name);
  }
  if (!(scale.lo > 0.0)) throw ConfigError("augmentation: scale range must be positive");
  if (!(gamma.lo > 0.0)) throw ConfigError("augmentation: gamma range must be positive");
  if (!(gaussian_sigma.lo > 0.0)) throw ConfigError("augmentation: gaussian sigma must be positive");
  if (!(noise_sigma_max >= 0.0)) throw ConfigError("augmentation: noise sigma must be >= 0");
  if (!(cutout_fraction >= 0.0 && cutout_fraction < 1.0)) throw ConfigError("augmentation: cutout fraction must lie in [0, 1)");
  if (!(jitter_px >= 0.0)) throw ConfigError("augmentation: jitter amplitude must be >= 0");
  for (const auto* kernels : {&median_kernels, &gaussian_kernels}) {
    if (kernels->empty()) throw ConfigError("augmentation: kernel list is empty");
    for (int k : *kernels) {
      if (k < 1 || k % 2 == 0) throw ConfigError("augmentation: blur kernels must be odd and positive");
    }
  }
}

AugmentationConfig AugmentationConfig::none() {
  AugmentationConfig c;
  c.p_geometric = c.p_gamma = c.p_salt_pepper = c.p_median = c.p_gaussian_blur = c.p_noise = c.p_cutout = 0.0;
  c.rotation_deg = c.translate_frac = c.shear_deg = c.projective = Range{0.0, 0.0};
  c.scale = Range{1.0, 1.0};
  c.cutout_fraction = 0.0;
  c.jitter_px = 0.0;
  return c;
}

Eigen::Vector2d apply_homography(const Homography& h, const Eigen::Vector2d& p) {
  const Eigen::Vector3d q = h * p.homogeneous();
  if (!(std::abs(q.z()) > 1e-12) || !q.allFinite()) {
    throw DegenerateTransform("homography maps (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) +
                              ") to infinity");
  }
  return q.hnormalized();
}

Homography sample_homography(const AugmentationConfig& cfg, std::mt19937_64& rng, int width, int height) {
  const double cx = (width - 1) / 2.0;
  const double cy = (height - 1) / 2.0;
  constexpr double kDeg = std::numbers::pi / 180.0;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double angle = uniform_in(rng, cfg.rotation_deg.lo, cfg.rotation_deg.hi) * kDeg;
    const double tx = uniform_in(rng, cfg.translate_frac.lo, cfg.translate_frac.hi) * width;
    const double ty = uniform_in(rng, cfg.translate_frac.lo, cfg.translate_frac.hi) * height;
    const double s = uniform_in(rng, cfg.scale.lo, cfg.scale.hi);
    const double shear = uniform_in(rng, cfg.shear_deg.lo, cfg.shear_deg.hi) * kDeg;
    const double px = uniform_in(rng, cfg.projective.lo, cfg.projective.hi);
    const double py = uniform_in(rng, cfg.projective.lo, cfg.projective.hi);

    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    rotation.topLeftCorner<2, 2>() << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    Eigen::Matrix3d scaling = Eigen::Vector3d(s, s, 1.0).asDiagonal();
    Eigen::Matrix3d shearing = Eigen::Matrix3d::Identity();
    shearing(0, 1) = std::tan(shear);
    Eigen::Matrix3d perspective = Eigen::Matrix3d::Identity();
    perspective(2, 0) = px;
    perspective(2, 1) = py;

    const Homography h = translation(cx, cy) * translation(tx, ty) * rotation * scaling * shearing * perspective *
                         translation(-cx, -cy);
    bool ok = std::abs(h.determinant()) > 1e-8 && h.allFinite();
    for (const auto& corner : {Eigen::Vector2d(0, 0), Eigen::Vector2d(width - 1, 0), Eigen::Vector2d(0, height - 1),
                               Eigen::Vector2d(width - 1, height - 1)}) {
      ok = ok && (h * corner.homogeneous()).z() > 1e-6;
    }
    if (ok) return h;
  }
  return Homography::Identity();
}

LandmarkSet warp_landmarks(const LandmarkSet& lms, const Homography& h) {
  if (lms.frame != Frame::kPixel) throw InvalidArgument("warp: landmarks must be in the pixel frame");
  LandmarkSet out = lms;
  for (int i = 0; i < lms.size(); ++i) {
    out.points.row(i) = apply_homography(h, lms.points.row(i).transpose()).transpose();
  }
  return out;
}

std::pair<Image, LandmarkSet> warp(const Image& img, const LandmarkSet& lms, const Homography& h) {
  LandmarkSet moved = warp_landmarks(lms, h);
  const Homography inv = h.inverse();
  Image out = img;
  for (int v = 0; v < img.height(); ++v) {
    for (int u = 0; u < img.width(); ++u) {
      const Eigen::Vector3d q = inv * Eigen::Vector3d(u, v, 1.0);
      out.pixels(v, u) = q.z() > 1e-12 ? sample_zero_fill(img.pixels, q.x() / q.z(), q.y() / q.z()) : 0.0f;
    }
  }
  return {std::move(out), std::move(moved)};
}

Image apply_gamma(const Image& img, double gamma) {
  if (!(gamma > 0.0)) throw InvalidArgument("gamma must be > 0");
  if (gamma == 1.0) return img;
  Image out = img;
  out.pixels = img.pixels.pow(float(gamma));
  return clip01(std::move(out));
}

Image salt_and_pepper(const Image& img, double fraction, std::mt19937_64& rng) {
  Image out = img;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (Eigen::Index i = 0; i < out.pixels.size(); ++i) {
    if (uniform(rng) < fraction) out.pixels.data()[i] = uniform(rng) < 0.5 ? 0.0f : 1.0f;
  }
  return out;
}

Image median_blur(const Image& img, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw InvalidArgument("median blur kernel must be odd and positive");
  const int r = kernel / 2;
  Image out = img;
  std::vector<float> window(size_t(kernel) * size_t(kernel));
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      size_t k = 0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) window[k++] = replicate(img.pixels, x + dx, y + dy);
      }
      std::nth_element(window.begin(), window.begin() + long(window.size() / 2), window.end());
      out.pixels(y, x) = window[window.size() / 2];
    }
  }
  return out;
}

Image gaussian_blur(const Image& img, int kernel, double sigma) {
  if (kernel < 1 || kernel % 2 == 0) throw InvalidArgument("gaussian blur kernel must be odd and positive");
  if (!(sigma > 0.0)) throw InvalidArgument("gaussian blur sigma must be > 0");
  const int r = kernel / 2;
  std::vector<double> taps(static_cast<size_t>(kernel));
  double total = 0.0;
  for (int i = -r; i <= r; ++i) total += taps[size_t(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& t : taps) t /= total;
  PixelArray tmp(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += taps[size_t(i + r)] * replicate(img.pixels, x + i, y);
      tmp(y, x) = float(acc);
    }
  }
  Image out = img;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += taps[size_t(i + r)] * replicate(tmp, x, y + i);
      out.pixels(y, x) = float(acc);
    }
  }
  return clip01(std::move(out));
}

Image add_gaussian_noise(const Image& img, double sigma, std::mt19937_64& rng) {
  if (!(sigma >= 0.0)) throw InvalidArgument("noise sigma must be >= 0");
  if (sigma == 0.0) return img;
  std::normal_distribution<double> normal(0.0, sigma);
  Image out = img;
  for (Eigen::Index i = 0; i < out.pixels.size(); ++i) out.pixels.data()[i] += float(normal(rng));
  return clip01(std::move(out));
}

Image photometric(const Image& img, const AugmentationConfig& cfg, std::mt19937_64& rng) {
  Image out = img;
  if (coin(rng, cfg.p_gamma)) out = apply_gamma(out, uniform_in(rng, cfg.gamma.lo, cfg.gamma.hi));
  if (coin(rng, cfg.p_salt_pepper)) out = salt_and_pepper(out, uniform_in(rng, 0.0, cfg.salt_pepper_max), rng);
  if (coin(rng, cfg.p_median)) out = median_blur(out, pick_kernel(cfg.median_kernels, rng));
  if (coin(rng, cfg.p_gaussian_blur)) {
    const int k = pick_kernel(cfg.gaussian_kernels, rng);
    out = gaussian_blur(out, k, uniform_in(rng, cfg.gaussian_sigma.lo, cfg.gaussian_sigma.hi));
  }
  if (coin(rng, cfg.p_noise)) out = add_gaussian_noise(out, uniform_in(rng, 0.0, cfg.noise_sigma_max), rng);
  return clip01(std::move(out));
}

Image cutout(const Image& img, double fraction, std::mt19937_64& rng) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw InvalidArgument("cutout fraction must lie in [0, 1)");
  const int side = int(std::lround(std::sqrt(fraction * img.width() * img.height())));
  if (side == 0 || img.width() == 0 || img.height() == 0) return img;
  const int cx = std::uniform_int_distribution<int>(0, img.width() - 1)(rng);
  const int cy = std::uniform_int_distribution<int>(0, img.height() - 1)(rng);
  const int x0 = std::max(cx - side / 2, 0);
  const int y0 = std::max(cy - side / 2, 0);
  const int x1 = std::min(cx - side / 2 + side, img.width());
  const int y1 = std::min(cy - side / 2 + side, img.height());
  Image out = img;
  out.pixels.block(y0, x0, y1 - y0, x1 - x0).setZero();
  return out;
}

LandmarkSet jitter_targets(const LandmarkSet& lms, double amplitude_px, std::mt19937_64& rng) {
  if (lms.frame != Frame::kPixel) throw InvalidArgument("jitter_targets: landmarks must be in the pixel frame");
  if (amplitude_px == 0.0) return lms;
  LandmarkSet out = lms;
  for (int i = 0; i < out.size(); ++i) {
    out.points(i, 0) += uniform_in(rng, -amplitude_px, amplitude_px);
    out.points(i, 1) += uniform_in(rng, -amplitude_px, amplitude_px);
  }
  return out;
}

AugmentedSample augment_sample(const Image& img, const LandmarkSet& lms, const AugmentationConfig& cfg,
                               std::mt19937_64& rng) {
  AugmentedSample sample{img, lms, Homography::Identity()};
  if (coin(rng, cfg.p_geometric)) {
    const int allowed_out = int(std::floor(cfg.max_out_of_frame * lms.size()));
    for (int attempt = 0; attempt < 10; ++attempt) {
      const Homography h = sample_homography(cfg, rng, img.width(), img.height());
      const LandmarkSet moved = warp_landmarks(lms, h);
      int outside = 0;
      for (int i = 0; i < moved.size(); ++i) {
        const double x = moved.points(i, 0);
        const double y = moved.points(i, 1);
        if (x < 0.0 || y < 0.0 || x > img.width() - 1 || y > img.height() - 1) ++outside;
      }
      if (outside <= allowed_out) {
        auto [warped, pts] = warp(img, lms, h);
        sample = {std::move(warped), std::move(pts), h};
        break;
      }
    }
  }
  sample.image = photometric(sample.image, cfg, rng);
  if (cfg.cutout_fraction > 0.0 && coin(rng, cfg.p_cutout)) {
    sample.image = cutout(sample.image, cfg.cutout_fraction, rng);
  }
  sample.landmarks = jitter_targets(sample.landmarks, cfg.jitter_px, rng);
  return sample;
}

}  // namespace kneemark
