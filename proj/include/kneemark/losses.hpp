#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "kneemark/autograd.hpp"

namespace kneemark {

// Wing loss parameters. C links the logarithmic and linear branches so the
// loss is continuous at |d| = w: C = w - w * ln(1 + w / eps).
class WingParams {
 public:
  static WingParams from_w_c(double w, double c);
  static WingParams from_w_eps(double w, double eps);

  double w() const { return w_; }
  double eps() const { return eps_; }
  double c() const { return c_; }

  // Multiplier applied to (pred - target) before the wing function. Normalized
  // coordinates are measured in heatmap pixels when this equals the heatmap side.
  double scale = 1.0;

 private:
  WingParams(double w, double eps, double c) : w_(w), eps_(eps), c_(c) {}
  double w_;
  double eps_;
  double c_;
};

// Elementwise wing value for a single difference d, and its derivative.
double wing_value(double d, const WingParams& params);
double wing_derivative(double d, const WingParams& params);

// All losses reduce by the mean over every element (batch x landmarks x 2).
template <typename Scalar>
Var<Scalar> wing_loss(const Var<Scalar>& pred, const Tensor<Scalar>& target, const WingParams& params);
template <typename Scalar>
Var<Scalar> l1_loss(const Var<Scalar>& pred, const Tensor<Scalar>& target);
template <typename Scalar>
Var<Scalar> l2_loss(const Var<Scalar>& pred, const Tensor<Scalar>& target);
template <typename Scalar>
Var<Scalar> elastic_loss(const Var<Scalar>& pred, const Tensor<Scalar>& target);

enum class LossKind { kWing, kL1, kL2, kElastic };
std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& text);

struct LossConfig {
  LossKind kind = LossKind::kWing;
  WingParams wing = WingParams::from_w_c(15.0, 3.0);
};

template <typename Scalar>
using LossFn = std::function<Var<Scalar>(const Var<Scalar>&, const Tensor<Scalar>&)>;

template <typename Scalar>
LossFn<Scalar> make_loss(const LossConfig& config);

struct MixupDraw {
  double lambda = 1.0;
  double lambda_prime = 1.0;  // max(lambda, 1 - lambda)
  std::vector<int> permutation;
};

// lambda ~ Beta(alpha, alpha) via two gamma draws.
double sample_beta(double alpha, std::mt19937_64& rng);
MixupDraw draw_mixup(int batch, double alpha, std::mt19937_64& rng);

template <typename Scalar>
struct MixupBatch {
  Tensor<Scalar> mixed;    // lambda' x1 + (1 - lambda') x2
  Tensor<Scalar> targets1; // p1, unmixed
  Tensor<Scalar> targets2; // p2 = permuted p1
  MixupDraw draw;
};

// Mixes a batch with a permutation of itself. A batch of one keeps the
// identity permutation.
template <typename Scalar>
MixupBatch<Scalar> mixup_batch(const Tensor<Scalar>& inputs, const Tensor<Scalar>& targets, double alpha,
                               std::mt19937_64& rng);
template <typename Scalar>
MixupBatch<Scalar> mixup_batch(const Tensor<Scalar>& inputs, const Tensor<Scalar>& targets, MixupDraw draw);

// lambda' * L(p1, o1) + (1 - lambda') * L(p2, o_mixed)
template <typename Scalar>
Var<Scalar> mixup_criterion(const LossFn<Scalar>& base, const Var<Scalar>& o1, const Var<Scalar>& o_mixed,
                            const Tensor<Scalar>& p1, const Tensor<Scalar>& p2, double lambda_prime);

}  // namespace kneemark
