#include "kneemark/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kneemark/ops.hpp"

namespace kneemark {

WingParams WingParams::from_w_c(double w, double c) {
  if (!(w > 0.0)) throw ConfigError("wing w must be > 0");
  if (!(c < w)) throw ConfigError("wing C must be < w for a positive curvature eps");
  const double eps = w / std::expm1((w - c) / w);
  return WingParams(w, eps, c);
}

WingParams WingParams::from_w_eps(double w, double eps) {
  if (!(w > 0.0) || !(eps > 0.0)) throw ConfigError("wing w and eps must be > 0");
  return WingParams(w, eps, w - w * std::log1p(w / eps));
}

double wing_value(double d, const WingParams& p) {
  const double a = std::abs(d);
  return a < p.w() ? p.w() * std::log1p(a / p.eps()) : a - p.c();
}

double wing_derivative(double d, const WingParams& p) {
  const double a = std::abs(d);
  const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
  return a < p.w() ? sign * p.w() / (p.eps() + a) : sign;
}

namespace {

template <typename Scalar>
void check_same_shape(const Var<Scalar>& pred, const Tensor<Scalar>& target, const char* what) {
  if (!(pred.shape() == target.shape())) {
    throw ShapeError(std::string(what) + ": prediction " + pred.shape().str() + " vs target " +
                     target.shape().str());
  }
}

// Mean of f(pred - target) with derivative df.
template <typename Scalar, typename F, typename DF>
Var<Scalar> elementwise_mean(const Var<Scalar>& pred, const Tensor<Scalar>& target, F f, DF df) {
  const auto& pv = pred.value().data();
  const auto& tv = target.data();
  const Eigen::Index n = pv.size();
  Scalar total = 0;
  for (Eigen::Index i = 0; i < n; ++i) total += Scalar(f(double(pv[i]) - double(tv[i])));
  Tensor<Scalar> out = Tensor<Scalar>::constant(Shape{}, total / Scalar(n));
  return make_result<Scalar>(std::move(out), {pred}, [target, df, n](Node<Scalar>& self) {
    auto& pn = *self.parents[0];
    auto& g = pn.grad_data();
    const Scalar upstream = self.grad.data()[0] / Scalar(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      g[i] += upstream * Scalar(df(double(pn.value.data()[i]) - double(target.data()[i])));
    }
  });
}

}  // namespace

template <typename Scalar>
Var<Scalar> wing_loss(const Var<Scalar>& pred, const Tensor<Scalar>& target, const WingParams& params) {
  check_same_shape(pred, target, "wing_loss");
  const double s = params.scale;
  return elementwise_mean<Scalar>(
      pred, target, [params, s](double d) { return wing_value(s * d, params); },
      [params, s](double d) { return s * wing_derivative(s * d, params); });
}

template <typename Scalar>
Var<Scalar> l1_loss(const Var<Scalar>& pred, const Tensor<Scalar>& target) {
  check_same_shape(pred, target, "l1_loss");
  return elementwise_mean<Scalar>(
      pred, target, [](double d) { return std::abs(d); },
      [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); });
}

template <typename Scalar>
Var<Scalar> l2_loss(const Var<Scalar>& pred, const Tensor<Scalar>& target) {
  check_same_shape(pred, target, "l2_loss");
  return elementwise_mean<Scalar>(
      pred, target, [](double d) { return d * d; }, [](double d) { return 2.0 * d; });
}

template <typename Scalar>
Var<Scalar> elastic_loss(const Var<Scalar>& pred, const Tensor<Scalar>& target) {
  check_same_shape(pred, target, "elastic_loss");
  return elementwise_mean<Scalar>(
      pred, target, [](double d) { return d * d + std::abs(d); },
      [](double d) { return 2.0 * d + (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)); });
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kWing: return "wing";
    case LossKind::kL1: return "l1";
    case LossKind::kL2: return "l2";
    case LossKind::kElastic: return "elastic";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& text) {
  if (text == "wing") return LossKind::kWing;
  if (text == "l1") return LossKind::kL1;
  if (text == "l2") return LossKind::kL2;
  if (text == "elastic") return LossKind::kElastic;
  throw ConfigError("unknown loss '" + text + "' (expected wing, l1, l2 or elastic)");
}

template <typename Scalar>
LossFn<Scalar> make_loss(const LossConfig& config) {
  switch (config.kind) {
    case LossKind::kWing:
      return [wing = config.wing](const Var<Scalar>& p, const Tensor<Scalar>& t) { return wing_loss(p, t, wing); };
    case LossKind::kL1: return [](const Var<Scalar>& p, const Tensor<Scalar>& t) { return l1_loss(p, t); };
    case LossKind::kL2: return [](const Var<Scalar>& p, const Tensor<Scalar>& t) { return l2_loss(p, t); };
    case LossKind::kElastic:
      return [](const Var<Scalar>& p, const Tensor<Scalar>& t) { return elastic_loss(p, t); };
  }
  throw ConfigError("unhandled loss kind");
}

double sample_beta(double alpha, std::mt19937_64& rng) {
  if (!(alpha > 0.0)) throw ConfigError("mixup alpha must be > 0");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double x = gamma(rng);
  const double y = gamma(rng);
  // Both draws underflowing to zero happens for tiny alpha; split evenly.
  if (x + y == 0.0) return 0.5;
  return x / (x + y);
}

MixupDraw draw_mixup(int batch, double alpha, std::mt19937_64& rng) {
  MixupDraw draw;
  draw.lambda = sample_beta(alpha, rng);
  draw.lambda_prime = std::max(draw.lambda, 1.0 - draw.lambda);
  draw.permutation.resize(size_t(batch));
  std::iota(draw.permutation.begin(), draw.permutation.end(), 0);
  if (batch > 1) std::shuffle(draw.permutation.begin(), draw.permutation.end(), rng);
  return draw;
}

template <typename Scalar>
MixupBatch<Scalar> mixup_batch(const Tensor<Scalar>& inputs, const Tensor<Scalar>& targets, MixupDraw draw) {
  const int batch = inputs.shape().n;
  if (targets.shape().n != batch) throw ShapeError("mixup_batch: inputs and targets disagree on batch size");
  if (int(draw.permutation.size()) != batch) throw ShapeError("mixup_batch: permutation length != batch size");
  MixupBatch<Scalar> out{inputs, targets, targets, std::move(draw)};
  const Scalar lp = Scalar(out.draw.lambda_prime);
  const Eigen::Index in_len = inputs.size() / std::max(batch, 1);
  const Eigen::Index tg_len = targets.size() / std::max(batch, 1);
  using Map = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  using CMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  for (int n = 0; n < batch; ++n) {
    const int m = out.draw.permutation[size_t(n)];
    // same as lp * x1 + (1 - lp) * x2, but exact when x1 == x2
    const CMap x1(inputs.sample(n), in_len);
    Map(out.mixed.sample(n), in_len) = x1 + (Scalar(1) - lp) * (CMap(inputs.sample(m), in_len) - x1);
    Map(out.targets2.sample(n), tg_len) = CMap(targets.sample(m), tg_len);
  }
  return out;
}

template <typename Scalar>
MixupBatch<Scalar> mixup_batch(const Tensor<Scalar>& inputs, const Tensor<Scalar>& targets, double alpha,
                               std::mt19937_64& rng) {
  return mixup_batch(inputs, targets, draw_mixup(inputs.shape().n, alpha, rng));
}

template <typename Scalar>
Var<Scalar> mixup_criterion(const LossFn<Scalar>& base, const Var<Scalar>& o1, const Var<Scalar>& o_mixed,
                            const Tensor<Scalar>& p1, const Tensor<Scalar>& p2, double lambda_prime) {
  if (!(lambda_prime >= 0.5 && lambda_prime <= 1.0)) throw InvalidArgument("mixup_criterion: lambda' must lie in [0.5, 1]");
  const Scalar lp = Scalar(lambda_prime);
  return add(scale(base(o1, p1), lp), scale(base(o_mixed, p2), Scalar(1) - lp));
}

#define KNEEMARK_INSTANTIATE_LOSSES(T)                                                                          \
  template Var<T> wing_loss<T>(const Var<T>&, const Tensor<T>&, const WingParams&);                             \
  template Var<T> l1_loss<T>(const Var<T>&, const Tensor<T>&);                                                  \
  template Var<T> l2_loss<T>(const Var<T>&, const Tensor<T>&);                                                  \
  template Var<T> elastic_loss<T>(const Var<T>&, const Tensor<T>&);                                             \
  template LossFn<T> make_loss<T>(const LossConfig&);                                                           \
  template MixupBatch<T> mixup_batch<T>(const Tensor<T>&, const Tensor<T>&, MixupDraw);                         \
  template MixupBatch<T> mixup_batch<T>(const Tensor<T>&, const Tensor<T>&, double, std::mt19937_64&);          \
  template Var<T> mixup_criterion<T>(const LossFn<T>&, const Var<T>&, const Var<T>&, const Tensor<T>&,          \
                                     const Tensor<T>&, double);

KNEEMARK_INSTANTIATE_LOSSES(float)
KNEEMARK_INSTANTIATE_LOSSES(double)

}  // namespace kneemark
