#include "kneemark/optim.hpp"

#include <cmath>

namespace kneemark {

template <typename Scalar>
void adam_step(std::vector<Parameter<Scalar>>& params, AdamState<Scalar>& state, const AdamOptions& options) {
  if (!(options.lr >= 0.0)) throw ConfigError("adam: learning rate must be >= 0");
  if (!(options.weight_decay >= 0.0)) throw ConfigError("adam: weight decay must be >= 0");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.var.shape());
      state.second_moment.emplace_back(p.var.shape());
    }
  }
  if (state.first_moment.size() != params.size()) throw ShapeError("adam: optimizer state does not match parameters");

  for (const auto& p : params) {
    if (p.trainable && p.var.has_grad() && !p.var.grad().all_finite()) {
      throw DivergenceError("non-finite gradient for parameter " + p.name);
    }
  }

  ++state.step;
  const double t = double(state.step);
  const Scalar b1 = Scalar(options.beta1);
  const Scalar b2 = Scalar(options.beta2);
  const Scalar correction1 = Scalar(1.0 - std::pow(options.beta1, t));
  const Scalar correction2_sqrt = Scalar(std::sqrt(1.0 - std::pow(options.beta2, t)));
  const Scalar step_size = Scalar(options.lr) / correction1;
  const Scalar wd = Scalar(options.weight_decay);
  const Scalar eps = Scalar(options.eps);

  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable) continue;
    auto& value = p.var.mutable_value().data();
    if (state.first_moment[i].size() != value.size()) {
      throw ShapeError("adam: moment shape mismatch for " + p.name);
    }
    typename Tensor<Scalar>::Array grad =
        p.var.has_grad() ? p.var.grad().data() : Tensor<Scalar>::Array::Zero(value.size());
    if (wd != Scalar(0)) grad += wd * value;
    auto& m = state.first_moment[i].data();
    auto& v = state.second_moment[i].data();
    m = b1 * m + (Scalar(1) - b1) * grad;
    v = b2 * v + (Scalar(1) - b2) * grad.square();
    value -= step_size * m / (v.sqrt() / correction2_sqrt + eps);
  }
}

template void adam_step<float>(std::vector<Parameter<float>>&, AdamState<float>&, const AdamOptions&);
template void adam_step<double>(std::vector<Parameter<double>>&, AdamState<double>&, const AdamOptions&);

}  // namespace kneemark
