#pragma once

#include <vector>

#include "kneemark/model.hpp"

namespace kneemark {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // coupled: wd * param is added to the gradient
};

template <typename Scalar>
struct AdamState {
  std::vector<Tensor<Scalar>> first_moment;
  std::vector<Tensor<Scalar>> second_moment;
  long long step = 0;
};

// Bias-corrected Adam over the trainable entries of params. Parameters with
// no accumulated gradient are treated as having a zero gradient. Throws
// DivergenceError naming the first parameter whose gradient is not finite;
// nothing is updated in that case.
template <typename Scalar>
void adam_step(std::vector<Parameter<Scalar>>& params, AdamState<Scalar>& state, const AdamOptions& options);

}  // namespace kneemark
