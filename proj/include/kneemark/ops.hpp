#pragma once

#include <random>
#include <vector>

#include "kneemark/autograd.hpp"

namespace kneemark {

enum class Mode { kTrain, kEval };

struct BatchNormOptions {
  double momentum = 0.1;
  double eps = 1e-5;
};

// Cross-correlation. x: (B, Cin, H, W), weight: (Cout, Cin, k, k), bias: (1, Cout, 1, 1).
// Output side is floor((in + 2 * padding - k) / stride) + 1.
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias, int stride,
                   int padding);

// Per-channel normalization. Train mode uses biased batch statistics for the
// output and folds the unbiased variance into the running estimate; eval mode
// uses the running estimate. gamma, beta, running_*: (1, C, 1, 1).
template <typename Scalar>
Var<Scalar> batchnorm2d(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                        Tensor<Scalar>& running_mean, Tensor<Scalar>& running_var, Mode mode,
                        const BatchNormOptions& options = {});

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x);

// Inverted dropout: survivors are scaled by 1 / (1 - p). Identity in eval mode or for p == 0.
template <typename Scalar>
Var<Scalar> dropout(const Var<Scalar>& x, double p, Mode mode, std::mt19937_64& rng);

// 2x2 max pooling with stride 2; the gradient goes to the first maximum.
template <typename Scalar>
Var<Scalar> maxpool2(const Var<Scalar>& x);

template <typename Scalar>
Var<Scalar> upsample_nearest2(const Var<Scalar>& x);

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& x, Scalar factor);

template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& parts);

// sum(x * weights) as a scalar; weights are constant.
template <typename Scalar>
Var<Scalar> weighted_sum(const Var<Scalar>& x, const Tensor<Scalar>& weights);

// Spatial softmax of beta * h per (sample, channel) followed by the expected
// normalized coordinate. h: (B, M, H, W) with row-major (j, i) storage where
// i indexes width. Returns (B, M, 1, 2) holding (sum_i i/W * phi, sum_j j/H * phi).
template <typename Scalar>
Var<Scalar> soft_argmax(const Var<Scalar>& h, double beta);

}  // namespace kneemark
