#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kneemark/ops.hpp"

namespace kneemark {

enum class BlockKind { kHmp, kBottleneck };

std::string to_string(BlockKind kind);
BlockKind parse_block_kind(const std::string& text);

struct ModelConfig {
  int width = 24;       // N
  int depth = 6;        // hourglass levels d
  int landmarks = 16;   // M
  int input_side = 256; // S
  double beta = 1.0;    // soft-argmax temperature
  double dropout = 0.25;
  BlockKind block = BlockKind::kHmp;

  // Throws ConfigError.
  void validate() const;
  int heatmap_side() const { return input_side / 4; }
  bool operator==(const ModelConfig&) const = default;
};

template <typename Scalar>
struct Parameter {
  std::string name;
  Var<Scalar> var;
  bool trainable = true;  // false for batch-norm running statistics
};

// Named parameter storage and the layer kinds the hourglass is built from.
template <typename Scalar>
class Layers {
 public:
  std::vector<Parameter<Scalar>>& parameters() { return params_; }
  const std::vector<Parameter<Scalar>>& parameters() const { return params_; }
  Parameter<Scalar>* find(const std::string& name);
  const Parameter<Scalar>* find(const std::string& name) const;
  void zero_grad();

 protected:
  struct Conv {
    int weight;
    int bias;
    int stride;
    int padding;
  };
  struct Norm {
    int gamma;
    int beta;
    int mean;
    int var;
  };
  struct Residual {
    BlockKind kind;
    std::vector<Norm> norms;
    std::vector<Conv> convs;
    std::optional<Conv> skip;
  };

  int add_param(const std::string& name, const Shape& shape, bool trainable);
  Conv make_conv(const std::string& name, int in, int out, int kernel, int stride, int padding);
  Norm make_norm(const std::string& name, int channels);
  Residual make_residual(const std::string& name, BlockKind kind, int in, int out);
  void init_conv(const Conv& conv, std::mt19937_64& rng);
  void init_residual(const Residual& block, std::mt19937_64& rng);

  Var<Scalar> run(const Conv& conv, const Var<Scalar>& x) const;
  Var<Scalar> run(const Norm& norm, const Var<Scalar>& x, Mode mode);
  Var<Scalar> run(const Residual& block, const Var<Scalar>& x, Mode mode);

  std::vector<Parameter<Scalar>> params_;
};

// One pre-activation residual block with its own parameters.
//   HMP:        three chained BN-ReLU-conv3x3 stages of widths m/2, m/4, m/4, concatenated
//   bottleneck: BN-ReLU-conv1x1 (m/2) -> BN-ReLU-conv3x3 (m/2) -> BN-ReLU-conv1x1 (m)
// plus the skip path, a 1x1 convolution when n != m.
template <typename Scalar>
class ResidualBlock : public Layers<Scalar> {
 public:
  ResidualBlock(BlockKind kind, int in, int out, std::uint64_t init_seed);
  Var<Scalar> forward(const Var<Scalar>& x, Mode mode);

 private:
  typename Layers<Scalar>::Residual block_;
};

// Hourglass network with a soft-argmax head.
//
//   entry:     conv7x7/2 (N) -> res(N -> 2N) -> maxpool -> res(2N -> 2N) -> res(2N -> 2N) -> res(2N -> 4N)
//   hourglass: level l: maxpool -> 3 x res -> level l+1 (or 3 x res at the deepest level) -> upsample,
//              summed with the level input
//   output:    2 x [dropout -> conv1x1 + BN + ReLU] -> conv1x1 (M) -> soft-argmax
//
// Residual blocks are pre-activation; the skip path is a 1x1 convolution when
// the channel count changes. Parameter names are stable and unique.
template <typename Scalar>
class HourglassModel : public Layers<Scalar> {
 public:
  HourglassModel(const ModelConfig& config, std::uint64_t init_seed);
  // Parameters are shared nodes; copies must go through clone().
  HourglassModel(const HourglassModel&) = delete;
  HourglassModel& operator=(const HourglassModel&) = delete;
  HourglassModel(HourglassModel&&) noexcept = default;
  HourglassModel& operator=(HourglassModel&&) noexcept = default;

  HourglassModel clone() const { return cast<Scalar>(); }

  const ModelConfig& config() const { return config_; }

  // batch: (B, 1, S, S). Returns landmark coordinates (B, M, 1, 2) in [0, 1].
  // The rng drives dropout and is ignored in eval mode. Train mode updates
  // batch-norm running statistics.
  Var<Scalar> forward(const Tensor<Scalar>& batch, Mode mode, std::mt19937_64* rng = nullptr);
  // Output of the final 1x1 convolution: (B, M, S/4, S/4).
  Var<Scalar> heatmaps(const Tensor<Scalar>& batch, Mode mode, std::mt19937_64* rng = nullptr);

  using Layers<Scalar>::parameters;
  using Layers<Scalar>::find;
  using Layers<Scalar>::zero_grad;

  // Names of the final convolution, re-initialized on transfer.
  static const std::vector<std::string>& head_parameter_names();
  // Re-draws the final convolution from the initializer seeded with seed.
  void reinitialize_head(std::uint64_t seed);

  template <typename Other>
  HourglassModel<Other> cast() const {
    HourglassModel<Other> out(config_, 0);
    for (size_t i = 0; i < this->params_.size(); ++i) {
      out.parameters()[i].var.mutable_value() = this->params_[i].var.value().template cast<Other>();
    }
    return out;
  }

 private:
  using typename Layers<Scalar>::Conv;
  using typename Layers<Scalar>::Norm;
  using typename Layers<Scalar>::Residual;
  using Layers<Scalar>::make_conv;
  using Layers<Scalar>::make_norm;
  using Layers<Scalar>::init_conv;
  using Layers<Scalar>::run;

  struct Level {
    std::vector<Residual> down;
    std::vector<Residual> bottom;  // deepest level only
  };

  Var<Scalar> run_level(size_t level, const Var<Scalar>& x, Mode mode);

  ModelConfig config_;
  Conv stem_{};
  std::vector<Residual> entry_;
  std::vector<Level> levels_;
  std::vector<Conv> mixer_convs_;
  std::vector<Norm> mixer_norms_;
  Conv head_{};
};

extern template class Layers<float>;
extern template class Layers<double>;
extern template class ResidualBlock<float>;
extern template class ResidualBlock<double>;
extern template class HourglassModel<float>;
extern template class HourglassModel<double>;

}  // namespace kneemark
