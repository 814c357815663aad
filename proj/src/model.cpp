#include "kneemark/model.hpp"

#include <cmath>

namespace kneemark {

std::string to_string(BlockKind kind) { return kind == BlockKind::kHmp ? "hmp" : "bottleneck"; }

BlockKind parse_block_kind(const std::string& text) {
  if (text == "hmp") return BlockKind::kHmp;
  if (text == "bottleneck") return BlockKind::kBottleneck;
  throw ConfigError("unknown block kind '" + text + "' (expected hmp or bottleneck)");
}

void ModelConfig::validate() const {
  if (width < 1) throw ConfigError("model width N must be >= 1");
  if (depth < 1) throw ConfigError("hourglass depth d must be >= 1");
  if (landmarks < 1) throw ConfigError("landmark count M must be >= 1");
  if (!(beta > 0.0)) throw ConfigError("soft-argmax beta must be > 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  const long long divisor = 1LL << (depth + 2);
  if (input_side < divisor || input_side % divisor != 0) {
    throw ConfigError("input side " + std::to_string(input_side) + " is not divisible by 2^(d+2) = " +
                      std::to_string(divisor));
  }
  // Residual outputs are 2N and 4N channels.
  const int split = block == BlockKind::kHmp ? 4 : 2;
  if ((2 * width) % split != 0) {
    throw ConfigError("residual block output width " + std::to_string(2 * width) + " is not divisible by " +
                      std::to_string(split));
  }
}

template <typename Scalar>
HourglassModel<Scalar>::HourglassModel(const ModelConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  const int n = config_.width;
  stem_ = make_conv("entry.conv", 1, n, 7, 2, 3);
  entry_.push_back(this->make_residual("entry.res0", config_.block, n, 2 * n));
  entry_.push_back(this->make_residual("entry.res1", config_.block, 2 * n, 2 * n));
  entry_.push_back(this->make_residual("entry.res2", config_.block, 2 * n, 2 * n));
  entry_.push_back(this->make_residual("entry.res3", config_.block, 2 * n, 4 * n));

  const int hg = 4 * n;
  for (int l = 0; l < config_.depth; ++l) {
    Level level;
    const std::string prefix = "hg.level" + std::to_string(l);
    for (int i = 0; i < 3; ++i) level.down.push_back(this->make_residual(prefix + ".res" + std::to_string(i), config_.block, hg, hg));
    if (l == config_.depth - 1) {
      for (int i = 0; i < 3; ++i) {
        level.bottom.push_back(this->make_residual(prefix + ".bottom" + std::to_string(i), config_.block, hg, hg));
      }
    }
    levels_.push_back(std::move(level));
  }

  for (int i = 0; i < 2; ++i) {
    const std::string prefix = "out.mix" + std::to_string(i);
    mixer_convs_.push_back(make_conv(prefix + ".conv", hg, hg, 1, 1, 0));
    mixer_norms_.push_back(make_norm(prefix + ".bn", hg));
  }
  head_ = make_conv("out.head", hg, config_.landmarks, 1, 1, 0);

  std::mt19937_64 rng(init_seed);
  init_conv(stem_, rng);
  for (const auto& r : entry_) this->init_residual(r, rng);
  for (const auto& level : levels_) {
    for (const auto& r : level.down) this->init_residual(r, rng);
    for (const auto& r : level.bottom) this->init_residual(r, rng);
  }
  for (const auto& c : mixer_convs_) init_conv(c, rng);
  init_conv(head_, rng);
}

template <typename Scalar>
int Layers<Scalar>::add_param(const std::string& name, const Shape& shape, bool trainable) {
  params_.push_back({name, Var<Scalar>::leaf(Tensor<Scalar>(shape), trainable), trainable});
  return static_cast<int>(params_.size()) - 1;
}

template <typename Scalar>
typename Layers<Scalar>::Conv Layers<Scalar>::make_conv(const std::string& name, int in, int out,
                                                                       int kernel, int stride, int padding) {
  Conv conv{};
  conv.weight = add_param(name + ".weight", Shape{out, in, kernel, kernel}, true);
  conv.bias = add_param(name + ".bias", Shape{1, out, 1, 1}, true);
  conv.stride = stride;
  conv.padding = padding;
  return conv;
}

template <typename Scalar>
typename Layers<Scalar>::Norm Layers<Scalar>::make_norm(const std::string& name, int channels) {
  Norm norm{};
  const Shape s{1, channels, 1, 1};
  norm.gamma = add_param(name + ".gamma", s, true);
  norm.beta = add_param(name + ".beta", s, true);
  norm.mean = add_param(name + ".running_mean", s, false);
  norm.var = add_param(name + ".running_var", s, false);
  params_[size_t(norm.gamma)].var.mutable_value().data().setOnes();
  params_[size_t(norm.var)].var.mutable_value().data().setOnes();
  return norm;
}

template <typename Scalar>
typename Layers<Scalar>::Residual Layers<Scalar>::make_residual(const std::string& name, BlockKind kind, int in,
                                                               int out) {
  Residual r;
  r.kind = kind;
  if (r.kind == BlockKind::kHmp) {
    if (out % 4 != 0) throw ConfigError("HMP block output width " + std::to_string(out) + " is not divisible by 4");
    const int widths[3] = {out / 2, out / 4, out / 4};
    int prev = in;
    for (int s = 0; s < 3; ++s) {
      r.norms.push_back(make_norm(name + ".bn" + std::to_string(s), prev));
      r.convs.push_back(make_conv(name + ".conv" + std::to_string(s), prev, widths[s], 3, 1, 1));
      prev = widths[s];
    }
  } else {
    if (out % 2 != 0) throw ConfigError("bottleneck output width " + std::to_string(out) + " is odd");
    const int mid = out / 2;
    r.norms.push_back(make_norm(name + ".bn0", in));
    r.convs.push_back(make_conv(name + ".conv0", in, mid, 1, 1, 0));
    r.norms.push_back(make_norm(name + ".bn1", mid));
    r.convs.push_back(make_conv(name + ".conv1", mid, mid, 3, 1, 1));
    r.norms.push_back(make_norm(name + ".bn2", mid));
    r.convs.push_back(make_conv(name + ".conv2", mid, out, 1, 1, 0));
  }
  if (in != out) r.skip = make_conv(name + ".skip", in, out, 1, 1, 0);
  return r;
}

template <typename Scalar>
void Layers<Scalar>::init_conv(const Conv& conv, std::mt19937_64& rng) {
  auto& w = params_[size_t(conv.weight)].var.mutable_value();
  auto& b = params_[size_t(conv.bias)].var.mutable_value();
  const Shape& s = w.shape();
  const double bound = 1.0 / std::sqrt(double(s.c) * s.h * s.w);
  std::uniform_real_distribution<double> uniform(-bound, bound);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = Scalar(uniform(rng));
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = Scalar(uniform(rng));
}

template <typename Scalar>
Var<Scalar> Layers<Scalar>::run(const Conv& conv, const Var<Scalar>& x) const {
  return conv2d(x, params_[size_t(conv.weight)].var, params_[size_t(conv.bias)].var, conv.stride, conv.padding);
}

template <typename Scalar>
Var<Scalar> Layers<Scalar>::run(const Norm& norm, const Var<Scalar>& x, Mode mode) {
  return batchnorm2d(x, params_[size_t(norm.gamma)].var, params_[size_t(norm.beta)].var,
                     params_[size_t(norm.mean)].var.mutable_value(), params_[size_t(norm.var)].var.mutable_value(),
                     mode);
}

template <typename Scalar>
Var<Scalar> Layers<Scalar>::run(const Residual& block, const Var<Scalar>& x, Mode mode) {
  Var<Scalar> main;
  if (block.kind == BlockKind::kHmp) {
    std::vector<Var<Scalar>> stages;
    Var<Scalar> h = x;
    for (size_t s = 0; s < 3; ++s) {
      h = run(block.convs[s], relu(run(block.norms[s], h, mode)));
      stages.push_back(h);
    }
    main = concat_channels(stages);
  } else {
    main = x;
    for (size_t s = 0; s < 3; ++s) main = run(block.convs[s], relu(run(block.norms[s], main, mode)));
  }
  return add(main, block.skip ? run(*block.skip, x) : x);
}

template <typename Scalar>
void Layers<Scalar>::init_residual(const Residual& r, std::mt19937_64& rng) {
  for (const auto& conv : r.convs) init_conv(conv, rng);
  if (r.skip) init_conv(*r.skip, rng);
}

template <typename Scalar>
ResidualBlock<Scalar>::ResidualBlock(BlockKind kind, int in, int out, std::uint64_t init_seed) {
  block_ = this->make_residual("block", kind, in, out);
  std::mt19937_64 rng(init_seed);
  this->init_residual(block_, rng);
}

template <typename Scalar>
Var<Scalar> ResidualBlock<Scalar>::forward(const Var<Scalar>& x, Mode mode) {
  return this->run(block_, x, mode);
}

template <typename Scalar>
Var<Scalar> HourglassModel<Scalar>::run_level(size_t level, const Var<Scalar>& x, Mode mode) {
  Var<Scalar> low = maxpool2(x);
  for (const auto& r : levels_[level].down) low = run(r, low, mode);
  if (level + 1 < levels_.size()) {
    low = run_level(level + 1, low, mode);
  } else {
    for (const auto& r : levels_[level].bottom) low = run(r, low, mode);
  }
  return add(upsample_nearest2(low), x);
}

template <typename Scalar>
Var<Scalar> HourglassModel<Scalar>::heatmaps(const Tensor<Scalar>& batch, Mode mode, std::mt19937_64* rng) {
  const Shape& s = batch.shape();
  if (s.c != 1 || s.h != config_.input_side || s.w != config_.input_side) {
    throw ShapeError("model input must be (B, 1, " + std::to_string(config_.input_side) + ", " +
                     std::to_string(config_.input_side) + "), got " + s.str());
  }
  if (mode == Mode::kTrain && config_.dropout > 0.0 && rng == nullptr) {
    throw InvalidArgument("train-mode forward with dropout needs an rng");
  }
  Var<Scalar> h = run(stem_, Var<Scalar>::constant(batch));
  h = run(entry_[0], h, mode);
  h = maxpool2(h);
  for (size_t i = 1; i < entry_.size(); ++i) h = run(entry_[i], h, mode);
  h = run_level(0, h, mode);
  for (size_t i = 0; i < mixer_convs_.size(); ++i) {
    if (mode == Mode::kTrain && config_.dropout > 0.0) h = dropout(h, config_.dropout, mode, *rng);
    h = relu(run(mixer_norms_[i], run(mixer_convs_[i], h), mode));
  }
  return run(head_, h);
}

template <typename Scalar>
Var<Scalar> HourglassModel<Scalar>::forward(const Tensor<Scalar>& batch, Mode mode, std::mt19937_64* rng) {
  return soft_argmax(heatmaps(batch, mode, rng), config_.beta);
}

template <typename Scalar>
Parameter<Scalar>* Layers<Scalar>::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename Scalar>
const Parameter<Scalar>* Layers<Scalar>::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename Scalar>
void Layers<Scalar>::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

template <typename Scalar>
const std::vector<std::string>& HourglassModel<Scalar>::head_parameter_names() {
  static const std::vector<std::string> names{"out.head.weight", "out.head.bias"};
  return names;
}

template <typename Scalar>
void HourglassModel<Scalar>::reinitialize_head(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  init_conv(head_, rng);
}

template class Layers<float>;
template class Layers<double>;
template class ResidualBlock<float>;
template class ResidualBlock<double>;
template class HourglassModel<float>;
template class HourglassModel<double>;

}  // namespace kneemark
