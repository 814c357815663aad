#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kneemark/augmentation.hpp"
#include "kneemark/evaluation.hpp"
#include "kneemark/losses.hpp"
#include "kneemark/model.hpp"
#include "kneemark/optim.hpp"
#include "kneemark/samples.hpp"

namespace kneemark {

struct TrainConfig {
  ModelConfig model;
  LossConfig loss;
  // Measure wing differences in heatmap pixels (scale = S / 4) instead of normalized units.
  bool wing_heatmap_units = true;
  AugmentationConfig augmentation;
  bool augment = true;
  bool mixup = false;
  double mixup_alpha = 0.75;
  double lr = 1e-3;
  int batch = 16;
  double weight_decay = 0.0;
  int epochs = 500;
  std::uint64_t seed = 0;
  Stage stage = Stage::kLandmarks;
  SamplingOptions sampling;
  std::string selection_subset = "ablation";  // M = 1 models always use landmark 0

  // Throws ConfigError.
  void validate() const;
  LossConfig effective_loss() const;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  std::array<double, 4> pck{};  // at 1, 1.5, 2, 2.5 mm
  double outliers = 0.0;
  double selection() const { return (pck[0] + pck[1] + pck[2] + pck[3]) / 4.0; }
};

struct TrainResult {
  HourglassModel<float> best;
  std::vector<EpochStats> history;
  int best_epoch = 0;
  bool diverged = false;
  std::string divergence;  // message of the DivergenceError that stopped training
};

// Called after every epoch with the stats and the current model; returning
// false stops training after that epoch.
using EpochCallback = std::function<bool(const EpochStats&, const HourglassModel<float>&)>;

// Loss of one batch in train mode. With a MixUp draw the batch is also mixed
// and the criterion combines both forward passes; the unmixed pass runs first
// so the dropout stream matches the plain path.
Var<float> batch_loss(HourglassModel<float>& model, const Tensor<float>& inputs, const Tensor<float>& targets,
                      const LossFn<float>& loss, std::mt19937_64& dropout_rng, const MixupDraw* mixup = nullptr);

// Eval-mode predictions in the pixel frame of each sample's input.
std::vector<LandmarkSet> predict(HourglassModel<float>& model, const std::vector<Sample>& samples, int batch = 16);
// Radial errors in source-image mm after mapping predictions back.
ErrorMatrix source_errors(const std::vector<Sample>& samples, const std::vector<LandmarkSet>& predictions);

// Trains from model, evaluating on validation after every epoch (on the
// un-augmented training samples when validation is empty) and keeping the
// parameters with the best mean PCK. A non-finite loss or gradient stops
// training and returns the best model so far with diverged set.
TrainResult train(HourglassModel<float> model, const std::vector<Sample>& training, const std::vector<Sample>& validation,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

// Copies every parameter except the final convolution from source into a
// model built for config; the final convolution is initialized from head_seed.
// Throws CheckpointError(kIncompatible) when N, d, S or the block kind differ.
HourglassModel<float> transfer_init(const ModelConfig& config, const HourglassModel<float>& source,
                                    std::uint64_t head_seed);

std::string history_csv(const std::vector<EpochStats>& history);

}  // namespace kneemark
