#include "kneemark/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "kneemark/annotations.hpp"
#include "kneemark/random.hpp"

namespace kneemark {

namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566;
constexpr std::uint64_t kDropoutStream = 0x64726f70;
constexpr std::uint64_t kMixupStream = 0x6d697875;

EpochStats evaluate_epoch(HourglassModel<float>& model, const std::vector<Sample>& samples,
                          const std::vector<int>& subset, int batch) {
  const ErrorMatrix errors = source_errors(samples, predict(model, samples, batch));
  EpochStats stats;
  for (size_t k = 0; k < stats.pck.size(); ++k) stats.pck[k] = pck(errors, kPckRadiiMm[k], subset);
  stats.outliers = outlier_rate(errors);
  return stats;
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  augmentation.validate();
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be >= 0");
  if (batch < 1) throw ConfigError("batch size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (mixup && !(mixup_alpha > 0.0)) throw ConfigError("mixup alpha must be > 0");
  if (sampling.input_side != model.input_side) {
    throw ConfigError("sampling input side " + std::to_string(sampling.input_side) + " differs from model S " +
                      std::to_string(model.input_side));
  }
  if (!(sampling.roi_spacing > 0.0 && sampling.landmark_spacing > 0.0 && sampling.crop_mm > 0.0)) {
    throw ConfigError("spacings and crop size must be > 0");
  }
}

LossConfig TrainConfig::effective_loss() const {
  LossConfig l = loss;
  l.wing.scale = wing_heatmap_units ? double(model.heatmap_side()) : 1.0;
  return l;
}

Var<float> batch_loss(HourglassModel<float>& model, const Tensor<float>& inputs, const Tensor<float>& targets,
                      const LossFn<float>& loss, std::mt19937_64& dropout_rng, const MixupDraw* mixup) {
  if (!mixup) return loss(model.forward(inputs, Mode::kTrain, &dropout_rng), targets);
  const MixupBatch<float> mixed = mixup_batch(inputs, targets, *mixup);
  const Var<float> o1 = model.forward(inputs, Mode::kTrain, &dropout_rng);
  const Var<float> o_mixed = model.forward(mixed.mixed, Mode::kTrain, &dropout_rng);
  return mixup_criterion(loss, o1, o_mixed, mixed.targets1, mixed.targets2, mixup->lambda_prime);
}

std::vector<LandmarkSet> predict(HourglassModel<float>& model, const std::vector<Sample>& samples, int batch) {
  NoGradGuard no_grad;
  std::vector<LandmarkSet> out;
  out.reserve(samples.size());
  const int s = model.config().input_side;
  for (size_t start = 0; start < samples.size(); start += size_t(batch)) {
    const size_t end = std::min(samples.size(), start + size_t(batch));
    std::vector<const Image*> images;
    for (size_t i = start; i < end; ++i) images.push_back(&samples[i].input);
    const Var<float> coords = model.forward(stack_inputs(images), Mode::kEval);
    const auto& c = coords.value();
    for (size_t i = start; i < end; ++i) {
      LandmarkSet lms;
      lms.points.resize(c.shape().c, 2);
      for (int k = 0; k < c.shape().c; ++k) {
        lms.points(k, 0) = double(c(int(i - start), k, 0, 0)) * s;
        lms.points(k, 1) = double(c(int(i - start), k, 0, 1)) * s;
      }
      out.push_back(std::move(lms));
    }
  }
  return out;
}

ErrorMatrix source_errors(const std::vector<Sample>& samples, const std::vector<LandmarkSet>& predictions) {
  if (samples.size() != predictions.size()) throw InvalidArgument("source_errors: sample and prediction counts differ");
  ErrorMatrix errors;
  for (size_t i = 0; i < samples.size(); ++i) {
    const LandmarkSet in_source = to_source(predictions[i], samples[i].transform);
    errors.append(radial_errors(in_source, samples[i].source_truth, samples[i].source_spacing), samples[i].kl);
  }
  return errors;
}

TrainResult train(HourglassModel<float> model, const std::vector<Sample>& training,
                  const std::vector<Sample>& validation, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (training.empty()) throw ConfigError("no training samples");
  if (!(model.config() == config.model)) throw ConfigError("model architecture differs from the training config");
  const int m = config.model.landmarks;
  for (const auto& s : training) {
    if (s.target.size() != m) {
      throw ConfigError("training sample has " + std::to_string(s.target.size()) + " landmarks, model predicts " +
                        std::to_string(m));
    }
  }
  const std::vector<Sample>& held_out = validation.empty() ? training : validation;
  const std::vector<int> subset = m == 1 ? std::vector<int>{0} : landmark_subset(config.selection_subset, m);
  const LossFn<float> loss = make_loss<float>(config.effective_loss());
  const AdamOptions adam{config.lr, 0.9, 0.999, 1e-8, config.weight_decay};
  const int s = config.model.input_side;

  TrainResult result{model.clone(), {}, 0, false, {}};
  double best_score = -1.0;
  AdamState<float> state;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<int> order(training.size());
    std::iota(order.begin(), order.end(), 0);
    auto shuffle_rng = stream_rng({config.seed, std::uint64_t(epoch), kShuffleStream});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    int batches = 0;
    try {
      for (size_t start = 0; start < order.size(); start += size_t(config.batch)) {
        const size_t end = std::min(order.size(), start + size_t(config.batch));
        std::vector<Image> images;
        std::vector<LandmarkSet> targets;
        for (size_t i = start; i < end; ++i) {
          const Sample& sample = training[size_t(order[i])];
          if (config.augment) {
            auto rng = stream_rng({config.seed, std::uint64_t(epoch), std::uint64_t(order[i])});
            AugmentedSample a = augment_sample(sample.input, sample.target, config.augmentation, rng);
            images.push_back(std::move(a.image));
            targets.push_back(std::move(a.landmarks));
          } else {
            images.push_back(sample.input);
            targets.push_back(sample.target);
          }
        }
        std::vector<const Image*> image_ptrs;
        std::vector<const LandmarkSet*> target_ptrs;
        for (size_t i = 0; i < images.size(); ++i) {
          image_ptrs.push_back(&images[i]);
          target_ptrs.push_back(&targets[i]);
        }
        const Tensor<float> x = stack_inputs(image_ptrs);
        const Tensor<float> y = stack_targets(target_ptrs, s);

        const std::uint64_t batch_index = start / size_t(config.batch);
        auto dropout_rng = stream_rng({config.seed, std::uint64_t(epoch), batch_index, kDropoutStream});
        std::optional<MixupDraw> draw;
        if (config.mixup) {
          auto mix_rng = stream_rng({config.seed, std::uint64_t(epoch), batch_index, kMixupStream});
          draw = draw_mixup(int(images.size()), config.mixup_alpha, mix_rng);
        }
        model.zero_grad();
        const Var<float> l = batch_loss(model, x, y, loss, dropout_rng, draw ? &*draw : nullptr);
        const float value = l.value().data()[0];
        if (!std::isfinite(value)) throw DivergenceError("non-finite loss in epoch " + std::to_string(epoch));
        backward(l);
        adam_step(model.parameters(), state, adam);
        loss_sum += value;
        ++batches;
      }
    } catch (const DivergenceError& e) {
      result.diverged = true;
      result.divergence = e.what();
      return result;
    }

    EpochStats stats = evaluate_epoch(model, held_out, subset, config.batch);
    stats.epoch = epoch;
    stats.loss = loss_sum / batches;
    result.history.push_back(stats);
    if (stats.selection() > best_score) {
      best_score = stats.selection();
      result.best = model.clone();
      result.best_epoch = epoch;
    }
    if (on_epoch && !on_epoch(stats, model)) break;
  }
  return result;
}

HourglassModel<float> transfer_init(const ModelConfig& config, const HourglassModel<float>& source,
                                    std::uint64_t head_seed) {
  const ModelConfig& src = source.config();
  if (src.width != config.width || src.depth != config.depth || src.input_side != config.input_side ||
      src.block != config.block) {
    throw CheckpointError(CheckpointError::Kind::kIncompatible,
                          "pretrained model (N=" + std::to_string(src.width) + ", d=" + std::to_string(src.depth) +
                              ", S=" + std::to_string(src.input_side) + ", " + to_string(src.block) +
                              ") does not match (N=" + std::to_string(config.width) +
                              ", d=" + std::to_string(config.depth) + ", S=" + std::to_string(config.input_side) +
                              ", " + to_string(config.block) + ")");
  }
  HourglassModel<float> out(config, head_seed);
  const auto& head = HourglassModel<float>::head_parameter_names();
  for (auto& p : out.parameters()) {
    if (std::find(head.begin(), head.end(), p.name) != head.end()) continue;
    const Parameter<float>* from = source.find(p.name);
    if (!from || !(from->var.shape() == p.var.shape())) {
      throw CheckpointError(CheckpointError::Kind::kIncompatible, "pretrained model lacks a matching " + p.name);
    }
    p.var.mutable_value() = from->var.value();
  }
  return out;
}

std::string history_csv(const std::vector<EpochStats>& history) {
  std::ostringstream out;
  out << "epoch,loss,pck1,pck15,pck2,pck25,outliers\n";
  for (const auto& h : history) {
    out << h.epoch << ',' << format_double(h.loss);
    for (double p : h.pck) out << ',' << format_double(p);
    out << ',' << format_double(h.outliers) << '\n';
  }
  return out.str();
}

}  // namespace kneemark
