#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include <json.hpp>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "kneemark/checkpoint.hpp"
#include "kneemark/cv_split.hpp"
#include "kneemark/optim.hpp"
#include "kneemark/training.hpp"

using namespace kneemark;
using namespace kneemark::testing;

namespace {

std::vector<Parameter<double>> one_param(std::initializer_list<double> values) {
  Tensor<double> t({1, 1, 1, int(values.size())});
  Eigen::Index i = 0;
  for (double v : values) t.data()[i++] = v;
  return {Parameter<double>{"p", Var<double>::leaf(t, true), true}};
}

void set_grad(Parameter<double>& p, std::initializer_list<double> values) {
  Eigen::Index i = 0;
  for (double v : values) p.var.mutable_grad().data()[i++] = v;
}

std::vector<AnnotationRecord> synthetic_patients(int patients, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> grade(0, 4);
  std::vector<AnnotationRecord> records;
  for (int p = 0; p < patients; ++p) {
    for (Side side : {Side::kRight, Side::kLeft}) {
      AnnotationRecord r;
      r.image = "img" + std::to_string(p) + (side == Side::kRight ? "R" : "L");
      r.patient_id = "pat" + std::to_string(p);
      r.side = side;
      r.kl = grade(rng);
      r.spacing = 0.3;
      records.push_back(r);
    }
  }
  return records;
}

bool same_values(const HourglassModel<float>& a, const HourglassModel<float>& b, bool trainable_only) {
  for (size_t i = 0; i < a.parameters().size(); ++i) {
    if (trainable_only && !a.parameters()[i].trainable) continue;
    if (!(a.parameters()[i].var.value().data() == b.parameters()[i].var.value().data()).all()) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("adam matches a scalar recomputation") {
  AdamOptions o;
  o.lr = 0.01;
  o.weight_decay = 0.1;
  auto params = one_param({1.0, -2.0});
  AdamState<double> state;
  const double grads[3][2] = {{0.5, -1.0}, {0.25, 3.0}, {-4.0, 0.0}};
  double x[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 3; ++t) {
    params[0].var.zero_grad();
    set_grad(params[0], {grads[t - 1][0], grads[t - 1][1]});
    adam_step(params, state, o);
    for (int i = 0; i < 2; ++i) {
      const double g = grads[t - 1][i] + o.weight_decay * x[i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mhat = m[i] / (1 - std::pow(0.9, t));
      const double vhat = v[i] / (1 - std::pow(0.999, t));
      x[i] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
      CHECK(params[0].var.value().data()[i] == doctest::Approx(x[i]).epsilon(1e-12));
    }
  }
  CHECK(state.step == 3);
}

TEST_CASE("adam first step moves each entry by about lr") {
  auto params = one_param({0.0, 0.0, 0.0});
  set_grad(params[0], {1e-3, -50.0, 0.0});
  AdamState<double> state;
  adam_step(params, state, AdamOptions{});
  const auto& x = params[0].var.value().data();
  CHECK(x[0] == doctest::Approx(-1e-3).epsilon(1e-4));
  CHECK(x[1] == doctest::Approx(1e-3).epsilon(1e-6));
  CHECK(x[2] == 0.0);
}

TEST_CASE("adam skips frozen entries and rejects non-finite gradients") {
  auto params = one_param({1.0});
  params.push_back(Parameter<double>{"stat", Var<double>::leaf(Tensor<double>::constant({1, 1, 1, 1}, 3.0), false),
                                     false});
  set_grad(params[0], {std::nan("")});
  AdamState<double> state;
  CHECK_THROWS_AS(adam_step(params, state, AdamOptions{}), DivergenceError);
  CHECK(params[0].var.value().data()[0] == 1.0);
  params[0].var.zero_grad();
  set_grad(params[0], {1.0});
  adam_step(params, state, AdamOptions{});
  CHECK(params[1].var.value().data()[0] == 3.0);
  AdamOptions bad;
  bad.lr = -1.0;
  CHECK_THROWS_AS(adam_step(params, state, bad), ConfigError);
}

TEST_CASE("cross-validation folds") {
  const auto records = synthetic_patients(200, 1);
  const FoldSplit split = make_cv_splits(records, 5, 42);
  REQUIRE(split.fold_of_record.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(split.fold_of_record[i] == split.fold_of_patient.at(records[i].patient_id));
  }
  std::set<int> seen;
  for (int f = 0; f < 5; ++f) {
    const auto val = split.validation_records(f);
    const auto tr = split.training_records(f);
    CHECK(val.size() + tr.size() == records.size());
    std::set<std::string> val_patients, tr_patients;
    for (int i : val) val_patients.insert(records[size_t(i)].patient_id);
    for (int i : tr) tr_patients.insert(records[size_t(i)].patient_id);
    for (const auto& p : val_patients) CHECK(tr_patients.count(p) == 0);
    for (int i : val) CHECK(seen.insert(i).second);
  }
  CHECK(seen.size() == records.size());

  CHECK(make_cv_splits(records, 5, 42).fold_of_record == split.fold_of_record);
  CHECK(make_cv_splits(records, 5, 43).fold_of_record != split.fold_of_record);
  CHECK_THROWS_AS(make_cv_splits(records, 1, 0), ConfigError);
  CHECK_THROWS_AS(make_cv_splits(synthetic_patients(3, 1), 4, 0), ConfigError);
}

TEST_CASE("patients take their worst grade") {
  auto records = synthetic_patients(10, 2);
  records[0].kl = 1;
  records[1].kl = 3;
  const FoldSplit split = make_cv_splits(records, 2, 0);
  CHECK(split.patient_kl.at("pat0") == 3);
}

TEST_CASE("f32 little-endian encoding") {
  const std::vector<float> values{1.0f, -2.5f, 0.0f};
  const auto bytes = encode_f32_le(values);
  REQUIRE(bytes.size() == 12);
  CHECK(bytes[0] == 0x00);
  CHECK(bytes[2] == 0x80);
  CHECK(bytes[3] == 0x3F);
  CHECK(bytes[7] == 0xC0);
  CHECK(decode_f32_le(bytes) == values);
  CHECK_THROWS_AS(decode_f32_le(std::span(bytes).first(5)), CheckpointError);
}

TEST_CASE("checkpoint round trip and corruption") {
  TempDir tmp("ckpt");
  ModelConfig cfg = tiny_model(32);
  cfg.block = BlockKind::kBottleneck;
  HourglassModel<float> model(cfg, 9);
  save_checkpoint(model, tmp / "a");
  HourglassModel<float> loaded = load_checkpoint(tmp / "a");
  CHECK(loaded.config() == cfg);
  CHECK(same_values(model, loaded, false));
  save_checkpoint(loaded, tmp / "b");
  CHECK(read_file(tmp / "a" / "manifest.json") == read_file(tmp / "b" / "manifest.json"));
  CHECK(read_file(tmp / "a" / "params.bin") == read_file(tmp / "b" / "params.bin"));
  CHECK(read_checkpoint_config(tmp / "a") == cfg);

  auto expect_kind = [&](CheckpointError::Kind kind) {
    try {
      load_checkpoint(tmp / "b");
      FAIL("load succeeded");
    } catch (const CheckpointError& e) {
      CHECK(e.kind() == kind);
    }
  };
  const std::string manifest = read_file(tmp / "a" / "manifest.json");
  const std::string blob = read_file(tmp / "a" / "params.bin");

  write_file(tmp / "b" / "manifest.json", manifest.substr(0, manifest.size() / 2));
  expect_kind(CheckpointError::Kind::kManifestInvalid);

  auto versioned = nlohmann::json::parse(manifest);
  versioned["format_version"] = kCheckpointFormatVersion + 1;
  write_file(tmp / "b" / "manifest.json", versioned.dump(1));
  expect_kind(CheckpointError::Kind::kVersionMismatch);

  write_file(tmp / "b" / "manifest.json", manifest);
  write_file(tmp / "b" / "params.bin", blob.substr(0, blob.size() - 8));
  expect_kind(CheckpointError::Kind::kTruncated);

  std::filesystem::remove(tmp / "b" / "manifest.json");
  expect_kind(CheckpointError::Kind::kIo);
}

TEST_CASE("transfer initialization") {
  ModelConfig roi = tiny_model(32, 1);
  HourglassModel<float> source(roi, 1);
  const HourglassModel<float> target = transfer_init(tiny_model(32), source, 77);
  CHECK(target.config().landmarks == 16);
  const auto& head = HourglassModel<float>::head_parameter_names();
  for (const auto& p : target.parameters()) {
    if (std::find(head.begin(), head.end(), p.name) != head.end()) continue;
    CHECK((p.var.value().data() == source.find(p.name)->var.value().data()).all());
  }
  HourglassModel<float> fresh(tiny_model(32), 77);
  CHECK((target.find("out.head.weight")->var.value().data() ==
         fresh.find("out.head.weight")->var.value().data()).all());

  ModelConfig wider = tiny_model(32);
  wider.width = 8;
  try {
    transfer_init(wider, source, 0);
    FAIL("transfer across widths succeeded");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointError::Kind::kIncompatible);
  }
}

TEST_CASE("training runs are reproducible and lr = 0 freezes the weights") {
  const PhantomCorpus corpus = generate(small_phantoms(4, 3));
  TrainConfig config = tiny_training(32, 2);
  const auto samples = landmark_samples(corpus, config.sampling);
  REQUIRE(samples.size() == 4);

  const TrainResult a = train(HourglassModel<float>(config.model, 1), samples, {}, config);
  const TrainResult b = train(HourglassModel<float>(config.model, 1), samples, {}, config);
  REQUIRE(a.history.size() == 2);
  CHECK(a.history[1].loss == b.history[1].loss);
  CHECK(a.best_epoch == b.best_epoch);
  CHECK(same_values(a.best, b.best, false));
  CHECK(std::isfinite(a.history[0].loss));
  CHECK(!a.diverged);

  config.lr = 0.0;
  std::vector<HourglassModel<float>> seen;
  HourglassModel<float> initial(config.model, 1);
  train(HourglassModel<float>(config.model, 1), samples, {}, config,
        [&](const EpochStats&, const HourglassModel<float>& m) {
          seen.push_back(m.clone());
          return true;
        });
  REQUIRE(seen.size() == 2);
  for (const auto& m : seen) CHECK(same_values(m, initial, true));

  config.epochs = 5;
  const TrainResult stopped =
      train(HourglassModel<float>(config.model, 1), samples, {}, config,
            [](const EpochStats& s, const HourglassModel<float>&) { return s.epoch < 2; });
  CHECK(stopped.history.size() == 2);
}

TEST_CASE("training config validation") {
  TrainConfig c = tiny_training(32, 1);
  CHECK_NOTHROW(c.validate());
  c.sampling.input_side = 64;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_training(32, 1);
  c.batch = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_training(32, 1);
  CHECK(c.effective_loss().wing.scale == 8.0);
  c.wing_heatmap_units = false;
  CHECK(c.effective_loss().wing.scale == 1.0);
}

TEST_CASE("history csv") {
  EpochStats s;
  s.epoch = 1;
  s.loss = 0.5;
  s.pck = {10, 20, 30, 40};
  s.outliers = 2;
  const std::string csv = history_csv({s});
  CHECK(csv.rfind("epoch,loss,pck1,pck15,pck2,pck25,outliers\n", 0) == 0);
  CHECK(csv.find("1,0.5,10,20,30,40,2") != std::string::npos);
  CHECK(s.selection() == 25.0);
}

}  // TEST_SUITE
