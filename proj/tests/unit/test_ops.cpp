#include <doctest.h>

#include <cmath>
#include <set>

#include "gradcheck.hpp"
#include "kneemark/model.hpp"
#include "kneemark/ops.hpp"

using namespace kneemark;
using kneemark::testing::gradcheck;
using kneemark::testing::random_tensor;

namespace {

using V = Var<double>;
using T = Tensor<double>;

T tensor(const Shape& s, std::initializer_list<double> values) {
  T t(s);
  Eigen::Index i = 0;
  for (double v : values) t.data()[i++] = v;
  return t;
}

V param(T t) { return V::leaf(std::move(t), true); }

// Keeps entries away from the ReLU kink and the max-pool ties.
T spread_tensor(const Shape& s, std::mt19937_64& rng) {
  T t = random_tensor(s, rng);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    double& v = t.data()[i];
    v = (v < 0 ? -0.1 : 0.1) + v + 0.013 * double(i % 17);
  }
  return t;
}

}  // namespace

TEST_SUITE("ops") {

TEST_CASE("conv2d on a hand example") {
  // 3x3 input, 2x2 kernel of ones, stride 1, no padding.
  const V x = V::constant(tensor({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
  const V w = V::constant(T::constant({1, 1, 2, 2}, 1.0));
  const V b = V::constant(T::constant({1, 1, 1, 1}, 0.5));
  const V y = conv2d(x, w, b, 1, 0);
  REQUIRE(y.shape() == Shape{1, 1, 2, 2});
  CHECK(y.value()(0, 0, 0, 0) == 12.5);
  CHECK(y.value()(0, 0, 0, 1) == 16.5);
  CHECK(y.value()(0, 0, 1, 0) == 24.5);
  CHECK(y.value()(0, 0, 1, 1) == 28.5);

  const V padded = conv2d(x, w, b, 2, 1);
  REQUIRE(padded.shape() == Shape{1, 1, 2, 2});
  CHECK(padded.value()(0, 0, 0, 0) == 1.5);
  CHECK(padded.value()(0, 0, 1, 1) == 28.5);
}

TEST_CASE("conv2d output sizes and shape errors") {
  std::mt19937_64 rng(1);
  const V x = V::constant(random_tensor({2, 3, 17, 16}, rng));
  const V w = V::constant(random_tensor({5, 3, 7, 7}, rng));
  const V b = V::constant(random_tensor({1, 5, 1, 1}, rng));
  CHECK(conv2d(x, w, b, 2, 3).shape() == Shape{2, 5, 9, 8});
  const V bad = V::constant(random_tensor({5, 2, 7, 7}, rng));
  CHECK_THROWS_AS(conv2d(x, bad, b, 1, 0), ShapeError);
}

TEST_CASE("batchnorm train and eval") {
  const V x = V::constant(tensor({2, 1, 1, 2}, {1, 2, 3, 4}));
  const V g = V::constant(T::constant({1, 1, 1, 1}, 2.0));
  const V b = V::constant(T::constant({1, 1, 1, 1}, 1.0));
  T mean = T::constant({1, 1, 1, 1}, 0.0);
  T var = T::constant({1, 1, 1, 1}, 1.0);
  const V y = batchnorm2d(x, g, b, mean, var, Mode::kTrain);
  const double sd = std::sqrt(1.25 + 1e-5);
  CHECK(y.value().data()[0] == doctest::Approx(1.0 + 2.0 * (1 - 2.5) / sd).epsilon(1e-12));
  CHECK(y.value().data()[3] == doctest::Approx(1.0 + 2.0 * (4 - 2.5) / sd).epsilon(1e-12));
  CHECK(mean.data()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(var.data()[0] == doctest::Approx(0.9 + 0.1 * 5.0 / 3.0).epsilon(1e-12));

  const V e = batchnorm2d(x, g, b, mean, var, Mode::kEval);
  const double sd_run = std::sqrt(var.data()[0] + 1e-5);
  CHECK(e.value().data()[1] == doctest::Approx(1.0 + 2.0 * (2 - 0.25) / sd_run).epsilon(1e-12));
}

TEST_CASE("pooling, upsampling and relu") {
  const V x = V::constant(tensor({1, 1, 2, 4}, {1, -5, 0, 2, 3, 4, -1, -2}));
  const V p = maxpool2(x);
  REQUIRE(p.shape() == Shape{1, 1, 1, 2});
  CHECK(p.value().data()[0] == 4);
  CHECK(p.value().data()[1] == 2);
  const V u = upsample_nearest2(p);
  REQUIRE(u.shape() == Shape{1, 1, 2, 4});
  CHECK(u.value().data()[0] == 4);
  CHECK(u.value().data()[5] == 4);
  CHECK(u.value().data()[7] == 2);
  const V r = relu(x);
  CHECK(r.value().data().minCoeff() == 0.0);
  CHECK(r.value().data()[7] == 0.0);
  CHECK(r.value().data()[4] == 3.0);
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(4);
  const V x = V::constant(T::constant({4, 8, 16, 16}, 1.0));
  CHECK((dropout(x, 0.5, Mode::kEval, rng).value().data() == 1.0).all());
  CHECK((dropout(x, 0.0, Mode::kTrain, rng).value().data() == 1.0).all());
  const V y = dropout(x, 0.25, Mode::kTrain, rng);
  const auto& d = y.value().data();
  CHECK(((d == 0.0) || ((d - 1.0 / 0.75).abs() < 1e-12)).all());
  const double kept = double((d != 0.0).count()) / double(d.size());
  CHECK(kept == doctest::Approx(0.75).epsilon(0.05));
}

TEST_CASE("soft-argmax examples") {
  T spike = T::constant({1, 1, 4, 8}, 0.0);
  spike(0, 0, 3, 5) = 1000.0;
  const V s = soft_argmax(V::constant(spike), 1.0);
  REQUIRE(s.shape() == Shape{1, 1, 1, 2});
  CHECK(s.value().data()[0] == doctest::Approx(5.0 / 8.0));
  CHECK(s.value().data()[1] == doctest::Approx(3.0 / 4.0));

  const V u = soft_argmax(V::constant(T::constant({2, 3, 5, 6}, -2.0)), 3.0);
  for (int i = 0; i < 6; ++i) {
    CHECK(std::abs(u.value().data()[2 * i] - 5.0 / 12.0) < 1e-12);
    CHECK(std::abs(u.value().data()[2 * i + 1] - 4.0 / 10.0) < 1e-12);
  }
}

TEST_CASE("soft-argmax survives huge logits") {
  T h = T::constant({1, 1, 3, 3}, 0.0);
  h(0, 0, 1, 2) = 1e6;
  const V s = soft_argmax(V::constant(h), 50.0);
  CHECK(s.value().all_finite());
  CHECK(s.value().data()[0] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("gradients of the primitive ops") {
  std::mt19937_64 rng(2024);
  SUBCASE("conv2d") {
    for (auto [stride, pad] : {std::pair{1, 1}, {2, 0}, {2, 3}}) {
      auto r = gradcheck([&](const std::vector<V>& in) { return conv2d(in[0], in[1], in[2], stride, pad); },
                         {param(random_tensor({2, 3, 7, 6}, rng)), param(random_tensor({4, 3, 3, 3}, rng)),
                          param(random_tensor({1, 4, 1, 1}, rng))},
                         rng);
      CHECK(r.max_relative < 1e-4);
    }
  }
  SUBCASE("batchnorm2d train") {
    T mean({1, 3, 1, 1}), var = T::constant({1, 3, 1, 1}, 1.0);
    auto r = gradcheck(
        [&](const std::vector<V>& in) { return batchnorm2d(in[0], in[1], in[2], mean, var, Mode::kTrain); },
        {param(random_tensor({3, 3, 4, 5}, rng)), param(random_tensor({1, 3, 1, 1}, rng, 0.5, 1.5)),
         param(random_tensor({1, 3, 1, 1}, rng))},
        rng);
    CHECK(r.max_relative < 1e-4);
  }
  SUBCASE("batchnorm2d eval") {
    T mean = random_tensor({1, 2, 1, 1}, rng), var = random_tensor({1, 2, 1, 1}, rng, 0.5, 2.0);
    auto r = gradcheck(
        [&](const std::vector<V>& in) { return batchnorm2d(in[0], in[1], in[2], mean, var, Mode::kEval); },
        {param(random_tensor({2, 2, 3, 3}, rng)), param(random_tensor({1, 2, 1, 1}, rng)),
         param(random_tensor({1, 2, 1, 1}, rng))},
        rng);
    CHECK(r.max_relative < 1e-4);
  }
  SUBCASE("maxpool and upsample") {
    auto r = gradcheck([](const std::vector<V>& in) { return upsample_nearest2(maxpool2(in[0])); },
                       {param(spread_tensor({2, 2, 6, 8}, rng))}, rng);
    CHECK(r.max_relative < 1e-4);
  }
  SUBCASE("relu and dropout") {
    auto r = gradcheck(
        [](const std::vector<V>& in) {
          std::mt19937_64 mask(5);
          return dropout(relu(in[0]), 0.3, Mode::kTrain, mask);
        },
        {param(spread_tensor({2, 3, 4, 4}, rng))}, rng);
    CHECK(r.max_relative < 1e-4);
    auto e = gradcheck(
        [](const std::vector<V>& in) {
          std::mt19937_64 unused(5);
          return dropout(relu(in[0]), 0.3, Mode::kEval, unused);
        },
        {param(spread_tensor({2, 3, 4, 4}, rng))}, rng);
    CHECK(e.max_relative < 1e-4);
  }
  SUBCASE("add, scale and concat") {
    auto r = gradcheck(
        [](const std::vector<V>& in) { return concat_channels<double>({add(in[0], in[1]), scale(in[1], -3.0)}); },
        {param(random_tensor({2, 2, 3, 3}, rng)), param(random_tensor({2, 2, 3, 3}, rng))}, rng);
    CHECK(r.max_relative < 1e-4);
  }
  SUBCASE("soft-argmax") {
    for (double beta : {0.5, 1.0, 4.0}) {
      auto r = gradcheck([&](const std::vector<V>& in) { return soft_argmax(in[0], beta); },
                         {param(random_tensor({2, 3, 5, 7}, rng))}, rng);
      CHECK(r.max_relative < 1e-4);
    }
  }
}

TEST_CASE("residual blocks") {
  std::mt19937_64 rng(99);
  SUBCASE("HMP split widths") {
    ResidualBlock<double> block(BlockKind::kHmp, 16, 24, 1);
    CHECK(block.find("block.conv0.weight")->var.shape() == Shape{12, 16, 3, 3});
    CHECK(block.find("block.conv1.weight")->var.shape() == Shape{6, 12, 3, 3});
    CHECK(block.find("block.conv2.weight")->var.shape() == Shape{6, 6, 3, 3});
    CHECK(block.find("block.skip.weight")->var.shape() == Shape{24, 16, 1, 1});
    CHECK(block.find("block.conv3.weight") == nullptr);
    const V y = block.forward(V::constant(random_tensor({2, 16, 5, 5}, rng)), Mode::kTrain);
    CHECK(y.shape() == Shape{2, 24, 5, 5});
  }
  SUBCASE("equal widths use the identity skip") {
    ResidualBlock<double> block(BlockKind::kBottleneck, 8, 8, 1);
    CHECK(block.find("block.skip.weight") == nullptr);
    for (auto& p : block.parameters()) {
      if (p.name.find("conv") != std::string::npos) p.var.mutable_value().data().setZero();
    }
    const T x = random_tensor({2, 8, 4, 4}, rng);
    const V y = block.forward(V::constant(x), Mode::kTrain);
    CHECK((y.value().data() == x.data()).all());
  }
  for (BlockKind kind : {BlockKind::kHmp, BlockKind::kBottleneck}) {
    CAPTURE(to_string(kind));
    ResidualBlock<double> block(kind, 4, 8, 3);
    std::vector<V> inputs{param(random_tensor({2, 4, 4, 4}, rng))};
    for (auto& p : block.parameters()) {
      if (p.trainable) inputs.push_back(p.var);
    }
    auto r = gradcheck([&](const std::vector<V>& in) { return block.forward(in[0], Mode::kTrain); }, inputs, rng);
    CHECK(r.max_relative < 1e-4);
  }
}

TEST_CASE("model shapes and configuration errors") {
  ModelConfig cfg;
  cfg.width = 4;
  cfg.depth = 2;
  cfg.input_side = 64;
  HourglassModel<float> model(cfg, 1);
  std::mt19937_64 rng(1);
  const Tensor<float> x = random_tensor({3, 1, 64, 64}, rng, 0.0, 1.0).cast<float>();
  CHECK(model.heatmaps(x, Mode::kEval).shape() == Shape{3, 16, 16, 16});
  const Var<float> out = model.forward(x, Mode::kEval);
  CHECK(out.shape() == Shape{3, 16, 1, 2});
  CHECK(out.value().data().minCoeff() >= 0.0f);
  CHECK(out.value().data().maxCoeff() <= 1.0f);
  CHECK_THROWS_AS(model.forward(random_tensor({1, 1, 32, 32}, rng).cast<float>(), Mode::kEval), ShapeError);
  CHECK_THROWS_AS(model.forward(x, Mode::kTrain), InvalidArgument);

  ModelConfig bad;
  bad.depth = 6;
  bad.input_side = 100;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(HourglassModel<float>(bad, 0), ConfigError);
  bad = ModelConfig{};
  bad.width = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("model parameters are named uniquely and initialized reproducibly") {
  ModelConfig cfg;
  cfg.width = 4;
  cfg.depth = 1;
  cfg.input_side = 16;
  HourglassModel<float> a(cfg, 7), b(cfg, 7), c(cfg, 8);
  std::set<std::string> names;
  bool differs = false;
  for (size_t i = 0; i < a.parameters().size(); ++i) {
    CHECK(names.insert(a.parameters()[i].name).second);
    CHECK((a.parameters()[i].var.value().data() == b.parameters()[i].var.value().data()).all());
    if (a.parameters()[i].trainable) {
      differs = differs || !(a.parameters()[i].var.value().data() == c.parameters()[i].var.value().data()).all();
    }
  }
  CHECK(differs);
  const auto& head = HourglassModel<float>::head_parameter_names();
  for (const auto& n : head) CHECK(a.find(n) != nullptr);
}

TEST_CASE("whole-model gradient") {
  ModelConfig cfg;
  cfg.width = 4;
  cfg.depth = 1;
  cfg.input_side = 16;
  cfg.landmarks = 2;
  HourglassModel<double> model(cfg, 11);
  std::mt19937_64 rng(12);
  const T x = random_tensor({2, 1, 16, 16}, rng, 0.0, 1.0);
  std::vector<V> inputs;
  for (auto& p : model.parameters()) {
    if (p.trainable) inputs.push_back(p.var);
  }
  auto r = gradcheck(
      [&](const std::vector<V>&) {
        std::mt19937_64 mask(3);
        return model.forward(x, Mode::kTrain, &mask);
      },
      inputs, rng, 1e-6);
  CHECK(r.max_relative < 1e-3);
}

}  // TEST_SUITE
