// Copyright 2026 The gaussreg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "gaussreg/datasets.hpp"
#include "gaussreg/trainer.hpp"

namespace gaussreg {
namespace {

NetworkSpec small_spec(std::size_t input_dim, std::uint64_t seed) {
  NetworkSpec s;
  s.input_dim = input_dim;
  s.hidden_layers = {{16, Activation::tanh}};
  s.head_hidden = {16};
  s.seed = seed;
  return s;
}

// Plain scalar Adam, written out independently of adam_step.
double scalar_adam(double w, int steps, double lr, auto grad) {
  double m = 0.0, v = 0.0;
  for (int t = 1; t <= steps; ++t) {
    const double g = grad(w);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t)), vh = v / (1.0 - std::pow(0.999, t));
    w -= lr * mh / (std::sqrt(vh) + 1e-8);
  }
  return w;
}

TEST(Adam, FirstStepWithUnitGradient) {
  std::vector<Tensor> p{Tensor::scalar(0.0)};
  const std::vector<Tensor> g{Tensor::scalar(1.0)};
  auto state = AdamState::like(p);
  TrainConfig cfg;
  adam_step(p, g, state, 1, cfg);
  EXPECT_NEAR(-p[0].item(), 1e-3 / (1.0 + 1e-8), 1e-18);
  EXPECT_NEAR(-p[0].item(), 0.000999999990, 1e-12);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  std::vector<Tensor> p{Tensor::vector({1.5, -2.0})};
  const std::vector<Tensor> g{Tensor::zeros({2})};
  auto state = AdamState::like(p);
  adam_step(p, g, state, 1, TrainConfig{});
  EXPECT_EQ(p[0], Tensor::vector({1.5, -2.0}));
}

TEST(Adam, QuadraticConverges) {
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  std::vector<Tensor> p{Tensor::scalar(0.0)};
  auto state = AdamState::like(p);
  for (std::size_t t = 1; t <= 100; ++t) {
    const std::vector<Tensor> g{Tensor::scalar(2.0 * (p[0].item() - 3.0))};
    adam_step(p, g, state, t, cfg);
  }
  const double oracle = scalar_adam(0.0, 100, 0.1, [](double w) { return 2.0 * (w - 3.0); });
  EXPECT_NEAR(p[0].item(), oracle, 1e-12);
  EXPECT_LT(std::abs(p[0].item() - 3.0), 0.05);
}

TEST(Adam, StateMirrorsParameters) {
  const auto net = Network::init(small_spec(3, 1));
  const auto state = AdamState::like(net.parameters());
  ASSERT_EQ(state.m.size(), net.parameters().size());
  for (std::size_t k = 0; k < state.m.size(); ++k) {
    EXPECT_EQ(state.m[k].shape(), net.parameters()[k].shape());
    EXPECT_EQ(state.v[k].shape(), net.parameters()[k].shape());
  }
}

TEST(Adam, Errors) {
  std::vector<Tensor> p{Tensor::scalar(0.0)};
  auto state = AdamState::like(p);
  const std::vector<Tensor> g{Tensor::vector({1.0, 2.0})};
  EXPECT_THROW(adam_step(p, g, state, 1, TrainConfig{}), DimensionError);
  const std::vector<Tensor> ok{Tensor::scalar(1.0)};
  EXPECT_THROW(adam_step(p, ok, state, 0, TrainConfig{}), std::invalid_argument);
}

TEST(Clip, GlobalNorm) {
  std::vector<Tensor> g{Tensor::vector({3.0}), Tensor::vector({4.0})};
  EXPECT_DOUBLE_EQ(clip_by_global_norm(g, 10.0), 5.0);
  EXPECT_EQ(g[0][0], 3.0);
  clip_by_global_norm(g, 1.0);
  EXPECT_NEAR(g[0][0], 0.6, 1e-15);
  EXPECT_NEAR(g[1][0], 0.8, 1e-15);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.adam_beta1 = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.adam_epsilon = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(TrainConfig::image_scale().batch_size, 8u);
  EXPECT_DOUBLE_EQ(TrainConfig::image_scale().learning_rate, 5e-5);
}

TEST(TrainConfig, JsonRoundTrip) {
  TrainConfig c;
  c.epochs = 7;
  c.early_stopping_patience = 3;
  c.loss = LossKind::squared_error;
  c.seed = 12345678901234ull;
  const auto back = nlohmann::json(c).get<TrainConfig>();
  EXPECT_EQ(back.epochs, 7u);
  EXPECT_EQ(back.early_stopping_patience, std::optional<std::size_t>(3));
  EXPECT_EQ(back.loss, LossKind::squared_error);
  EXPECT_EQ(back.seed, c.seed);
}

TEST(Train, ZeroEpochs) {
  const auto raw = gen_heteroscedastic(50, 1);
  const auto st = Standardizer::fit(raw);
  const auto net = Network::init(small_spec(1, 2));
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto res = train(net, st.apply(raw), nullptr, cfg);
  EXPECT_EQ(res.network, net);
  EXPECT_TRUE(res.history.train_loss.empty());
}

TEST(Train, RejectsUnstandardizedTargets) {
  const auto raw = gen_constant_gaussian(100, 50.0, 3.0, 1);
  EXPECT_THROW(train(Network::init(small_spec(1, 1)), raw, nullptr, TrainConfig{}), DataError);
}

TEST(Train, RejectsWidthMismatch) {
  const auto raw = gen_heteroscedastic(20, 1);
  const auto st = Standardizer::fit(raw);
  EXPECT_THROW(train(Network::init(small_spec(2, 1)), st.apply(raw), nullptr, TrainConfig{}), DimensionError);
}

// With no input signal the optimum is the maximum-likelihood constant: the
// sample mean and the population standard deviation.
TEST(Train, ConstantTargetReachesMle) {
  const auto raw = gen_constant_gaussian(2000, 2.0, 0.5, 3);
  const auto st = Standardizer::fit(raw);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.seed = 4;
  const auto res = train(Network::init(small_spec(1, 5)), st.apply(raw), nullptr, cfg);
  const auto pred = st.invert(res.network.predict(st.apply_features(Tensor::matrix(1, 1, {1.0}))));

  double mean = 0.0;
  for (double v : raw.targets.data()) mean += v;
  mean /= static_cast<double>(raw.size());
  double var = 0.0;
  for (double v : raw.targets.data()) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(raw.size()));
  EXPECT_LT(std::abs(pred.mu[0] - mean), 0.01 * std::abs(mean));
  EXPECT_LT(std::abs(pred.sigma[0] - sd), 0.02 * sd);
}

TEST(Train, HeteroscedasticLossDrops) {
  const auto raw = gen_heteroscedastic(2000, 6);
  const auto st = Standardizer::fit(raw);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.seed = 7;
  const auto res = train(Network::init(small_spec(1, 8)), st.apply(raw), nullptr, cfg);
  ASSERT_EQ(res.history.epochs(), 30u);
  EXPECT_LT(res.history.train_loss.back(), res.history.train_loss.front() - 0.5);
}

TEST(Train, Deterministic) {
  const auto raw = gen_heteroscedastic(300, 9);
  const auto st = Standardizer::fit(raw);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 10;
  const auto a = train(Network::init(small_spec(1, 11)), st.apply(raw), nullptr, cfg);
  const auto b = train(Network::init(small_spec(1, 11)), st.apply(raw), nullptr, cfg);
  EXPECT_EQ(a.network, b.network);
  EXPECT_EQ(a.history.train_loss, b.history.train_loss);
}

TEST(Train, PartialLastBatchIsUsed) {
  // 33 rows with batch 32: the 33rd row must influence the result.
  auto raw = gen_heteroscedastic(33, 12);
  const auto st = Standardizer::fit(raw);
  auto data = st.apply(raw);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.shuffle = false;
  const auto a = train(Network::init(small_spec(1, 13)), data, nullptr, cfg);
  data.targets(32, 0) += 0.5;
  const auto b = train(Network::init(small_spec(1, 13)), data, nullptr, cfg);
  EXPECT_NE(a.network, b.network);
}

TEST(Train, SingleStepDescends) {
  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    Dataset one;
    one.features = Tensor::matrix(1, 2, {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)});
    one.targets = Tensor::matrix(1, 1, {rng.uniform(-1.0, 1.0)});
    const auto net = Network::init(small_spec(2, rng.next()));
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 1;
    cfg.learning_rate = 1e-5;
    const double before = dataset_loss(net, one);
    const double after = dataset_loss(train(net, one, nullptr, cfg).network, one);
    EXPECT_LT(after, before) << "trial " << trial;
  }
}

TEST(Train, SquaredErrorLoss) {
  const auto raw = gen_heteroscedastic(500, 15);
  const auto st = Standardizer::fit(raw);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.loss = LossKind::squared_error;
  const auto data = st.apply(raw);
  const auto net = Network::init(small_spec(1, 16));
  const double before = dataset_loss(net, data, LossKind::squared_error);
  const auto res = train(net, data, nullptr, cfg);
  EXPECT_LT(res.history.train_loss.back(), before);
}

TEST(Train, EarlyStoppingRestoresBest) {
  const auto raw = gen_heteroscedastic(200, 17);
  const auto val_raw = gen_heteroscedastic(200, 18);
  const auto st = Standardizer::fit(raw);
  const auto train_set = st.apply(raw), val = st.apply(val_raw);
  TrainConfig cfg;
  cfg.epochs = 400;
  cfg.learning_rate = 1e-2;
  cfg.early_stopping_patience = 5;
  const auto res = train(Network::init(small_spec(1, 19)), train_set, &val, cfg);
  EXPECT_EQ(res.history.val_loss.size(), res.history.epochs());
  if (res.history.stopped_early) {
    EXPECT_EQ(res.history.epochs(), res.history.best_epoch + 6);
  }
  EXPECT_DOUBLE_EQ(dataset_loss(res.network, val), res.history.val_loss[res.history.best_epoch]);
}

TEST(Train, OverflowAborts) {
  auto spec = small_spec(1, 20);
  auto net = Network::init(spec);
  for (auto& p : net.parameters()) {
    for (auto& v : p.data()) v = 1e308;
  }
  Dataset d;
  d.features = Tensor::matrix(2, 1, {1.0, 2.0});
  d.targets = Tensor::matrix(2, 1, {0.0, 0.5});
  EXPECT_THROW(train(net, d, nullptr, TrainConfig{}), TrainingAborted);
}

}  // namespace
}  // namespace gaussreg
