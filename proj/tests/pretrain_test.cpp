// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "seqtl/error.hpp"
#include "seqtl/pretrain.hpp"

using namespace seqtl;

namespace {

DatasetSplit random_split(std::uint64_t seed, int n_train, int n_val, int width, int k, int max_len = 5) {
  std::mt19937_64 gen(seed);
  DatasetSplit split;
  for (int i = 0; i < k; ++i) split.task_names.push_back("T" + std::to_string(i));
  for (int i = 0; i < n_train; ++i) {
    split.train.push_back(oracle::random_instance(gen, "tr" + std::to_string(i), 1 + static_cast<int>(gen() % max_len), width, k));
  }
  for (int i = 0; i < n_val; ++i) {
    split.validation.push_back(oracle::random_instance(gen, "va" + std::to_string(i), 1 + static_cast<int>(gen() % max_len), width, k));
  }
  return split;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.batch_size = 8;
  c.learning_rate = 1e-2;
  c.dropout = 0.0;
  c.max_epochs = 5;
  c.patience = 5;
  return c;
}

}  // namespace

TEST(CrossEntropy, HalfEverywhereIsLn2) {
  const Matrix p = Matrix::Constant(3, 4, 0.5);
  Matrix y = Matrix::Zero(3, 4);
  y(1, 2) = 1.0;
  EXPECT_NEAR(multilabel_cross_entropy(p, y), std::log(2.0), 1e-15);
}

TEST(CrossEntropy, WorkedExample) {
  Matrix p(2, 2), y(2, 2);
  p << 0.9, 0.2, 0.4, 0.7;
  y << 1, 0, 0, 1;
  const double expected = -0.25 * (std::log(0.9) + std::log(0.8) + std::log(0.6) + std::log(0.7));
  EXPECT_NEAR(multilabel_cross_entropy(p, y), expected, 1e-15);
}

TEST(CrossEntropy, PerfectPredictionsAreClippedNearZero) {
  Matrix y(2, 2);
  y << 1, 0, 0, 1;
  const double loss = multilabel_cross_entropy(y, y);
  EXPECT_GE(loss, 0.0);
  EXPECT_LT(loss, 1e-11);
  EXPECT_THROW(multilabel_cross_entropy(Matrix::Zero(2, 3), y), DimensionError);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<double> p{0.3, -1.2};
  const std::vector<double> g{0.0, 0.0};
  auto state = AdamState::for_shapes({std::span<const double>(p)});
  adam_step({std::span<double>(p)}, {std::span<const double>(g)}, state, TrainConfig{});
  EXPECT_EQ(p, (std::vector<double>{0.3, -1.2}));
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  TrainConfig c;
  c.learning_rate = 1e-3;
  for (double g0 : {2.5, -0.01, 1e3}) {
    std::vector<double> p{1.0};
    const std::vector<double> g{g0};
    auto state = AdamState::for_shapes({std::span<const double>(p)});
    adam_step({std::span<double>(p)}, {std::span<const double>(g)}, state, c);
    EXPECT_NEAR(p[0] - 1.0, -c.learning_rate * (g0 > 0 ? 1.0 : -1.0), c.learning_rate * 1e-6);
  }
}

TEST(Adam, TenStepsMatchScalarOracle) {
  TrainConfig c;
  c.learning_rate = 0.05;
  std::vector<double> p{0.7, -0.2};
  auto state = AdamState::for_shapes({std::span<const double>(p)});
  oracle::ScalarAdam a{c.learning_rate, c.beta1, c.beta2, c.epsilon}, b = a;
  double pa = 0.7, pb = -0.2;
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  for (int step = 0; step < 10; ++step) {
    const std::vector<double> g{nd(gen), nd(gen) * 1e-3};
    adam_step({std::span<double>(p)}, {std::span<const double>(g)}, state, c);
    pa = a.step(pa, g[0]);
    pb = b.step(pb, g[1]);
    EXPECT_NEAR(p[0], pa, 1e-12);
    EXPECT_NEAR(p[1], pb, 1e-12);
  }
}

TEST(Adam, NonFiniteGradientAbortsBeforeUpdate) {
  std::vector<double> p{1.0, 2.0};
  const std::vector<double> g{0.5, std::nan("")};
  auto state = AdamState::for_shapes({std::span<const double>(p)});
  EXPECT_THROW(adam_step({std::span<double>(p)}, {std::span<const double>(g)}, state, TrainConfig{}), NonFiniteError);
  EXPECT_EQ(p, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(state.step, 0);
}

TEST(TrainConfigTest, ValidationAndJson) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = TrainConfig{};
  c.patience = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = quick_config();
  c.seed = 17;
  const auto back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  const auto partial = TrainConfig::from_json(R"({"dropout": 0.1})");
  EXPECT_EQ(partial.batch_size, 128);
  EXPECT_DOUBLE_EQ(partial.learning_rate, 1e-4);
  EXPECT_DOUBLE_EQ(partial.dropout, 0.1);
}

TEST(FitSource, FirstFullBatchLossMatchesCrossEntropyOfInitialModel) {
  const auto split = random_split(1, 12, 4, 3, 2);
  auto c = quick_config();
  c.batch_size = 100;
  c.max_epochs = 1;
  const auto model = fit_source(split, c, 4, 2);
  const auto init = init_params(3, 4, 2, 2, c.seed);
  ASSERT_EQ(model.history.size(), 1u);
  EXPECT_NEAR(model.history[0].train_loss, evaluate_loss(init, split.train), 1e-12);
  EXPECT_NEAR(model.history[0].val_loss, evaluate_loss(model.net, split.validation), 1e-12);
}

TEST(FitSource, PatienceOneStopsAfterWorseningEpoch) {
  auto split = random_split(2, 16, 0, 3, 1);
  for (auto& inst : split.train) inst.labels[0] = inst.values(0, 0) > 0.0 ? 1 : 0;
  // Validation copies the training inputs with flipped labels, so any fit to
  // the training set raises the validation loss.
  for (const auto& inst : split.train) {
    auto v = inst;
    v.episode_id = "v" + inst.episode_id;
    v.labels[0] = 1 - v.labels[0];
    split.validation.push_back(v);
  }
  auto c = quick_config();
  c.patience = 1;
  c.max_epochs = 20;
  const auto model = fit_source(split, c, 4, 1);
  ASSERT_EQ(model.history.size(), 2u);
  EXPECT_GT(model.history[1].val_loss, model.history[0].val_loss);
  EXPECT_EQ(model.best_epoch, 1);
  c.max_epochs = 1;
  const auto one = fit_source(split, c, 4, 1);
  EXPECT_EQ(serialize_model(model.net, {}), serialize_model(one.net, {}));
}

TEST(FitSource, BestEpochLossIsMinimumOfHistory) {
  const auto split = random_split(3, 20, 8, 3, 2);
  auto c = quick_config();
  c.dropout = 0.3;
  c.max_epochs = 8;
  const auto model = fit_source(split, c, 4, 2);
  for (const auto& e : model.history) EXPECT_LE(model.best_val_loss, e.val_loss);
  EXPECT_NEAR(evaluate_loss(model.net, split.validation), model.best_val_loss, 1e-12);
}

TEST(FitSource, DeterministicModelBytes) {
  const auto split = random_split(4, 20, 6, 3, 2);
  auto c = quick_config();
  c.dropout = 0.3;
  c.seed = 9;
  const auto a = fit_source(split, c, 5, 2);
  const auto b = fit_source(split, c, 5, 2);
  EXPECT_EQ(serialize_model(a.net, model_metadata(a, "x")), serialize_model(b.net, model_metadata(b, "x")));
  c.seed = 10;
  const auto d = fit_source(split, c, 5, 2);
  EXPECT_NE(serialize_model(a.net, {}), serialize_model(d.net, {}));
}

TEST(FitSource, FullBatchSmallStepsDecreaseLoss) {
  const auto split = random_split(5, 10, 0, 3, 2);
  TrainConfig c;
  c.batch_size = 10;
  c.learning_rate = 1e-5;
  c.dropout = 0.0;
  c.max_epochs = 50;
  c.patience = 1000;
  const auto model = fit_source(split, c, 4, 2);
  ASSERT_EQ(model.history.size(), 50u);
  for (std::size_t i = 1; i < model.history.size(); ++i) {
    EXPECT_LE(model.history[i].train_loss, model.history[i - 1].train_loss + 1e-9) << "epoch " << i + 1;
  }
}

TEST(FitSource, Errors) {
  DatasetSplit empty;
  empty.task_names = {"a"};
  EXPECT_THROW(fit_source(empty, quick_config(), 2, 1), ArgumentError);
}

TEST(HiddenSweep, SelectsMinimumWithSmallerSizeOnTies) {
  const auto split = random_split(6, 24, 10, 3, 2);
  auto c = quick_config();
  const auto single = hidden_size_sweep(split, c, {4}, 1);
  EXPECT_EQ(single.best.hidden_size(), 4);
  const auto sweep = hidden_size_sweep(split, c, {8, 2, 4}, 1);
  ASSERT_EQ(sweep.val_losses.size(), 3u);
  auto best = sweep.val_losses.front();
  for (const auto& [h, loss] : sweep.val_losses) {
    if (loss < best.second) best = {h, loss};
  }
  EXPECT_EQ(sweep.best.hidden_size(), best.first);
  EXPECT_EQ(sweep.best.best_val_loss, best.second);
  const auto tie = hidden_size_sweep(split, c, {4, 4}, 1);
  EXPECT_EQ(tie.val_losses[0].second, tie.val_losses[1].second);
  EXPECT_EQ(tie.best.hidden_size(), 4);
  EXPECT_THROW(hidden_size_sweep(split, c, {}, 1), ArgumentError);
}

TEST(History, CsvLayout) {
  const auto text = history_csv({{1, 0.5, 0.25}, {2, 0.125, 1.0}});
  EXPECT_EQ(text.substr(0, text.find('\n')), "epoch,train_loss,val_loss");
  EXPECT_NE(text.find("\n1,0.5,0.25\n"), std::string::npos);
}

TEST(ModelFile, MetadataRoundTrip) {
  const auto split = random_split(7, 10, 4, 3, 2);
  const auto model = fit_source(split, quick_config(), 3, 2);
  const auto text = serialize_model(model.net, model_metadata(model, "schema"));
  const auto back = model_from_file(text);
  EXPECT_EQ(back.task_names, model.task_names);
  EXPECT_EQ(back.best_epoch, model.best_epoch);
  EXPECT_EQ(back.config.to_json(), model.config.to_json());
  for (const auto& inst : split.validation) EXPECT_EQ(predict(back.net, inst), predict(model.net, inst));
}
