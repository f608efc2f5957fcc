// SPDX-License-Identifier: Apache-2.0
#include "seqtl/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <numeric>

#include "seqtl/csv.hpp"
#include "seqtl/error.hpp"

namespace seqtl {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size < 1) throw ArgumentError("batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw ArgumentError("learning_rate must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ArgumentError("dropout must lie in [0, 1)");
  if (max_epochs < 1) throw ArgumentError("max_epochs must be at least 1");
  if (patience < 1) throw ArgumentError("patience must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ArgumentError("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ArgumentError("Adam epsilon must be positive");
}

std::string TrainConfig::to_json() const {
  json doc = {{"batch_size", batch_size}, {"learning_rate", learning_rate},
              {"dropout", dropout},       {"max_epochs", max_epochs},
              {"patience", patience},     {"seed", seed},
              {"beta1", beta1},           {"beta2", beta2},
              {"epsilon", epsilon}};
  return doc.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) { return from_json(text, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const std::string& text, TrainConfig base) {
  try {
    const auto doc = json::parse(text);
    base.batch_size = doc.value("batch_size", base.batch_size);
    base.learning_rate = doc.value("learning_rate", base.learning_rate);
    base.dropout = doc.value("dropout", base.dropout);
    base.max_epochs = doc.value("max_epochs", base.max_epochs);
    base.patience = doc.value("patience", base.patience);
    base.seed = doc.value("seed", base.seed);
    base.beta1 = doc.value("beta1", base.beta1);
    base.beta2 = doc.value("beta2", base.beta2);
    base.epsilon = doc.value("epsilon", base.epsilon);
  } catch (const json::exception& e) {
    throw ParseError("train config", 0, e.what());
  }
  base.validate();
  return base;
}

AdamState AdamState::for_shapes(const std::vector<std::span<const double>>& tensors) {
  AdamState s;
  for (const auto& t : tensors) {
    s.first.emplace_back(t.size(), 0.0);
    s.second.emplace_back(t.size(), 0.0);
  }
  return s;
}

void adam_step(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads,
               AdamState& state, const TrainConfig& config) {
  if (params.size() != grads.size() || state.first.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and state tensor counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size() || state.first[i].size() != params[i].size()) {
      throw DimensionError("adam_step: tensor " + std::to_string(i) + " shape mismatch");
    }
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      if (!std::isfinite(grads[i][j])) {
        throw NonFiniteError("non-finite gradient in tensor " + std::to_string(i) + " at index " +
                             std::to_string(j) + " (step " + std::to_string(state.step + 1) + ")");
      }
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first[i];
    auto& v = state.second[i];
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const double g = grads[i][j];
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g;
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      params[i][j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

void adam_step(NetworkParams& params, const Gradients& grads, AdamState& state, const TrainConfig& config) {
  adam_step(params.tensors(), grads.tensors(), state, config);
}

double multilabel_cross_entropy(const Matrix& probabilities, const Matrix& targets) {
  if (probabilities.rows() != targets.rows() || probabilities.cols() != targets.cols()) {
    throw DimensionError("cross-entropy: prediction and target shapes differ");
  }
  if (probabilities.size() == 0) throw DimensionError("cross-entropy of an empty batch");
  double total = 0.0;
  for (Eigen::Index j = 0; j < targets.cols(); ++j) {
    for (Eigen::Index i = 0; i < targets.rows(); ++i) {
      const double p = std::clamp(probabilities(i, j), kProbClip, 1.0 - kProbClip);
      const double y = targets(i, j);
      total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
  }
  return total / static_cast<double>(probabilities.size());
}

namespace {

constexpr std::size_t kEvalBatch = 256;

std::vector<const EncodedInstance*> pointers(std::span<const EncodedInstance> instances, std::size_t begin,
                                             std::size_t end) {
  std::vector<const EncodedInstance*> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(&instances[i]);
  return out;
}

}  // namespace

Matrix predict_all(const NetworkParams& net, std::span<const EncodedInstance> instances) {
  Matrix out(net.head.num_tasks(), static_cast<Eigen::Index>(instances.size()));
  for (std::size_t begin = 0; begin < instances.size(); begin += kEvalBatch) {
    const auto end = std::min(instances.size(), begin + kEvalBatch);
    const auto batch = pointers(instances, begin, end);
    auto tr = stack_forward(batch, net.stack);
    apply_head(tr, net.head);
    for (std::size_t j = 0; j < tr.order.size(); ++j) {
      out.col(static_cast<Eigen::Index>(begin) + tr.order[j]) = tr.probabilities.col(static_cast<Eigen::Index>(j));
    }
  }
  return out;
}

Matrix label_matrix(std::span<const EncodedInstance> instances, int num_tasks) {
  Matrix y(static_cast<Eigen::Index>(instances.size()), num_tasks);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (static_cast<int>(instances[i].labels.size()) != num_tasks) {
      throw DimensionError("instance '" + instances[i].episode_id + "' does not carry " +
                           std::to_string(num_tasks) + " labels");
    }
    for (int k = 0; k < num_tasks; ++k) y(static_cast<Eigen::Index>(i), k) = instances[i].labels[static_cast<std::size_t>(k)];
  }
  return y;
}

double evaluate_loss(const NetworkParams& net, std::span<const EncodedInstance> instances) {
  const Matrix p = predict_all(net, instances);
  return multilabel_cross_entropy(p.transpose(), label_matrix(instances, net.head.num_tasks()));
}

PretrainedModel fit_source(const DatasetSplit& split, const TrainConfig& config, int hidden_size, int num_layers,
                           const EpochCallback& on_epoch) {
  config.validate();
  if (split.train.empty()) throw ArgumentError("cannot train on an empty training set");
  const int k = split.num_tasks();
  if (k < 1) throw ArgumentError("training needs at least one task");
  const int n = split.train.front().width();

  PretrainedModel model;
  model.task_names = split.task_names;
  model.config = config;
  NetworkParams net = init_params(n, hidden_size, num_layers, k, config.seed);
  AdamState adam = AdamState::for_shapes(std::as_const(net).tensors());
  Rng dropout_rng(config.seed, 0xD80F);

  const auto& monitor = split.validation.empty() ? split.train : split.validation;
  const std::size_t count = split.train.size();
  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::vector<std::size_t> order(count);

  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng(config.seed, 0x5100 + static_cast<std::uint64_t>(epoch)).shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < count; begin += batch) {
      const auto end = std::min(count, begin + batch);
      std::vector<const EncodedInstance*> members;
      Matrix targets(k, static_cast<Eigen::Index>(end - begin));
      for (std::size_t i = begin; i < end; ++i) {
        const auto& inst = split.train[order[i]];
        if (static_cast<int>(inst.labels.size()) != k) {
          throw DimensionError("instance '" + inst.episode_id + "' does not carry " + std::to_string(k) + " labels");
        }
        members.push_back(&inst);
        for (int t = 0; t < k; ++t) targets(t, static_cast<Eigen::Index>(i - begin)) = inst.labels[static_cast<std::size_t>(t)];
      }
      auto trace = stack_forward(members, net.stack, DropoutConfig{config.dropout, &dropout_rng});
      apply_head(trace, net.head);
      auto result = backward_bptt(trace, targets, net.stack, net.head);
      if (!std::isfinite(result.loss)) {
        throw NonFiniteError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      loss_sum += result.loss * static_cast<double>(end - begin);
      adam_step(net, result.gradients, adam, config);
    }

    const EpochLoss record{epoch, loss_sum / static_cast<double>(count), evaluate_loss(net, monitor)};
    if (!std::isfinite(record.val_loss)) {
      throw NonFiniteError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    model.history.push_back(record);
    if (on_epoch) on_epoch(record);

    if (record.val_loss < best) {
      best = record.val_loss;
      model.net = net;
      model.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  model.best_val_loss = best;
  return model;
}

HiddenSweepResult hidden_size_sweep(const DatasetSplit& split, const TrainConfig& config,
                                    const std::vector<int>& candidates, int num_layers,
                                    const EpochCallback& on_epoch) {
  if (candidates.empty()) throw ArgumentError("hidden size grid must not be empty");
  auto sorted = candidates;
  std::sort(sorted.begin(), sorted.end());
  HiddenSweepResult out;
  bool have = false;
  for (int h : sorted) {
    auto model = fit_source(split, config, h, num_layers, on_epoch);
    out.val_losses.emplace_back(h, model.best_val_loss);
    // Ascending h with strict comparison keeps the smaller size on ties.
    if (!have || model.best_val_loss < out.best.best_val_loss) {
      out.best = std::move(model);
      have = true;
    }
  }
  return out;
}

ModelMetadata model_metadata(const PretrainedModel& model, const std::string& schema_hash) {
  ModelMetadata meta;
  meta.schema_hash = schema_hash;
  meta.train_config = model.config.to_json();
  meta.seed = model.config.seed;
  meta.task_names = model.task_names;
  meta.history = model.history;
  return meta;
}

PretrainedModel model_from_file(const std::string& text) {
  auto [net, meta] = deserialize_model(text);
  PretrainedModel model;
  model.net = std::move(net);
  model.task_names = meta.task_names;
  model.history = meta.history;
  model.config = TrainConfig::from_json(meta.train_config);
  if (!model.history.empty()) {
    const auto best = std::min_element(model.history.begin(), model.history.end(),
                                       [](const EpochLoss& a, const EpochLoss& b) { return a.val_loss < b.val_loss; });
    model.best_epoch = best->epoch;
    model.best_val_loss = best->val_loss;
  }
  return model;
}

std::string history_csv(const std::vector<EpochLoss>& history) {
  std::string out = "epoch,train_loss,val_loss\n";
  for (const auto& e : history) {
    out += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," + format_double(e.val_loss) + "\n";
  }
  return out;
}

}  // namespace seqtl
