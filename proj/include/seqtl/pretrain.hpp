// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "seqtl/dataset.hpp"
#include "seqtl/rnn.hpp"

namespace seqtl {

struct TrainConfig {
  int batch_size = 128;
  double learning_rate = 1e-4;
  double dropout = 0.3;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
  std::string to_json() const;
  /// Missing keys keep the values already in `base`.
  static TrainConfig from_json(const std::string& text, TrainConfig base);
  static TrainConfig from_json(const std::string& text);
};

/// First and second moments for every tensor plus the step counter.
struct AdamState {
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
  long step = 0;

  static AdamState for_shapes(const std::vector<std::span<const double>>& tensors);
};

/// Bias-corrected Adam update on a list of tensors. Throws NonFiniteError
/// (naming the offending tensor) before touching any parameter.
void adam_step(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads,
               AdamState& state, const TrainConfig& config);
void adam_step(NetworkParams& params, const Gradients& grads, AdamState& state, const TrainConfig& config);

/// Mean over rows and columns of -[y log p + (1 - y) log(1 - p)], p clipped to [1e-12, 1 - 1e-12].
double multilabel_cross_entropy(const Matrix& probabilities, const Matrix& targets);

/// K x N evaluation-mode probabilities.
Matrix predict_all(const NetworkParams& net, std::span<const EncodedInstance> instances);
/// N x K label matrix of the instances.
Matrix label_matrix(std::span<const EncodedInstance> instances, int num_tasks);
/// Evaluation-mode mean cross-entropy.
double evaluate_loss(const NetworkParams& net, std::span<const EncodedInstance> instances);

struct PretrainedModel {
  NetworkParams net;
  std::vector<std::string> task_names;
  std::vector<EpochLoss> history;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  TrainConfig config;

  int hidden_size() const { return net.stack.hidden_size(); }
  int num_layers() const { return net.stack.num_layers(); }
};

using EpochCallback = std::function<void(const EpochLoss&)>;

/// Mini-batch multi-label training with seeded shuffling and early stopping on
/// validation loss. Returns the parameters of the best validation epoch. When the
/// validation list is empty the evaluation-mode training loss is monitored instead.
PretrainedModel fit_source(const DatasetSplit& split, const TrainConfig& config, int hidden_size, int num_layers,
                           const EpochCallback& on_epoch = {});

struct HiddenSweepResult {
  PretrainedModel best;
  std::vector<std::pair<int, double>> val_losses;  // (h, best-epoch validation loss)
};

/// Trains one model per hidden size; the smallest validation loss wins, ties go to the smaller h.
HiddenSweepResult hidden_size_sweep(const DatasetSplit& split, const TrainConfig& config,
                                    const std::vector<int>& candidates, int num_layers,
                                    const EpochCallback& on_epoch = {});

ModelMetadata model_metadata(const PretrainedModel& model, const std::string& schema_hash);
PretrainedModel model_from_file(const std::string& text);

/// CSV with header epoch,train_loss,val_loss.
std::string history_csv(const std::vector<EpochLoss>& history);

}  // namespace seqtl
