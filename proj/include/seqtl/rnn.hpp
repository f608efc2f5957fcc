// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqtl/dataset.hpp"
#include "seqtl/rng.hpp"

namespace seqtl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One GRU layer. Input matrices are hidden x input, recurrent matrices hidden x hidden.
///
///   r  = sigmoid(W_r x + U_r h_prev + b_r)
///   u  = sigmoid(W_u x + U_u h_prev + b_u)
///   c  = tanh(W_c x + U_c (r * h_prev) + b_c)
///   h  = (1 - u) * h_prev + u * c
struct GruLayerParams {
  Matrix w_reset, w_update, w_cand;
  Matrix u_reset, u_update, u_cand;
  Vector b_reset, b_update, b_cand;

  static GruLayerParams zeros(int input_size, int hidden_size);
  int input_size() const noexcept { return static_cast<int>(w_reset.cols()); }
  int hidden_size() const noexcept { return static_cast<int>(w_reset.rows()); }
};

struct GruStack {
  std::vector<GruLayerParams> layers;

  int num_layers() const noexcept { return static_cast<int>(layers.size()); }
  int input_size() const { return layers.front().input_size(); }
  int hidden_size() const { return layers.front().hidden_size(); }
  /// Throws DimensionError unless every layer has consistent shapes and layer l>1 consumes h.
  void validate() const;
};

/// Sigmoid classification layer over the top layer's last hidden state.
struct HeadParams {
  Matrix weight;  // K x h
  Vector bias;    // K

  int num_tasks() const noexcept { return static_cast<int>(weight.rows()); }
};

/// Every trainable tensor of the pre-training network. Gradients share the layout.
struct NetworkParams {
  GruStack stack;
  HeadParams head;

  static NetworkParams zeros(int input_size, int hidden_size, int num_layers, int num_tasks);
  /// Flat views of every tensor in a fixed order (layer by layer, then head).
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
  std::vector<std::string> tensor_names() const;
  std::size_t parameter_count() const;
  void validate() const;
};

using Gradients = NetworkParams;

/// Closed form: sum over layers of 3h(d_in + h + 1), plus K(h + 1).
std::size_t parameter_count(int input_size, int hidden_size, int num_layers, int num_tasks);

struct CellStep {
  Vector hidden;
  Vector reset;
  Vector update;
  Vector candidate;
};

CellStep gru_cell_forward(const Vector& x, const Vector& h_prev, const GruLayerParams& p);

/// Activations of one layer at one time step for the instances still running.
struct LayerStep {
  Matrix input;   // d_in x active
  Matrix h_prev;  // h x active
  Matrix reset;
  Matrix update;
  Matrix candidate;
};

/// Cached forward pass over a batch of instances.
///
/// Instances are processed sorted by decreasing valid length (stable), so the
/// instances still running at step t are always the leading `active[t]` columns.
/// No step past an instance's valid length is ever computed.
struct ForwardTrace {
  std::vector<int> order;    // column j holds batch instance order[j]
  std::vector<int> lengths;  // valid lengths in column order
  std::vector<int> active;   // active[t] = #columns with length > t
  std::vector<std::vector<LayerStep>> steps;  // [layer][t]
  /// Inverted-dropout masks on layer outputs feeding layer l + 1, [l][t]; empty in eval mode.
  std::vector<std::vector<Matrix>> layer_masks;
  Matrix head_mask;                  // h x B; empty in eval mode
  std::vector<Matrix> final_hidden;  // per layer, h x B: z_{valid_length, l}
  Matrix logits;                     // K x B, filled by apply_head
  Matrix probabilities;              // K x B

  int batch_size() const noexcept { return static_cast<int>(order.size()); }
  bool training() const noexcept { return head_mask.size() > 0; }
  /// Concatenated last-step hidden state of batch instance i (all layers, layer order).
  Vector last_state(int instance) const;
  /// Last-step hidden state of one layer for batch instance i.
  Vector last_state(int instance, int layer) const;
  /// K probabilities for batch instance i.
  Vector prediction(int instance) const;
};

struct DropoutConfig {
  double rate = 0.0;
  Rng* rng = nullptr;
};

/// Runs every layer over each instance's valid steps. Dropout, when given with a
/// positive rate, is applied to layer outputs between layers and before the head only.
ForwardTrace stack_forward(std::span<const EncodedInstance* const> batch, const GruStack& stack,
                           std::optional<DropoutConfig> dropout = std::nullopt);
ForwardTrace stack_forward(const EncodedInstance& instance, const GruStack& stack);

/// sigmoid(W z + b) for one top-layer state.
Vector head_forward(const Vector& z_last, const HeadParams& head);
/// Fills trace.logits and trace.probabilities from the (masked) top-layer final state.
void apply_head(ForwardTrace& trace, const HeadParams& head);

/// Probability clipping applied before taking logs in the cross-entropy.
inline constexpr double kProbClip = 1e-12;

struct BackwardResult {
  Gradients gradients;
  double loss = 0.0;  // mean over instances and tasks
};

/// Exact gradients of the mean multi-label cross-entropy over the traced batch.
/// `targets` is K x B in batch order. The trace must come from apply_head on the same parameters.
BackwardResult backward_bptt(const ForwardTrace& trace, const Matrix& targets, const GruStack& stack,
                             const HeadParams& head);

/// Glorot-uniform input and head weights, orthogonal recurrent weights, zero biases.
NetworkParams init_params(int input_size, int hidden_size, int num_layers, int num_tasks, std::uint64_t seed);

/// Evaluation-mode probabilities (K) for one instance.
Vector predict(const NetworkParams& net, const EncodedInstance& instance);

struct EpochLoss {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct ModelMetadata {
  std::string schema_hash;
  std::string train_config = "{}";  // JSON object text
  std::uint64_t seed = 0;
  std::vector<std::string> task_names;
  std::vector<EpochLoss> history;
};

/// Versioned JSON model file with explicit shapes and row-major payloads.
std::string serialize_model(const NetworkParams& net, const ModelMetadata& meta);
/// Throws UnsupportedFormatError for a missing/unknown version and ValidationError on shape disagreement.
std::pair<NetworkParams, ModelMetadata> deserialize_model(const std::string& text);

}  // namespace seqtl
