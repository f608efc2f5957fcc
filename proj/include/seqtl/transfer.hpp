// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "seqtl/dataset.hpp"
#include "seqtl/rnn.hpp"

namespace seqtl {

/// Which last-step hidden states feed the probe: the top layer only, or all layers concatenated.
enum class LayerSelection { Top, All };

std::string to_string(LayerSelection layers);
LayerSelection layer_selection_from(const std::string& name);

struct FeatureVector {
  std::string episode_id;
  Vector values;
  int label = 0;
};

/// Row-per-instance feature matrix with labels, the probe's training input.
struct FeatureSet {
  std::vector<std::string> episode_ids;
  Matrix values;  // N x m
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  int dimension() const noexcept { return static_cast<int>(values.cols()); }
  FeatureVector row(std::size_t i) const;
  /// Rows whose episode id is in `ids`, in the order of `ids`.
  FeatureSet subset(const std::vector<std::string>& ids) const;
};

/// Last-step hidden state of a frozen stack in evaluation mode. `label_index`
/// picks which of the instance's labels is carried along.
FeatureVector extract_features(const GruStack& stack, const EncodedInstance& instance, LayerSelection layers,
                               int label_index = 0);
FeatureSet extract_feature_set(const GruStack& stack, std::span<const EncodedInstance> instances,
                               LayerSelection layers, int label_index = 0);

/// sign(v) * max(|v| - threshold, 0).
double soft_threshold(double v, double threshold);

/// L1-penalized logistic regression on standardized features.
struct LrProbe {
  Vector weights;  // in standardized feature space
  double intercept = 0.0;
  double lambda = 0.0;
  Vector feature_means;
  Vector feature_stds;
  std::string layers_used = "top";

  int dimension() const noexcept { return static_cast<int>(weights.size()); }
};

struct LrOptions {
  /// Stop once the objective decreases by less than this for `patience` consecutive iterations.
  double tolerance = 1e-9;
  int patience = 5;
  int max_iterations = 100000;
  bool record_objective = false;
};

struct LrFit {
  LrProbe probe;
  int iterations = 0;
  bool converged = false;
  double step = 0.0;
  std::vector<double> objective;  // per iteration, starting with the initial point, when recorded
};

/// Minimizes sum_i NLL_i + lambda * ||w||_1 (intercept unpenalized) with ISTA at a
/// fixed step 4 / ||[X 1]||_2^2, starting from w = 0 and b = logit(positive rate).
LrFit lr_fit_l1(const FeatureSet& train, double lambda, const LrOptions& options = {});

/// Probability of the positive class for one raw (unstandardized) feature vector.
double lr_predict(const LrProbe& probe, const Vector& features);
double lr_predict(const LrProbe& probe, const FeatureVector& feature);
Vector lr_predict_all(const LrProbe& probe, const FeatureSet& set);

/// Standardized feature matrix under the probe's stored statistics.
Matrix standardize(const LrProbe& probe, const Matrix& raw);

/// max_j |sum_i x_ij (y_i - ybar)| on training-standardized features.
double lambda_max(const FeatureSet& train);

/// Summed NLL of the probe on a set (no penalty).
double negative_log_likelihood(const LrProbe& probe, const FeatureSet& set);

inline const std::vector<double> kDefaultLambdaGrid = {0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0};

struct LambdaScore {
  double lambda = 0.0;
  double val_mean_nll = 0.0;   // selection metric
  double val_objective = 0.0;  // summed NLL + lambda * ||w||_1 on validation
  double sparsity = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct LambdaSweepResult {
  LrProbe best;
  std::vector<LambdaScore> scores;
};

/// Fits one probe per lambda; keeps the smallest mean validation NLL, ties toward larger lambda.
LambdaSweepResult lambda_sweep(const FeatureSet& train, const FeatureSet& validation,
                               const std::vector<double>& grid, const LrOptions& options = {});

/// Fraction of weights with |w| < threshold (intercept excluded).
double sparsity_fraction(const LrProbe& probe, double threshold = 1e-3);

/// Single-task head equivalent to the probe applied to top-layer features.
HeadParams fold_probe_into_head(const LrProbe& probe);

std::string probe_to_json(const LrProbe& probe);
LrProbe probe_from_json(const std::string& text);

/// CSV header episode_id,label,f0,...,f{m-1}; values at full precision.
std::string features_to_csv(const FeatureSet& set);
FeatureSet features_from_csv(const std::string& text, const std::string& source_name);

}  // namespace seqtl
