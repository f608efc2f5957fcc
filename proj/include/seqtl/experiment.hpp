// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seqtl/dataset.hpp"
#include "seqtl/pretrain.hpp"
#include "seqtl/transfer.hpp"

namespace seqtl {

/// Model families compared in the label-fraction experiment.
enum class Family { LR, RnnC, MnLr1, MnLr2 };

std::string to_string(Family family);
Family family_from(const std::string& name);
inline const std::vector<Family> kAllFamilies = {Family::LR, Family::RnnC, Family::MnLr1, Family::MnLr2};
/// Families that end in a linear probe (and so have sparsity).
inline const std::vector<Family> kProbeFamilies = {Family::LR, Family::MnLr1, Family::MnLr2};

struct SweepOptions {
  std::vector<double> fractions = {0.01, 0.05, 0.1, 0.25, 0.5, 1.0};
  std::vector<std::uint64_t> seeds = {0};
  std::vector<Family> families = kAllFamilies;
  /// RNN-C baseline training; its seed is replaced by the cell seed.
  TrainConfig rnn_config;
  std::vector<int> rnn_hidden_grid = {16, 32, 64};
  int rnn_layers = 2;
  std::vector<double> lambda_grid = kDefaultLambdaGrid;
  LrOptions lr_options;
  int jobs = 1;
};

struct SweepCell {
  Family family = Family::LR;
  double fraction = 1.0;
  std::uint64_t seed = 0;
  std::string status = "ok";  // ok | skipped
  std::string reason;
  double test_auroc = 0.0;
  std::size_t n_train = 0;
  std::size_t n_validation = 0;
  double chosen_lambda = 0.0;  // probe families
  int chosen_hidden = 0;       // RNN-C
  std::optional<LrProbe> probe;
  std::vector<LambdaScore> lambda_scores;
};

struct SweepResult {
  std::string task;
  std::string test_hash;  // SHA-256 over the sorted test episode ids
  std::vector<SweepCell> cells;
};

/// Target data plus the pre-trained network the probes read features from.
struct TransferSetup {
  const PretrainedModel* pretrained = nullptr;
  const DatasetSplit* target = nullptr;  // single target task (K = 1)
  const ChannelSchema* schema = nullptr;
};

/// For every (fraction, seed): stratified subsampling of train and validation,
/// one fit per family with its own hyperparameter search on the subsampled
/// validation set, and AUROC on the full fixed test set. Cells whose subsampled
/// training set is single-class are recorded as skipped.
SweepResult run_label_fraction_sweep(const TransferSetup& setup, const SweepOptions& options);

/// SHA-256 of the sorted, newline-joined episode ids.
std::string instance_set_hash(const std::vector<EncodedInstance>& instances);

/// family,fraction,seed,test_auroc,status
std::string sweep_csv(const SweepResult& result);
/// family,fraction,mean_auroc,std_auroc,n (over ok cells of the given results).
std::string fraction_curve_csv(const std::vector<const SweepResult*>& results);

struct SparsityEntry {
  std::string task;
  Family family = Family::LR;
  bool is_mortality = false;
  double fraction = 0.0;
  Vector abs_weights;
};

struct SparsityReport {
  double threshold = 1e-3;
  std::vector<SparsityEntry> entries;

  /// Indices of features with |w| >= threshold in at least one task of the family.
  std::vector<int> relevant_features(Family family) const;
};

struct ProbeRecord {
  std::string task;
  Family family = Family::LR;
  bool is_mortality = false;
  const LrProbe* probe = nullptr;
};

SparsityReport sparsity_report(const std::vector<ProbeRecord>& probes, double threshold = 1e-3);

/// Rows: "Phenotyping" (mean +/- std over phenotype tasks) and one per mortality-like
/// task; columns task,LR,MN-LR-1,MN-LR-2.
std::string sparsity_table_csv(const SparsityReport& report);
/// task,family,sparsity_fraction at full precision.
std::string sparsity_fractions_csv(const SparsityReport& report);
/// task,feature_index,abs_weight for one family.
std::string heatmap_csv(const SparsityReport& report, Family family);

}  // namespace seqtl
