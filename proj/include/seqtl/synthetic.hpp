// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqtl/dataset.hpp"

namespace seqtl {

/// How one phenotype shows up in the real-valued channels.
struct PhenotypeSignature {
  std::vector<int> channels;  // real channel indices, non-empty
  double mean_shift = 0.0;
  double trend_slope = 0.0;  // per hour, starting at 0 on hour 1
};

/// Parameters of the seeded synthetic cohort.
///
/// Real channel c of an episode is e_t + sum over active phenotypes touching c of
/// (mean_shift + trend_slope * (t - 1)), where e_t is AR(1) noise with the given
/// coefficient and innovation std. Phenotype j tilts categorical channel
/// (j mod n_categorical) toward category 1 + (j mod (categories - 1)) by
/// `category_boost` logits. The last task, "mortality", is 1 when
/// sum_j w_j bit_j + mortality_channel_scale * mean(channel 0) + noise exceeds the
/// cohort quantile that leaves `mortality_prevalence` of episodes positive.
struct SyntheticSpec {
  std::uint64_t seed = 0;
  int n_phenotypes = 0;
  std::vector<double> prevalences;
  int n_real_channels = 0;
  int n_categorical_channels = 0;
  int categories_per_channel = 4;
  int min_length = 48;
  int max_length = 48;
  std::vector<PhenotypeSignature> signatures;
  double noise_std = 1.0;
  double ar_coefficient = 0.0;
  double missing_rate = 0.0;
  double category_boost = 1.0;
  std::vector<double> mortality_weights;  // defaults to 1 per phenotype when empty
  double mortality_channel_scale = 0.5;
  double mortality_noise_std = 0.5;
  double mortality_prevalence = 0.15;
  int n_train = 0;
  int n_validation = 0;
  int n_test = 0;

  /// Throws ValidationError for out-of-range fields.
  void validate() const;

  static SyntheticSpec from_json(const std::string& text);
  std::string to_json() const;
};

inline constexpr const char* kMortalityTask = "mortality";

/// Phenotype task names P01, P02, ... followed by "mortality".
std::vector<std::string> synthetic_task_names(int n_phenotypes);

/// Schema with real channels x01.. and categorical channels cat1.. (categories a, b, ...).
ChannelSchema synthetic_schema(const SyntheticSpec& spec);

/// Raw episodes in train, validation, test order. Episode i uses its own stream
/// Rng(seed, i + 1), so records do not depend on generation order.
std::vector<EpisodeRecord> generate_records(const SyntheticSpec& spec);

/// Generates, encodes (horizon = max_length) and splits the cohort.
Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace seqtl
