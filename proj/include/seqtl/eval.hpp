// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "seqtl/dataset.hpp"
#include "seqtl/rnn.hpp"

namespace seqtl {

struct ScoredSet {
  std::string task;
  std::vector<double> scores;
  std::vector<int> labels;

  std::size_t positives() const;
};

/// Mann-Whitney AUROC with average ranks for ties. Throws DegenerateLabelsError
/// unless both classes are present.
double auroc(const ScoredSet& set);
double auroc(std::span<const double> scores, std::span<const int> labels);

/// Per-task AUROC averaged with weights equal to each task's positive count.
double weighted_auroc(std::span<const ScoredSet> tasks);

/// Statistics per raw channel: min, max, mean, std, skewness, count.
inline constexpr int kStatsPerWindow = 6;
/// Windows: full; first 10/25/50 %; last 10/25/50 %.
inline constexpr int kStatWindows = 7;
inline constexpr int kStatsPerChannel = kStatsPerWindow * kStatWindows;

/// Hand-crafted baseline features over observed raw values (categoricals as
/// ordinal codes). Layout: channel-major, then window, then statistic.
Vector statistical_features(const EncodedInstance& instance, const ChannelSchema& schema);

}  // namespace seqtl
