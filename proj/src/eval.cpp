// SPDX-License-Identifier: Apache-2.0
#include "seqtl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "seqtl/error.hpp"

namespace seqtl {

std::size_t ScoredSet::positives() const {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](int y) { return y != 0; }));
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auroc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  double positives = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    // Ranks i+1..j share their average.
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] != 0) {
        positive_rank_sum += avg_rank;
        positives += 1.0;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) {
    throw DegenerateLabelsError("AUROC is undefined without both positive and negative instances");
  }
  return (positive_rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

double auroc(const ScoredSet& set) { return auroc(set.scores, set.labels); }

double weighted_auroc(std::span<const ScoredSet> tasks) {
  if (tasks.empty()) throw ArgumentError("weighted AUROC needs at least one task");
  double num = 0.0;
  double den = 0.0;
  for (const auto& t : tasks) {
    const double a = auroc(t);
    const auto w = static_cast<double>(t.positives());
    num += w * a;
    den += w;
  }
  return num / den;
}

namespace {

struct WindowStats {
  double min = 0, max = 0, mean = 0, std = 0, skew = 0, count = 0;
};

WindowStats window_stats(const std::vector<double>& v) {
  WindowStats s;
  if (v.empty()) return s;
  const auto n = static_cast<double>(v.size());
  s.count = n;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  if (s.min == s.max) {
    s.mean = s.min;
    return s;
  }
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double m2 = 0.0;
  double m3 = 0.0;
  for (double x : v) {
    const double d = x - s.mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  s.std = std::sqrt(m2);
  if (v.size() >= 3 && m2 > 0.0) s.skew = m3 / std::pow(m2, 1.5);
  return s;
}

}  // namespace

Vector statistical_features(const EncodedInstance& instance, const ChannelSchema& schema) {
  if (instance.width() != schema.encoded_width() || instance.observed.cols() != schema.raw_width()) {
    throw DimensionError("instance '" + instance.episode_id + "' does not match the channel schema");
  }
  const int len = instance.valid_length();
  const int raw = schema.raw_width();
  // [begin, end) rows of each window; partial windows cover ceil(p * len) rows.
  std::vector<std::pair<int, int>> windows{{0, len}};
  for (double p : {0.1, 0.25, 0.5}) {
    const int k = std::max(1, static_cast<int>(std::ceil(p * len - 1e-9)));
    windows.emplace_back(0, k);
  }
  for (double p : {0.1, 0.25, 0.5}) {
    const int k = std::max(1, static_cast<int>(std::ceil(p * len - 1e-9)));
    windows.emplace_back(len - k, len);
  }

  Vector out = Vector::Zero(static_cast<Eigen::Index>(raw) * kStatsPerChannel);
  std::vector<double> values;
  for (int c = 0; c < raw; ++c) {
    const auto& ch = schema.channels()[static_cast<std::size_t>(c)];
    const int col = schema.offset(c);
    for (int w = 0; w < kStatWindows; ++w) {
      values.clear();
      for (int t = windows[static_cast<std::size_t>(w)].first; t < windows[static_cast<std::size_t>(w)].second; ++t) {
        if (!instance.observed(t, c)) continue;
        if (ch.kind == ChannelKind::Real) {
          values.push_back(instance.values(t, col));
        } else {
          Eigen::Index hot = 0;
          instance.values.row(t).segment(col, ch.width()).maxCoeff(&hot);
          values.push_back(static_cast<double>(hot));
        }
      }
      const auto s = window_stats(values);
      const Eigen::Index base = static_cast<Eigen::Index>(c) * kStatsPerChannel + w * kStatsPerWindow;
      out(base + 0) = s.min;
      out(base + 1) = s.max;
      out(base + 2) = s.mean;
      out(base + 3) = s.std;
      out(base + 4) = s.skew;
      out(base + 5) = s.count;
    }
  }
  return out;
}

}  // namespace seqtl
