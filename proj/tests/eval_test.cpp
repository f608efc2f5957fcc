// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "seqtl/error.hpp"
#include "seqtl/eval.hpp"

using namespace seqtl;

namespace {

ScoredSet separated(int positives, int correct_positives, int negatives) {
  ScoredSet s;
  for (int i = 0; i < negatives; ++i) {
    s.scores.push_back(i);
    s.labels.push_back(0);
  }
  for (int i = 0; i < positives; ++i) {
    s.scores.push_back(i < correct_positives ? 100.0 : -1.0);
    s.labels.push_back(1);
  }
  return s;
}

EncodedInstance encode_series(const ChannelSchema& schema, const std::vector<std::vector<RawValue>>& hours) {
  EpisodeRecord rec;
  rec.episode_id = "x";
  rec.hours = hours;
  rec.labels = {{"t", 0}};
  return encode_record(rec, schema, kDefaultHorizon, {"t"});
}

double stat(const Vector& f, int channel, int window, int statistic) {
  return f(channel * kStatsPerChannel + window * kStatsPerWindow + statistic);
}

enum { kMin, kMax, kMean, kStd, kSkew, kCount };

}  // namespace

TEST(Auroc, Examples) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(auroc(s, y), 0.75);
  EXPECT_DOUBLE_EQ(auroc(s, y), oracle::pair_count_auroc(s, y));
  EXPECT_EQ(auroc(std::vector<double>{1, 2, 3, 4}, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_EQ(auroc(std::vector<double>(6, 0.3), std::vector<int>{0, 1, 0, 1, 1, 0}), 0.5);
  EXPECT_THROW(auroc(std::vector<double>{1, 2}, std::vector<int>{1, 1}), DegenerateLabelsError);
  EXPECT_THROW(auroc(std::vector<double>{1, 2}, std::vector<int>{1}), DimensionError);
}

// Property: rank-based AUROC equals the pair-count oracle exactly, ties included.
TEST(Auroc, MatchesPairCountOracleWithTies) {
  std::mt19937_64 gen(12);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(gen() % 49);
    std::vector<double> s(n);
    std::vector<int> y(n);
    const int levels = 1 + static_cast<int>(gen() % 8);
    for (int i = 0; i < n; ++i) {
      s[i] = static_cast<double>(gen() % levels) * 0.25;
      y[i] = static_cast<int>(gen() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_EQ(auroc(s, y), oracle::pair_count_auroc(s, y)) << "trial " << trial;
  }
}

TEST(Auroc, MonotoneInvarianceAndComplement) {
  std::mt19937_64 gen(13);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 10 + trial;
    std::vector<double> s(n), e(n), a(n);
    std::vector<int> y(n), flipped(n);
    for (int i = 0; i < n; ++i) {
      s[i] = std::round(nd(gen) * 4.0) / 4.0;
      e[i] = std::exp(s[i]);
      a[i] = 2.0 * s[i] + 1.0;
      y[i] = i % 3 == 0;
      flipped[i] = 1 - y[i];
    }
    const double base = auroc(s, y);
    EXPECT_DOUBLE_EQ(auroc(e, y), base);
    EXPECT_DOUBLE_EQ(auroc(a, y), base);
    EXPECT_NEAR(base + auroc(s, flipped), 1.0, 1e-15);
  }
}

TEST(WeightedAuroc, PositiveCountWeights) {
  const auto a = separated(10, 9, 10);
  const auto b = separated(30, 18, 10);
  ASSERT_DOUBLE_EQ(auroc(a), 0.9);
  ASSERT_DOUBLE_EQ(auroc(b), 0.6);
  const std::vector<ScoredSet> tasks{a, b};
  EXPECT_NEAR(weighted_auroc(tasks), (10 * 0.9 + 30 * 0.6) / 40.0, 1e-15);
  EXPECT_NEAR(weighted_auroc(tasks), 0.675, 1e-12);
  const std::vector<ScoredSet> single{a};
  EXPECT_EQ(weighted_auroc(single), auroc(a));
  const std::vector<ScoredSet> equal{separated(10, 9, 10), separated(10, 4, 7)};
  EXPECT_NEAR(weighted_auroc(equal), 0.5 * (auroc(equal[0]) + auroc(equal[1])), 1e-15);
  EXPECT_THROW(weighted_auroc(std::span<const ScoredSet>{}), ArgumentError);
}

TEST(StatisticalFeatures, CountFor17Channels) {
  std::vector<Channel> channels;
  for (int i = 0; i < 12; ++i) channels.push_back({"r" + std::to_string(i), ChannelKind::Real, {}});
  for (int i = 0; i < 5; ++i) channels.push_back({"c" + std::to_string(i), ChannelKind::Categorical, {"a", "b", "c"}});
  const ChannelSchema schema(channels);
  std::vector<RawValue> hour(17, RawValue{1.0});
  for (int i = 12; i < 17; ++i) hour[i] = std::string("b");
  const auto inst = encode_series(schema, {hour, hour});
  EXPECT_EQ(statistical_features(inst, schema).size(), 714);
}

TEST(StatisticalFeatures, SeriesOneToFour) {
  const ChannelSchema schema({{"x", ChannelKind::Real, {}}});
  const auto inst = encode_series(schema, {{1.0}, {2.0}, {3.0}, {4.0}});
  const auto f = statistical_features(inst, schema);
  EXPECT_DOUBLE_EQ(stat(f, 0, 0, kMean), 2.5);
  EXPECT_NEAR(stat(f, 0, 0, kStd), 1.1180, 5e-5);
  EXPECT_DOUBLE_EQ(stat(f, 0, 0, kStd), std::sqrt(1.25));
  EXPECT_EQ(stat(f, 0, 0, kMin), 1.0);
  EXPECT_EQ(stat(f, 0, 0, kMax), 4.0);
  EXPECT_NEAR(stat(f, 0, 0, kSkew), 0.0, 1e-15);
  EXPECT_EQ(stat(f, 0, 0, kCount), 4.0);
  // first 10 %: one row; last 50 %: rows 3 and 4.
  EXPECT_EQ(stat(f, 0, 1, kMean), 1.0);
  EXPECT_EQ(stat(f, 0, 1, kCount), 1.0);
  EXPECT_EQ(stat(f, 0, 6, kMean), 3.5);
  EXPECT_EQ(stat(f, 0, 6, kCount), 2.0);
}

TEST(StatisticalFeatures, SkewMatchesPopulationFormula) {
  const ChannelSchema schema({{"x", ChannelKind::Real, {}}});
  const std::vector<double> v{0.0, 0.0, 1.0, 5.0};
  const auto inst = encode_series(schema, {{v[0]}, {v[1]}, {v[2]}, {v[3]}});
  const auto f = statistical_features(inst, schema);
  const double mean = 1.5;
  double m2 = 0.0, m3 = 0.0;
  for (double x : v) {
    m2 += (x - mean) * (x - mean) / 4.0;
    m3 += (x - mean) * (x - mean) * (x - mean) / 4.0;
  }
  EXPECT_NEAR(stat(f, 0, 0, kSkew), m3 / std::pow(m2, 1.5), 1e-12);
}

TEST(StatisticalFeatures, ConstantSeriesAndEmptyWindows) {
  const ChannelSchema schema({{"x", ChannelKind::Real, {}}, {"y", ChannelKind::Real, {}}});
  std::vector<std::vector<RawValue>> hours;
  for (int t = 0; t < 10; ++t) hours.push_back({RawValue{7.5}, RawValue{}});
  const auto inst = encode_series(schema, hours);
  const auto f = statistical_features(inst, schema);
  for (int w = 0; w < kStatWindows; ++w) {
    EXPECT_EQ(stat(f, 0, w, kMin), 7.5);
    EXPECT_EQ(stat(f, 0, w, kMax), 7.5);
    EXPECT_EQ(stat(f, 0, w, kMean), 7.5);
    EXPECT_EQ(stat(f, 0, w, kStd), 0.0);
    EXPECT_EQ(stat(f, 0, w, kSkew), 0.0);
    for (int s = 0; s < kStatsPerWindow; ++s) EXPECT_EQ(stat(f, 1, w, s), 0.0);
  }
}

TEST(StatisticalFeatures, CategoricalsEnterAsOrdinalCodes) {
  const ChannelSchema schema({{"c", ChannelKind::Categorical, {"lo", "mid", "hi"}}});
  const auto inst = encode_series(schema, {{std::string("hi")}, {std::string("lo")}});
  const auto f = statistical_features(inst, schema);
  EXPECT_EQ(stat(f, 0, 0, kMin), 0.0);
  EXPECT_EQ(stat(f, 0, 0, kMax), 2.0);
  EXPECT_EQ(stat(f, 0, 0, kMean), 1.0);
}
