// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>

#include "seqtl/error.hpp"
#include "seqtl/hash.hpp"
#include "seqtl/synthetic.hpp"

using namespace seqtl;
namespace fs = std::filesystem;

namespace {

SyntheticSpec base_spec() {
  SyntheticSpec s;
  s.seed = 1;
  s.n_phenotypes = 2;
  s.prevalences = {0.3, 0.5};
  s.n_real_channels = 3;
  s.n_categorical_channels = 1;
  s.min_length = 5;
  s.max_length = 10;
  s.signatures = {{{1}, 2.0, 0.0}, {{0, 2}, 0.0, 0.1}};
  s.n_train = 40;
  s.n_validation = 10;
  s.n_test = 10;
  return s;
}

}  // namespace

TEST(Synthetic, TaskNamesListPhenotypesThenMortality) {
  auto s = base_spec();
  s.n_phenotypes = 9;
  s.prevalences.assign(9, 0.2);
  s.signatures.assign(9, PhenotypeSignature{{0}, 1.0, 0.0});
  const auto data = generate_synthetic(s);
  ASSERT_EQ(data.split.task_names.size(), 10u);
  EXPECT_EQ(data.split.task_names.front(), "P01");
  EXPECT_EQ(data.split.task_names.back(), "mortality");
}

TEST(Synthetic, NoiselessMeanShiftIsExact) {
  auto s = base_spec();
  s.noise_std = 0.0;
  s.ar_coefficient = 0.0;
  s.signatures[1] = {{0}, 0.0, 0.0};
  const auto data = generate_synthetic(s);
  for (const auto& inst : data.split.train) {
    const double expected = inst.labels[0] ? 2.0 : 0.0;
    for (int t = 0; t < inst.valid_length(); ++t) EXPECT_EQ(inst.values(t, 1), expected);
  }
}

TEST(Synthetic, TrendStartsAtZero) {
  auto s = base_spec();
  s.noise_std = 0.0;
  const auto data = generate_synthetic(s);
  for (const auto& inst : data.split.train) {
    if (!inst.labels[1]) continue;
    for (int t = 0; t < inst.valid_length(); ++t) EXPECT_DOUBLE_EQ(inst.values(t, 2), 0.1 * t);
  }
}

TEST(Synthetic, EmpiricalPrevalence) {
  auto s = base_spec();
  s.n_train = 10000;
  s.min_length = s.max_length = 2;
  const auto data = generate_synthetic(s);
  double pos = 0.0;
  for (const auto& inst : data.split.train) pos += inst.labels[0];
  EXPECT_NEAR(pos / 10000.0, 0.3, 0.02);
  double mort = 0.0;
  for (const auto* list : {&data.split.train, &data.split.validation, &data.split.test}) {
    for (const auto& inst : *list) mort += inst.labels[2];
  }
  EXPECT_NEAR(mort / 10020.0, 0.15, 0.01);
}

TEST(Synthetic, LengthsWithinRange) {
  const auto data = generate_synthetic(base_spec());
  for (const auto& inst : data.split.train) {
    EXPECT_GE(inst.valid_length(), 5);
    EXPECT_LE(inst.valid_length(), 10);
  }
}

TEST(Synthetic, SameSpecGivesIdenticalFiles) {
  const auto a = fs::temp_directory_path() / "seqtl_syn_a";
  const auto b = fs::temp_directory_path() / "seqtl_syn_b";
  for (const auto& d : {a, b}) {
    fs::remove_all(d);
    fs::create_directories(d);
    auto s = base_spec();
    s.missing_rate = 0.2;
    const auto data = generate_synthetic(s);
    save_dataset(data.split, data.schema, d);
  }
  for (const char* f : {"schema.json", "tasks.json", "train.jsonl", "val.jsonl", "test.jsonl"}) {
    EXPECT_EQ(sha256_file(a / f), sha256_file(b / f)) << f;
  }
}

TEST(Synthetic, SaveLoadPreservesSplit) {
  auto s = base_spec();
  s.missing_rate = 0.3;
  const auto data = generate_synthetic(s);
  const auto d = fs::temp_directory_path() / "seqtl_syn_rt";
  fs::remove_all(d);
  fs::create_directories(d);
  save_dataset(data.split, data.schema, d);
  const auto back = load_dataset(d, s.max_length);
  EXPECT_EQ(back.split, data.split);
}

TEST(Synthetic, SpecJsonRoundTrip) {
  const auto s = base_spec();
  const auto back = SyntheticSpec::from_json(s.to_json());
  EXPECT_EQ(back.to_json(), s.to_json());
}

TEST(Synthetic, ValidationErrors) {
  auto s = base_spec();
  s.prevalences[0] = 1.0;
  EXPECT_THROW(s.validate(), ValidationError);
  s = base_spec();
  s.ar_coefficient = 1.0;
  EXPECT_THROW(s.validate(), ValidationError);
  s = base_spec();
  s.signatures[0].channels.clear();
  EXPECT_THROW(s.validate(), ValidationError);
}
