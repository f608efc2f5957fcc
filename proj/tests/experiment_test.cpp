// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "seqtl/csv.hpp"
#include "seqtl/error.hpp"
#include "seqtl/eval.hpp"
#include "seqtl/experiment.hpp"
#include "seqtl/synthetic.hpp"

using namespace seqtl;

namespace {

struct Fixture {
  Dataset data;
  PretrainedModel model;
  DatasetSplit target;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    SyntheticSpec s;
    s.seed = 5;
    s.n_phenotypes = 3;
    s.prevalences = {0.3, 0.3, 0.3};
    s.n_real_channels = 4;
    s.n_categorical_channels = 1;
    s.min_length = 6;
    s.max_length = 10;
    s.signatures = {{{0, 1}, 1.0, 0.0}, {{2, 3}, 1.0, 0.0}, {{0, 1, 2, 3}, 0.8, 0.0}};
    s.n_train = 150;
    s.n_validation = 60;
    s.n_test = 80;
    Fixture out{generate_synthetic(s), {}, {}};
    auto source = select_tasks(filter_source_split(out.data.split, {"P03"}), {"P01", "P02"});
    TrainConfig c;
    c.learning_rate = 1e-2;
    c.batch_size = 32;
    c.max_epochs = 3;
    c.dropout = 0.0;
    out.model = fit_source(source, c, 5, 2);
    out.target = select_tasks(out.data.split, {"P03"});
    return out;
  }();
  return f;
}

SweepOptions small_options() {
  SweepOptions o;
  o.fractions = {0.25, 1.0};
  o.seeds = {0, 1};
  o.rnn_hidden_grid = {3};
  o.rnn_config.max_epochs = 2;
  o.rnn_config.batch_size = 32;
  o.rnn_config.learning_rate = 1e-2;
  o.lambda_grid = {1.0, 100.0};
  o.lr_options.max_iterations = 2000;
  return o;
}

}  // namespace

TEST(Sweep, CellsShareTestSetAndHaveExpectedShapes) {
  const auto& f = fixture();
  const TransferSetup setup{&f.model, &f.target, &f.data.schema};
  auto opt = small_options();
  opt.jobs = 3;
  const auto r = run_label_fraction_sweep(setup, opt);
  EXPECT_EQ(r.task, "P03");
  EXPECT_EQ(r.test_hash, instance_set_hash(f.target.test));
  ASSERT_EQ(r.cells.size(), 16u);
  for (const auto& c : r.cells) {
    EXPECT_EQ(c.status, "ok");
    EXPECT_GE(c.test_auroc, 0.0);
    EXPECT_LE(c.test_auroc, 1.0);
    if (c.fraction == 1.0) EXPECT_EQ(c.n_train, f.target.train.size());
    else EXPECT_LT(c.n_train, f.target.train.size());
    if (c.family == Family::RnnC) {
      EXPECT_EQ(c.chosen_hidden, 3);
      continue;
    }
    ASSERT_TRUE(c.probe.has_value());
    const int expected = c.family == Family::LR      ? f.data.schema.raw_width() * kStatsPerChannel
                         : c.family == Family::MnLr1 ? 5
                                                     : 10;
    EXPECT_EQ(c.probe->dimension(), expected);
    EXPECT_EQ(c.lambda_scores.size(), 2u);
  }
  opt.jobs = 1;
  const auto serial = run_label_fraction_sweep(setup, opt);
  EXPECT_EQ(sweep_csv(serial), sweep_csv(r));
}

TEST(Sweep, FractionOneFitsAreSharedAcrossSeeds) {
  const auto& f = fixture();
  const TransferSetup setup{&f.model, &f.target, &f.data.schema};
  auto opt = small_options();
  opt.fractions = {1.0};
  opt.families = {Family::MnLr1};
  const auto r = run_label_fraction_sweep(setup, opt);
  ASSERT_EQ(r.cells.size(), 2u);
  EXPECT_EQ(r.cells[0].probe->weights, r.cells[1].probe->weights);
  EXPECT_EQ(r.cells[0].test_auroc, r.cells[1].test_auroc);
}

TEST(Sweep, RefusesLeakage) {
  const auto& f = fixture();
  auto leaky = f.target;
  leaky.train.push_back(leaky.test.front());
  const TransferSetup setup{&f.model, &leaky, &f.data.schema};
  auto opt = small_options();
  opt.fractions = {1.0};
  EXPECT_THROW(run_label_fraction_sweep(setup, opt), ValidationError);
  const auto source_task = select_tasks(f.data.split, {"P01"});
  const TransferSetup wrong{&f.model, &source_task, &f.data.schema};
  EXPECT_THROW(run_label_fraction_sweep(wrong, opt), ValidationError);
}

TEST(Sweep, SingleClassTrainingCellsAreSkipped) {
  const auto& f = fixture();
  auto target = f.target;
  for (auto& inst : target.train) inst.labels[0] = 0;
  const TransferSetup setup{&f.model, &target, &f.data.schema};
  auto opt = small_options();
  opt.fractions = {0.5};
  opt.seeds = {0};
  const auto r = run_label_fraction_sweep(setup, opt);
  ASSERT_EQ(r.cells.size(), 4u);
  for (const auto& c : r.cells) {
    EXPECT_EQ(c.status, "skipped");
    EXPECT_FALSE(c.reason.empty());
  }
  const auto csv = sweep_csv(r);
  EXPECT_NE(csv.find("LR,0.5,0,,skipped\n"), std::string::npos);
}

TEST(Report, CsvLayouts) {
  SweepResult r;
  r.task = "P09";
  for (double a : {0.7, 0.8}) {
    SweepCell c;
    c.family = Family::MnLr1;
    c.fraction = 0.05;
    c.test_auroc = a;
    r.cells.push_back(c);
  }
  SweepCell skipped;
  skipped.status = "skipped";
  r.cells.push_back(skipped);
  const auto curve = fraction_curve_csv({&r});
  const std::string head = "family,fraction,mean_auroc,std_auroc,n\nMN-LR-1,0.05,0.75,";
  ASSERT_EQ(curve.substr(0, head.size()), head);
  const auto rest = curve.substr(head.size());
  EXPECT_NEAR(parse_double(rest.substr(0, rest.find(','))), std::sqrt(0.005), 1e-15);
  EXPECT_EQ(rest.substr(rest.find(',')), ",2\n");
  EXPECT_EQ(sweep_csv(r).substr(0, sweep_csv(r).find('\n')), "family,fraction,seed,test_auroc,status");
}

TEST(Report, SparsityTableAndHeatmap) {
  std::vector<LrProbe> probes(5);
  probes[0].weights = Vector::Zero(4);                          // P01 MN-LR-1
  probes[1].weights = (Vector(4) << 0.5, 0, 0, 0).finished();   // P02 MN-LR-1
  probes[2].weights = (Vector(4) << 0, 0, 0.2, 0).finished();   // mortality MN-LR-1
  probes[3].weights = (Vector(3) << 0.1, 0.1, 0).finished();    // P01 LR
  probes[4].weights = (Vector(4) << 0, -0.0004, 0, 0).finished();  // P01 MN-LR-2
  const std::vector<ProbeRecord> records{{"P01", Family::MnLr1, false, &probes[0]},
                                         {"P02", Family::MnLr1, false, &probes[1]},
                                         {"mortality", Family::MnLr1, true, &probes[2]},
                                         {"P01", Family::LR, false, &probes[3]},
                                         {"P01", Family::MnLr2, false, &probes[4]}};
  const auto report = sparsity_report(records);
  ASSERT_EQ(report.entries.size(), 5u);
  EXPECT_EQ(report.entries[1].fraction, 0.75);
  const auto table = sparsity_table_csv(report);
  EXPECT_EQ(table,
            "task,LR,MN-LR-1,MN-LR-2\n"
            "Phenotyping," + format_double(1.0 / 3.0) + " +/- 0,0.875 +/- " + format_double(std::sqrt(2.0 * 0.125 * 0.125)) +
                ",1 +/- 0\n"
                "mortality,,0.75,\n");
  const auto heat = heatmap_csv(report, Family::MnLr1);
  EXPECT_EQ(heat.substr(0, heat.find('\n')), "task,feature_index,abs_weight");
  EXPECT_NE(heat.find("P02,0,0.5\n"), std::string::npos);
  EXPECT_NE(heat.find("mortality,2,0.2\n"), std::string::npos);

  // Relevant features equal the column-wise any-count of the absolute-weight matrix.
  const auto relevant = report.relevant_features(Family::MnLr1);
  int any = 0;
  for (int j = 0; j < 4; ++j) {
    bool hit = false;
    for (int t = 0; t < 3; ++t) hit = hit || std::abs(probes[t].weights(j)) >= 1e-3;
    any += hit;
  }
  EXPECT_EQ(static_cast<int>(relevant.size()), any);
  EXPECT_EQ(relevant, (std::vector<int>{0, 2}));
  EXPECT_TRUE(report.relevant_features(Family::MnLr2).empty());
}

TEST(Families, NamesRoundTrip) {
  for (auto f : kAllFamilies) EXPECT_EQ(family_from(to_string(f)), f);
  EXPECT_THROW(family_from("GRU"), ArgumentError);
}
