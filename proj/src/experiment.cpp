// SPDX-License-Identifier: Apache-2.0
#include "seqtl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "seqtl/csv.hpp"
#include "seqtl/error.hpp"
#include "seqtl/eval.hpp"
#include "seqtl/hash.hpp"

namespace seqtl {

std::string to_string(Family family) {
  switch (family) {
    case Family::LR:
      return "LR";
    case Family::RnnC:
      return "RNN-C";
    case Family::MnLr1:
      return "MN-LR-1";
    case Family::MnLr2:
      return "MN-LR-2";
  }
  return "?";
}

Family family_from(const std::string& name) {
  for (auto f : kAllFamilies) {
    if (to_string(f) == name) return f;
  }
  throw ArgumentError("unknown model family '" + name + "' (expected LR, RNN-C, MN-LR-1 or MN-LR-2)");
}

std::string instance_set_hash(const std::vector<EncodedInstance>& instances) {
  std::vector<std::string> ids;
  ids.reserve(instances.size());
  for (const auto& inst : instances) ids.push_back(inst.episode_id);
  std::sort(ids.begin(), ids.end());
  std::string joined;
  for (const auto& id : ids) joined += id + "\n";
  return sha256_hex(joined);
}

namespace {

std::vector<std::string> ids_of(const std::vector<EncodedInstance>& instances) {
  std::vector<std::string> ids;
  ids.reserve(instances.size());
  for (const auto& inst : instances) ids.push_back(inst.episode_id);
  return ids;
}

FeatureSet statistical_feature_set(std::span<const EncodedInstance> instances, const ChannelSchema& schema) {
  FeatureSet out;
  if (instances.empty()) return out;
  out.values.resize(static_cast<Eigen::Index>(instances.size()),
                    static_cast<Eigen::Index>(schema.raw_width()) * kStatsPerChannel);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    out.episode_ids.push_back(instances[i].episode_id);
    out.labels.push_back(instances[i].labels.front());
    out.values.row(static_cast<Eigen::Index>(i)) = statistical_features(instances[i], schema).transpose();
  }
  return out;
}

struct FamilyFeatures {
  FeatureSet train, validation, test;
};

bool single_class(const std::vector<EncodedInstance>& instances) {
  std::set<int> seen;
  for (const auto& inst : instances) seen.insert(inst.labels.front());
  return seen.size() < 2;
}

/// Runs jobs on up to `jobs` threads; the first exception is rethrown after all threads join.
void run_parallel(std::vector<std::function<void()>>& tasks, int jobs) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || tasks.size() <= 1) {
    for (auto& t : tasks) t();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, tasks.size()); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < tasks.size(); i = next++) {
        try {
          tasks[i]();
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2 || std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

SweepResult run_label_fraction_sweep(const TransferSetup& setup, const SweepOptions& options) {
  if (setup.pretrained == nullptr || setup.target == nullptr || setup.schema == nullptr) {
    throw ArgumentError("sweep setup is incomplete");
  }
  const auto& target = *setup.target;
  const auto& pretrained = *setup.pretrained;
  if (target.num_tasks() != 1) throw ArgumentError("sweep target split must carry exactly one task");
  const std::string& task = target.task_names.front();
  if (std::find(pretrained.task_names.begin(), pretrained.task_names.end(), task) != pretrained.task_names.end()) {
    throw ValidationError("target task '" + task + "' was a source task of the pre-trained model");
  }
  if (target.train.empty() || target.validation.empty() || target.test.empty()) {
    throw ValidationError("sweep target needs non-empty train, validation and test lists");
  }
  if (options.fractions.empty() || options.seeds.empty() || options.families.empty()) {
    throw ArgumentError("sweep needs at least one fraction, seed and family");
  }
  target.validate();

  SweepResult result;
  result.task = task;
  result.test_hash = instance_set_hash(target.test);

  std::set<std::string> test_id_set;
  for (const auto& inst : target.test) test_id_set.insert(inst.episode_id);

  // Full-size feature sets for every probe family; subsets are selected per cell.
  std::map<Family, FamilyFeatures> features;
  for (auto family : options.families) {
    if (family == Family::RnnC) continue;
    FamilyFeatures ff;
    auto build = [&](const std::vector<EncodedInstance>& list) {
      if (family == Family::LR) return statistical_feature_set(list, *setup.schema);
      const auto layers = family == Family::MnLr1 ? LayerSelection::Top : LayerSelection::All;
      return extract_feature_set(pretrained.net.stack, list, layers);
    };
    ff.train = build(target.train);
    ff.validation = build(target.validation);
    ff.test = build(target.test);
    features.emplace(family, std::move(ff));
  }

  struct Subsample {
    std::vector<EncodedInstance> train, validation;
    std::string key;
  };
  std::vector<std::vector<Subsample>> subsamples(options.fractions.size());
  for (std::size_t fi = 0; fi < options.fractions.size(); ++fi) {
    for (auto seed : options.seeds) {
      Subsample s;
      s.train = subsample_labeled(target.train, options.fractions[fi], seed);
      s.validation = subsample_labeled(target.validation, options.fractions[fi], seed ^ 0x7a11da7e5eedULL);
      for (const auto& inst : s.train) {
        if (test_id_set.count(inst.episode_id) != 0) {
          throw ValidationError("training subsample contains test instance '" + inst.episode_id + "'");
        }
      }
      s.key = instance_set_hash(s.train) + "/" + instance_set_hash(s.validation);
      subsamples[fi].push_back(std::move(s));
    }
  }

  for (std::size_t fi = 0; fi < options.fractions.size(); ++fi) {
    for (std::size_t si = 0; si < options.seeds.size(); ++si) {
      for (auto family : options.families) {
        SweepCell cell;
        cell.family = family;
        cell.fraction = options.fractions[fi];
        cell.seed = options.seeds[si];
        cell.n_train = subsamples[fi][si].train.size();
        cell.n_validation = subsamples[fi][si].validation.size();
        if (single_class(subsamples[fi][si].train)) {
          cell.status = "skipped";
          cell.reason = "training subsample contains a single class";
        }
        result.cells.push_back(std::move(cell));
      }
    }
  }

  // Probe fits depend only on the subsample, so identical subsamples share one fit.
  struct ProbeJob {
    Family family;
    const Subsample* sample;
    SweepCell outcome;
  };
  std::map<std::string, ProbeJob> probe_jobs;
  std::vector<std::pair<std::size_t, std::string>> cell_to_job;
  std::vector<std::size_t> rnn_cells;
  {
    std::size_t c = 0;
    for (std::size_t fi = 0; fi < options.fractions.size(); ++fi) {
      for (std::size_t si = 0; si < options.seeds.size(); ++si) {
        for (auto family : options.families) {
          const auto& cell = result.cells[c];
          if (cell.status == "ok") {
            if (family == Family::RnnC) {
              rnn_cells.push_back(c);
            } else {
              const auto key = to_string(family) + "|" + subsamples[fi][si].key;
              probe_jobs.try_emplace(key, ProbeJob{family, &subsamples[fi][si], {}});
              cell_to_job.emplace_back(c, key);
            }
          }
          ++c;
        }
      }
    }
  }

  std::vector<std::function<void()>> tasks;
  for (auto& [key, job] : probe_jobs) {
    tasks.emplace_back([&, jp = &job] {
      const auto& ff = features.at(jp->family);
      const auto train = ff.train.subset(ids_of(jp->sample->train));
      const auto validation = ff.validation.subset(ids_of(jp->sample->validation));
      auto sweep = lambda_sweep(train, validation, options.lambda_grid, options.lr_options);
      sweep.best.layers_used = jp->family == Family::LR      ? "statistical"
                               : jp->family == Family::MnLr1 ? "top"
                                                             : "all";
      const Vector scores = lr_predict_all(sweep.best, ff.test);
      jp->outcome.test_auroc =
          auroc(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())), ff.test.labels);
      jp->outcome.chosen_lambda = sweep.best.lambda;
      jp->outcome.lambda_scores = sweep.scores;
      jp->outcome.probe = std::move(sweep.best);
    });
  }
  std::vector<SweepCell> rnn_outcomes(rnn_cells.size());
  for (std::size_t r = 0; r < rnn_cells.size(); ++r) {
    tasks.emplace_back([&, r] {
      const auto& cell = result.cells[rnn_cells[r]];
      const auto fi = static_cast<std::size_t>(
          std::find(options.fractions.begin(), options.fractions.end(), cell.fraction) - options.fractions.begin());
      const auto si = static_cast<std::size_t>(
          std::find(options.seeds.begin(), options.seeds.end(), cell.seed) - options.seeds.begin());
      const auto& sample = subsamples[fi][si];
      DatasetSplit split;
      split.train = sample.train;
      split.validation = sample.validation;
      split.task_names = target.task_names;
      auto config = options.rnn_config;
      config.seed = cell.seed;
      const auto sweep = hidden_size_sweep(split, config, options.rnn_hidden_grid, options.rnn_layers);
      const Matrix p = predict_all(sweep.best.net, target.test);
      std::vector<double> scores(static_cast<std::size_t>(p.cols()));
      std::vector<int> labels;
      for (Eigen::Index i = 0; i < p.cols(); ++i) {
        scores[static_cast<std::size_t>(i)] = p(0, i);
        labels.push_back(target.test[static_cast<std::size_t>(i)].labels.front());
      }
      rnn_outcomes[r].test_auroc = auroc(scores, labels);
      rnn_outcomes[r].chosen_hidden = sweep.best.hidden_size();
    });
  }
  run_parallel(tasks, options.jobs);

  for (const auto& [c, key] : cell_to_job) {
    const auto& out = probe_jobs.at(key).outcome;
    auto& cell = result.cells[c];
    cell.test_auroc = out.test_auroc;
    cell.chosen_lambda = out.chosen_lambda;
    cell.lambda_scores = out.lambda_scores;
    cell.probe = out.probe;
  }
  for (std::size_t r = 0; r < rnn_cells.size(); ++r) {
    auto& cell = result.cells[rnn_cells[r]];
    cell.test_auroc = rnn_outcomes[r].test_auroc;
    cell.chosen_hidden = rnn_outcomes[r].chosen_hidden;
  }
  return result;
}

std::string sweep_csv(const SweepResult& result) {
  std::ostringstream out;
  out << "family,fraction,seed,test_auroc,status\n";
  for (const auto& c : result.cells) {
    out << to_string(c.family) << ',' << format_double(c.fraction) << ',' << c.seed << ','
        << (c.status == "ok" ? format_double(c.test_auroc) : std::string()) << ',' << c.status << '\n';
  }
  return out.str();
}

std::string fraction_curve_csv(const std::vector<const SweepResult*>& results) {
  std::map<std::pair<int, double>, std::vector<double>> groups;
  for (const auto* r : results) {
    for (const auto& c : r->cells) {
      if (c.status != "ok") continue;
      groups[{static_cast<int>(c.family), c.fraction}].push_back(c.test_auroc);
    }
  }
  std::ostringstream out;
  out << "family,fraction,mean_auroc,std_auroc,n\n";
  for (const auto& [key, values] : groups) {
    out << to_string(static_cast<Family>(key.first)) << ',' << format_double(key.second) << ','
        << format_double(mean_of(values)) << ',' << format_double(sample_std(values)) << ',' << values.size()
        << '\n';
  }
  return out.str();
}

std::vector<int> SparsityReport::relevant_features(Family family) const {
  std::set<int> any;
  for (const auto& e : entries) {
    if (e.family != family) continue;
    for (Eigen::Index j = 0; j < e.abs_weights.size(); ++j) {
      if (e.abs_weights(j) >= threshold) any.insert(static_cast<int>(j));
    }
  }
  return {any.begin(), any.end()};
}

SparsityReport sparsity_report(const std::vector<ProbeRecord>& probes, double threshold) {
  SparsityReport report;
  report.threshold = threshold;
  for (const auto& p : probes) {
    if (p.probe == nullptr) throw ArgumentError("sparsity report given an empty probe for task '" + p.task + "'");
    SparsityEntry e;
    e.task = p.task;
    e.family = p.family;
    e.is_mortality = p.is_mortality;
    e.abs_weights = p.probe->weights.cwiseAbs();
    e.fraction = sparsity_fraction(*p.probe, threshold);
    report.entries.push_back(std::move(e));
  }
  return report;
}

std::string sparsity_table_csv(const SparsityReport& report) {
  std::map<Family, std::vector<double>> phenotype;
  std::map<std::string, std::map<Family, double>> single;
  std::vector<std::string> single_order;
  for (const auto& e : report.entries) {
    if (e.is_mortality) {
      if (single.find(e.task) == single.end()) single_order.push_back(e.task);
      single[e.task][e.family] = e.fraction;
    } else {
      phenotype[e.family].push_back(e.fraction);
    }
  }
  std::ostringstream out;
  out << "task";
  for (auto f : kProbeFamilies) out << ',' << to_string(f);
  out << '\n';
  if (!phenotype.empty()) {
    out << "Phenotyping";
    for (auto f : kProbeFamilies) {
      out << ',';
      const auto it = phenotype.find(f);
      if (it != phenotype.end()) {
        out << format_double(mean_of(it->second)) << " +/- " << format_double(sample_std(it->second));
      }
    }
    out << '\n';
  }
  for (const auto& task : single_order) {
    out << task;
    for (auto f : kProbeFamilies) {
      out << ',';
      const auto it = single[task].find(f);
      if (it != single[task].end()) out << format_double(it->second);
    }
    out << '\n';
  }
  return out.str();
}

std::string sparsity_fractions_csv(const SparsityReport& report) {
  std::ostringstream out;
  out << "task,family,sparsity_fraction\n";
  for (const auto& e : report.entries) {
    out << e.task << ',' << to_string(e.family) << ',' << format_double(e.fraction) << '\n';
  }
  return out.str();
}

std::string heatmap_csv(const SparsityReport& report, Family family) {
  std::ostringstream out;
  out << "task,feature_index,abs_weight\n";
  for (const auto& e : report.entries) {
    if (e.family != family) continue;
    for (Eigen::Index j = 0; j < e.abs_weights.size(); ++j) {
      out << e.task << ',' << j << ',' << format_double(e.abs_weights(j)) << '\n';
    }
  }
  return out.str();
}

}  // namespace seqtl
