// SPDX-License-Identifier: Apache-2.0
#include "seqtl/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>

#include "seqtl/error.hpp"
#include "seqtl/rng.hpp"

namespace seqtl {

using nlohmann::json;

void SyntheticSpec::validate() const {
  if (n_phenotypes < 1) throw ValidationError("n_phenotypes must be at least 1");
  if (static_cast<int>(prevalences.size()) != n_phenotypes) {
    throw ValidationError("prevalences must list one value per phenotype");
  }
  for (double p : prevalences) {
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("prevalences must lie in (0, 1)");
  }
  if (n_real_channels < 1) throw ValidationError("at least one real channel is required");
  if (n_categorical_channels < 0) throw ValidationError("n_categorical_channels must be non-negative");
  if (n_categorical_channels > 0 && categories_per_channel < 2) {
    throw ValidationError("categorical channels need at least 2 categories");
  }
  if (min_length < 1 || max_length < min_length) throw ValidationError("invalid series_length_range");
  if (static_cast<int>(signatures.size()) != n_phenotypes) {
    throw ValidationError("signatures must list one entry per phenotype");
  }
  for (const auto& sig : signatures) {
    if (sig.channels.empty()) throw ValidationError("signature channel subsets must be non-empty");
    for (int c : sig.channels) {
      if (c < 0 || c >= n_real_channels) throw ValidationError("signature channel index out of range");
    }
  }
  if (!(noise_std >= 0.0)) throw ValidationError("noise_std must be non-negative");
  if (!(ar_coefficient >= 0.0 && ar_coefficient < 1.0)) throw ValidationError("ar_coefficient must lie in [0, 1)");
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw ValidationError("missing_rate must lie in [0, 1)");
  if (!mortality_weights.empty() && static_cast<int>(mortality_weights.size()) != n_phenotypes) {
    throw ValidationError("mortality_weights must be empty or list one weight per phenotype");
  }
  if (!(mortality_prevalence > 0.0 && mortality_prevalence < 1.0)) {
    throw ValidationError("mortality_prevalence must lie in (0, 1)");
  }
  if (n_train < 0 || n_validation < 0 || n_test < 0 || n_train + n_validation + n_test == 0) {
    throw ValidationError("split sizes must be non-negative with a positive total");
  }
}

SyntheticSpec SyntheticSpec::from_json(const std::string& text) {
  SyntheticSpec s;
  try {
    const auto doc = json::parse(text);
    s.seed = doc.at("seed").get<std::uint64_t>();
    s.n_phenotypes = doc.at("n_phenotypes").get<int>();
    s.prevalences = doc.at("prevalences").get<std::vector<double>>();
    s.n_real_channels = doc.at("n_real_channels").get<int>();
    s.n_categorical_channels = doc.at("n_categorical_channels").get<int>();
    s.categories_per_channel = doc.value("categories_per_channel", s.categories_per_channel);
    const auto range = doc.at("series_length_range").get<std::vector<int>>();
    if (range.size() != 2) throw ValidationError("series_length_range must be [min, max]");
    s.min_length = range[0];
    s.max_length = range[1];
    for (const auto& sig : doc.at("signatures")) {
      PhenotypeSignature p;
      p.channels = sig.at("channels").get<std::vector<int>>();
      p.mean_shift = sig.value("mean_shift", 0.0);
      p.trend_slope = sig.value("trend_slope", 0.0);
      s.signatures.push_back(std::move(p));
    }
    s.noise_std = doc.at("noise_std").get<double>();
    s.ar_coefficient = doc.at("ar_coefficient").get<double>();
    s.missing_rate = doc.value("missing_rate", s.missing_rate);
    s.category_boost = doc.value("category_boost", s.category_boost);
    s.mortality_weights = doc.value("mortality_weights", s.mortality_weights);
    s.mortality_channel_scale = doc.value("mortality_channel_scale", s.mortality_channel_scale);
    s.mortality_noise_std = doc.value("mortality_noise_std", s.mortality_noise_std);
    s.mortality_prevalence = doc.value("mortality_prevalence", s.mortality_prevalence);
    s.n_train = doc.at("n_train").get<int>();
    s.n_validation = doc.at("n_validation").get<int>();
    s.n_test = doc.at("n_test").get<int>();
  } catch (const json::exception& e) {
    throw ParseError("synthetic spec", 0, e.what());
  }
  s.validate();
  return s;
}

std::string SyntheticSpec::to_json() const {
  json sigs = json::array();
  for (const auto& sig : signatures) {
    sigs.push_back({{"channels", sig.channels}, {"mean_shift", sig.mean_shift}, {"trend_slope", sig.trend_slope}});
  }
  json doc = {{"seed", seed},
              {"n_phenotypes", n_phenotypes},
              {"prevalences", prevalences},
              {"n_real_channels", n_real_channels},
              {"n_categorical_channels", n_categorical_channels},
              {"categories_per_channel", categories_per_channel},
              {"series_length_range", {min_length, max_length}},
              {"signatures", sigs},
              {"noise_std", noise_std},
              {"ar_coefficient", ar_coefficient},
              {"missing_rate", missing_rate},
              {"category_boost", category_boost},
              {"mortality_weights", mortality_weights},
              {"mortality_channel_scale", mortality_channel_scale},
              {"mortality_noise_std", mortality_noise_std},
              {"mortality_prevalence", mortality_prevalence},
              {"n_train", n_train},
              {"n_validation", n_validation},
              {"n_test", n_test}};
  return doc.dump(2) + "\n";
}

std::vector<std::string> synthetic_task_names(int n_phenotypes) {
  std::vector<std::string> names;
  for (int j = 1; j <= n_phenotypes; ++j) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "P%02d", j);
    names.emplace_back(buf);
  }
  names.emplace_back(kMortalityTask);
  return names;
}

ChannelSchema synthetic_schema(const SyntheticSpec& spec) {
  std::vector<Channel> channels;
  for (int c = 0; c < spec.n_real_channels; ++c) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "x%02d", c + 1);
    channels.push_back({buf, ChannelKind::Real, {}});
  }
  for (int c = 0; c < spec.n_categorical_channels; ++c) {
    Channel ch{"cat" + std::to_string(c + 1), ChannelKind::Categorical, {}};
    for (int k = 0; k < spec.categories_per_channel; ++k) {
      ch.categories.emplace_back(1, static_cast<char>('a' + k));
    }
    channels.push_back(std::move(ch));
  }
  return ChannelSchema(std::move(channels));
}

std::vector<EpisodeRecord> generate_records(const SyntheticSpec& spec) {
  spec.validate();
  const auto tasks = synthetic_task_names(spec.n_phenotypes);
  const int total = spec.n_train + spec.n_validation + spec.n_test;
  const int n_real = spec.n_real_channels;
  const int n_cat = spec.n_categorical_channels;
  const int n_cats = spec.categories_per_channel;

  std::vector<EpisodeRecord> records(static_cast<std::size_t>(total));
  std::vector<double> score(static_cast<std::size_t>(total));

  for (int i = 0; i < total; ++i) {
    Rng rng(spec.seed, static_cast<std::uint64_t>(i) + 1);
    auto& rec = records[static_cast<std::size_t>(i)];
    char id[24];
    std::snprintf(id, sizeof id, "ep%06d", i + 1);
    rec.episode_id = id;

    std::vector<int> bits(static_cast<std::size_t>(spec.n_phenotypes));
    for (int j = 0; j < spec.n_phenotypes; ++j) {
      bits[static_cast<std::size_t>(j)] = rng.bernoulli(spec.prevalences[static_cast<std::size_t>(j)]) ? 1 : 0;
      rec.labels[tasks[static_cast<std::size_t>(j)]] = bits[static_cast<std::size_t>(j)];
    }
    const int length = spec.min_length + static_cast<int>(rng.below(
                                             static_cast<std::uint64_t>(spec.max_length - spec.min_length + 1)));

    // Category logits: uniform base tilted by each active phenotype.
    std::vector<std::vector<double>> cat_weights(static_cast<std::size_t>(n_cat),
                                                 std::vector<double>(static_cast<std::size_t>(n_cats), 0.0));
    for (int j = 0; j < spec.n_phenotypes && n_cat > 0; ++j) {
      if (!bits[static_cast<std::size_t>(j)]) continue;
      const int c = j % n_cat;
      const int k = 1 + j % (n_cats - 1);
      cat_weights[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)] += spec.category_boost;
    }
    for (auto& w : cat_weights) {
      for (auto& v : w) v = std::exp(v);
    }

    std::vector<double> noise(static_cast<std::size_t>(n_real), 0.0);
    double channel0_sum = 0.0;
    rec.hours.resize(static_cast<std::size_t>(length));
    for (int t = 0; t < length; ++t) {
      auto& row = rec.hours[static_cast<std::size_t>(t)];
      row.resize(static_cast<std::size_t>(n_real + n_cat));
      for (int c = 0; c < n_real; ++c) {
        auto& e = noise[static_cast<std::size_t>(c)];
        e = spec.ar_coefficient * e + spec.noise_std * rng.normal();
        double x = e;
        for (int j = 0; j < spec.n_phenotypes; ++j) {
          if (!bits[static_cast<std::size_t>(j)]) continue;
          const auto& sig = spec.signatures[static_cast<std::size_t>(j)];
          if (std::find(sig.channels.begin(), sig.channels.end(), c) != sig.channels.end()) {
            x += sig.mean_shift + sig.trend_slope * t;
          }
        }
        if (c == 0) channel0_sum += x;
        const bool missing = spec.missing_rate > 0.0 && rng.bernoulli(spec.missing_rate);
        if (!missing) row[static_cast<std::size_t>(c)] = x;
      }
      for (int c = 0; c < n_cat; ++c) {
        const auto k = rng.categorical(cat_weights[static_cast<std::size_t>(c)]);
        const bool missing = spec.missing_rate > 0.0 && rng.bernoulli(spec.missing_rate);
        if (!missing) {
          row[static_cast<std::size_t>(n_real + c)] = std::string(1, static_cast<char>('a' + k));
        }
      }
    }

    double s = spec.mortality_channel_scale * channel0_sum / length + spec.mortality_noise_std * rng.normal();
    for (int j = 0; j < spec.n_phenotypes; ++j) {
      const double w = spec.mortality_weights.empty() ? 1.0 : spec.mortality_weights[static_cast<std::size_t>(j)];
      s += w * bits[static_cast<std::size_t>(j)];
    }
    score[static_cast<std::size_t>(i)] = s;
  }

  // Threshold at the empirical quantile so the positive rate matches the target.
  auto sorted = score;
  std::sort(sorted.begin(), sorted.end());
  const auto positives = static_cast<std::size_t>(std::llround(spec.mortality_prevalence * total));
  const double threshold =
      positives == 0 ? sorted.back() : sorted[static_cast<std::size_t>(total) - std::max<std::size_t>(positives, 1)];
  for (int i = 0; i < total; ++i) {
    records[static_cast<std::size_t>(i)].labels[kMortalityTask] =
        positives > 0 && score[static_cast<std::size_t>(i)] >= threshold ? 1 : 0;
  }
  return records;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  auto records = generate_records(spec);
  Dataset out;
  out.schema = synthetic_schema(spec);
  out.split.task_names = synthetic_task_names(spec.n_phenotypes);
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto inst = encode_record(records[i], out.schema, spec.max_length, out.split.task_names);
    if (static_cast<int>(i) < spec.n_train) {
      out.split.train.push_back(std::move(inst));
    } else if (static_cast<int>(i) < spec.n_train + spec.n_validation) {
      out.split.validation.push_back(std::move(inst));
    } else {
      out.split.test.push_back(std::move(inst));
    }
  }
  return out;
}

}  // namespace seqtl
