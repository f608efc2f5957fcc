// SPDX-License-Identifier: Apache-2.0
#include "seqtl/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <unordered_map>

#include "seqtl/csv.hpp"
#include "seqtl/error.hpp"

namespace seqtl {

using nlohmann::json;

std::string to_string(LayerSelection layers) { return layers == LayerSelection::Top ? "top" : "all"; }

LayerSelection layer_selection_from(const std::string& name) {
  if (name == "top") return LayerSelection::Top;
  if (name == "all") return LayerSelection::All;
  throw ArgumentError("layer selection must be 'top' or 'all', got '" + name + "'");
}

FeatureVector FeatureSet::row(std::size_t i) const {
  return FeatureVector{episode_ids.at(i), values.row(static_cast<Eigen::Index>(i)).transpose(), labels.at(i)};
}

FeatureSet FeatureSet::subset(const std::vector<std::string>& ids) const {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < episode_ids.size(); ++i) index.emplace(episode_ids[i], i);
  FeatureSet out;
  out.values.resize(static_cast<Eigen::Index>(ids.size()), values.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto it = index.find(ids[r]);
    if (it == index.end()) throw ArgumentError("no features for episode '" + ids[r] + "'");
    out.episode_ids.push_back(ids[r]);
    out.labels.push_back(labels[it->second]);
    out.values.row(static_cast<Eigen::Index>(r)) = values.row(static_cast<Eigen::Index>(it->second));
  }
  return out;
}

namespace {

void check_label_index(const EncodedInstance& inst, int label_index) {
  if (label_index < 0 || label_index >= static_cast<int>(inst.labels.size())) {
    throw ArgumentError("instance '" + inst.episode_id + "' has no label at index " + std::to_string(label_index));
  }
}

Eigen::Index feature_width(const GruStack& stack, LayerSelection layers) {
  return layers == LayerSelection::Top ? stack.hidden_size()
                                       : static_cast<Eigen::Index>(stack.hidden_size()) * stack.num_layers();
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

FeatureVector extract_features(const GruStack& stack, const EncodedInstance& instance, LayerSelection layers,
                               int label_index) {
  check_label_index(instance, label_index);
  const auto tr = stack_forward(instance, stack);
  FeatureVector out;
  out.episode_id = instance.episode_id;
  out.label = instance.labels[static_cast<std::size_t>(label_index)];
  out.values = layers == LayerSelection::Top ? tr.last_state(0, stack.num_layers() - 1) : tr.last_state(0);
  return out;
}

FeatureSet extract_feature_set(const GruStack& stack, std::span<const EncodedInstance> instances,
                               LayerSelection layers, int label_index) {
  constexpr std::size_t kBatch = 256;
  FeatureSet out;
  const auto width = feature_width(stack, layers);
  const auto h = stack.hidden_size();
  out.values.resize(static_cast<Eigen::Index>(instances.size()), width);
  for (const auto& inst : instances) {
    check_label_index(inst, label_index);
    out.episode_ids.push_back(inst.episode_id);
    out.labels.push_back(inst.labels[static_cast<std::size_t>(label_index)]);
  }
  for (std::size_t begin = 0; begin < instances.size(); begin += kBatch) {
    const auto end = std::min(instances.size(), begin + kBatch);
    std::vector<const EncodedInstance*> batch;
    for (std::size_t i = begin; i < end; ++i) batch.push_back(&instances[i]);
    const auto tr = stack_forward(batch, stack);
    for (std::size_t j = 0; j < tr.order.size(); ++j) {
      const auto row = static_cast<Eigen::Index>(begin) + tr.order[j];
      const auto col = static_cast<Eigen::Index>(j);
      if (layers == LayerSelection::Top) {
        out.values.row(row) = tr.final_hidden.back().col(col).transpose();
      } else {
        for (std::size_t l = 0; l < tr.final_hidden.size(); ++l) {
          out.values.row(row).segment(static_cast<Eigen::Index>(l) * h, h) = tr.final_hidden[l].col(col).transpose();
        }
      }
    }
  }
  return out;
}

double soft_threshold(double v, double threshold) {
  if (threshold < 0.0) throw ArgumentError("soft_threshold needs a non-negative threshold");
  const double mag = std::abs(v) - threshold;
  if (mag <= 0.0) return 0.0;
  return v > 0.0 ? mag : -mag;
}

Matrix standardize(const LrProbe& probe, const Matrix& raw) {
  if (raw.cols() != probe.feature_means.size()) {
    throw DimensionError("feature width " + std::to_string(raw.cols()) + " does not match probe width " +
                         std::to_string(probe.feature_means.size()));
  }
  return (raw.rowwise() - probe.feature_means.transpose()).array().rowwise() / probe.feature_stds.transpose().array();
}

namespace {

struct Standardizer {
  Vector means;
  Vector stds;
};

Standardizer fit_standardizer(const Matrix& x) {
  Standardizer s;
  const auto n = static_cast<double>(x.rows());
  s.means = x.colwise().mean().transpose();
  s.stds.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.means(j)).square().sum() / n;
    const double sd = std::sqrt(var);
    // Constant columns (up to rounding of the mean) keep unit scale.
    s.stds(j) = sd > 1e-12 * std::max(1.0, std::abs(s.means(j))) ? sd : 1.0;
  }
  return s;
}

Vector label_vector(const FeatureSet& set) {
  Vector y(static_cast<Eigen::Index>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i) y(static_cast<Eigen::Index>(i)) = set.labels[i];
  return y;
}

double summed_nll(const Vector& eta, const Vector& y) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) total += softplus(eta(i)) - y(i) * eta(i);
  return total;
}

/// Largest eigenvalue of A^T A for A = [X 1], by power iteration.
double spectral_norm_sq(const Matrix& x) {
  const auto m = x.cols();
  Matrix gram(m + 1, m + 1);
  gram.topLeftCorner(m, m).noalias() = x.transpose() * x;
  const Vector colsum = x.colwise().sum().transpose();
  gram.topRightCorner(m, 1) = colsum;
  gram.bottomLeftCorner(1, m) = colsum.transpose();
  gram(m, m) = static_cast<double>(x.rows());

  Rng rng(0x9e3779b9, m);
  Vector v(m + 1);
  for (Eigen::Index i = 0; i <= m; ++i) v(i) = 1.0 + rng.uniform();
  v.normalize();
  double estimate = 0.0;
  for (int it = 0; it < 10000; ++it) {
    Vector w = gram * v;
    const double next = v.dot(w);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    if (std::abs(next - estimate) <= 1e-13 * std::abs(next)) {
      estimate = next;
      break;
    }
    estimate = next;
  }
  return estimate;
}

}  // namespace

LrFit lr_fit_l1(const FeatureSet& train, double lambda, const LrOptions& options) {
  if (!(lambda >= 0.0)) throw ArgumentError("lambda must be non-negative");
  if (train.size() == 0) throw DegenerateLabelsError("cannot fit a probe on an empty training set");
  if (static_cast<std::size_t>(train.values.rows()) != train.size()) {
    throw DimensionError("feature rows and labels disagree");
  }
  const Vector y = label_vector(train);
  const double positives = y.sum();
  if (positives == 0.0 || positives == static_cast<double>(y.size())) {
    throw DegenerateLabelsError("probe training labels contain a single class");
  }

  LrFit fit;
  auto& probe = fit.probe;
  const auto std_params = fit_standardizer(train.values);
  probe.feature_means = std_params.means;
  probe.feature_stds = std_params.stds;
  probe.lambda = lambda;
  const Matrix x = standardize(probe, train.values);

  // Power iteration converges from below; the margin keeps the step conservative.
  const double lipschitz = 1.01 * spectral_norm_sq(x) / 4.0;
  const double step = 1.0 / lipschitz;
  fit.step = step;

  const double base_rate = positives / static_cast<double>(y.size());
  Vector w = Vector::Zero(x.cols());
  double b = std::log(base_rate / (1.0 - base_rate));

  auto objective = [&](const Vector& eta, const Vector& weights) {
    return summed_nll(eta, y) + lambda * weights.lpNorm<1>();
  };
  Vector eta = (x * w).array() + b;
  double current = objective(eta, w);
  if (options.record_objective) fit.objective.push_back(current);

  int small_steps = 0;
  for (int it = 1; it <= options.max_iterations; ++it) {
    const Vector residual = eta.unaryExpr([](double v) { return sigmoid(v); }) - y;
    const Vector grad_w = x.transpose() * residual;
    const double grad_b = residual.sum();
    for (Eigen::Index j = 0; j < w.size(); ++j) w(j) = soft_threshold(w(j) - step * grad_w(j), step * lambda);
    b -= step * grad_b;
    eta = (x * w).array() + b;
    const double next = objective(eta, w);
    if (options.record_objective) fit.objective.push_back(next);
    fit.iterations = it;
    if (!std::isfinite(next)) throw NonFiniteError("probe objective became non-finite");
    small_steps = current - next < options.tolerance ? small_steps + 1 : 0;
    current = next;
    if (small_steps >= options.patience) {
      fit.converged = true;
      break;
    }
  }
  probe.weights = std::move(w);
  probe.intercept = b;
  return fit;
}

double lr_predict(const LrProbe& probe, const Vector& features) {
  if (features.size() != probe.weights.size()) {
    throw DimensionError("feature length " + std::to_string(features.size()) + " does not match probe width " +
                         std::to_string(probe.weights.size()));
  }
  const Vector z = (features - probe.feature_means).cwiseQuotient(probe.feature_stds);
  return sigmoid(probe.weights.dot(z) + probe.intercept);
}

double lr_predict(const LrProbe& probe, const FeatureVector& feature) { return lr_predict(probe, feature.values); }

Vector lr_predict_all(const LrProbe& probe, const FeatureSet& set) {
  if (set.size() == 0) return Vector();
  const Vector eta = (standardize(probe, set.values) * probe.weights).array() + probe.intercept;
  return eta.unaryExpr([](double v) { return sigmoid(v); });
}

double lambda_max(const FeatureSet& train) {
  const auto s = fit_standardizer(train.values);
  LrProbe tmp;
  tmp.feature_means = s.means;
  tmp.feature_stds = s.stds;
  const Matrix x = standardize(tmp, train.values);
  const Vector y = label_vector(train);
  const Vector centered = y.array() - y.mean();
  return (x.transpose() * centered).cwiseAbs().maxCoeff();
}

double negative_log_likelihood(const LrProbe& probe, const FeatureSet& set) {
  if (set.size() == 0) return 0.0;
  const Vector eta = (standardize(probe, set.values) * probe.weights).array() + probe.intercept;
  return summed_nll(eta, label_vector(set));
}

LambdaSweepResult lambda_sweep(const FeatureSet& train, const FeatureSet& validation,
                               const std::vector<double>& grid, const LrOptions& options) {
  if (grid.empty()) throw ArgumentError("lambda grid must not be empty");
  if (validation.size() == 0) throw ArgumentError("lambda selection needs a non-empty validation set");
  LambdaSweepResult out;
  bool have = false;
  double best_nll = 0.0;
  for (double lambda : grid) {
    auto fit = lr_fit_l1(train, lambda, options);
    LambdaScore score;
    score.lambda = lambda;
    const double nll = negative_log_likelihood(fit.probe, validation);
    score.val_mean_nll = nll / static_cast<double>(validation.size());
    score.val_objective = nll + lambda * fit.probe.weights.lpNorm<1>();
    score.sparsity = sparsity_fraction(fit.probe);
    score.iterations = fit.iterations;
    score.converged = fit.converged;
    out.scores.push_back(score);
    const bool better = !have || score.val_mean_nll < best_nll ||
                        (score.val_mean_nll == best_nll && lambda > out.best.lambda);
    if (better) {
      best_nll = score.val_mean_nll;
      out.best = std::move(fit.probe);
      have = true;
    }
  }
  return out;
}

double sparsity_fraction(const LrProbe& probe, double threshold) {
  if (probe.weights.size() == 0) return 1.0;
  const auto zeros = (probe.weights.array().abs() < threshold).count();
  return static_cast<double>(zeros) / static_cast<double>(probe.weights.size());
}

HeadParams fold_probe_into_head(const LrProbe& probe) {
  HeadParams head;
  const Vector scaled = probe.weights.cwiseQuotient(probe.feature_stds);
  head.weight = scaled.transpose();
  head.bias = Vector::Constant(1, probe.intercept - scaled.dot(probe.feature_means));
  return head;
}

std::string probe_to_json(const LrProbe& probe) {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json doc = json::object();
  doc["format_version"] = "1";
  doc["lambda"] = probe.lambda;
  doc["weights"] = vec(probe.weights);
  doc["intercept"] = probe.intercept;
  doc["feature_means"] = vec(probe.feature_means);
  doc["feature_stds"] = vec(probe.feature_stds);
  doc["layers_used"] = probe.layers_used;
  return doc.dump() + "\n";
}

LrProbe probe_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("probe", 0, e.what());
  }
  if (!doc.is_object() || !doc.contains("format_version")) {
    throw UnsupportedFormatError("probe file has no format_version; unsupported format");
  }
  if (doc["format_version"] != "1") {
    throw UnsupportedFormatError("unsupported probe format_version " + doc["format_version"].dump());
  }
  try {
    auto vec = [](const std::vector<double>& v) { return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()))); };
    LrProbe p;
    p.lambda = doc.at("lambda").get<double>();
    p.weights = vec(doc.at("weights").get<std::vector<double>>());
    p.intercept = doc.at("intercept").get<double>();
    p.feature_means = vec(doc.at("feature_means").get<std::vector<double>>());
    p.feature_stds = vec(doc.at("feature_stds").get<std::vector<double>>());
    p.layers_used = doc.at("layers_used").get<std::string>();
    if (p.feature_means.size() != p.weights.size() || p.feature_stds.size() != p.weights.size()) {
      throw ValidationError("probe weight and standardization lengths differ");
    }
    if ((p.feature_stds.array() <= 0.0).any()) throw ValidationError("probe feature_stds must be positive");
    return p;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed probe file: ") + e.what());
  }
}

std::string features_to_csv(const FeatureSet& set) {
  std::string out = "episode_id,label";
  for (int j = 0; j < set.dimension(); ++j) out += ",f" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < set.size(); ++i) {
    out += set.episode_ids[i];
    out += ',';
    out += std::to_string(set.labels[i]);
    for (int j = 0; j < set.dimension(); ++j) {
      out += ',';
      out += format_double(set.values(static_cast<Eigen::Index>(i), j));
    }
    out += '\n';
  }
  return out;
}

FeatureSet features_from_csv(const std::string& text, const std::string& source_name) {
  const auto table = parse_csv(text, source_name);
  if (table.header.size() < 2 || table.header[0] != "episode_id" || table.header[1] != "label") {
    throw ParseError(source_name, 1, "feature header must start with episode_id,label");
  }
  const auto m = static_cast<Eigen::Index>(table.header.size() - 2);
  for (Eigen::Index j = 0; j < m; ++j) {
    if (table.header[static_cast<std::size_t>(j) + 2] != "f" + std::to_string(j)) {
      throw ParseError(source_name, 1, "feature columns must be named f0..f" + std::to_string(m - 1));
    }
  }
  FeatureSet set;
  set.values.resize(static_cast<Eigen::Index>(table.rows.size()), m);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    set.episode_ids.push_back(row[0]);
    try {
      const double label = parse_double(row[1]);
      if (label != 0.0 && label != 1.0) throw ArgumentError("label must be 0 or 1");
      set.labels.push_back(static_cast<int>(label));
      for (Eigen::Index j = 0; j < m; ++j) {
        set.values(static_cast<Eigen::Index>(i), j) = parse_double(row[static_cast<std::size_t>(j) + 2]);
      }
    } catch (const ArgumentError& e) {
      throw ParseError(source_name, i + 2, e.what());
    }
  }
  return set;
}

}  // namespace seqtl
