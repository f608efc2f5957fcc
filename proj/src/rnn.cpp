// SPDX-License-Identifier: Apache-2.0
#include "seqtl/rnn.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "seqtl/error.hpp"

namespace seqtl {

using nlohmann::json;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Matrix sigmoid(const Matrix& a) { return a.unaryExpr([](double v) { return sigmoid(v); }); }

std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

void expect_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(std::string(what) + " has shape " + shape_str(m.rows(), m.cols()) + ", expected " +
                         shape_str(rows, cols));
  }
}

void expect_size(const Vector& v, Eigen::Index size, const char* what) {
  if (v.size() != size) {
    throw DimensionError(std::string(what) + " has length " + std::to_string(v.size()) + ", expected " +
                         std::to_string(size));
  }
}

void validate_layer(const GruLayerParams& p, int d_in, int h) {
  expect_shape(p.w_reset, h, d_in, "w_reset");
  expect_shape(p.w_update, h, d_in, "w_update");
  expect_shape(p.w_cand, h, d_in, "w_cand");
  expect_shape(p.u_reset, h, h, "u_reset");
  expect_shape(p.u_update, h, h, "u_update");
  expect_shape(p.u_cand, h, h, "u_cand");
  expect_size(p.b_reset, h, "b_reset");
  expect_size(p.b_update, h, "b_update");
  expect_size(p.b_cand, h, "b_cand");
}

/// Batched cell on the active columns; returns the new hidden state.
Matrix cell_forward(const GruLayerParams& p, const Matrix& x, const Matrix& h_prev, LayerStep& rec) {
  rec.reset = sigmoid((p.w_reset * x + p.u_reset * h_prev).colwise() + p.b_reset);
  rec.update = sigmoid((p.w_update * x + p.u_update * h_prev).colwise() + p.b_update);
  const Matrix gated = rec.reset.cwiseProduct(h_prev);
  rec.candidate = ((p.w_cand * x + p.u_cand * gated).colwise() + p.b_cand).array().tanh().matrix();
  return h_prev + rec.update.cwiseProduct(rec.candidate - h_prev);
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, const DropoutConfig& d) {
  const double keep = 1.0 - d.rate;
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = d.rng->bernoulli(keep) ? 1.0 / keep : 0.0;
  }
  return m;
}

template <typename Span, typename Net>
std::vector<Span> collect_tensors(Net& net) {
  std::vector<Span> out;
  auto add = [&](auto& m) { out.emplace_back(m.data(), static_cast<std::size_t>(m.size())); };
  for (auto& l : net.stack.layers) {
    add(l.w_reset);
    add(l.w_update);
    add(l.w_cand);
    add(l.u_reset);
    add(l.u_update);
    add(l.u_cand);
    add(l.b_reset);
    add(l.b_update);
    add(l.b_cand);
  }
  add(net.head.weight);
  add(net.head.bias);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameter containers

GruLayerParams GruLayerParams::zeros(int input_size, int hidden_size) {
  GruLayerParams p;
  p.w_reset = p.w_update = p.w_cand = Matrix::Zero(hidden_size, input_size);
  p.u_reset = p.u_update = p.u_cand = Matrix::Zero(hidden_size, hidden_size);
  p.b_reset = p.b_update = p.b_cand = Vector::Zero(hidden_size);
  return p;
}

void GruStack::validate() const {
  if (layers.empty()) throw DimensionError("GRU stack needs at least one layer");
  const int h = hidden_size();
  if (h < 1 || input_size() < 1) throw DimensionError("GRU dimensions must be positive");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    validate_layer(layers[l], l == 0 ? input_size() : h, h);
  }
}

NetworkParams NetworkParams::zeros(int input_size, int hidden_size, int num_layers, int num_tasks) {
  if (input_size < 1 || hidden_size < 1 || num_layers < 1 || num_tasks < 1) {
    throw ArgumentError("network dimensions must be positive");
  }
  NetworkParams net;
  for (int l = 0; l < num_layers; ++l) {
    net.stack.layers.push_back(GruLayerParams::zeros(l == 0 ? input_size : hidden_size, hidden_size));
  }
  net.head.weight = Matrix::Zero(num_tasks, hidden_size);
  net.head.bias = Vector::Zero(num_tasks);
  return net;
}

std::vector<std::span<double>> NetworkParams::tensors() { return collect_tensors<std::span<double>>(*this); }

std::vector<std::span<const double>> NetworkParams::tensors() const {
  return collect_tensors<std::span<const double>>(*this);
}

std::vector<std::string> NetworkParams::tensor_names() const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    for (const char* t : {"w_reset", "w_update", "w_cand", "u_reset", "u_update", "u_cand", "b_reset", "b_update",
                          "b_cand"}) {
      names.push_back("layer" + std::to_string(l + 1) + "." + t);
    }
  }
  names.emplace_back("head.weight");
  names.emplace_back("head.bias");
  return names;
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto& t : tensors()) total += t.size();
  return total;
}

void NetworkParams::validate() const {
  stack.validate();
  expect_shape(head.weight, head.weight.rows(), stack.hidden_size(), "head.weight");
  if (head.weight.rows() < 1) throw DimensionError("head needs at least one task");
  expect_size(head.bias, head.weight.rows(), "head.bias");
}

std::size_t parameter_count(int input_size, int hidden_size, int num_layers, int num_tasks) {
  const auto h = static_cast<std::size_t>(hidden_size);
  std::size_t total = 0;
  for (int l = 0; l < num_layers; ++l) {
    const auto d_in = static_cast<std::size_t>(l == 0 ? input_size : hidden_size);
    total += 3 * h * (d_in + h + 1);
  }
  return total + static_cast<std::size_t>(num_tasks) * (h + 1);
}

// ---------------------------------------------------------------------------
// Forward

CellStep gru_cell_forward(const Vector& x, const Vector& h_prev, const GruLayerParams& p) {
  const int h = p.hidden_size();
  validate_layer(p, p.input_size(), h);
  expect_size(x, p.input_size(), "cell input");
  expect_size(h_prev, h, "previous hidden state");
  LayerStep rec;
  const Matrix next = cell_forward(p, x, h_prev, rec);
  return CellStep{next.col(0), rec.reset.col(0), rec.update.col(0), rec.candidate.col(0)};
}

ForwardTrace stack_forward(std::span<const EncodedInstance* const> batch, const GruStack& stack,
                           std::optional<DropoutConfig> dropout) {
  stack.validate();
  if (batch.empty()) throw ArgumentError("stack_forward needs a non-empty batch");
  const int n = stack.input_size();
  const int h = stack.hidden_size();
  const int num_layers = stack.num_layers();
  const int batch_size = static_cast<int>(batch.size());
  for (const auto* inst : batch) {
    if (inst->width() != n) {
      throw DimensionError("instance '" + inst->episode_id + "' has width " + std::to_string(inst->width()) +
                           ", network expects " + std::to_string(n));
    }
    if (inst->valid_length() < 1) throw DimensionError("instance '" + inst->episode_id + "' is empty");
  }
  const bool training = dropout && dropout->rate > 0.0;
  if (training && (dropout->rate >= 1.0 || dropout->rng == nullptr)) {
    throw ArgumentError("dropout rate must lie in [0, 1) and needs a generator");
  }

  ForwardTrace tr;
  tr.order.resize(static_cast<std::size_t>(batch_size));
  std::iota(tr.order.begin(), tr.order.end(), 0);
  std::stable_sort(tr.order.begin(), tr.order.end(),
                   [&](int a, int b) { return batch[a]->valid_length() > batch[b]->valid_length(); });
  for (int idx : tr.order) tr.lengths.push_back(batch[idx]->valid_length());
  const int steps = tr.lengths.front();
  for (int t = 0; t < steps; ++t) {
    tr.active.push_back(static_cast<int>(
        std::count_if(tr.lengths.begin(), tr.lengths.end(), [t](int len) { return len > t; })));
  }

  tr.steps.assign(static_cast<std::size_t>(num_layers), std::vector<LayerStep>(static_cast<std::size_t>(steps)));
  if (training) tr.layer_masks.assign(static_cast<std::size_t>(num_layers - 1), {});
  std::vector<Matrix> hidden(static_cast<std::size_t>(num_layers), Matrix::Zero(h, batch_size));

  for (int t = 0; t < steps; ++t) {
    const int k = tr.active[static_cast<std::size_t>(t)];
    Matrix x(n, k);
    for (int j = 0; j < k; ++j) x.col(j) = batch[tr.order[static_cast<std::size_t>(j)]]->values.row(t).transpose();
    for (int l = 0; l < num_layers; ++l) {
      auto& rec = tr.steps[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
      auto& state = hidden[static_cast<std::size_t>(l)];
      rec.h_prev = state.leftCols(k);
      Matrix next = cell_forward(stack.layers[static_cast<std::size_t>(l)], x, rec.h_prev, rec);
      rec.input = std::move(x);
      state.leftCols(k) = next;
      if (l + 1 < num_layers) {
        if (training) {
          Matrix mask = dropout_mask(h, k, *dropout);
          x = next.cwiseProduct(mask);
          tr.layer_masks[static_cast<std::size_t>(l)].push_back(std::move(mask));
        } else {
          x = std::move(next);
        }
      }
    }
  }
  tr.final_hidden = std::move(hidden);
  if (training) tr.head_mask = dropout_mask(h, batch_size, *dropout);
  return tr;
}

ForwardTrace stack_forward(const EncodedInstance& instance, const GruStack& stack) {
  const EncodedInstance* one[] = {&instance};
  return stack_forward(std::span<const EncodedInstance* const>(one), stack);
}

namespace {

int column_of(const ForwardTrace& tr, int instance) {
  const auto it = std::find(tr.order.begin(), tr.order.end(), instance);
  if (it == tr.order.end()) throw ArgumentError("instance index out of range");
  return static_cast<int>(it - tr.order.begin());
}

}  // namespace

Vector ForwardTrace::last_state(int instance) const {
  const int col = column_of(*this, instance);
  const auto h = final_hidden.front().rows();
  Vector z(h * static_cast<Eigen::Index>(final_hidden.size()));
  for (std::size_t l = 0; l < final_hidden.size(); ++l) {
    z.segment(static_cast<Eigen::Index>(l) * h, h) = final_hidden[l].col(col);
  }
  return z;
}

Vector ForwardTrace::last_state(int instance, int layer) const {
  return final_hidden.at(static_cast<std::size_t>(layer)).col(column_of(*this, instance));
}

Vector ForwardTrace::prediction(int instance) const {
  if (probabilities.size() == 0) throw ArgumentError("apply_head has not been run on this trace");
  return probabilities.col(column_of(*this, instance));
}

Vector head_forward(const Vector& z_last, const HeadParams& head) {
  expect_size(z_last, head.weight.cols(), "head input");
  expect_size(head.bias, head.weight.rows(), "head.bias");
  return sigmoid(Matrix((head.weight * z_last + head.bias).eval()));
}

void apply_head(ForwardTrace& trace, const HeadParams& head) {
  const auto& top = trace.final_hidden.back();
  expect_shape(head.weight, head.weight.rows(), top.rows(), "head.weight");
  expect_size(head.bias, head.weight.rows(), "head.bias");
  const Matrix z = trace.training() ? Matrix(top.cwiseProduct(trace.head_mask)) : top;
  trace.logits = (head.weight * z).colwise() + head.bias;
  trace.probabilities = sigmoid(trace.logits);
}

// ---------------------------------------------------------------------------
// Backward

BackwardResult backward_bptt(const ForwardTrace& trace, const Matrix& targets, const GruStack& stack,
                             const HeadParams& head) {
  stack.validate();
  const int num_layers = stack.num_layers();
  const int h = stack.hidden_size();
  const int batch_size = trace.batch_size();
  const int num_tasks = head.num_tasks();
  if (static_cast<int>(trace.steps.size()) != num_layers || trace.final_hidden.front().rows() != h) {
    throw DimensionError("trace does not match the network it is differentiated against");
  }
  if (trace.probabilities.rows() != num_tasks || trace.probabilities.cols() != batch_size) {
    throw DimensionError("trace has no head output for this head; call apply_head first");
  }
  expect_shape(targets, num_tasks, batch_size, "targets");

  Matrix y(num_tasks, batch_size);
  for (int j = 0; j < batch_size; ++j) y.col(j) = targets.col(trace.order[static_cast<std::size_t>(j)]);

  const Matrix& p = trace.probabilities;
  const double scale = 1.0 / (static_cast<double>(num_tasks) * batch_size);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const double q = std::clamp(p(i, j), kProbClip, 1.0 - kProbClip);
      loss -= y(i, j) * std::log(q) + (1.0 - y(i, j)) * std::log(1.0 - q);
    }
  }

  BackwardResult out;
  out.loss = loss * scale;
  auto& g = out.gradients;
  g = NetworkParams::zeros(stack.input_size(), h, num_layers, num_tasks);

  const Matrix dlogits = (p - y) * scale;
  const Matrix& top = trace.final_hidden.back();
  const Matrix z = trace.training() ? Matrix(top.cwiseProduct(trace.head_mask)) : top;
  g.head.weight = dlogits * z.transpose();
  g.head.bias = dlogits.rowwise().sum();
  Matrix dtop = head.weight.transpose() * dlogits;
  if (trace.training()) dtop = dtop.cwiseProduct(trace.head_mask);

  // dhidden[l] holds dLoss/dz_{t,l} for the step being processed.
  std::vector<Matrix> dhidden(static_cast<std::size_t>(num_layers), Matrix::Zero(h, batch_size));
  const int steps = static_cast<int>(trace.active.size());
  for (int t = steps - 1; t >= 0; --t) {
    const int k = trace.active[static_cast<std::size_t>(t)];
    const int k_next = t + 1 < steps ? trace.active[static_cast<std::size_t>(t + 1)] : 0;
    // Instances whose last valid step is t feed the head from here.
    dhidden.back().middleCols(k_next, k - k_next) += dtop.middleCols(k_next, k - k_next);

    for (int l = num_layers - 1; l >= 0; --l) {
      const auto& rec = trace.steps[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
      const auto& prm = stack.layers[static_cast<std::size_t>(l)];
      auto& gl = g.stack.layers[static_cast<std::size_t>(l)];
      const Matrix dh = dhidden[static_cast<std::size_t>(l)].leftCols(k);

      const Matrix& r = rec.reset;
      const Matrix& u = rec.update;
      const Matrix& c = rec.candidate;
      const Matrix& hp = rec.h_prev;

      const Matrix dcand_pre =
          dh.cwiseProduct(u).cwiseProduct((1.0 - c.array().square()).matrix());
      const Matrix dupdate_pre =
          dh.cwiseProduct(c - hp).cwiseProduct(u.cwiseProduct((1.0 - u.array()).matrix()));
      Matrix dhp = dh.cwiseProduct((1.0 - u.array()).matrix());

      const Matrix gated = r.cwiseProduct(hp);
      gl.w_cand.noalias() += dcand_pre * rec.input.transpose();
      gl.u_cand.noalias() += dcand_pre * gated.transpose();
      gl.b_cand += dcand_pre.rowwise().sum();

      const Matrix dgated = prm.u_cand.transpose() * dcand_pre;
      const Matrix dreset_pre =
          dgated.cwiseProduct(hp).cwiseProduct(r.cwiseProduct((1.0 - r.array()).matrix()));
      dhp += dgated.cwiseProduct(r);

      gl.w_reset.noalias() += dreset_pre * rec.input.transpose();
      gl.u_reset.noalias() += dreset_pre * hp.transpose();
      gl.b_reset += dreset_pre.rowwise().sum();
      gl.w_update.noalias() += dupdate_pre * rec.input.transpose();
      gl.u_update.noalias() += dupdate_pre * hp.transpose();
      gl.b_update += dupdate_pre.rowwise().sum();

      dhp.noalias() += prm.u_reset.transpose() * dreset_pre;
      dhp.noalias() += prm.u_update.transpose() * dupdate_pre;
      dhidden[static_cast<std::size_t>(l)].leftCols(k) = dhp;

      if (l > 0) {
        Matrix dx = prm.w_reset.transpose() * dreset_pre;
        dx.noalias() += prm.w_update.transpose() * dupdate_pre;
        dx.noalias() += prm.w_cand.transpose() * dcand_pre;
        if (trace.training()) {
          dx = dx.cwiseProduct(trace.layer_masks[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(t)]);
        }
        dhidden[static_cast<std::size_t>(l - 1)].leftCols(k) += dx;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Initialization

namespace {

void glorot_uniform(Matrix& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-limit, limit);
  }
}

void orthogonal(Matrix& m, Rng& rng) {
  const auto n = m.rows();
  Matrix a(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) a(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  m = q;
}

}  // namespace

NetworkParams init_params(int input_size, int hidden_size, int num_layers, int num_tasks, std::uint64_t seed) {
  auto net = NetworkParams::zeros(input_size, hidden_size, num_layers, num_tasks);
  std::uint64_t stream = 1;
  for (auto& layer : net.stack.layers) {
    for (Matrix* w : {&layer.w_reset, &layer.w_update, &layer.w_cand}) {
      Rng rng(seed, stream++);
      glorot_uniform(*w, rng);
    }
    for (Matrix* u : {&layer.u_reset, &layer.u_update, &layer.u_cand}) {
      Rng rng(seed, stream++);
      orthogonal(*u, rng);
    }
  }
  Rng rng(seed, stream++);
  glorot_uniform(net.head.weight, rng);
  return net;
}

Vector predict(const NetworkParams& net, const EncodedInstance& instance) {
  auto tr = stack_forward(instance, net.stack);
  apply_head(tr, net.head);
  return tr.probabilities.col(0);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json matrix_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return {{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

json vector_json(const Vector& v) {
  return {{"shape", {v.size()}}, {"data", std::vector<double>(v.data(), v.data() + v.size())}};
}

Matrix matrix_from(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  if (shape.size() != 2 || shape[0] != rows || shape[1] != cols) {
    throw ValidationError(what + ": shape field disagrees with model dimensions");
  }
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ValidationError(what + ": payload length disagrees with its shape");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = data[static_cast<std::size_t>(i * cols + c)];
  }
  return m;
}

Vector vector_from(const json& j, Eigen::Index size, const std::string& what) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  if (shape.size() != 1 || shape[0] != size) {
    throw ValidationError(what + ": shape field disagrees with model dimensions");
  }
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != size) {
    throw ValidationError(what + ": payload length disagrees with its shape");
  }
  return Eigen::Map<const Vector>(data.data(), size);
}

}  // namespace

std::string serialize_model(const NetworkParams& net, const ModelMetadata& meta) {
  net.validate();
  json layers = json::array();
  for (const auto& l : net.stack.layers) {
    layers.push_back({{"w_reset", matrix_json(l.w_reset)},
                      {"w_update", matrix_json(l.w_update)},
                      {"w_cand", matrix_json(l.w_cand)},
                      {"u_reset", matrix_json(l.u_reset)},
                      {"u_update", matrix_json(l.u_update)},
                      {"u_cand", matrix_json(l.u_cand)},
                      {"b_reset", vector_json(l.b_reset)},
                      {"b_update", vector_json(l.b_update)},
                      {"b_cand", vector_json(l.b_cand)}});
  }
  json history = json::array();
  for (const auto& e : meta.history) {
    history.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  }
  json doc = json::object();
  doc["format_version"] = "1";
  doc["n"] = net.stack.input_size();
  doc["h"] = net.stack.hidden_size();
  doc["L"] = net.stack.num_layers();
  doc["K"] = net.head.num_tasks();
  doc["layers"] = std::move(layers);
  doc["head"] = {{"weight", matrix_json(net.head.weight)}, {"bias", vector_json(net.head.bias)}};
  doc["schema_hash"] = meta.schema_hash;
  doc["train_config"] = json::parse(meta.train_config);
  doc["seed"] = meta.seed;
  doc["task_names"] = meta.task_names;
  doc["history"] = std::move(history);
  return doc.dump() + "\n";
}

std::pair<NetworkParams, ModelMetadata> deserialize_model(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("model", 0, e.what());
  }
  if (!doc.is_object() || !doc.contains("format_version")) {
    throw UnsupportedFormatError("model file has no format_version; unsupported format");
  }
  if (!doc["format_version"].is_string() || doc["format_version"].get<std::string>() != "1") {
    throw UnsupportedFormatError("unsupported model format_version " + doc["format_version"].dump());
  }
  try {
    const int n = doc.at("n").get<int>();
    const int h = doc.at("h").get<int>();
    const int num_layers = doc.at("L").get<int>();
    const int k = doc.at("K").get<int>();
    if (n < 1 || h < 1 || num_layers < 1 || k < 1) throw ValidationError("model dimensions must be positive");
    const auto& layers = doc.at("layers");
    if (!layers.is_array() || static_cast<int>(layers.size()) != num_layers) {
      throw ValidationError("layer count disagrees with L");
    }
    NetworkParams net;
    for (int l = 0; l < num_layers; ++l) {
      const auto& lj = layers[static_cast<std::size_t>(l)];
      const int d_in = l == 0 ? n : h;
      const std::string p = "layer" + std::to_string(l + 1) + ".";
      GruLayerParams layer;
      layer.w_reset = matrix_from(lj.at("w_reset"), h, d_in, p + "w_reset");
      layer.w_update = matrix_from(lj.at("w_update"), h, d_in, p + "w_update");
      layer.w_cand = matrix_from(lj.at("w_cand"), h, d_in, p + "w_cand");
      layer.u_reset = matrix_from(lj.at("u_reset"), h, h, p + "u_reset");
      layer.u_update = matrix_from(lj.at("u_update"), h, h, p + "u_update");
      layer.u_cand = matrix_from(lj.at("u_cand"), h, h, p + "u_cand");
      layer.b_reset = vector_from(lj.at("b_reset"), h, p + "b_reset");
      layer.b_update = vector_from(lj.at("b_update"), h, p + "b_update");
      layer.b_cand = vector_from(lj.at("b_cand"), h, p + "b_cand");
      net.stack.layers.push_back(std::move(layer));
    }
    net.head.weight = matrix_from(doc.at("head").at("weight"), k, h, "head.weight");
    net.head.bias = vector_from(doc.at("head").at("bias"), k, "head.bias");

    ModelMetadata meta;
    meta.schema_hash = doc.value("schema_hash", std::string());
    meta.train_config = doc.contains("train_config") ? doc["train_config"].dump() : "{}";
    meta.seed = doc.value("seed", std::uint64_t{0});
    meta.task_names = doc.value("task_names", std::vector<std::string>{});
    if (!meta.task_names.empty() && static_cast<int>(meta.task_names.size()) != k) {
      throw ValidationError("task_names length disagrees with K");
    }
    if (doc.contains("history")) {
      for (const auto& e : doc["history"]) {
        meta.history.push_back(
            {e.at("epoch").get<int>(), e.at("train_loss").get<double>(), e.at("val_loss").get<double>()});
      }
    }
    return {std::move(net), std::move(meta)};
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed model file: ") + e.what());
  }
}

}  // namespace seqtl
