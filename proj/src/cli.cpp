// SPDX-License-Identifier: Apache-2.0
#include "seqtl/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "seqtl/csv.hpp"
#include "seqtl/dataset.hpp"
#include "seqtl/error.hpp"
#include "seqtl/eval.hpp"
#include "seqtl/experiment.hpp"
#include "seqtl/hash.hpp"
#include "seqtl/pretrain.hpp"
#include "seqtl/synthetic.hpp"
#include "seqtl/transfer.hpp"

namespace seqtl {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& s : split_list(text)) out.push_back(parse_double(s));
  if (out.empty()) throw ArgumentError("empty number list '" + text + "'");
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (const auto& s : split_list(text)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ArgumentError("'" + s + "' is not an integer");
    }
  }
  if (out.empty()) throw ArgumentError("empty integer list '" + text + "'");
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (int v : parse_int_list(text)) {
    if (v < 0) throw ArgumentError("seeds must be non-negative");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

/// Seed used when neither a flag nor a config file provides one.
std::pair<std::uint64_t, std::string> default_seed() {
  if (const char* env = std::getenv("SEQTL_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return {v, "env"};
    } catch (const std::exception&) {
    }
    throw ArgumentError(std::string("SEQTL_SEED='") + env + "' is not a non-negative integer");
  }
  return {0, "default"};
}

json parse_json_file(const fs::path& path) {
  const auto text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

/// Creates `dir` when its parent exists; a missing parent is a filesystem error.
void ensure_output_dir(const fs::path& dir) {
  if (fs::is_directory(dir)) return;
  const auto parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
  if (!fs::is_directory(parent)) {
    throw FilesystemError("parent directory '" + parent.string() + "' of '" + dir.string() + "' does not exist");
  }
  std::error_code ec;
  fs::create_directory(dir, ec);
  if (ec) throw FilesystemError("cannot create '" + dir.string() + "': " + ec.message());
}

void ensure_parent(const fs::path& file) {
  const auto parent = file.has_parent_path() ? file.parent_path() : fs::path(".");
  if (!fs::is_directory(parent)) throw FilesystemError("directory '" + parent.string() + "' does not exist");
}

fs::path with_suffix(const fs::path& file, const std::string& suffix) {
  auto p = file;
  p.replace_extension();
  p += suffix;
  return p;
}

/// Tracks inputs, outputs and the resolved configuration of one command and
/// writes the manifest atomically on success and on failure.
class RunRecord {
 public:
  explicit RunRecord(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {
    manifest_["command"] = command_;
    manifest_["tool_version"] = kToolVersion;
    manifest_["config"] = json::object();
    manifest_["config_sources"] = json::object();
    manifest_["inputs"] = json::object();
    manifest_["outputs"] = json::object();
  }

  json& config() { return manifest_["config"]; }
  void source(const std::string& key, const std::string& origin) { manifest_["config_sources"][key] = origin; }
  void set_manifest_path(fs::path p) { manifest_path_ = std::move(p); }

  void input(const fs::path& p) {
    if (fs::is_regular_file(p)) manifest_["inputs"][p.string()] = sha256_file(p);
  }
  void input_dir(const fs::path& dir) {
    std::vector<fs::path> files;
    if (fs::is_directory(dir)) {
      for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) input(f);
  }

  void output(const fs::path& p, const std::string& contents) {
    write_file_atomic(p, contents);
    manifest_["outputs"][p.string()] = sha256_hex(contents);
  }
  void output_existing(const fs::path& p) { manifest_["outputs"][p.string()] = sha256_file(p); }

  void finish(const std::string& status, const std::string& message = {}) {
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    manifest_["status"] = status;
    if (!message.empty()) manifest_["error"] = message;
    manifest_["duration_seconds"] = elapsed;
    if (manifest_path_.empty()) return;
    try {
      write_file_atomic(manifest_path_, manifest_.dump(2) + "\n");
    } catch (const FilesystemError&) {
      // Nowhere to put the manifest; the exit code still reports the failure.
    }
  }

 private:
  std::string command_;
  std::chrono::steady_clock::time_point start_;
  fs::path manifest_path_;
  json manifest_;
};

struct ModelFile {
  PretrainedModel model;
  std::string schema_hash;
};

ModelFile load_model(const fs::path& path) {
  const auto text = read_file(path);
  ModelFile out;
  out.model = model_from_file(text);
  out.schema_hash = deserialize_model(text).second.schema_hash;
  return out;
}

void check_schema(const ModelFile& model, const Dataset& data) {
  if (model.schema_hash != data.schema.hash()) {
    throw SchemaMismatchError("schema hash of the model (" + model.schema_hash + ") differs from the data (" +
                              data.schema.hash() + "); refusing to run");
  }
  if (model.model.net.stack.input_size() != data.schema.encoded_width()) {
    throw SchemaMismatchError("model input width does not match the data encoding");
  }
}

const std::vector<EncodedInstance>& split_list_by_name(const DatasetSplit& split, const std::string& name) {
  if (name == "train") return split.train;
  if (name == "val" || name == "validation") return split.validation;
  if (name == "test") return split.test;
  throw ArgumentError("unknown split '" + name + "' (expected train, val or test)");
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void cmd_synth(const SynthArgs& a, RunRecord& run) {
  const fs::path out_dir(a.out);
  ensure_output_dir(out_dir);
  run.set_manifest_path(out_dir / "manifest.json");
  run.input(a.spec);
  auto doc = parse_json_file(a.spec);
  if (a.seed) {
    doc["seed"] = *a.seed;
    run.source("seed", "flag");
  } else if (doc.contains("seed")) {
    run.source("seed", "config");
  } else {
    const auto [seed, origin] = default_seed();
    doc["seed"] = seed;
    run.source("seed", origin);
  }
  const auto spec = SyntheticSpec::from_json(doc.dump());
  spec.validate();
  run.config() = json::parse(spec.to_json());
  const auto data = generate_synthetic(spec);
  save_dataset(data.split, data.schema, out_dir);
  for (const char* f : {"schema.json", "tasks.json", "train.jsonl", "val.jsonl", "test.jsonl"}) {
    run.output_existing(out_dir / f);
  }
}

// ---------------------------------------------------------------------------
// pretrain

struct PretrainArgs {
  std::string data;
  std::string config;
  std::string hidden = "100";
  int layers = 2;
  std::string hold_out;
  std::string exclude_tasks;
  std::string out;
  std::string history;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_epochs;
  int horizon = kDefaultHorizon;
};

TrainConfig resolve_train_config(const std::string& config_path, const std::optional<std::uint64_t>& seed_flag,
                                 RunRecord& run, const std::string& key_prefix = {}) {
  TrainConfig base;
  bool config_has_seed = false;
  std::string text = "{}";
  if (!config_path.empty()) {
    run.input(config_path);
    auto doc = parse_json_file(config_path);
    if (!key_prefix.empty()) doc = doc.contains(key_prefix) ? doc.at(key_prefix) : json::object();
    config_has_seed = doc.contains("seed");
    text = doc.dump();
  }
  if (seed_flag) {
    base.seed = *seed_flag;
    auto cfg = TrainConfig::from_json(text, base);
    cfg.seed = *seed_flag;
    run.source("seed", "flag");
    return cfg;
  }
  if (!config_has_seed) {
    const auto [seed, origin] = default_seed();
    base.seed = seed;
    run.source("seed", origin);
  } else {
    run.source("seed", "config");
  }
  return TrainConfig::from_json(text, base);
}

void cmd_pretrain(const PretrainArgs& a, RunRecord& run) {
  const fs::path out(a.out);
  ensure_parent(out);
  run.set_manifest_path(with_suffix(out, ".manifest.json"));
  run.input_dir(a.data);

  auto config = resolve_train_config(a.config, a.seed, run);
  if (a.max_epochs) {
    config.max_epochs = *a.max_epochs;
    run.source("max_epochs", "flag");
  }
  config.validate();
  const auto hidden = parse_int_list(a.hidden);
  if (a.layers < 1) throw ArgumentError("--layers must be at least 1");

  const auto data = load_dataset(a.data, a.horizon);
  auto split = data.split;
  const auto held = split_list(a.hold_out);
  for (const auto& t : held) {
    if (split.task_index(t) < 0) throw ArgumentError("--hold-out names unknown task '" + t + "'");
  }
  if (!held.empty()) split = filter_source_split(split, std::set<std::string>(held.begin(), held.end()));
  const auto excluded = split_list(a.exclude_tasks);
  if (!excluded.empty()) {
    std::vector<std::string> keep;
    for (const auto& t : split.task_names) {
      if (std::find(excluded.begin(), excluded.end(), t) == excluded.end()) keep.push_back(t);
    }
    if (keep.empty()) throw NoSourceTasksError("every task was excluded; nothing left to pre-train on");
    split = select_tasks(split, keep);
  }

  auto& cfg = run.config();
  cfg["train"] = json::parse(config.to_json());
  cfg["hidden"] = hidden;
  cfg["layers"] = a.layers;
  cfg["hold_out"] = held;
  cfg["exclude_tasks"] = excluded;
  cfg["source_tasks"] = split.task_names;
  cfg["horizon"] = a.horizon;

  PretrainedModel model;
  if (hidden.size() == 1) {
    model = fit_source(split, config, hidden.front(), a.layers);
  } else {
    auto sweep = hidden_size_sweep(split, config, hidden, a.layers);
    json losses = json::array();
    for (const auto& [h, loss] : sweep.val_losses) losses.push_back({{"hidden", h}, {"val_loss", loss}});
    cfg["hidden_sweep"] = losses;
    model = std::move(sweep.best);
  }
  cfg["chosen_hidden"] = model.hidden_size();
  cfg["best_epoch"] = model.best_epoch;

  run.output(out, serialize_model(model.net, model_metadata(model, data.schema.hash())));
  const fs::path history = a.history.empty() ? with_suffix(out, ".history.csv") : fs::path(a.history);
  ensure_parent(history);
  run.output(history, history_csv(model.history));
}

// ---------------------------------------------------------------------------
// extract

struct ExtractArgs {
  std::string model;
  std::string data;
  std::string layers = "top";
  std::string split = "train";
  std::string task;
  std::string out;
  int horizon = kDefaultHorizon;
};

void cmd_extract(const ExtractArgs& a, RunRecord& run) {
  const fs::path out(a.out);
  ensure_parent(out);
  run.set_manifest_path(with_suffix(out, ".manifest.json"));
  run.input(a.model);
  run.input_dir(a.data);
  const auto model = load_model(a.model);
  const auto data = load_dataset(a.data, a.horizon);
  check_schema(model, data);
  const auto layers = layer_selection_from(a.layers);
  const auto task = a.task.empty() ? data.split.task_names.front() : a.task;
  const int label_index = data.split.task_index(task);
  if (label_index < 0) throw ArgumentError("unknown task '" + task + "'");
  const auto& list = split_list_by_name(data.split, a.split);
  auto& cfg = run.config();
  cfg["layers"] = to_string(layers);
  cfg["split"] = a.split;
  cfg["task"] = task;
  cfg["horizon"] = a.horizon;
  const auto set = extract_feature_set(model.model.net.stack, list, layers, label_index);
  cfg["feature_dimension"] = set.dimension();
  run.output(out, features_to_csv(set));
}

// ---------------------------------------------------------------------------
// fit-lr

struct FitLrArgs {
  std::string train;
  std::string validation;
  std::string lambda_grid;
  std::string out;
  std::string table;
  std::string layers = "top";
  std::optional<int> max_iterations;
};

void cmd_fit_lr(const FitLrArgs& a, RunRecord& run) {
  const fs::path out(a.out);
  ensure_parent(out);
  run.set_manifest_path(with_suffix(out, ".manifest.json"));
  run.input(a.train);
  run.input(a.validation);
  const auto grid = a.lambda_grid.empty() ? kDefaultLambdaGrid : parse_double_list(a.lambda_grid);
  LrOptions options;
  if (a.max_iterations) options.max_iterations = *a.max_iterations;
  auto& cfg = run.config();
  cfg["lambda_grid"] = grid;
  cfg["tolerance"] = options.tolerance;
  cfg["patience"] = options.patience;
  cfg["max_iterations"] = options.max_iterations;

  const auto train = features_from_csv(read_file(a.train), a.train);
  const auto validation = features_from_csv(read_file(a.validation), a.validation);
  if (train.dimension() != validation.dimension()) {
    throw DimensionError("train and validation features differ in dimension");
  }
  auto sweep = lambda_sweep(train, validation, grid, options);
  sweep.best.layers_used = a.layers;
  cfg["chosen_lambda"] = sweep.best.lambda;

  std::ostringstream table;
  table << "lambda,val_mean_nll,val_objective,sparsity,iterations,converged\n";
  for (const auto& s : sweep.scores) {
    table << format_double(s.lambda) << ',' << format_double(s.val_mean_nll) << ',' << format_double(s.val_objective)
          << ',' << format_double(s.sparsity) << ',' << s.iterations << ',' << (s.converged ? 1 : 0) << '\n';
  }
  run.output(out, probe_to_json(sweep.best));
  const fs::path table_path = a.table.empty() ? with_suffix(out, ".lambdas.csv") : fs::path(a.table);
  ensure_parent(table_path);
  run.output(table_path, table.str());
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string scores;
  std::string probe;
  std::string features;
  std::string out;
};

std::string metrics_csv(const std::vector<ScoredSet>& sets) {
  std::ostringstream out;
  out << "task,auroc,n,positives\n";
  std::size_t n = 0;
  std::size_t p = 0;
  for (const auto& s : sets) {
    out << s.task << ',' << format_double(auroc(s)) << ',' << s.labels.size() << ',' << s.positives() << '\n';
    n += s.labels.size();
    p += s.positives();
  }
  if (sets.size() > 1) out << "weighted," << format_double(weighted_auroc(sets)) << ',' << n << ',' << p << '\n';
  return out.str();
}

void cmd_eval(const EvalArgs& a, RunRecord& run) {
  const fs::path out(a.out);
  ensure_parent(out);
  run.set_manifest_path(with_suffix(out, ".manifest.json"));
  std::vector<ScoredSet> sets;
  if (!a.scores.empty()) {
    if (!a.probe.empty() || !a.features.empty()) throw ArgumentError("--scores excludes --probe/--features");
    run.input(a.scores);
    const auto table = parse_csv(read_file(a.scores), a.scores);
    const int task_col = table.column("task");
    const int score_col = table.column("score");
    const int label_col = table.column("label");
    if (score_col < 0 || label_col < 0) throw ValidationError("'" + a.scores + "' needs score and label columns");
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      const auto& row = table.rows[i];
      const std::string task = task_col < 0 ? "target" : row[static_cast<std::size_t>(task_col)];
      auto [it, fresh] = index.try_emplace(task, sets.size());
      if (fresh) sets.push_back(ScoredSet{task, {}, {}});
      auto& s = sets[it->second];
      s.scores.push_back(parse_double(row[static_cast<std::size_t>(score_col)]));
      const double y = parse_double(row[static_cast<std::size_t>(label_col)]);
      if (y != 0.0 && y != 1.0) throw ParseError(a.scores, i + 2, "label must be 0 or 1");
      s.labels.push_back(static_cast<int>(y));
    }
    run.config()["mode"] = "scores";
  } else {
    if (a.probe.empty() || a.features.empty()) throw ArgumentError("eval needs --scores or both --probe and --features");
    run.input(a.probe);
    run.input(a.features);
    const auto probe = probe_from_json(read_file(a.probe));
    const auto set = features_from_csv(read_file(a.features), a.features);
    if (set.dimension() != probe.dimension()) throw DimensionError("probe and features differ in dimension");
    const Vector p = lr_predict_all(probe, set);
    ScoredSet s{"target", std::vector<double>(p.data(), p.data() + p.size()), set.labels};
    sets.push_back(std::move(s));
    run.config()["mode"] = "probe";
  }
  if (sets.empty()) throw ValidationError("no scored instances to evaluate");
  run.output(out, metrics_csv(sets));
}

// ---------------------------------------------------------------------------
// sweep and report

struct SweepArgs {
  std::string model;
  std::string data;
  std::string task;
  std::string config;
  std::string fractions;
  std::string seeds;
  std::string families;
  std::string task_kind = "auto";
  std::optional<int> jobs;
  std::string out;
  int horizon = kDefaultHorizon;
};

json cell_to_json(const SweepCell& c) {
  json j;
  j["family"] = to_string(c.family);
  j["fraction"] = c.fraction;
  j["seed"] = c.seed;
  j["status"] = c.status;
  if (!c.reason.empty()) j["reason"] = c.reason;
  j["test_auroc"] = c.test_auroc;
  j["n_train"] = c.n_train;
  j["n_validation"] = c.n_validation;
  if (c.family == Family::RnnC) {
    j["chosen_hidden"] = c.chosen_hidden;
  } else {
    j["chosen_lambda"] = c.chosen_lambda;
  }
  return j;
}

SweepCell cell_from_json(const json& j) {
  SweepCell c;
  c.family = family_from(j.at("family").get<std::string>());
  c.fraction = j.at("fraction").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.status = j.at("status").get<std::string>();
  c.reason = j.value("reason", std::string());
  c.test_auroc = j.at("test_auroc").get<double>();
  c.n_train = j.value("n_train", std::size_t{0});
  c.n_validation = j.value("n_validation", std::size_t{0});
  c.chosen_hidden = j.value("chosen_hidden", 0);
  c.chosen_lambda = j.value("chosen_lambda", 0.0);
  return c;
}

/// Probes of the largest fraction and first seed feed the sparsity outputs.
std::vector<const SweepCell*> sparsity_cells(const SweepResult& result, double fraction, std::uint64_t seed) {
  std::vector<const SweepCell*> out;
  for (auto family : kProbeFamilies) {
    for (const auto& c : result.cells) {
      if (c.family == family && c.fraction == fraction && c.seed == seed && c.status == "ok" && c.probe) {
        out.push_back(&c);
      }
    }
  }
  return out;
}

void write_sparsity_outputs(const SparsityReport& report, const fs::path& dir, RunRecord& run) {
  run.output(dir / "sparsity.csv", sparsity_fractions_csv(report));
  run.output(dir / "table1.csv", sparsity_table_csv(report));
  std::set<Family> present;
  for (const auto& e : report.entries) present.insert(e.family);
  for (auto f : present) run.output(dir / ("heatmap_" + to_string(f) + ".csv"), heatmap_csv(report, f));
  json relevant;
  for (auto f : present) relevant[to_string(f)] = report.relevant_features(f).size();
  run.output(dir / "relevant_features.json", relevant.dump(2) + "\n");
}

void cmd_sweep(const SweepArgs& a, RunRecord& run) {
  const fs::path out_dir(a.out);
  ensure_output_dir(out_dir);
  run.set_manifest_path(out_dir / "manifest.json");
  run.input(a.model);
  run.input_dir(a.data);

  SweepOptions options;
  json doc = json::object();
  if (!a.config.empty()) {
    run.input(a.config);
    doc = parse_json_file(a.config);
  }
  auto pick = [&](const std::string& key, const std::string& flag) -> std::optional<std::string> {
    if (!flag.empty()) {
      run.source(key, "flag");
      return flag;
    }
    if (doc.contains(key)) {
      run.source(key, "config");
      std::string joined;
      for (const auto& v : doc.at(key)) {
        if (!joined.empty()) joined += ',';
        joined += v.is_string() ? v.get<std::string>() : v.dump();
      }
      return joined;
    }
    run.source(key, "default");
    return std::nullopt;
  };
  if (auto v = pick("fractions", a.fractions)) options.fractions = parse_double_list(*v);
  if (auto v = pick("seeds", a.seeds)) {
    options.seeds = parse_seed_list(*v);
  } else {
    const auto [seed, origin] = default_seed();
    options.seeds = {seed};
    run.source("seeds", origin);
  }
  if (auto v = pick("families", a.families)) {
    options.families.clear();
    for (const auto& name : split_list(*v)) options.families.push_back(family_from(name));
  }
  if (auto v = pick("lambda_grid", {})) options.lambda_grid = parse_double_list(*v);
  if (auto v = pick("rnn_hidden_grid", {})) options.rnn_hidden_grid = parse_int_list(*v);
  options.rnn_layers = doc.value("rnn_layers", options.rnn_layers);
  if (doc.contains("rnn")) options.rnn_config = TrainConfig::from_json(doc.at("rnn").dump());
  options.rnn_config.validate();
  options.lr_options.max_iterations = doc.value("lr_max_iterations", options.lr_options.max_iterations);
  options.lr_options.tolerance = doc.value("lr_tolerance", options.lr_options.tolerance);
  options.jobs = a.jobs ? *a.jobs : doc.value("jobs", 1);
  for (double f : options.fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ArgumentError("fractions must lie in (0, 1]");
  }

  const auto model = load_model(a.model);
  const auto data = load_dataset(a.data, a.horizon);
  check_schema(model, data);
  if (data.split.task_index(a.task) < 0) throw ArgumentError("unknown target task '" + a.task + "'");
  const auto target = select_tasks(data.split, {a.task});
  bool is_mortality = a.task == kMortalityTask;
  if (a.task_kind == "mortality") is_mortality = true;
  if (a.task_kind == "phenotype") is_mortality = false;

  auto& cfg = run.config();
  cfg["task"] = a.task;
  cfg["task_kind"] = is_mortality ? "mortality" : "phenotype";
  cfg["fractions"] = options.fractions;
  cfg["seeds"] = options.seeds;
  json fam = json::array();
  for (auto f : options.families) fam.push_back(to_string(f));
  cfg["families"] = fam;
  cfg["lambda_grid"] = options.lambda_grid;
  cfg["rnn_hidden_grid"] = options.rnn_hidden_grid;
  cfg["rnn_layers"] = options.rnn_layers;
  cfg["rnn"] = json::parse(options.rnn_config.to_json());
  cfg["lr_max_iterations"] = options.lr_options.max_iterations;
  cfg["lr_tolerance"] = options.lr_options.tolerance;
  cfg["jobs"] = options.jobs;
  cfg["horizon"] = a.horizon;

  const TransferSetup setup{&model.model, &target, &data.schema};
  const auto result = run_label_fraction_sweep(setup, options);

  run.output(out_dir / "sweep.csv", sweep_csv(result));
  run.output(out_dir / "fig2.csv", fraction_curve_csv({&result}));

  std::ostringstream lambdas;
  lambdas << "family,fraction,seed,lambda,val_mean_nll,sparsity,iterations,converged\n";
  for (const auto& c : result.cells) {
    for (const auto& s : c.lambda_scores) {
      lambdas << to_string(c.family) << ',' << format_double(c.fraction) << ',' << c.seed << ','
              << format_double(s.lambda) << ',' << format_double(s.val_mean_nll) << ','
              << format_double(s.sparsity) << ',' << s.iterations << ',' << (s.converged ? 1 : 0) << '\n';
    }
  }
  run.output(out_dir / "lambdas.csv", lambdas.str());

  const double top_fraction = *std::max_element(options.fractions.begin(), options.fractions.end());
  const auto first_seed = options.seeds.front();
  const auto cells = sparsity_cells(result, top_fraction, first_seed);
  json probes = json::object();
  std::vector<ProbeRecord> records;
  if (!cells.empty()) ensure_output_dir(out_dir / "probes");
  for (const auto* c : cells) {
    const auto rel = "probes/" + to_string(c->family) + ".json";
    run.output(out_dir / rel, probe_to_json(*c->probe));
    probes[to_string(c->family)] = rel;
    records.push_back(ProbeRecord{a.task, c->family, is_mortality, &*c->probe});
  }
  write_sparsity_outputs(sparsity_report(records), out_dir, run);

  json summary;
  summary["task"] = result.task;
  summary["task_kind"] = is_mortality ? "mortality" : "phenotype";
  summary["test_hash"] = result.test_hash;
  summary["sparsity_fraction"] = top_fraction;
  summary["sparsity_seed"] = first_seed;
  summary["probes"] = probes;
  json cells_json = json::array();
  for (const auto& c : result.cells) cells_json.push_back(cell_to_json(c));
  summary["cells"] = cells_json;
  run.output(out_dir / "summary.json", summary.dump(2) + "\n");
}

struct ReportArgs {
  std::vector<std::string> sweeps;
  std::string out;
};

void cmd_report(const ReportArgs& a, RunRecord& run) {
  const fs::path out_dir(a.out);
  ensure_output_dir(out_dir);
  run.set_manifest_path(out_dir / "manifest.json");
  if (a.sweeps.empty()) throw ArgumentError("report needs at least one sweep directory");

  std::vector<SweepResult> results;
  std::vector<LrProbe> probes;
  std::vector<std::tuple<std::string, Family, bool>> probe_meta;
  for (const auto& dir_name : a.sweeps) {
    const fs::path dir(dir_name);
    const auto summary_path = dir / "summary.json";
    run.input(summary_path);
    const auto doc = parse_json_file(summary_path);
    SweepResult r;
    r.task = doc.at("task").get<std::string>();
    r.test_hash = doc.at("test_hash").get<std::string>();
    for (const auto& c : doc.at("cells")) r.cells.push_back(cell_from_json(c));
    const bool mortality = doc.value("task_kind", std::string("phenotype")) == "mortality";
    for (const auto& [family, rel] : doc.at("probes").items()) {
      const auto path = dir / rel.get<std::string>();
      run.input(path);
      probes.push_back(probe_from_json(read_file(path)));
      probe_meta.emplace_back(r.task, family_from(family), mortality);
    }
    results.push_back(std::move(r));
  }
  run.config()["sweeps"] = a.sweeps;

  std::vector<const SweepResult*> all;
  for (const auto& r : results) all.push_back(&r);
  run.output(out_dir / "fig2.csv", fraction_curve_csv(all));
  for (const auto& r : results) run.output(out_dir / ("fig2_" + r.task + ".csv"), fraction_curve_csv({&r}));

  std::vector<ProbeRecord> records;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto& [task, family, mortality] = probe_meta[i];
    records.push_back(ProbeRecord{task, family, mortality, &probes[i]});
  }
  const auto report = sparsity_report(records);
  write_sparsity_outputs(report, out_dir, run);
  run.output(out_dir / "fig3.csv", heatmap_csv(report, Family::MnLr1));
}

template <typename Args>
int dispatch(const std::string& name, void (*fn)(const Args&, RunRecord&), const Args& args, std::ostream& out,
             std::ostream& err) {
  RunRecord run(name);
  try {
    fn(args, run);
    run.finish("ok");
    out << name << ": done\n";
    return 0;
  } catch (const FilesystemError& e) {
    run.finish("error", e.what());
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    run.finish("error", e.what());
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sequence transfer learning: GRU pre-training, frozen features and sparse linear probes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a seeded synthetic cohort");
  s->add_option("--spec", synth.spec, "Synthetic spec JSON")->required();
  s->add_option("--out", synth.out, "Output dataset directory")->required();
  s->add_option("--seed", synth.seed, "Override the spec seed");

  PretrainArgs pre;
  auto* p = app.add_subcommand("pretrain", "Pre-train a multi-task GRU on source tasks");
  p->add_option("--data", pre.data, "Dataset directory")->required();
  p->add_option("--config", pre.config, "Training config JSON");
  p->add_option("--hidden", pre.hidden, "Hidden size or comma list to sweep")->capture_default_str();
  p->add_option("--layers", pre.layers, "Number of GRU layers")->capture_default_str();
  p->add_option("--hold-out", pre.hold_out, "Comma list of held-out target tasks");
  p->add_option("--exclude-tasks", pre.exclude_tasks, "Comma list of tasks dropped without filtering rows");
  p->add_option("--out", pre.out, "Model JSON path")->required();
  p->add_option("--history", pre.history, "Loss history CSV (default: next to the model)");
  p->add_option("--seed", pre.seed, "Training seed");
  p->add_option("--max-epochs", pre.max_epochs, "Override the config epoch cap");
  p->add_option("--horizon", pre.horizon, "Hours kept per episode")->capture_default_str();

  ExtractArgs ex;
  auto* e = app.add_subcommand("extract", "Write frozen last-step features");
  e->add_option("--model", ex.model, "Model JSON")->required();
  e->add_option("--data", ex.data, "Dataset directory")->required();
  e->add_option("--layers", ex.layers, "top or all")->capture_default_str();
  e->add_option("--split", ex.split, "train, val or test")->capture_default_str();
  e->add_option("--task", ex.task, "Task whose label is carried (default: first)");
  e->add_option("--out", ex.out, "Feature CSV path")->required();
  e->add_option("--horizon", ex.horizon, "Hours kept per episode")->capture_default_str();

  FitLrArgs fit;
  auto* f = app.add_subcommand("fit-lr", "Fit an L1 logistic probe with a lambda sweep");
  f->add_option("--train", fit.train, "Training feature CSV")->required();
  f->add_option("--validation", fit.validation, "Validation feature CSV")->required();
  f->add_option("--lambda-grid", fit.lambda_grid, "Comma list (default 0.1,1,10,100,1000,10000)");
  f->add_option("--out", fit.out, "Probe JSON path")->required();
  f->add_option("--table", fit.table, "Per-lambda CSV (default: next to the probe)");
  f->add_option("--layers", fit.layers, "Recorded feature origin")->capture_default_str();
  f->add_option("--max-iterations", fit.max_iterations, "ISTA iteration cap");

  EvalArgs ev;
  auto* v = app.add_subcommand("eval", "AUROC of scores or of a probe on features");
  v->add_option("--scores", ev.scores, "CSV with task,score,label columns");
  v->add_option("--probe", ev.probe, "Probe JSON");
  v->add_option("--features", ev.features, "Feature CSV");
  v->add_option("--out", ev.out, "Metrics CSV path")->required();

  SweepArgs sw;
  auto* w = app.add_subcommand("sweep", "Label-fraction sweep over model families");
  w->add_option("--model", sw.model, "Pre-trained model JSON")->required();
  w->add_option("--data", sw.data, "Dataset directory")->required();
  w->add_option("--task", sw.task, "Target task")->required();
  w->add_option("--config", sw.config, "Sweep config JSON");
  w->add_option("--fractions", sw.fractions, "Comma list of label fractions");
  w->add_option("--seeds", sw.seeds, "Comma list of seeds");
  w->add_option("--families", sw.families, "Comma list of LR, RNN-C, MN-LR-1, MN-LR-2");
  w->add_option("--task-kind", sw.task_kind, "auto, phenotype or mortality")->capture_default_str();
  w->add_option("--jobs", sw.jobs, "Concurrent sweep cells");
  w->add_option("--out", sw.out, "Output directory")->required();
  w->add_option("--horizon", sw.horizon, "Hours kept per episode")->capture_default_str();

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "Merge sweep directories into figure and table data");
  r->add_option("--sweeps", rep.sweeps, "Sweep output directories")->required()->delimiter(',');
  r->add_option("--out", rep.out, "Output directory")->required();

  std::vector<std::string> argv_store = args;
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& ex_parse) {
    return app.exit(ex_parse, out, err);
  }

  if (s->parsed()) return dispatch("synth", cmd_synth, synth, out, err);
  if (p->parsed()) return dispatch("pretrain", cmd_pretrain, pre, out, err);
  if (e->parsed()) return dispatch("extract", cmd_extract, ex, out, err);
  if (f->parsed()) return dispatch("fit-lr", cmd_fit_lr, fit, out, err);
  if (v->parsed()) return dispatch("eval", cmd_eval, ev, out, err);
  if (w->parsed()) return dispatch("sweep", cmd_sweep, sw, out, err);
  if (r->parsed()) return dispatch("report", cmd_report, rep, out, err);
  return 1;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace seqtl
