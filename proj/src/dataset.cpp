// SPDX-License-Identifier: Apache-2.0
#include "seqtl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <sstream>
#include <unordered_set>

#include "seqtl/error.hpp"
#include "seqtl/hash.hpp"
#include "seqtl/rng.hpp"

namespace seqtl {

using nlohmann::json;

// ---------------------------------------------------------------------------
// ChannelSchema

ChannelSchema::ChannelSchema(std::vector<Channel> channels) : channels_(std::move(channels)) {
  std::unordered_set<std::string> names;
  int offset = 0;
  for (const auto& ch : channels_) {
    if (ch.name.empty()) throw ValidationError("channel name must not be empty");
    if (!names.insert(ch.name).second) throw ValidationError("duplicate channel name '" + ch.name + "'");
    if (ch.kind == ChannelKind::Categorical) {
      if (ch.categories.empty()) {
        throw ValidationError("categorical channel '" + ch.name + "' has no categories");
      }
      std::unordered_set<std::string> cats(ch.categories.begin(), ch.categories.end());
      if (cats.size() != ch.categories.size()) {
        throw ValidationError("duplicate category in channel '" + ch.name + "'");
      }
    } else if (!ch.categories.empty()) {
      throw ValidationError("real channel '" + ch.name + "' must not list categories");
    }
    offsets_.push_back(offset);
    offset += ch.width();
  }
  encoded_width_ = offset;
}

int ChannelSchema::category_index(int c, const std::string& name) const {
  const auto& cats = channels_.at(static_cast<std::size_t>(c)).categories;
  const auto it = std::find(cats.begin(), cats.end(), name);
  return it == cats.end() ? -1 : static_cast<int>(it - cats.begin());
}

std::string ChannelSchema::to_json() const {
  json channels = json::array();
  for (const auto& ch : channels_) {
    channels.push_back({{"name", ch.name},
                        {"kind", ch.kind == ChannelKind::Real ? "real" : "categorical"},
                        {"categories", ch.categories}});
  }
  return json{{"channels", channels}}.dump(2) + "\n";
}

ChannelSchema ChannelSchema::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("schema.json", 0, e.what());
  }
  if (!doc.is_object() || !doc.contains("channels") || !doc["channels"].is_array()) {
    throw ParseError("schema.json", 0, "expected an object with a \"channels\" array");
  }
  std::vector<Channel> channels;
  for (const auto& item : doc["channels"]) {
    Channel ch;
    try {
      ch.name = item.at("name").get<std::string>();
      const auto kind = item.at("kind").get<std::string>();
      if (kind == "real") {
        ch.kind = ChannelKind::Real;
      } else if (kind == "categorical") {
        ch.kind = ChannelKind::Categorical;
      } else {
        throw ParseError("schema.json", 0, "unknown channel kind '" + kind + "'");
      }
      if (item.contains("categories")) ch.categories = item["categories"].get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw ParseError("schema.json", 0, e.what());
    }
    channels.push_back(std::move(ch));
  }
  return ChannelSchema(std::move(channels));
}

std::string ChannelSchema::hash() const { return sha256_hex(to_json()); }

bool ChannelSchema::operator==(const ChannelSchema& other) const {
  if (channels_.size() != other.channels_.size()) return false;
  for (std::size_t i = 0; i < channels_.size(); ++i) {
    const auto& a = channels_[i];
    const auto& b = other.channels_[i];
    if (a.name != b.name || a.kind != b.kind || a.categories != b.categories) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Instances and splits

bool EncodedInstance::operator==(const EncodedInstance& other) const {
  return episode_id == other.episode_id && values.rows() == other.values.rows() &&
         values.cols() == other.values.cols() && values == other.values &&
         observed.rows() == other.observed.rows() && observed.cols() == other.observed.cols() &&
         observed == other.observed && labels == other.labels;
}

int DatasetSplit::task_index(const std::string& name) const {
  const auto it = std::find(task_names.begin(), task_names.end(), name);
  return it == task_names.end() ? -1 : static_cast<int>(it - task_names.begin());
}

void DatasetSplit::validate() const {
  std::unordered_set<std::string> ids;
  const auto k = task_names.size();
  int width = -1;
  for (const auto* list : {&train, &validation, &test}) {
    for (const auto& inst : *list) {
      if (!ids.insert(inst.episode_id).second) {
        throw ValidationError("episode '" + inst.episode_id + "' appears more than once across splits");
      }
      if (inst.labels.size() != k) {
        throw ValidationError("episode '" + inst.episode_id + "' has " + std::to_string(inst.labels.size()) +
                              " labels, expected " + std::to_string(k));
      }
      if (width < 0) width = inst.width();
      if (inst.width() != width) throw ValidationError("instances disagree on encoded width");
    }
  }
}

EncodedInstance encode_record(const EpisodeRecord& record, const ChannelSchema& schema, int horizon,
                              const std::vector<std::string>& task_names) {
  if (record.hours.empty()) throw EmptyEpisodeError("episode '" + record.episode_id + "' has no observations");
  if (horizon < 1) throw ArgumentError("horizon must be positive");

  const int raw = schema.raw_width();
  const int steps = std::min(static_cast<int>(record.hours.size()), horizon);
  EncodedInstance out;
  out.episode_id = record.episode_id;
  out.values = RowMatrix::Zero(steps, schema.encoded_width());
  out.observed = MaskMatrix::Zero(steps, raw);

  for (int c = 0; c < raw; ++c) {
    const auto& ch = schema.channels()[static_cast<std::size_t>(c)];
    const int col = schema.offset(c);
    // Channel default until the first observation, then carry forward.
    double last_real = 0.0;
    int last_cat = 0;
    for (int t = 0; t < steps; ++t) {
      const auto& row = record.hours[static_cast<std::size_t>(t)];
      if (static_cast<int>(row.size()) != raw) {
        throw SchemaMismatchError("episode '" + record.episode_id + "' hour " + std::to_string(t + 1) + " has " +
                                  std::to_string(row.size()) + " values, schema has " + std::to_string(raw));
      }
      const auto& v = row[static_cast<std::size_t>(c)];
      if (ch.kind == ChannelKind::Real) {
        if (const auto* d = std::get_if<double>(&v)) {
          if (!std::isfinite(*d)) {
            throw ValidationError("episode '" + record.episode_id + "' has a non-finite value in '" + ch.name + "'");
          }
          last_real = *d;
          out.observed(t, c) = 1;
        } else if (std::holds_alternative<std::string>(v)) {
          throw SchemaMismatchError("real channel '" + ch.name + "' holds a category name in episode '" +
                                    record.episode_id + "'");
        }
        out.values(t, col) = last_real;
      } else {
        if (const auto* s = std::get_if<std::string>(&v)) {
          const int idx = schema.category_index(c, *s);
          if (idx < 0) {
            throw SchemaMismatchError("unknown category '" + *s + "' for channel '" + ch.name + "' in episode '" +
                                      record.episode_id + "'");
          }
          last_cat = idx;
          out.observed(t, c) = 1;
        } else if (std::holds_alternative<double>(v)) {
          throw SchemaMismatchError("categorical channel '" + ch.name + "' holds a number in episode '" +
                                    record.episode_id + "'");
        }
        out.values(t, col + last_cat) = 1.0;
      }
    }
  }

  out.labels.reserve(task_names.size());
  for (const auto& task : task_names) {
    const auto it = record.labels.find(task);
    if (it == record.labels.end()) {
      throw ValidationError("episode '" + record.episode_id + "' has no label for task '" + task + "'");
    }
    if (it->second != 0 && it->second != 1) {
      throw ValidationError("episode '" + record.episode_id + "' label for '" + task + "' is not 0/1");
    }
    out.labels.push_back(it->second);
  }
  return out;
}

EpisodeRecord decode_instance(const EncodedInstance& instance, const ChannelSchema& schema,
                              const std::vector<std::string>& task_names) {
  EpisodeRecord rec;
  rec.episode_id = instance.episode_id;
  const int raw = schema.raw_width();
  rec.hours.resize(static_cast<std::size_t>(instance.valid_length()));
  for (int t = 0; t < instance.valid_length(); ++t) {
    auto& row = rec.hours[static_cast<std::size_t>(t)];
    row.resize(static_cast<std::size_t>(raw));
    for (int c = 0; c < raw; ++c) {
      if (!instance.observed(t, c)) continue;
      const auto& ch = schema.channels()[static_cast<std::size_t>(c)];
      const int col = schema.offset(c);
      if (ch.kind == ChannelKind::Real) {
        row[static_cast<std::size_t>(c)] = instance.values(t, col);
      } else {
        Eigen::Index hot = 0;
        instance.values.row(t).segment(col, ch.width()).maxCoeff(&hot);
        row[static_cast<std::size_t>(c)] = ch.categories[static_cast<std::size_t>(hot)];
      }
    }
  }
  for (std::size_t k = 0; k < task_names.size(); ++k) rec.labels[task_names[k]] = instance.labels.at(k);
  return rec;
}

namespace {

std::vector<std::size_t> label_columns(const DatasetSplit& split, const std::vector<std::string>& keep) {
  std::vector<std::size_t> cols;
  for (const auto& t : keep) {
    const int idx = split.task_index(t);
    if (idx < 0) throw ArgumentError("unknown task '" + t + "'");
    cols.push_back(static_cast<std::size_t>(idx));
  }
  return cols;
}

EncodedInstance reindexed(const EncodedInstance& inst, const std::vector<std::size_t>& cols) {
  EncodedInstance out = inst;
  out.labels.clear();
  for (auto c : cols) out.labels.push_back(inst.labels[c]);
  return out;
}

}  // namespace

DatasetSplit filter_source_split(const DatasetSplit& split, const std::set<std::string>& held_out_tasks) {
  std::vector<std::size_t> held_cols;
  for (const auto& t : held_out_tasks) {
    const int idx = split.task_index(t);
    if (idx < 0) throw ArgumentError("held-out task '" + t + "' is not in the label universe");
    held_cols.push_back(static_cast<std::size_t>(idx));
  }
  std::vector<std::string> source;
  for (const auto& t : split.task_names) {
    if (!held_out_tasks.contains(t)) source.push_back(t);
  }
  if (source.empty()) throw NoSourceTasksError("every task is held out; no source tasks remain");

  const auto cols = label_columns(split, source);
  const auto leaks = [&](const EncodedInstance& inst) {
    return std::any_of(held_cols.begin(), held_cols.end(), [&](std::size_t c) { return inst.labels[c] != 0; });
  };

  DatasetSplit out;
  out.task_names = source;
  for (const auto& inst : split.train) {
    if (!leaks(inst)) out.train.push_back(reindexed(inst, cols));
  }
  for (const auto& inst : split.validation) {
    if (!leaks(inst)) out.validation.push_back(reindexed(inst, cols));
  }
  for (const auto& inst : split.test) out.test.push_back(reindexed(inst, cols));
  return out;
}

DatasetSplit select_tasks(const DatasetSplit& split, const std::vector<std::string>& tasks) {
  if (tasks.empty()) throw ArgumentError("select_tasks needs at least one task");
  const auto cols = label_columns(split, tasks);
  DatasetSplit out;
  out.task_names = tasks;
  for (const auto& inst : split.train) out.train.push_back(reindexed(inst, cols));
  for (const auto& inst : split.validation) out.validation.push_back(reindexed(inst, cols));
  for (const auto& inst : split.test) out.test.push_back(reindexed(inst, cols));
  return out;
}

std::vector<EncodedInstance> subsample_labeled(const std::vector<EncodedInstance>& instances, double fraction,
                                               std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ArgumentError("subsample fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i].labels.empty()) throw ArgumentError("instance '" + instances[i].episode_id + "' has no label");
    by_class[instances[i].labels.front() != 0 ? 1 : 0].push_back(i);
  }
  std::vector<std::size_t> chosen;
  Rng rng(seed, 0x5ab5a3b1e);
  for (auto& members : by_class) {
    if (members.empty()) continue;
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size()))));
    auto pool = members;
    rng.shuffle(pool);
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<EncodedInstance> out;
  out.reserve(chosen.size());
  for (auto i : chosen) out.push_back(instances[i]);
  return out;
}

// ---------------------------------------------------------------------------
// JSONL

std::vector<EpisodeRecord> parse_records(const std::string& text, const std::string& source_name) {
  std::vector<EpisodeRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source_name, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError(source_name, line_no, "expected a JSON object");
    for (const auto& [key, _] : doc.items()) {
      if (key != "episode_id" && key != "hours" && key != "labels") {
        throw ParseError(source_name, line_no, "unexpected field '" + key + "'");
      }
    }
    for (const char* key : {"episode_id", "hours", "labels"}) {
      if (!doc.contains(key)) throw ParseError(source_name, line_no, std::string("missing field '") + key + "'");
    }
    EpisodeRecord rec;
    if (!doc["episode_id"].is_string()) throw ParseError(source_name, line_no, "episode_id must be a string");
    rec.episode_id = doc["episode_id"].get<std::string>();
    if (!doc["hours"].is_array()) throw ParseError(source_name, line_no, "hours must be an array");
    for (const auto& row : doc["hours"]) {
      if (!row.is_array()) throw ParseError(source_name, line_no, "each hour must be an array");
      std::vector<RawValue> values;
      values.reserve(row.size());
      for (const auto& v : row) {
        if (v.is_null()) {
          values.emplace_back(std::monostate{});
        } else if (v.is_number()) {
          values.emplace_back(v.get<double>());
        } else if (v.is_string()) {
          values.emplace_back(v.get<std::string>());
        } else {
          throw ParseError(source_name, line_no, "hour values must be number, string or null");
        }
      }
      rec.hours.push_back(std::move(values));
    }
    if (!doc["labels"].is_object()) throw ParseError(source_name, line_no, "labels must be an object");
    for (const auto& [task, v] : doc["labels"].items()) {
      if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1)) {
        throw ParseError(source_name, line_no, "label '" + task + "' must be 0 or 1");
      }
      rec.labels[task] = v.get<int>();
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::string format_record(const EpisodeRecord& record) {
  json hours = json::array();
  for (const auto& row : record.hours) {
    json r = json::array();
    for (const auto& v : row) {
      if (const auto* d = std::get_if<double>(&v)) {
        r.push_back(*d);
      } else if (const auto* s = std::get_if<std::string>(&v)) {
        r.push_back(*s);
      } else {
        r.push_back(nullptr);
      }
    }
    hours.push_back(std::move(r));
  }
  json labels = json::object();
  for (const auto& [k, v] : record.labels) labels[k] = v;
  json doc = json::object();
  doc["episode_id"] = record.episode_id;
  doc["hours"] = std::move(hours);
  doc["labels"] = std::move(labels);
  return doc.dump();
}

namespace {

const char* kListFiles[3] = {"train.jsonl", "val.jsonl", "test.jsonl"};

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir, int horizon) {
  Dataset out;
  out.schema = ChannelSchema::from_json(read_file(dir / "schema.json"));
  try {
    const auto tasks = json::parse(read_file(dir / "tasks.json"));
    out.split.task_names = tasks.get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ParseError((dir / "tasks.json").string(), 0, e.what());
  }
  std::vector<EncodedInstance>* lists[3] = {&out.split.train, &out.split.validation, &out.split.test};
  for (int i = 0; i < 3; ++i) {
    const auto path = dir / kListFiles[i];
    const auto records = parse_records(read_file(path), path.string());
    lists[i]->reserve(records.size());
    for (std::size_t r = 0; r < records.size(); ++r) {
      try {
        lists[i]->push_back(encode_record(records[r], out.schema, horizon, out.split.task_names));
      } catch (const EmptyEpisodeError& e) {
        throw ValidationError(path.string() + ": record " + std::to_string(r + 1) + ": " + e.what());
      } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": record " + std::to_string(r + 1) + ": " + e.what());
      }
    }
  }
  out.split.validate();
  return out;
}

void save_dataset(const DatasetSplit& split, const ChannelSchema& schema, const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw FilesystemError("output directory '" + dir.string() + "' does not exist");
  }
  write_file_atomic(dir / "schema.json", schema.to_json());
  write_file_atomic(dir / "tasks.json", json(split.task_names).dump(2) + "\n");
  const std::vector<EncodedInstance>* lists[3] = {&split.train, &split.validation, &split.test};
  for (int i = 0; i < 3; ++i) {
    std::string body;
    for (const auto& inst : *lists[i]) {
      body += format_record(decode_instance(inst, schema, split.task_names));
      body += '\n';
    }
    write_file_atomic(dir / kListFiles[i], body);
  }
}

}  // namespace seqtl
