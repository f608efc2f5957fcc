// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace seqtl {

/// Observation horizon in hourly steps used by default for all encodings.
inline constexpr int kDefaultHorizon = 48;

enum class ChannelKind { Real, Categorical };

struct Channel {
  std::string name;
  ChannelKind kind = ChannelKind::Real;
  std::vector<std::string> categories;  // empty for real channels

  int width() const noexcept {
    return kind == ChannelKind::Real ? 1 : static_cast<int>(categories.size());
  }
};

/// Ordered raw channels and the fixed-width numeric encoding derived from them.
class ChannelSchema {
 public:
  ChannelSchema() = default;
  /// Throws ValidationError on duplicate names, duplicate categories, or empty category lists.
  explicit ChannelSchema(std::vector<Channel> channels);

  const std::vector<Channel>& channels() const noexcept { return channels_; }
  int raw_width() const noexcept { return static_cast<int>(channels_.size()); }
  /// Encoded width n: one column per real channel plus one per category.
  int encoded_width() const noexcept { return encoded_width_; }
  /// First encoded column of raw channel c.
  int offset(int c) const { return offsets_.at(static_cast<std::size_t>(c)); }
  int category_index(int c, const std::string& name) const;  // -1 when unknown

  std::string to_json() const;
  static ChannelSchema from_json(const std::string& text);
  /// SHA-256 of the canonical JSON form; identifies compatible models and data.
  std::string hash() const;

  bool operator==(const ChannelSchema& other) const;

 private:
  std::vector<Channel> channels_;
  std::vector<int> offsets_;
  int encoded_width_ = 0;
};

/// Missing, real value, or category name.
using RawValue = std::variant<std::monostate, double, std::string>;

/// One episode as ingested. Row i of `hours` is hour i + 1.
struct EpisodeRecord {
  std::string episode_id;
  std::vector<std::vector<RawValue>> hours;
  std::map<std::string, int> labels;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// An encoded episode: valid_length x n values plus its label bits.
struct EncodedInstance {
  std::string episode_id;
  RowMatrix values;
  /// valid_length x raw channels; 1 where the raw value was observed (not imputed).
  MaskMatrix observed;
  /// Ordered like the owning split's task_names.
  std::vector<int> labels;

  int valid_length() const noexcept { return static_cast<int>(values.rows()); }
  int width() const noexcept { return static_cast<int>(values.cols()); }

  bool operator==(const EncodedInstance& other) const;
};

struct DatasetSplit {
  std::vector<EncodedInstance> train;
  std::vector<EncodedInstance> validation;
  std::vector<EncodedInstance> test;
  std::vector<std::string> task_names;

  int num_tasks() const noexcept { return static_cast<int>(task_names.size()); }
  int task_index(const std::string& name) const;  // -1 when absent
  /// Throws ValidationError when episode ids repeat across lists or label widths disagree.
  void validate() const;

  bool operator==(const DatasetSplit& other) const = default;
};

/// Encodes one record: one-hot categoricals, forward-fill imputation then channel
/// default, rows beyond `horizon` dropped. Labels follow `task_names` order.
EncodedInstance encode_record(const EpisodeRecord& record, const ChannelSchema& schema, int horizon,
                              const std::vector<std::string>& task_names);

/// Inverse of encode_record for the retained rows; imputed entries become missing.
EpisodeRecord decode_instance(const EncodedInstance& instance, const ChannelSchema& schema,
                              const std::vector<std::string>& task_names);

/// Drops train/validation instances positive for any held-out task and re-indexes
/// every label vector to the remaining (source) tasks. Test membership is unchanged.
DatasetSplit filter_source_split(const DatasetSplit& split, const std::set<std::string>& held_out_tasks);

/// Keeps only the listed tasks, in the given order, without removing any instance.
DatasetSplit select_tasks(const DatasetSplit& split, const std::vector<std::string>& tasks);

/// Stratified subsample on the first label: each non-empty class keeps
/// max(1, round(fraction * size)) members. Output preserves input order.
std::vector<EncodedInstance> subsample_labeled(const std::vector<EncodedInstance>& instances,
                                               double fraction, std::uint64_t seed);

/// Split directory layout: schema.json, tasks.json, train.jsonl, val.jsonl, test.jsonl.
struct Dataset {
  DatasetSplit split;
  ChannelSchema schema;
};

Dataset load_dataset(const std::filesystem::path& dir, int horizon = kDefaultHorizon);
void save_dataset(const DatasetSplit& split, const ChannelSchema& schema, const std::filesystem::path& dir);

/// One JSONL line per record.
std::vector<EpisodeRecord> parse_records(const std::string& text, const std::string& source_name);
std::string format_record(const EpisodeRecord& record);

}  // namespace seqtl
