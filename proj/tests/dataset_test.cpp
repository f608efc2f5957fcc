// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "seqtl/dataset.hpp"
#include "seqtl/error.hpp"
#include "seqtl/hash.hpp"

using namespace seqtl;
namespace fs = std::filesystem;

namespace {

ChannelSchema small_schema() {
  return ChannelSchema({{"hr", ChannelKind::Real, {}},
                        {"gcs", ChannelKind::Categorical, {"a", "b", "c", "d", "e"}},
                        {"temp", ChannelKind::Real, {}}});
}

EpisodeRecord record(const std::string& id, int hours, std::map<std::string, int> labels) {
  EpisodeRecord r;
  r.episode_id = id;
  for (int t = 0; t < hours; ++t) r.hours.push_back({double(t), std::string("b"), double(-t)});
  r.labels = std::move(labels);
  return r;
}

EncodedInstance labeled(const std::string& id, std::vector<int> labels) {
  EncodedInstance inst;
  inst.episode_id = id;
  inst.values = RowMatrix::Zero(1, 1);
  inst.observed = MaskMatrix::Ones(1, 1);
  inst.labels = std::move(labels);
  return inst;
}

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("seqtl_dataset_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(ChannelSchema, EncodedWidth) {
  EXPECT_EQ(small_schema().encoded_width(), 7);
  EXPECT_EQ(small_schema().offset(2), 6);
}

TEST(ChannelSchema, BenchmarkShapeGives76) {
  std::vector<Channel> ch;
  for (int i = 0; i < 12; ++i) ch.push_back({"r" + std::to_string(i), ChannelKind::Real, {}});
  for (int size : {2, 8, 12, 13, 29}) {
    Channel c{"c" + std::to_string(size), ChannelKind::Categorical, {}};
    for (int k = 0; k < size; ++k) c.categories.push_back(std::to_string(k));
    ch.push_back(c);
  }
  EXPECT_EQ(ChannelSchema(ch).encoded_width(), 76);
}

TEST(ChannelSchema, RejectsDuplicates) {
  EXPECT_THROW(ChannelSchema({{"a", ChannelKind::Real, {}}, {"a", ChannelKind::Real, {}}}), ValidationError);
  EXPECT_THROW(ChannelSchema({{"c", ChannelKind::Categorical, {"x", "x"}}}), ValidationError);
  EXPECT_THROW(ChannelSchema({{"c", ChannelKind::Categorical, {}}}), ValidationError);
}

TEST(ChannelSchema, JsonRoundTrip) {
  const auto s = small_schema();
  EXPECT_EQ(ChannelSchema::from_json(s.to_json()), s);
  EXPECT_EQ(ChannelSchema::from_json(s.to_json()).hash(), s.hash());
}

TEST(EncodeRecord, RealValueAndOneHot) {
  EpisodeRecord r;
  r.episode_id = "e";
  r.hours = {{1.0, std::string("a"), 0.0}, {2.0, std::string("d"), 0.0}, {7.2, std::string("c"), 0.0}};
  r.labels = {{"t", 1}};
  const auto inst = encode_record(r, small_schema(), 48, {"t"});
  EXPECT_EQ(inst.valid_length(), 3);
  EXPECT_DOUBLE_EQ(inst.values(2, 0), 7.2);
  // category index 2 of five
  for (int k = 0; k < 5; ++k) EXPECT_EQ(inst.values(2, 1 + k), k == 2 ? 1.0 : 0.0);
  EXPECT_EQ(inst.labels, std::vector<int>{1});
}

TEST(EncodeRecord, ForwardFillThenDefault) {
  EpisodeRecord r;
  r.episode_id = "e";
  r.hours = {{std::monostate{}, std::monostate{}, 3.0},
             {5.0, std::string("e"), std::monostate{}},
             {std::monostate{}, std::monostate{}, std::monostate{}}};
  const auto inst = encode_record(r, small_schema(), 48, {});
  EXPECT_EQ(inst.values(0, 0), 0.0);  // default for real
  EXPECT_EQ(inst.values(0, 1), 1.0);  // first category
  EXPECT_EQ(inst.values(2, 0), 5.0);
  EXPECT_EQ(inst.values(2, 5), 1.0);
  EXPECT_EQ(inst.values(2, 6), 3.0);
  EXPECT_EQ(inst.observed(0, 0), 0);
  EXPECT_EQ(inst.observed(1, 0), 1);
  EXPECT_EQ(inst.observed(2, 2), 0);
}

TEST(EncodeRecord, OneHotBlocksAlwaysSumToOneAndFinite) {
  const auto s = small_schema();
  EpisodeRecord r;
  r.episode_id = "e";
  for (int t = 0; t < 30; ++t) {
    RawValue cat = t % 3 == 0 ? RawValue{} : RawValue{std::string(1, char('a' + t % 5))};
    r.hours.push_back({t % 2 ? RawValue{} : RawValue{double(t)}, cat, RawValue{0.5}});
  }
  const auto inst = encode_record(r, s, 48, {});
  for (int t = 0; t < inst.valid_length(); ++t) {
    EXPECT_EQ(inst.values.row(t).segment(1, 5).sum(), 1.0);
    EXPECT_TRUE(inst.values.row(t).allFinite());
  }
}

TEST(EncodeRecord, HorizonTruncates) {
  const auto inst = encode_record(record("e", 60, {}), small_schema(), 48, {});
  EXPECT_EQ(inst.valid_length(), 48);
}

TEST(EncodeRecord, Errors) {
  EXPECT_THROW(encode_record(record("e", 0, {}), small_schema(), 48, {}), EmptyEpisodeError);
  EpisodeRecord r;
  r.episode_id = "e";
  r.hours = {{1.0, std::string("zzz"), 0.0}};
  EXPECT_THROW(encode_record(r, small_schema(), 48, {}), SchemaMismatchError);
  r.hours = {{1.0, std::string("a")}};
  EXPECT_THROW(encode_record(r, small_schema(), 48, {}), ValidationError);
  r.hours = {{1.0, std::string("a"), 0.0}};
  EXPECT_THROW(encode_record(r, small_schema(), 48, {"missing_task"}), ValidationError);
}

TEST(DecodeInstance, RoundTripsObservedValues) {
  auto r = record("e", 4, {{"t", 0}});
  r.hours[1][0] = std::monostate{};
  const auto s = small_schema();
  const auto inst = encode_record(r, s, 48, {"t"});
  const auto back = decode_instance(inst, s, {"t"});
  EXPECT_EQ(back.hours, r.hours);
  EXPECT_EQ(back.labels, r.labels);
}

TEST(FilterSourceSplit, DropsLeakingInstancesAndReindexes) {
  DatasetSplit split;
  split.task_names = {"a", "b", "c"};
  split.train = {labeled("1", {1, 0, 0}), labeled("2", {0, 1, 0}), labeled("3", {1, 1, 1})};
  split.validation = {labeled("4", {0, 0, 1}), labeled("5", {1, 0, 0})};
  split.test = {labeled("6", {0, 1, 1})};
  const auto out = filter_source_split(split, {"b"});
  EXPECT_EQ(out.task_names, (std::vector<std::string>{"a", "c"}));
  ASSERT_EQ(out.train.size(), 1u);
  EXPECT_EQ(out.train[0].episode_id, "1");
  EXPECT_EQ(out.train[0].labels, (std::vector<int>{1, 0}));
  EXPECT_EQ(out.validation.size(), 2u);
  ASSERT_EQ(out.test.size(), 1u);  // test membership untouched
  EXPECT_EQ(out.test[0].episode_id, "6");
}

TEST(FilterSourceSplit, EmptyHoldOutIsIdentity) {
  DatasetSplit split;
  split.task_names = {"a", "b"};
  split.train = {labeled("1", {1, 0})};
  split.validation = {labeled("2", {0, 1})};
  EXPECT_EQ(filter_source_split(split, {}), split);
}

TEST(FilterSourceSplit, AllHeldOutIsAnError) {
  DatasetSplit split;
  split.task_names = {"a"};
  EXPECT_THROW(filter_source_split(split, {"a"}), NoSourceTasksError);
}

TEST(FilterSourceSplit, PropertyNoHeldOutPositivesRemain) {
  DatasetSplit split;
  split.task_names = {"a", "b", "c", "d"};
  for (int i = 0; i < 64; ++i) {
    split.train.push_back(labeled("t" + std::to_string(i), {i & 1, (i >> 1) & 1, (i >> 2) & 1, (i >> 3) & 1}));
  }
  const auto out = filter_source_split(split, {"b", "d"});
  EXPECT_EQ(out.train.size(), 16u);
  for (const auto& inst : out.train) {
    const auto& orig = *std::find_if(split.train.begin(), split.train.end(),
                                     [&](const auto& x) { return x.episode_id == inst.episode_id; });
    EXPECT_EQ(orig.labels[1], 0);
    EXPECT_EQ(orig.labels[3], 0);
    EXPECT_EQ(inst.labels, (std::vector<int>{orig.labels[0], orig.labels[2]}));
  }
}

TEST(SubsampleLabeled, StratifiedCounts) {
  std::vector<EncodedInstance> v;
  for (int i = 0; i < 100; ++i) v.push_back(labeled(std::to_string(i), {i < 20 ? 1 : 0}));
  const auto s = subsample_labeled(v, 0.1, 3);
  EXPECT_EQ(s.size(), 10u);
  EXPECT_EQ(std::count_if(s.begin(), s.end(), [](const auto& x) { return x.labels[0] == 1; }), 2);
}

TEST(SubsampleLabeled, MinimumOnePerClassAndDeterministic) {
  std::vector<EncodedInstance> v;
  for (int i = 0; i < 50; ++i) v.push_back(labeled(std::to_string(i), {i < 3 ? 1 : 0}));
  const auto a = subsample_labeled(v, 0.01, 9);
  EXPECT_EQ(a.size(), 2u);
  EXPECT_EQ(a, subsample_labeled(v, 0.01, 9));
  EXPECT_EQ(subsample_labeled(v, 1.0, 4), v);
}

TEST(SubsampleLabeled, RejectsBadFraction) {
  std::vector<EncodedInstance> v{labeled("a", {1})};
  EXPECT_THROW(subsample_labeled(v, 0.0, 1), ArgumentError);
  EXPECT_THROW(subsample_labeled(v, 1.5, 1), ArgumentError);
}

TEST(DatasetIo, SaveLoadRoundTrip) {
  const auto s = small_schema();
  DatasetSplit split;
  split.task_names = {"t", "u"};
  split.train = {encode_record(record("a", 5, {{"t", 1}, {"u", 0}}), s, 48, split.task_names)};
  split.validation = {encode_record(record("b", 3, {{"t", 0}, {"u", 1}}), s, 48, split.task_names)};
  const auto dir = temp_dir("roundtrip");
  save_dataset(split, s, dir);
  const auto back = load_dataset(dir);
  EXPECT_EQ(back.schema, s);
  EXPECT_EQ(back.split, split);
  EXPECT_TRUE(back.split.test.empty());
}

TEST(DatasetIo, WrongFieldNameReportsLine) {
  const auto s = small_schema();
  DatasetSplit split;
  split.task_names = {"t"};
  split.train = {encode_record(record("a", 2, {{"t", 1}}), s, 48, {"t"}),
                 encode_record(record("b", 2, {{"t", 0}}), s, 48, {"t"})};
  const auto dir = temp_dir("badfield");
  save_dataset(split, s, dir);
  auto text = read_file(dir / "train.jsonl");
  const auto second = text.find("\n") + 1;
  text.replace(text.find("\"hours\"", second), 7, "\"hourz\"");
  write_file_atomic(dir / "train.jsonl", text);
  try {
    load_dataset(dir);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(DatasetIo, MissingDirectoryIsFilesystemError) {
  EXPECT_THROW(save_dataset(DatasetSplit{}, small_schema(), "/nonexistent/dir/x"), FilesystemError);
}

TEST(DatasetSplit, ValidateRejectsSharedIds) {
  DatasetSplit split;
  split.task_names = {"t"};
  split.train = {labeled("x", {1})};
  split.test = {labeled("x", {0})};
  EXPECT_THROW(split.validate(), ValidationError);
}
