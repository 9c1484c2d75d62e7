#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "tim/errors.h"
#include "tim/io.h"

namespace tim {
namespace {

Dataset small_dataset() {
  PopulationConfig pc;
  pc.size = 3;
  const auto users = generate_population(pc, 1);
  HistoryConfig hc;
  const std::vector<std::int64_t> days{14, 19};
  return {{12, 14, 5, 4}, make_dataset(users, hc, days, 1)};
}

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "tim_io_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

TEST(DatasetIoTest, RoundTripIsExact) {
  const Dataset d = small_dataset();
  std::stringstream ss;
  write_dataset(ss, d);
  const Dataset back = read_dataset(ss);
  ASSERT_EQ(back.examples.size(), d.examples.size());
  for (std::size_t i = 0; i < d.examples.size(); ++i) {
    const auto& a = d.examples[i];
    const auto& b = back.examples[i];
    EXPECT_EQ(a.user_id, b.user_id);
    EXPECT_EQ(a.day, b.day);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.context, b.context);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.hist_date_types, b.hist_date_types);
    EXPECT_EQ(a.target_date_type, b.target_date_type);
  }
}

TEST(DatasetIoTest, ExtremeMagnitudesSurvive) {
  Dataset d = small_dataset();
  d.examples.resize(1);
  d.examples[0].context = {1e-300, -1.2345678901234567e300, 0.1, 5e-324};
  std::stringstream ss;
  write_dataset(ss, d);
  EXPECT_EQ(read_dataset(ss).examples[0].context, d.examples[0].context);
}

TEST(DatasetIoTest, ReportsLineOfFirstBadRecord) {
  const Dataset d = small_dataset();
  std::stringstream ss;
  write_dataset(ss, d);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(ss, line)) lines.push_back(line);
  // Corrupt the third line (second example): drop one label.
  json j = json::parse(lines[2]);
  j["labels"].erase(0);
  lines[2] = j.dump();
  lines[3] = "{not json";
  std::stringstream bad;
  for (const auto& l : lines) bad << l << '\n';
  try {
    read_dataset(bad);
    FAIL() << "expected DatasetError";
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(DatasetIoTest, RejectsMissingHeaderAndWrongX) {
  std::stringstream empty;
  EXPECT_THROW(read_dataset(empty), DatasetError);
  const Dataset d = small_dataset();
  std::stringstream ss;
  write_dataset(ss, d);
  std::string header, first;
  std::getline(ss, header);
  std::getline(ss, first);
  json j = json::parse(first);
  j["x"].erase(0);
  std::stringstream bad(header + "\n" + j.dump() + "\n");
  EXPECT_THROW(read_dataset(bad), DatasetError);
  std::stringstream no_header(first + "\n");
  EXPECT_THROW(read_dataset(no_header), DatasetError);
}

Checkpoint make_checkpoint() {
  ModelConfig c;
  c.attention_dim = 8;
  c.mlp_hidden = {6};
  c.seed = 5;
  return {c, TrainHyper{}, init_params(c), TrainingLog{{0.5, 0.25}}};
}

TEST(CheckpointTest, RoundTripGivesIdenticalPredictions) {
  const Checkpoint ck = make_checkpoint();
  const auto path = temp_path("ck.json");
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.params.tensors, ck.params.tensors);
  EXPECT_EQ(back.log.epoch_loss, ck.log.epoch_loss);
  EXPECT_EQ(to_json(back.config), to_json(ck.config));
  for (const auto& ex : small_dataset().examples) {
    EXPECT_EQ(predict_slot_ctr(ex, back.params, back.config),
              predict_slot_ctr(ex, ck.params, ck.config));
  }
}

TEST(CheckpointTest, TruncatedFileIsCorrupt) {
  const std::string text = checkpoint_to_string(make_checkpoint());
  try {
    checkpoint_from_string(text.substr(0, text.size() / 2));
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::kCorrupt);
  }
  json j = json::parse(text);
  j.erase("params");
  try {
    checkpoint_from_string(j.dump());
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::kCorrupt);
  }
}

TEST(CheckpointTest, ForeignSchemaIsVersionMismatch) {
  json j = json::parse(checkpoint_to_string(make_checkpoint()));
  j["schema"] = "tim.checkpoint/2";
  try {
    checkpoint_from_string(j.dump());
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::kVersionMismatch);
    EXPECT_NE(std::string(e.what()).find("version mismatch"), std::string::npos);
  }
}

TEST(CheckpointTest, TensorShapeDisagreeingWithConfigIsDimensionMismatch) {
  json j = json::parse(checkpoint_to_string(make_checkpoint()));
  j["config"]["attention_dim"] = 10;
  try {
    checkpoint_from_string(j.dump());
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::kDimensionMismatch);
  }
}

TEST(CheckpointTest, DatasetMismatchNamesTheField) {
  const Checkpoint ck = make_checkpoint();
  DatasetHeader h{12, 7, 5, 4};
  try {
    check_compatible(ck.config, h);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::kDimensionMismatch);
    EXPECT_NE(std::string(e.what()).find("history_days"), std::string::npos);
  }
  EXPECT_NO_THROW(check_compatible(ck.config, DatasetHeader{12, 14, 5, 4}));
}

TEST(CheckpointTest, MissingFileIsIoError) {
  EXPECT_THROW(load_checkpoint(temp_path("does_not_exist.json")), IoError);
}

TEST(RunConfigTest, DefaultsAndOverrides) {
  const RunConfig d = run_config_from_json(json::object());
  EXPECT_EQ(d.model.slots, 12u);
  EXPECT_DOUBLE_EQ(d.slot_seconds(), 7200.0);
  EXPECT_EQ(d.ab.arms.size(), 3u);
  const RunConfig rc = run_config_from_json(json::parse(R"({
    "schema": "tim.run/1", "seed": 9,
    "model": {"kind": "mlp_int", "mlp_hidden": [8]},
    "train": {"epochs": 2, "lr": 0.01},
    "population": {"train_users": 10, "test_users": 4, "quota": 3},
    "history": {"train_days": [15], "test_days": [16]},
    "ab": {"users": 5, "arms": [{"strategy": "oracle"}, {"label": "u", "strategy": "uniform", "quota": 2}]}
  })"));
  EXPECT_EQ(rc.seed, 9u);
  EXPECT_EQ(rc.model.kind, ModelKind::kMlpInteraction);
  EXPECT_EQ(rc.train.epochs, 2u);
  EXPECT_EQ(rc.population.size, 10u);
  EXPECT_EQ(rc.test_users, 4u);
  EXPECT_DOUBLE_EQ(rc.population.quota, 3.0);
  ASSERT_EQ(rc.ab.arms.size(), 2u);
  EXPECT_EQ(rc.ab.arms[0].label, "oracle");
  EXPECT_EQ(rc.ab.arms[1].quota, 2.0);
}

TEST(RunConfigTest, UnknownKeysAreRejected) {
  EXPECT_THROW(run_config_from_json(json::parse(R"({"sed": 1})")), ConfigError);
  EXPECT_THROW(run_config_from_json(json::parse(R"({"model": {"slot": 3}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(json::parse(R"({"ab": {"arms": [{"strat": "tim"}]}})")),
               ConfigError);
  EXPECT_THROW(run_config_from_json(json::parse(R"({"model": {"slots": "twelve"}})")),
               ConfigError);
  EXPECT_THROW(run_config_from_json(json::parse(R"({"schema": "tim.run/0"})")), ConfigError);
}

TEST(RunConfigTest, CustomArchetypes) {
  const RunConfig rc = run_config_from_json(json::parse(R"({
    "population": {"archetypes": [
      {"name": "noon", "weight": 1,
       "work": {"base": 0.01, "peaks": [{"hour": 12, "width": 1, "height": 0.4}]},
       "rest": {"base": 0.05, "peaks": []}}]}
  })"));
  ASSERT_EQ(rc.population.archetypes.size(), 1u);
  EXPECT_EQ(rc.population.archetypes[0].name, "noon");
  EXPECT_EQ(to_json(rc.population.archetypes[0])["work"]["peaks"][0]["hour"], 12.0);
}

TEST(PredictionsIoTest, RoundTrip) {
  const std::vector<PredictionRow> rows{{7, 22, {{0.1, 0.30000000000000004}, {0, 1}}},
                                        {8, 26, {{1e-300, 0.5}, {1, 0}}}};
  std::stringstream ss;
  write_predictions(ss, rows);
  const auto back = read_predictions(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].record.scores, rows[0].record.scores);
  EXPECT_EQ(back[1].record.scores, rows[1].record.scores);
  EXPECT_EQ(back[1].record.labels, rows[1].record.labels);
  EXPECT_EQ(back[1].user_id, 8u);
  std::stringstream bad("user_id,day,score_0,label_0\n1,2,0.5,x\n");
  EXPECT_THROW(read_predictions(bad), DatasetError);
}

}  // namespace
}  // namespace tim
