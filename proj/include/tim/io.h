#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "tim/metrics.h"
#include "tim/model.h"
#include "tim/simulator.h"
#include "tim/train.h"

namespace tim {

using json = nlohmann::json;

inline constexpr const char* kDatasetSchema = "tim.dataset/1";
inline constexpr const char* kCheckpointSchema = "tim.checkpoint/1";
inline constexpr const char* kRunConfigSchema = "tim.run/1";
inline constexpr const char* kAllocationSchema = "tim.allocation/1";
inline constexpr const char* kScheduleSchema = "tim.schedules/1";

// Structured-text conversions. The *_from_json readers reject unknown keys
// with ConfigError.
json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const json& j);
json to_json(const TrainHyper& hyper);
TrainHyper train_hyper_from_json(const json& j);
json to_json(const Archetype& archetype);
Archetype archetype_from_json(const json& j);
json to_json(const UserProfile& user);

// ---- datasets: one header line, then one example per line ----

struct DatasetHeader {
  std::size_t slots = 0;
  std::size_t history_days = 0;
  std::size_t feature_dim = 0;
  std::size_t context_dim = 0;
};

struct Dataset {
  DatasetHeader header;
  std::vector<UserDayExample> examples;
};

void write_dataset(std::ostream& out, const Dataset& dataset);
// Throws DatasetError carrying the 1-based line number of the first bad line.
Dataset read_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

// Throws CheckpointError(kDimensionMismatch) naming the first field where
// the model and the dataset disagree.
void check_compatible(const ModelConfig& config, const DatasetHeader& header);

// ---- checkpoints ----

struct Checkpoint {
  ModelConfig config;
  TrainHyper hyper;
  ModelParams params;
  TrainingLog log;
};

std::string checkpoint_to_string(const Checkpoint& checkpoint);
// Throws CheckpointError: kVersionMismatch for a foreign schema tag,
// kCorrupt for unparsable or incomplete documents, kDimensionMismatch when
// tensors disagree with the stored config.
Checkpoint checkpoint_from_string(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---- run configuration ----

struct AbConfig {
  std::size_t users = 2000;
  std::int64_t first_day = 28;
  std::size_t days = 5;
  double slot_seconds = 0.0;  // 0 means 86400 / K
  std::size_t bootstrap = 1000;
  std::vector<ArmSpec> arms{{"uniform", Strategy::kUniform, {}},
                            {"global_ctr", Strategy::kGlobalCtr, {}},
                            {"tim", Strategy::kTim, {}}};
};

struct RunConfig {
  std::uint64_t seed = 42;
  ModelConfig model;
  TrainHyper train;
  PopulationConfig population;  // size = number of training users
  std::size_t test_users = 500;
  HistoryConfig history;
  std::vector<std::int64_t> train_days{14, 15, 16, 17, 18, 19, 20};
  std::vector<std::int64_t> test_days{22, 26};
  AbConfig ab;

  double slot_seconds() const;
};

RunConfig run_config_from_json(const json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// ---- prediction files: user_id,day,K scores,K labels per line ----

struct PredictionRow {
  std::uint64_t user_id = 0;
  std::int64_t day = 0;
  EvalRecord record;
};

void write_predictions(std::ostream& out, const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> read_predictions(std::istream& in);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace tim
