#include "tim/io.h"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "tim/errors.h"

namespace tim {

namespace {

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  require_object(j, where);
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!keys.count(it.key())) {
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

const char* date_type_name(DateType t) {
  return t == DateType::kWork ? "work" : "rest";
}

DateType parse_date_type(const std::string& s) {
  if (s == "work") return DateType::kWork;
  if (s == "rest") return DateType::kRest;
  throw InvalidInput("date type must be 'work' or 'rest', got '" + s + "'");
}

json curve_to_json(const CurveShape& c) {
  json peaks = json::array();
  for (const auto& p : c.peaks) {
    peaks.push_back({{"hour", p.hour}, {"width", p.width}, {"height", p.height}});
  }
  return {{"base", c.base}, {"peaks", peaks}};
}

CurveShape curve_from_json(const json& j, const std::string& where) {
  check_keys(j, {"base", "peaks"}, where);
  CurveShape c;
  c.peaks.clear();
  read_field(j, "base", c.base, where);
  if (j.contains("peaks")) {
    if (!j.at("peaks").is_array()) throw ConfigError(where + ".peaks must be a list");
    for (const auto& p : j.at("peaks")) {
      const std::string pw = where + ".peaks[]";
      check_keys(p, {"hour", "width", "height"}, pw);
      CurvePeak peak;
      read_field(p, "hour", peak.hour, pw);
      read_field(p, "width", peak.width, pw);
      read_field(p, "height", peak.height, pw);
      c.peaks.push_back(peak);
    }
  }
  return c;
}

json tensor_to_json(const Tensor& t) {
  return {{"shape", t.shape().to_vector()},
          {"data", std::vector<double>(t.data().begin(), t.data().end())}};
}

}  // namespace

json to_json(const ModelConfig& c) {
  return {{"kind", model_kind_name(c.kind)},
          {"slots", c.slots},
          {"history_days", c.history_days},
          {"feature_dim", c.feature_dim},
          {"attention_dim", c.attention_dim},
          {"context_dim", c.context_dim},
          {"mlp_hidden", c.mlp_hidden},
          {"use_rope", c.use_rope},
          {"use_dte", c.use_dte},
          {"rope_base", c.rope_base},
          {"scale_ones_by_slots", c.scale_ones_by_slots},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  const std::string where = "model";
  check_keys(j,
             {"kind", "slots", "history_days", "feature_dim", "attention_dim",
              "context_dim", "mlp_hidden", "use_rope", "use_dte", "rope_base",
              "scale_ones_by_slots", "seed"},
             where);
  ModelConfig c;
  std::string kind = model_kind_name(c.kind);
  read_field(j, "kind", kind, where);
  c.kind = parse_model_kind(kind);
  read_field(j, "slots", c.slots, where);
  read_field(j, "history_days", c.history_days, where);
  read_field(j, "feature_dim", c.feature_dim, where);
  read_field(j, "attention_dim", c.attention_dim, where);
  read_field(j, "context_dim", c.context_dim, where);
  read_field(j, "mlp_hidden", c.mlp_hidden, where);
  read_field(j, "use_rope", c.use_rope, where);
  read_field(j, "use_dte", c.use_dte, where);
  read_field(j, "rope_base", c.rope_base, where);
  read_field(j, "scale_ones_by_slots", c.scale_ones_by_slots, where);
  read_field(j, "seed", c.seed, where);
  c.validate();
  return c;
}

json to_json(const TrainHyper& h) {
  return {{"lr", h.lr},
          {"epochs", h.epochs},
          {"batch_size", h.batch_size},
          {"seed", h.seed}};
}

TrainHyper train_hyper_from_json(const json& j) {
  const std::string where = "train";
  check_keys(j, {"lr", "epochs", "batch_size", "seed"}, where);
  TrainHyper h;
  read_field(j, "lr", h.lr, where);
  read_field(j, "epochs", h.epochs, where);
  read_field(j, "batch_size", h.batch_size, where);
  read_field(j, "seed", h.seed, where);
  if (h.batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (!(h.lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
  return h;
}

json to_json(const Archetype& a) {
  return {{"name", a.name},
          {"weight", a.weight},
          {"work", curve_to_json(a.work)},
          {"rest", curve_to_json(a.rest)}};
}

Archetype archetype_from_json(const json& j) {
  const std::string where = "population.archetypes[]";
  check_keys(j, {"name", "weight", "work", "rest"}, where);
  Archetype a;
  read_field(j, "name", a.name, where);
  read_field(j, "weight", a.weight, where);
  if (!j.contains("work") || !j.contains("rest")) {
    throw ConfigError(where + " needs both 'work' and 'rest' curves");
  }
  a.work = curve_from_json(j.at("work"), where + ".work");
  a.rest = curve_from_json(j.at("rest"), where + ".rest");
  return a;
}

json to_json(const UserProfile& u) {
  return {{"id", u.id},
          {"archetype", u.archetype},
          {"ctr_work", u.ctr_work},
          {"ctr_rest", u.ctr_rest},
          {"trigger_rate", u.trigger_rate},
          {"quota", u.quota},
          {"noise_sigma", u.noise_sigma},
          {"attributes", u.attributes}};
}

// ---- datasets ----

void write_dataset(std::ostream& out, const Dataset& dataset) {
  const auto& h = dataset.header;
  out << json{{"schema", kDatasetSchema},
              {"slots", h.slots},
              {"history_days", h.history_days},
              {"feature_dim", h.feature_dim},
              {"context_dim", h.context_dim}}
             .dump()
      << '\n';
  for (const auto& ex : dataset.examples) {
    std::vector<int> hist;
    for (DateType t : ex.hist_date_types) hist.push_back(static_cast<int>(t));
    out << json{{"user_id", ex.user_id},
                {"day", ex.day},
                {"target_date_type", date_type_name(ex.target_date_type)},
                {"hist_date_types", hist},
                {"x", std::vector<double>(ex.x.data().begin(), ex.x.data().end())},
                {"context", ex.context},
                {"labels", ex.labels}}
               .dump()
        << '\n';
  }
}

Dataset read_dataset(std::istream& in) {
  Dataset dataset;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DatasetError(line_no, std::string("malformed record: ") + e.what());
    }
    try {
      if (!have_header) {
        if (!j.is_object() || j.value("schema", "") != kDatasetSchema) {
          throw DatasetError(line_no, std::string("expected header with schema ") +
                                          kDatasetSchema);
        }
        auto& h = dataset.header;
        h.slots = j.at("slots").get<std::size_t>();
        h.history_days = j.at("history_days").get<std::size_t>();
        h.feature_dim = j.at("feature_dim").get<std::size_t>();
        h.context_dim = j.at("context_dim").get<std::size_t>();
        if (!h.slots || !h.history_days || !h.feature_dim || !h.context_dim) {
          throw DatasetError(line_no, "header dimensions must be positive");
        }
        have_header = true;
        continue;
      }
      const auto& h = dataset.header;
      UserDayExample ex;
      ex.user_id = j.at("user_id").get<std::uint64_t>();
      ex.day = j.at("day").get<std::int64_t>();
      ex.target_date_type = parse_date_type(j.at("target_date_type").get<std::string>());
      for (int t : j.at("hist_date_types").get<std::vector<int>>()) {
        if (t != 0 && t != 1) throw InvalidInput("hist_date_types entries must be 0 or 1");
        ex.hist_date_types.push_back(static_cast<DateType>(t));
      }
      ex.x = Tensor::FromExternal(Shape{h.slots, h.history_days, h.feature_dim},
                                  j.at("x").get<std::vector<double>>());
      ex.context = j.at("context").get<std::vector<double>>();
      ex.labels = j.at("labels").get<std::vector<int>>();
      ModelConfig dims;
      dims.slots = h.slots;
      dims.history_days = h.history_days;
      dims.feature_dim = h.feature_dim;
      dims.context_dim = h.context_dim;
      ex.validate(dims);
      dataset.examples.push_back(std::move(ex));
    } catch (const DatasetError&) {
      throw;
    } catch (const json::exception& e) {
      throw DatasetError(line_no, e.what());
    } catch (const Error& e) {
      throw DatasetError(line_no, e.what());
    }
  }
  if (!have_header) throw DatasetError(line_no, "missing dataset header");
  return dataset;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_dataset(out, dataset);
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_dataset(in);
}

void check_compatible(const ModelConfig& config, const DatasetHeader& header) {
  auto check = [](const char* field, std::size_t model, std::size_t data) {
    if (model != data) {
      throw CheckpointError(CheckpointError::Kind::kDimensionMismatch,
                            std::string(field) + " is " + std::to_string(model) +
                                " in the model but " + std::to_string(data) +
                                " in the dataset");
    }
  };
  check("slots", config.slots, header.slots);
  check("history_days", config.history_days, header.history_days);
  check("feature_dim", config.feature_dim, header.feature_dim);
  check("context_dim", config.context_dim, header.context_dim);
}

// ---- checkpoints ----

std::string checkpoint_to_string(const Checkpoint& c) {
  json params = json::object();
  for (const auto& [name, t] : c.params.tensors) params[name] = tensor_to_json(t);
  json doc = {{"schema", kCheckpointSchema},
              {"config", to_json(c.config)},
              {"train", to_json(c.hyper)},
              {"params", params},
              {"log", {{"epoch_loss", c.log.epoch_loss}}}};
  return doc.dump(1) + "\n";
}

Checkpoint checkpoint_from_string(const std::string& text) {
  using Kind = CheckpointError::Kind;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::kCorrupt, e.what());
  }
  if (!doc.is_object() || !doc.contains("schema") || !doc.at("schema").is_string()) {
    throw CheckpointError(Kind::kCorrupt, "missing schema tag");
  }
  const std::string schema = doc.at("schema").get<std::string>();
  if (schema != kCheckpointSchema) {
    throw CheckpointError(Kind::kVersionMismatch, "found '" + schema +
                                                      "', expected '" +
                                                      kCheckpointSchema + "'");
  }
  Checkpoint c;
  try {
    c.config = model_config_from_json(doc.at("config"));
    c.hyper = train_hyper_from_json(doc.at("train"));
    for (const auto& [name, t] : doc.at("params").items()) {
      const auto shape = t.at("shape").get<std::vector<std::size_t>>();
      auto data = t.at("data").get<std::vector<double>>();
      c.params.tensors.emplace(
          name, Tensor::FromExternal(Shape::FromVector(shape), std::move(data)));
    }
    c.log.epoch_loss = doc.at("log").at("epoch_loss").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::kCorrupt, e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(Kind::kCorrupt, e.what());
  } catch (const InvalidInput& e) {
    throw CheckpointError(Kind::kCorrupt, e.what());
  }
  try {
    check_param_shapes(c.params, c.config);
  } catch (const InvalidInput& e) {
    throw CheckpointError(Kind::kDimensionMismatch, e.what());
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file(path, checkpoint_to_string(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_string(read_file(path));
}

// ---- run configuration ----

double RunConfig::slot_seconds() const {
  if (ab.slot_seconds > 0.0) return ab.slot_seconds;
  return 86400.0 / static_cast<double>(model.slots);
}

RunConfig run_config_from_json(const json& j) {
  check_keys(j, {"schema", "seed", "model", "train", "population", "history", "ab"},
             "run config");
  if (j.contains("schema") && j.at("schema") != kRunConfigSchema) {
    throw ConfigError(std::string("run config schema must be ") + kRunConfigSchema);
  }
  RunConfig rc;
  read_field(j, "seed", rc.seed, "run config");
  if (j.contains("model")) rc.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) rc.train = train_hyper_from_json(j.at("train"));

  if (j.contains("population")) {
    const json& p = j.at("population");
    const std::string where = "population";
    check_keys(p,
               {"train_users", "test_users", "archetypes", "trigger_rate_min",
                "trigger_rate_max", "quota", "noise_sigma", "peak_shift_hours",
                "amplitude_jitter"},
               where);
    read_field(p, "train_users", rc.population.size, where);
    read_field(p, "test_users", rc.test_users, where);
    read_field(p, "trigger_rate_min", rc.population.trigger_rate_min, where);
    read_field(p, "trigger_rate_max", rc.population.trigger_rate_max, where);
    read_field(p, "quota", rc.population.quota, where);
    read_field(p, "noise_sigma", rc.population.noise_sigma, where);
    read_field(p, "peak_shift_hours", rc.population.peak_shift_hours, where);
    read_field(p, "amplitude_jitter", rc.population.amplitude_jitter, where);
    if (p.contains("archetypes")) {
      if (!p.at("archetypes").is_array()) {
        throw ConfigError("population.archetypes must be a list");
      }
      rc.population.archetypes.clear();
      for (const auto& a : p.at("archetypes")) {
        rc.population.archetypes.push_back(archetype_from_json(a));
      }
    }
  }
  if (j.contains("history")) {
    const json& h = j.at("history");
    check_keys(h, {"sends_per_slot", "train_days", "test_days"}, "history");
    read_field(h, "sends_per_slot", rc.history.sends_per_slot, "history");
    read_field(h, "train_days", rc.train_days, "history");
    read_field(h, "test_days", rc.test_days, "history");
  }
  if (j.contains("ab")) {
    const json& a = j.at("ab");
    check_keys(a, {"users", "first_day", "days", "slot_seconds", "bootstrap", "arms"},
               "ab");
    read_field(a, "users", rc.ab.users, "ab");
    read_field(a, "first_day", rc.ab.first_day, "ab");
    read_field(a, "days", rc.ab.days, "ab");
    read_field(a, "slot_seconds", rc.ab.slot_seconds, "ab");
    read_field(a, "bootstrap", rc.ab.bootstrap, "ab");
    if (a.contains("arms")) {
      if (!a.at("arms").is_array()) throw ConfigError("ab.arms must be a list");
      rc.ab.arms.clear();
      for (const auto& arm : a.at("arms")) {
        check_keys(arm, {"label", "strategy", "quota"}, "ab.arms[]");
        ArmSpec arm_spec;
        std::string strategy = "uniform";
        read_field(arm, "strategy", strategy, "ab.arms[]");
        arm_spec.strategy = parse_strategy(strategy);
        arm_spec.label = strategy;
        read_field(arm, "label", arm_spec.label, "ab.arms[]");
        if (arm.contains("quota")) {
          double q = 0.0;
          read_field(arm, "quota", q, "ab.arms[]");
          if (q < 0.0) throw ConfigError("ab.arms[].quota must be >= 0");
          arm_spec.quota = q;
        }
        rc.ab.arms.push_back(arm_spec);
      }
    }
  }
  rc.population.slots = rc.model.slots;
  rc.history.slots = rc.model.slots;
  rc.history.history_days = rc.model.history_days;
  if (rc.model.feature_dim != kFeatureCount) {
    throw ConfigError("model.feature_dim must be " + std::to_string(kFeatureCount) +
                      " for simulated data");
  }
  if (rc.model.context_dim != kContextDim) {
    throw ConfigError("model.context_dim must be " + std::to_string(kContextDim) +
                      " for simulated data");
  }
  rc.population.validate();
  if (rc.test_users < 1) throw ConfigError("population.test_users must be >= 1");
  if (rc.train_days.empty() || rc.test_days.empty()) {
    throw ConfigError("history.train_days and history.test_days must be non-empty");
  }
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

// ---- predictions ----

void write_predictions(std::ostream& out, const std::vector<PredictionRow>& rows) {
  const std::size_t k = rows.empty() ? 0 : rows.front().record.scores.size();
  out << "user_id,day";
  for (std::size_t s = 0; s < k; ++s) out << ",score_" << s;
  for (std::size_t s = 0; s < k; ++s) out << ",label_" << s;
  out << '\n';
  std::ostringstream os;
  os << std::setprecision(17);
  for (const auto& r : rows) {
    os.str("");
    os << r.user_id << ',' << r.day;
    for (double v : r.record.scores) os << ',' << v;
    for (int l : r.record.labels) os << ',' << l;
    out << os.str() << '\n';
  }
}

std::vector<PredictionRow> read_predictions(std::istream& in) {
  std::vector<PredictionRow> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.rfind("user_id", 0) == 0) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() < 4 || fields.size() % 2 != 0) {
      throw DatasetError(line_no, "expected user_id,day,K scores,K labels");
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width) throw DatasetError(line_no, "inconsistent slot count");
    const std::size_t k = (fields.size() - 2) / 2;
    PredictionRow row;
    try {
      row.user_id = std::stoull(fields[0]);
      row.day = std::stoll(fields[1]);
      for (std::size_t s = 0; s < k; ++s) row.record.scores.push_back(std::stod(fields[2 + s]));
      for (std::size_t s = 0; s < k; ++s) row.record.labels.push_back(std::stoi(fields[2 + k + s]));
      row.record.validate();
    } catch (const std::logic_error& e) {
      throw DatasetError(line_no, std::string("unparsable field: ") + e.what());
    } catch (const Error& e) {
      throw DatasetError(line_no, e.what());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace tim
