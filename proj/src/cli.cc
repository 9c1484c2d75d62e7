#include "tim/cli.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "tim/allocator.h"
#include "tim/errors.h"
#include "tim/io.h"
#include "tim/metrics.h"
#include "tim/pacer.h"
#include "tim/simulator.h"
#include "tim/train.h"

namespace tim {

namespace {

constexpr const char* kPopulationSchema = "tim.population/1";
constexpr std::uint64_t kTestUserBase = 1'000'000;
constexpr std::uint64_t kAbUserBase = 2'000'000;
constexpr std::uint64_t kPaceStream = 5;

bool verbose() {
  const char* v = std::getenv("TIM_VERBOSE");
  return v != nullptr && *v != '\0' && std::string(v) != "0";
}

void log(std::ostream& err, const std::string& msg) {
  if (verbose()) err << "tim: " << msg << '\n';
}

std::string fmt(double v, const char* pattern = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw InvalidInput(std::string(what) + ": cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw InvalidInput(std::string(what) + " is empty");
  return out;
}

RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return run_config_from_json(json::object());
  return load_run_config(path);
}

PopulationConfig train_population(const RunConfig& rc) { return rc.population; }

PopulationConfig shifted_population(const RunConfig& rc, std::size_t size,
                                    std::uint64_t first_id) {
  PopulationConfig pc = rc.population;
  pc.size = size;
  pc.first_user_id = first_id;
  return pc;
}

// Writes to `path`, or to `out` when path is empty or "-".
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    write_file(path, text);
  }
}

// ---- gen ----

struct GenOptions {
  std::string config;
  std::string out_dir;
};

void run_gen(const GenOptions& o, std::ostream& out, std::ostream& err) {
  const RunConfig rc = load_config_or_default(o.config);
  const auto train_users = generate_population(train_population(rc), rc.seed);
  const auto test_users = generate_population(
      shifted_population(rc, rc.test_users, kTestUserBase), rc.seed);
  log(err, "generated " + std::to_string(train_users.size()) + " train and " +
               std::to_string(test_users.size()) + " test users");

  std::filesystem::create_directories(o.out_dir);
  const std::filesystem::path dir(o.out_dir);

  json pop = {{"schema", kPopulationSchema}, {"seed", rc.seed}};
  pop["train_users"] = json::array();
  pop["test_users"] = json::array();
  for (const auto& u : train_users) pop["train_users"].push_back(to_json(u));
  for (const auto& u : test_users) pop["test_users"].push_back(to_json(u));
  write_file(dir / "population.json", pop.dump(1) + "\n");

  const DatasetHeader header{rc.model.slots, rc.model.history_days,
                             rc.model.feature_dim, rc.model.context_dim};
  Dataset train_set{header, make_dataset(train_users, rc.history, rc.train_days, rc.seed)};
  Dataset test_set{header, make_dataset(test_users, rc.history, rc.test_days, rc.seed)};
  save_dataset(dir / "train.jsonl", train_set);
  save_dataset(dir / "test.jsonl", test_set);
  out << "wrote " << train_set.examples.size() << " train and "
      << test_set.examples.size() << " test examples to " << o.out_dir << '\n';
}

// ---- train ----

struct TrainOptions {
  std::string config;
  std::string data;
  std::string model = "tim";
  std::string out;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
};

void run_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  const RunConfig rc = load_config_or_default(o.config);
  ModelConfig config = apply_variant(rc.model, o.model);
  TrainHyper hyper = rc.train;
  if (o.epochs) hyper.epochs = *o.epochs;
  if (o.seed) {
    hyper.seed = *o.seed;
    config.seed = *o.seed;
  }
  const Dataset data = load_dataset(o.data);
  check_compatible(config, data.header);
  log(err, "training " + o.model + " on " + std::to_string(data.examples.size()) +
               " examples");
  TrainResult result = train(data.examples, config, hyper);
  save_checkpoint(o.out, Checkpoint{config, hyper, result.params, result.log});
  out << "model " << o.model << " epochs " << result.log.epoch_loss.size()
      << " final_loss "
      << (result.log.epoch_loss.empty() ? std::string("NA")
                                        : fmt(result.log.epoch_loss.back()))
      << '\n';
}

// ---- eval ----

struct EvalOptions {
  std::string checkpoint;
  std::string data;
  std::string predictions;
  std::string predictions_out;
  std::string out;
  std::string label = "model";
  std::string ks = "1,5,9";
  bool per_user = false;
};

std::string metrics_csv(const std::string& label, std::size_t n, const MetricsRow& row) {
  std::ostringstream os;
  os << "model,records,AUC";
  for (std::size_t k : row.ks) os << ",HR@" << k;
  for (std::size_t k : row.ks) os << ",A@" << k;
  os << '\n' << label << ',' << n << ',' << fmt(row.auc);
  for (double v : row.hit_ratio) os << ',' << fmt(v);
  for (double v : row.accuracy) os << ',' << fmt(v);
  os << '\n';
  return os.str();
}

void run_eval(const EvalOptions& o, std::ostream& out, std::ostream& err) {
  std::vector<PredictionRow> rows;
  if (!o.predictions.empty()) {
    if (!o.checkpoint.empty() || !o.data.empty()) {
      throw InvalidInput("use either --predictions or --checkpoint with --data");
    }
    std::ifstream in(o.predictions);
    if (!in) throw IoError("cannot open " + o.predictions);
    rows = read_predictions(in);
  } else {
    if (o.checkpoint.empty() || o.data.empty()) {
      throw InvalidInput("eval needs --predictions, or --checkpoint and --data");
    }
    const Checkpoint ckpt = load_checkpoint(o.checkpoint);
    const Dataset data = load_dataset(o.data);
    check_compatible(ckpt.config, data.header);
    log(err, "scoring " + std::to_string(data.examples.size()) + " examples");
    for (const auto& ex : data.examples) {
      rows.push_back({ex.user_id, ex.day,
                      EvalRecord{predict_slot_ctr(ex, ckpt.params, ckpt.config),
                                 ex.labels}});
    }
  }
  if (rows.empty()) throw InvalidInput("no records to evaluate");
  if (!o.predictions_out.empty()) {
    std::ostringstream os;
    write_predictions(os, rows);
    write_file(o.predictions_out, os.str());
  }
  std::vector<EvalRecord> records;
  for (auto& r : rows) records.push_back(r.record);
  std::vector<std::size_t> ks;
  for (double k : parse_list(o.ks, "--ks")) {
    if (!(k >= 1.0) || k != std::floor(k)) throw InvalidInput("--ks entries must be positive integers");
    ks.push_back(static_cast<std::size_t>(k));
  }
  const MetricsRow row = evaluate_metrics(records, ks, !o.per_user);
  emit(o.out, metrics_csv(o.label, records.size(), row), out);
}

// ---- allocate ----

struct AllocateOptions {
  std::string input;
  std::string p;
  std::optional<double> q;
  std::optional<double> lambda;
  std::string format = "text";
};

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += fmt(v[i], "%.10g");
  }
  return s;
}

void run_allocate(const AllocateOptions& o, std::ostream& out) {
  AllocationProblem problem;
  std::optional<double> lambda = o.lambda;
  if (!o.input.empty()) {
    if (!o.p.empty() || o.q) throw InvalidInput("use either --input or --p/--q");
    json j;
    try {
      j = json::parse(read_file(o.input));
    } catch (const json::exception& e) {
      throw ConfigError(o.input + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("allocation input must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() != "schema" && it.key() != "ctr" && it.key() != "quota" &&
          it.key() != "lambda") {
        throw ConfigError("unknown key '" + it.key() + "' in allocation input");
      }
    }
    if (j.contains("schema") && j.at("schema") != kAllocationSchema) {
      throw ConfigError(std::string("allocation schema must be ") + kAllocationSchema);
    }
    try {
      problem.ctr = j.at("ctr").get<std::vector<double>>();
      problem.quota = j.at("quota").get<double>();
      if (j.contains("lambda") && !lambda) lambda = j.at("lambda").get<double>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("allocation input: ") + e.what());
    }
  } else {
    if (o.p.empty() || !o.q) throw InvalidInput("allocate needs --input, or --p and --q");
    problem.ctr = parse_list(o.p, "--p");
    problem.quota = *o.q;
  }

  AllocationResult result;
  if (lambda) {
    problem.lambda = *lambda;
    result = solve_kkt(problem);
  } else {
    problem.lambda = 1.0;  // placeholder so validate() checks p and q
    problem.validate();
    result = allocate_proportional_or_uniform(problem.ctr, problem.quota);
  }

  if (o.format == "json") {
    json j = {{"schema", kAllocationSchema},
              {"sends", result.sends},
              {"phi", result.phi},
              {"mu", result.mu},
              {"lambda", result.lambda},
              {"kkt_residual", result.kkt_residual},
              {"uniform_fallback", result.uniform_fallback}};
    out << j.dump(1) << '\n';
  } else {
    out << "n=(" << join(result.sends) << ")\n";
    out << "phi=" << fmt(result.phi, "%.10g") << '\n';
    out << "mu=(" << join(result.mu) << ")\n";
    out << "lambda=" << fmt(result.lambda, "%.10g") << '\n';
    out << "kkt_residual=" << fmt(result.kkt_residual, "%.3g") << '\n';
    if (result.uniform_fallback) out << "uniform_fallback=true\n";
  }
}

// ---- pace-sim ----

struct PaceOptions {
  std::string schedules;
  std::string trace;
  std::string out;
};

struct UserSchedule {
  std::vector<double> ctr;
  double quota = 0.0;
};

void run_pace_sim(const PaceOptions& o, std::ostream& out, std::ostream& err) {
  json j;
  try {
    j = json::parse(read_file(o.schedules));
  } catch (const json::exception& e) {
    throw ConfigError(o.schedules + ": " + e.what());
  }
  if (!j.is_object() || j.value("schema", "") != kScheduleSchema) {
    throw ConfigError(std::string("schedule file needs schema ") + kScheduleSchema);
  }
  double slot_seconds = 0.0;
  std::uint64_t seed = 0;
  std::map<std::uint64_t, UserSchedule> users;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() != "schema" && it.key() != "slot_seconds" && it.key() != "seed" &&
          it.key() != "users") {
        throw ConfigError("unknown key '" + it.key() + "' in schedule file");
      }
    }
    slot_seconds = j.at("slot_seconds").get<double>();
    seed = j.value("seed", std::uint64_t{0});
    for (const auto& u : j.at("users")) {
      for (auto it = u.begin(); it != u.end(); ++it) {
        if (it.key() != "user_id" && it.key() != "ctr" && it.key() != "quota") {
          throw ConfigError("unknown key '" + it.key() + "' in schedule users[]");
        }
      }
      const auto id = u.at("user_id").get<std::uint64_t>();
      if (users.count(id)) throw ConfigError("duplicate user_id " + std::to_string(id));
      users[id] = {u.at("ctr").get<std::vector<double>>(), u.at("quota").get<double>()};
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("schedule file: ") + e.what());
  }
  if (!(slot_seconds > 0.0)) throw ConfigError("slot_seconds must be positive");

  std::ifstream trace(o.trace);
  if (!trace) throw IoError("cannot open " + o.trace);

  std::map<std::pair<std::uint64_t, std::int64_t>, std::pair<PacerSchedule, PacerState>>
      live;
  std::ostringstream os;
  os << "user_id,day,t,slot,expected,sent_before,probability,decision\n";
  std::string line;
  std::size_t line_no = 0, decisions = 0;
  while (std::getline(trace, line)) {
    ++line_no;
    if (line.empty() || line.rfind("user_id", 0) == 0) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DatasetError(line_no, "expected user_id,timestamp");
    std::uint64_t id = 0;
    double ts = 0.0;
    try {
      id = std::stoull(line.substr(0, comma));
      ts = std::stod(line.substr(comma + 1));
    } catch (const std::logic_error&) {
      throw DatasetError(line_no, "unparsable trigger");
    }
    if (!std::isfinite(ts) || ts < 0.0) throw DatasetError(line_no, "timestamp must be >= 0");
    const auto found = users.find(id);
    if (found == users.end()) {
      throw DatasetError(line_no, "no schedule for user " + std::to_string(id));
    }
    const double day_seconds = slot_seconds * static_cast<double>(found->second.ctr.size());
    const auto day = static_cast<std::int64_t>(std::floor(ts / day_seconds));
    const double t = ts - static_cast<double>(day) * day_seconds;
    auto key = std::make_pair(id, day);
    auto slot = live.find(key);
    if (slot == live.end()) {
      slot = live.emplace(key, new_day(found->second.ctr, found->second.quota,
                                       slot_seconds,
                                       derive_seed(seed, id, day, kPaceStream)))
                 .first;
    }
    auto& [schedule, state] = slot->second;
    DecisionDetail d;
    try {
      d = decide(schedule, state, t);
    } catch (const MonotonicityError& e) {
      throw DatasetError(line_no, e.what());
    }
    ++decisions;
    os << id << ',' << day << ',' << fmt(t, "%.3f") << ',' << schedule.slot_at(t) << ','
       << fmt(d.expected) << ',' << d.sent_before << ',' << fmt(d.probability) << ','
       << (d.decision == Decision::kSend ? "send" : "hold") << '\n';
  }
  log(err, "replayed " + std::to_string(decisions) + " triggers");
  emit(o.out, os.str(), out);
}

// ---- ab ----

struct AbOptions {
  std::string config;
  std::string checkpoint;
  std::string out;
  std::string summary;
};

void run_ab(const AbOptions& o, std::ostream& out, std::ostream& err) {
  const RunConfig rc = load_config_or_default(o.config);
  std::optional<Checkpoint> ckpt;
  bool needs_model = false;
  for (const auto& arm : rc.ab.arms) needs_model |= arm.strategy == Strategy::kTim;
  if (!o.checkpoint.empty()) {
    ckpt = load_checkpoint(o.checkpoint);
    const DatasetHeader header{rc.model.slots, rc.model.history_days,
                               rc.model.feature_dim, rc.model.context_dim};
    check_compatible(ckpt->config, header);
  } else if (needs_model) {
    throw InvalidInput("a tim arm needs --checkpoint");
  }

  const auto train_users = generate_population(train_population(rc), rc.seed);
  const auto users = generate_population(
      shifted_population(rc, rc.ab.users, kAbUserBase), rc.seed);
  SimulationContext ctx = make_context(train_users, rc.history, rc.slot_seconds());
  if (ckpt) {
    ctx.params = &ckpt->params;
    ctx.model = &ckpt->config;
  }
  std::vector<std::int64_t> days;
  for (std::size_t d = 0; d < rc.ab.days; ++d) {
    days.push_back(rc.ab.first_day + static_cast<std::int64_t>(d));
  }
  log(err, "simulating " + std::to_string(users.size() * days.size()) + " user-days");
  const ComparisonReport report =
      ab_compare(users, rc.ab.arms, days, ctx, rc.seed, rc.ab.bootstrap);

  std::ostringstream csv, summary;
  write_report_csv(report, csv);
  write_report_summary(report, summary);
  emit(o.out, csv.str(), out);
  if (!o.summary.empty()) {
    emit(o.summary, summary.str(), out);
  } else if (!o.out.empty() && o.out != "-") {
    out << summary.str();
  }
}

// ---- report ----

struct ReportOptions {
  std::string kind;
  std::string checkpoint;
  std::string out;
  std::int64_t first_day = 0;
  std::string p;
  double q = 1.0;
  double slot_seconds = 7200.0;
  std::size_t points = 4;
};

void run_report(const ReportOptions& o, std::ostream& out) {
  std::ostringstream os;
  if (o.kind == "attention") {
    if (o.checkpoint.empty()) throw InvalidInput("report attention needs --checkpoint");
    const Checkpoint ckpt = load_checkpoint(o.checkpoint);
    const auto probe = calendar(o.first_day, ckpt.config.history_days);
    const Tensor a = date_type_attention(ckpt.params, probe, ckpt.config);
    os << "query_day,key_day,query_type,key_type,weight\n";
    for (std::size_t i = 0; i < probe.size(); ++i) {
      for (std::size_t j = 0; j < probe.size(); ++j) {
        os << o.first_day + static_cast<std::int64_t>(i) << ','
           << o.first_day + static_cast<std::int64_t>(j) << ','
           << (probe[i] == DateType::kWork ? "work" : "rest") << ','
           << (probe[j] == DateType::kWork ? "work" : "rest") << ','
           << fmt(a.at(i, j), "%.8f") << '\n';
      }
    }
    os << "# stripe_score," << fmt(attention_stripe_score(ckpt.params, probe, ckpt.config), "%.8f")
       << '\n';
  } else if (o.kind == "loss") {
    if (o.checkpoint.empty()) throw InvalidInput("report loss needs --checkpoint");
    const Checkpoint ckpt = load_checkpoint(o.checkpoint);
    os << "epoch,loss\n";
    for (std::size_t e = 0; e < ckpt.log.epoch_loss.size(); ++e) {
      os << e + 1 << ',' << fmt(ckpt.log.epoch_loss[e], "%.8f") << '\n';
    }
  } else if (o.kind == "schedule") {
    if (o.p.empty()) throw InvalidInput("report schedule needs --p");
    if (o.points < 1) throw InvalidInput("--points must be >= 1");
    const PacerSchedule schedule(parse_list(o.p, "--p"), o.q, o.slot_seconds);
    const std::size_t n = o.points * schedule.slots();
    os << "t,slot,expected_sends\n";
    for (std::size_t i = 0; i <= n; ++i) {
      const double t = schedule.day_seconds() * static_cast<double>(i) / static_cast<double>(n);
      os << fmt(t, "%.3f") << ',' << std::min(schedule.slot_at(t), schedule.slots() - 1)
         << ',' << fmt(schedule.expected_sends(t), "%.8f") << '\n';
    }
  } else {
    throw InvalidInput("unknown report kind '" + o.kind + "'");
  }
  emit(o.out, os.str(), out);
}

}  // namespace

ModelConfig apply_variant(ModelConfig config, const std::string& variant) {
  if (variant == "tim") {
    config.kind = ModelKind::kTim;
  } else if (variant == "tim_base") {
    config.kind = ModelKind::kTim;
    config.use_rope = false;
    config.use_dte = false;
  } else if (variant == "tim_r") {
    config.kind = ModelKind::kTim;
    config.use_rope = false;
  } else if (variant == "tim_d") {
    config.kind = ModelKind::kTim;
    config.use_dte = false;
  } else if (variant == "mlp") {
    config.kind = ModelKind::kMlpContext;
  } else if (variant == "mlp_int") {
    config.kind = ModelKind::kMlpInteraction;
  } else {
    throw ConfigError("unknown model variant '" + variant + "'");
  }
  return config;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Send-time optimization toolkit: simulate, train, evaluate, allocate, pace.",
               "tim"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Synthesize a population and train/test datasets");
  gen_cmd->add_option("--config", gen.config, "Run config (JSON); defaults when omitted");
  gen_cmd->add_option("--out", gen.out_dir, "Output directory")->required();

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Fit a model variant and save a checkpoint");
  train_cmd->add_option("--config", tr.config, "Run config (JSON)");
  train_cmd->add_option("--data", tr.data, "Training dataset (.jsonl)")->required();
  train_cmd->add_option("--model", tr.model,
                        "tim, tim_base, tim_r, tim_d, mlp or mlp_int")
      ->capture_default_str();
  train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
  train_cmd->add_option("--epochs", tr.epochs, "Override the configured epoch count");
  train_cmd->add_option("--seed", tr.seed, "Override the init and shuffle seeds");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Metrics table: AUC, HR@k, A@k");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint to score --data with");
  eval_cmd->add_option("--data", ev.data, "Evaluation dataset (.jsonl)");
  eval_cmd->add_option("--predictions", ev.predictions,
                       "Score an existing predictions CSV instead");
  eval_cmd->add_option("--predictions-out", ev.predictions_out,
                       "Also write per-example predictions CSV");
  eval_cmd->add_option("--out", ev.out, "Metrics CSV path (stdout when omitted)");
  eval_cmd->add_option("--label", ev.label, "Model column value")->capture_default_str();
  eval_cmd->add_option("--ks", ev.ks, "Comma-separated k values")->capture_default_str();
  eval_cmd->add_flag("--per-user", ev.per_user, "Average AUC per example instead of pooling");

  AllocateOptions al;
  auto* alloc_cmd = app.add_subcommand("allocate", "Solve one daily send allocation");
  alloc_cmd->add_option("--input", al.input, "Problem file (JSON: ctr, quota, lambda)");
  alloc_cmd->add_option("--p", al.p, "Comma-separated per-slot CTR");
  alloc_cmd->add_option("--q", al.q, "Daily quota");
  alloc_cmd->add_option("--lambda", al.lambda,
                        "Smoothness weight; proportional rule when omitted");
  alloc_cmd->add_option("--format", al.format, "text or json")
      ->check(CLI::IsMember({"text", "json"}))
      ->capture_default_str();

  PaceOptions pc;
  auto* pace_cmd = app.add_subcommand("pace-sim", "Replay a trigger trace through the pacer");
  pace_cmd->add_option("--schedules", pc.schedules, "Per-user schedules (JSON)")->required();
  pace_cmd->add_option("--trace", pc.trace, "Trigger trace CSV: user_id,timestamp")->required();
  pace_cmd->add_option("--out", pc.out, "Decision CSV path (stdout when omitted)");

  AbOptions ab;
  auto* ab_cmd = app.add_subcommand("ab", "Simulated comparison of send strategies");
  ab_cmd->add_option("--config", ab.config, "Run config (JSON)");
  ab_cmd->add_option("--checkpoint", ab.checkpoint, "Model for tim arms");
  ab_cmd->add_option("--out", ab.out, "Report CSV path (stdout when omitted)");
  ab_cmd->add_option("--summary", ab.summary, "Human-readable summary path");

  ReportOptions rp;
  auto* report_cmd = app.add_subcommand("report", "Emit plot-ready CSV tables");
  report_cmd->add_option("--kind", rp.kind, "attention, loss or schedule")
      ->required()
      ->check(CLI::IsMember({"attention", "loss", "schedule"}));
  report_cmd->add_option("--checkpoint", rp.checkpoint, "Checkpoint (attention, loss)");
  report_cmd->add_option("--out", rp.out, "Output CSV path (stdout when omitted)");
  report_cmd->add_option("--first-day", rp.first_day, "First probe day (attention)")
      ->capture_default_str();
  report_cmd->add_option("--p", rp.p, "Comma-separated CTR (schedule)");
  report_cmd->add_option("--q", rp.q, "Quota (schedule)")->capture_default_str();
  report_cmd->add_option("--slot-seconds", rp.slot_seconds, "Slot length (schedule)")
      ->capture_default_str();
  report_cmd->add_option("--points", rp.points, "Samples per slot (schedule)")
      ->capture_default_str();

  if (!args.empty() && !args.front().empty() && args.front()[0] != '-') {
    bool known = false;
    for (const auto* sub : app.get_subcommands({})) known |= sub->get_name() == args.front();
    if (!known) {
      err << "unknown subcommand: '" << args.front() << "' (see --help)\n";
      return kExitUsage;
    }
  }

  std::vector<const char*> argv{"tim"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*gen_cmd) run_gen(gen, out, err);
    else if (*train_cmd) run_train(tr, out, err);
    else if (*eval_cmd) run_eval(ev, out, err);
    else if (*alloc_cmd) run_allocate(al, out);
    else if (*pace_cmd) run_pace_sim(pc, out, err);
    else if (*ab_cmd) run_ab(ab, out, err);
    else if (*report_cmd) run_report(rp, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: io error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitOk;
}

}  // namespace tim
