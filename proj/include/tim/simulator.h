#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tim/model.h"

namespace tim {

// Work days and rest days repeat 5 + 2; day 0 is a work day.
DateType date_type_of(std::int64_t day);
std::vector<DateType> calendar(std::int64_t first_day, std::size_t count);

// Mixes (seed, user, day, stream) into an independent substream seed, so a
// user-day draws the same numbers no matter which order users are visited in.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t user, std::int64_t day,
                          std::uint64_t stream);

struct CurvePeak {
  double hour = 12.0;   // center, hours after midnight (circular)
  double width = 1.5;   // standard deviation in hours
  double height = 0.2;  // CTR added at the center
};

struct CurveShape {
  double base = 0.02;
  std::vector<CurvePeak> peaks;
};

struct Archetype {
  std::string name;
  double weight = 1.0;
  CurveShape work;
  CurveShape rest;
};

// Morning, evening, commuter, night-owl and flat users with distinct
// work-day and rest-day curves.
std::vector<Archetype> default_archetypes();

// CTR at each slot center for a K-slot day.
std::vector<double> evaluate_curve(const CurveShape& shape, std::size_t slots,
                                   double shift_hours, double amplitude);

struct PopulationConfig {
  std::size_t size = 1000;
  std::size_t slots = 12;
  std::vector<Archetype> archetypes = default_archetypes();
  double trigger_rate_min = 20.0;  // expected triggers per slot
  double trigger_rate_max = 40.0;
  double quota = 6.0;
  double noise_sigma = 0.25;
  double peak_shift_hours = 3.0;
  double amplitude_jitter = 0.3;
  std::uint64_t first_user_id = 0;

  void validate() const;
};

struct UserProfile {
  std::uint64_t id = 0;
  std::string archetype;
  std::vector<double> ctr_work;
  std::vector<double> ctr_rest;
  double trigger_rate = 0.0;
  double quota = 0.0;
  double noise_sigma = 0.0;
  // Static user attributes fed to the model as context; unrelated to
  // behavior.
  std::vector<double> attributes;

  const std::vector<double>& base_ctr(DateType type) const {
    return type == DateType::kWork ? ctr_work : ctr_rest;
  }
};

std::vector<UserProfile> generate_population(const PopulationConfig& config,
                                             std::uint64_t seed);

// Mean of every user's base curve for one date type.
std::vector<double> population_mean_ctr(std::span<const UserProfile> users,
                                        DateType type);

// Interaction feature layout of one slot-day.
enum Feature : std::size_t {
  kReceipts = 0,
  kClicks = 1,
  kActiveSeconds = 2,   // scaled
  kEffectiveViews = 3,  // scaled
  kSendGap = 4,         // slots since last click / K, capped at 1
  kFeatureCount = 5,
};
inline constexpr std::size_t kContextDim = 4;

struct HistoryConfig {
  std::size_t slots = 12;
  std::size_t history_days = 14;
  std::size_t sends_per_slot = 1;  // uniform delivery in the logged history
};

// Day-level CTR with multiplicative log-normal jitter (mean preserving).
std::vector<double> realized_ctr(const UserProfile& user, DateType type,
                                 std::mt19937_64& rng);

// One example whose history days carry the given date types and whose target
// day has `target_type`. Labels mark slots with at least one click.
UserDayExample synthesize_history(const UserProfile& user,
                                  const HistoryConfig& config,
                                  std::span<const DateType> history_calendar,
                                  DateType target_type, std::uint64_t seed);

// synthesize_history for target day `day` with the calendar's date types and
// a substream derived from (seed, user, day).
UserDayExample synthesize_example(const UserProfile& user,
                                  const HistoryConfig& config, std::int64_t day,
                                  std::uint64_t seed);

std::vector<UserDayExample> make_dataset(std::span<const UserProfile> users,
                                         const HistoryConfig& config,
                                         std::span<const std::int64_t> target_days,
                                         std::uint64_t seed);

enum class Strategy { kUniform, kGlobalCtr, kTim, kOracle };

const char* strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);

struct ArmSpec {
  std::string label;
  Strategy strategy = Strategy::kUniform;
  std::optional<double> quota;  // overrides each user's quota
};

struct SimulationContext {
  HistoryConfig history;
  double slot_seconds = 7200.0;
  std::vector<double> global_ctr_work;
  std::vector<double> global_ctr_rest;
  const ModelParams* params = nullptr;
  const ModelConfig* model = nullptr;
};

SimulationContext make_context(std::span<const UserProfile> users,
                               const HistoryConfig& history, double slot_seconds);

struct DayOutcome {
  std::string label;
  std::vector<int> sends;
  std::vector<int> clicks;
  double expected_clicks = 0.0;  // sum over slots of sends * true CTR
};

// Poisson triggers drive a pacer whose schedule comes from the arm's
// strategy. The user's true CTR, trigger times, pacer draws and click draws
// come from substreams shared by all arms for the same (seed, user, day).
// Throws InvalidInput for a TIM arm without a model in `ctx`.
DayOutcome run_day(const UserProfile& user, const ArmSpec& arm, std::int64_t day,
                   const SimulationContext& ctx, std::uint64_t seed);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct ArmSummary {
  std::string label;
  Strategy strategy = Strategy::kUniform;
  std::size_t user_days = 0;
  std::int64_t sends = 0;
  std::int64_t clicks = 0;
  double expected_clicks = 0.0;
  std::optional<double> ctr;  // absent when nothing was sent
  int max_slot_sends = 0;
  Interval sends_ci;
  Interval clicks_ci;
  Interval expected_clicks_ci;
  std::optional<Interval> ctr_ci;
};

struct ComparisonReport {
  std::vector<ArmSummary> arms;
  std::size_t bootstrap_resamples = 0;
};

ComparisonReport ab_compare(std::span<const UserProfile> users,
                            std::span<const ArmSpec> arms,
                            std::span<const std::int64_t> days,
                            const SimulationContext& ctx, std::uint64_t seed,
                            std::size_t bootstrap_resamples = 1000);

void write_report_csv(const ComparisonReport& report, std::ostream& out);
void write_report_summary(const ComparisonReport& report, std::ostream& out);

}  // namespace tim
