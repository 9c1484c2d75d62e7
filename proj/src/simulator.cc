#include "tim/simulator.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "tim/errors.h"
#include "tim/pacer.h"

namespace tim {

DateType date_type_of(std::int64_t day) {
  const std::int64_t weekday = ((day % 7) + 7) % 7;
  return weekday >= 5 ? DateType::kRest : DateType::kWork;
}

std::vector<DateType> calendar(std::int64_t first_day, std::size_t count) {
  std::vector<DateType> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = date_type_of(first_day + static_cast<std::int64_t>(i));
  }
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum Stream : std::uint64_t {
  kStreamProfile = 1,
  kStreamHistory = 2,
  kStreamTruth = 3,
  kStreamTriggers = 4,
  kStreamPacer = 5,
  kStreamClicks = 6,
  kStreamBootstrap = 7,
};

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double circular_hours(double a, double b) {
  double d = std::fmod(std::abs(a - b), 24.0);
  return std::min(d, 24.0 - d);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t user, std::int64_t day,
                          std::uint64_t stream) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ user);
  h = splitmix64(h ^ static_cast<std::uint64_t>(day));
  return splitmix64(h ^ stream);
}

std::vector<Archetype> default_archetypes() {
  return {
      {"morning", 0.25,
       {0.02, {{7.0, 1.5, 0.30}, {20.0, 1.5, 0.06}}},
       {0.02, {{11.0, 2.0, 0.25}}}},
      {"evening", 0.25,
       {0.02, {{20.0, 1.5, 0.30}}},
       {0.02, {{15.0, 2.5, 0.20}, {22.0, 1.5, 0.12}}}},
      {"commuter", 0.25,
       {0.02, {{8.0, 1.0, 0.25}, {18.5, 1.0, 0.25}}},
       {0.02, {{13.0, 2.5, 0.25}}}},
      {"night_owl", 0.15,
       {0.02, {{23.0, 1.5, 0.30}}},
       {0.02, {{2.0, 2.0, 0.25}}}},
      {"flat", 0.10, {0.10, {}}, {0.10, {}}},
  };
}

std::vector<double> evaluate_curve(const CurveShape& shape, std::size_t slots,
                                   double shift_hours, double amplitude) {
  std::vector<double> out(slots);
  const double slot_hours = 24.0 / static_cast<double>(slots);
  for (std::size_t s = 0; s < slots; ++s) {
    const double hour = (static_cast<double>(s) + 0.5) * slot_hours;
    double v = shape.base;
    for (const auto& peak : shape.peaks) {
      const double d = circular_hours(hour, peak.hour + shift_hours);
      v += peak.height * std::exp(-d * d / (2.0 * peak.width * peak.width));
    }
    out[s] = std::clamp(amplitude * v, 0.0, 1.0);
  }
  return out;
}

void PopulationConfig::validate() const {
  if (size < 1) throw ConfigError("population size must be >= 1");
  if (slots < 1) throw ConfigError("population slots must be >= 1");
  if (archetypes.empty()) throw ConfigError("population needs an archetype");
  double total = 0.0;
  for (const auto& a : archetypes) {
    if (!std::isfinite(a.weight) || a.weight < 0.0) {
      throw ConfigError("archetype '" + a.name + "' has an invalid weight");
    }
    for (const CurveShape* shape : {&a.work, &a.rest}) {
      if (shape->base < 0.0) throw ConfigError("archetype base CTR below 0");
      for (const auto& p : shape->peaks) {
        if (!(p.width > 0.0)) throw ConfigError("archetype peak width must be > 0");
      }
    }
    total += a.weight;
  }
  if (!(total > 0.0)) throw ConfigError("archetype weights sum to zero");
  if (trigger_rate_min < 0.0 || trigger_rate_max < trigger_rate_min) {
    throw ConfigError("invalid trigger rate range");
  }
  if (!(quota > 0.0)) throw ConfigError("quota must be positive");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
  if (amplitude_jitter < 0.0 || amplitude_jitter >= 1.0) {
    throw ConfigError("amplitude_jitter must be in [0, 1)");
  }
}

std::vector<UserProfile> generate_population(const PopulationConfig& config,
                                             std::uint64_t seed) {
  config.validate();
  std::vector<double> weights;
  for (const auto& a : config.archetypes) weights.push_back(a.weight);
  std::vector<UserProfile> users;
  users.reserve(config.size);
  for (std::size_t i = 0; i < config.size; ++i) {
    const std::uint64_t id = config.first_user_id + i;
    std::mt19937_64 rng(derive_seed(seed, id, 0, kStreamProfile));
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    const Archetype& a = config.archetypes[pick(rng)];
    std::uniform_real_distribution<double> shift(-config.peak_shift_hours,
                                                 config.peak_shift_hours);
    std::uniform_real_distribution<double> amp(1.0 - config.amplitude_jitter,
                                               1.0 + config.amplitude_jitter);
    std::uniform_real_distribution<double> rate(config.trigger_rate_min,
                                                config.trigger_rate_max);
    std::normal_distribution<double> attr(0.0, 1.0);
    const double s = shift(rng);
    const double s_rest = shift(rng);
    const double m = amp(rng);
    UserProfile u;
    u.id = id;
    u.archetype = a.name;
    u.ctr_work = evaluate_curve(a.work, config.slots, s, m);
    u.ctr_rest = evaluate_curve(a.rest, config.slots, s_rest, m);
    u.trigger_rate = rate(rng);
    u.quota = config.quota;
    u.noise_sigma = config.noise_sigma;
    u.attributes = {attr(rng), attr(rng)};
    users.push_back(std::move(u));
  }
  return users;
}

std::vector<double> population_mean_ctr(std::span<const UserProfile> users,
                                        DateType type) {
  if (users.empty()) throw InvalidInput("empty population");
  std::vector<double> mean(users.front().base_ctr(type).size(), 0.0);
  for (const auto& u : users) {
    const auto& c = u.base_ctr(type);
    for (std::size_t s = 0; s < mean.size(); ++s) mean[s] += c[s];
  }
  for (double& v : mean) v /= static_cast<double>(users.size());
  return mean;
}

std::vector<double> realized_ctr(const UserProfile& user, DateType type,
                                 std::mt19937_64& rng) {
  const auto& base = user.base_ctr(type);
  std::normal_distribution<double> z(0.0, 1.0);
  const double sigma = user.noise_sigma;
  std::vector<double> out(base.size());
  for (std::size_t s = 0; s < base.size(); ++s) {
    const double jitter = std::exp(sigma * z(rng) - 0.5 * sigma * sigma);
    out[s] = std::clamp(base[s] * jitter, 0.0, 1.0);
  }
  return out;
}

UserDayExample synthesize_history(const UserProfile& user,
                                  const HistoryConfig& config,
                                  std::span<const DateType> history_calendar,
                                  DateType target_type, std::uint64_t seed) {
  const std::size_t k = config.slots, l = history_calendar.size();
  if (l < 1) throw InvalidInput("history needs at least one day");
  if (user.ctr_work.size() != k || user.ctr_rest.size() != k) {
    throw InvalidInput("user CTR curve length does not match slot count");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  const int sends = static_cast<int>(config.sends_per_slot);

  UserDayExample ex;
  ex.user_id = user.id;
  ex.hist_date_types.assign(history_calendar.begin(), history_calendar.end());
  ex.target_date_type = target_type;
  ex.x = Tensor::Zeros(Shape{k, l, kFeatureCount});
  auto x = ex.x.mutable_data();

  std::size_t since_click = k;
  for (std::size_t day = 0; day < l; ++day) {
    const auto ctr = realized_ctr(user, history_calendar[day], rng);
    for (std::size_t s = 0; s < k; ++s) {
      std::binomial_distribution<int> click_draw(sends, ctr[s]);
      std::poisson_distribution<int> views(10.0 * ctr[s] + 1e-12);
      const int clicks = click_draw(rng);
      const double active = std::max(0.0, 3.0 * ctr[s] * (1.0 + 0.5 * z(rng)));
      since_click = clicks > 0 ? 0 : since_click + 1;
      double* f = x.data() + (s * l + day) * kFeatureCount;
      f[kReceipts] = static_cast<double>(sends);
      f[kClicks] = static_cast<double>(clicks);
      f[kActiveSeconds] = active;
      f[kEffectiveViews] = static_cast<double>(views(rng)) / 5.0;
      f[kSendGap] =
          std::min(1.0, static_cast<double>(since_click) / static_cast<double>(k));
    }
  }

  const auto target = realized_ctr(user, target_type, rng);
  ex.labels.resize(k);
  for (std::size_t s = 0; s < k; ++s) {
    std::binomial_distribution<int> click_draw(sends, target[s]);
    ex.labels[s] = click_draw(rng) > 0 ? 1 : 0;
  }
  ex.context = {target_type == DateType::kRest ? 1.0 : 0.0,
                std::log1p(user.trigger_rate) / 4.0, user.attributes.at(0),
                user.attributes.at(1)};
  return ex;
}

UserDayExample synthesize_example(const UserProfile& user,
                                  const HistoryConfig& config, std::int64_t day,
                                  std::uint64_t seed) {
  const auto days = calendar(day - static_cast<std::int64_t>(config.history_days),
                             config.history_days);
  UserDayExample ex = synthesize_history(user, config, days, date_type_of(day),
                                         derive_seed(seed, user.id, day, kStreamHistory));
  ex.day = day;
  return ex;
}

std::vector<UserDayExample> make_dataset(std::span<const UserProfile> users,
                                         const HistoryConfig& config,
                                         std::span<const std::int64_t> target_days,
                                         std::uint64_t seed) {
  std::vector<UserDayExample> out;
  out.reserve(users.size() * target_days.size());
  for (const auto& u : users) {
    for (std::int64_t day : target_days) {
      out.push_back(synthesize_example(u, config, day, seed));
    }
  }
  return out;
}

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kUniform: return "uniform";
    case Strategy::kGlobalCtr: return "global_ctr";
    case Strategy::kTim: return "tim";
    case Strategy::kOracle: return "oracle";
  }
  return "unknown";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "uniform") return Strategy::kUniform;
  if (name == "global_ctr") return Strategy::kGlobalCtr;
  if (name == "tim") return Strategy::kTim;
  if (name == "oracle") return Strategy::kOracle;
  throw ConfigError("unknown strategy '" + name + "'");
}

SimulationContext make_context(std::span<const UserProfile> users,
                               const HistoryConfig& history, double slot_seconds) {
  SimulationContext ctx;
  ctx.history = history;
  ctx.slot_seconds = slot_seconds;
  ctx.global_ctr_work = population_mean_ctr(users, DateType::kWork);
  ctx.global_ctr_rest = population_mean_ctr(users, DateType::kRest);
  return ctx;
}

DayOutcome run_day(const UserProfile& user, const ArmSpec& arm, std::int64_t day,
                   const SimulationContext& ctx, std::uint64_t seed) {
  const std::size_t k = ctx.history.slots;
  const DateType type = date_type_of(day);

  std::mt19937_64 truth_rng(derive_seed(seed, user.id, day, kStreamTruth));
  const auto truth = realized_ctr(user, type, truth_rng);

  std::vector<double> schedule;
  switch (arm.strategy) {
    case Strategy::kUniform:
      schedule.assign(k, 1.0);
      break;
    case Strategy::kGlobalCtr:
      schedule = type == DateType::kWork ? ctx.global_ctr_work : ctx.global_ctr_rest;
      break;
    case Strategy::kOracle:
      schedule = user.base_ctr(type);
      break;
    case Strategy::kTim: {
      if (!ctx.params || !ctx.model) {
        throw InvalidInput("arm '" + arm.label + "' uses tim but no model is loaded");
      }
      const UserDayExample ex = synthesize_example(user, ctx.history, day, seed);
      schedule = predict_slot_ctr(ex, *ctx.params, *ctx.model);
      break;
    }
  }
  if (schedule.size() != k) throw InvalidInput("schedule length does not match slots");

  const double quota = arm.quota.value_or(user.quota);
  auto [plan, state] = new_day(schedule, quota, ctx.slot_seconds,
                               derive_seed(seed, user.id, day, kStreamPacer));

  // Poisson triggers, uniform within each slot.
  std::mt19937_64 trigger_rng(derive_seed(seed, user.id, day, kStreamTriggers));
  std::poisson_distribution<int> count(user.trigger_rate);
  std::vector<double> triggers;
  for (std::size_t s = 0; s < k; ++s) {
    const int n = user.trigger_rate > 0.0 ? count(trigger_rng) : 0;
    for (int i = 0; i < n; ++i) {
      triggers.push_back((static_cast<double>(s) + uniform01(trigger_rng)) *
                         ctx.slot_seconds);
    }
  }
  std::sort(triggers.begin(), triggers.end());

  std::mt19937_64 click_rng(derive_seed(seed, user.id, day, kStreamClicks));
  DayOutcome out;
  out.label = arm.label;
  out.sends.assign(k, 0);
  out.clicks.assign(k, 0);
  for (double t : triggers) {
    const DecisionDetail d = decide(plan, state, t);
    if (d.decision != Decision::kSend) continue;
    const std::size_t s = plan.slot_at(t);
    ++out.sends[s];
    out.expected_clicks += truth[s];
    if (uniform01(click_rng) < truth[s]) ++out.clicks[s];
  }
  return out;
}

namespace {

double quantile(std::vector<double>& values, double q) {
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

}  // namespace

ComparisonReport ab_compare(std::span<const UserProfile> users,
                            std::span<const ArmSpec> arms,
                            std::span<const std::int64_t> days,
                            const SimulationContext& ctx, std::uint64_t seed,
                            std::size_t bootstrap_resamples) {
  if (arms.empty()) throw InvalidInput("ab_compare needs at least one arm");
  ComparisonReport report;
  report.bootstrap_resamples = bootstrap_resamples;
  for (std::size_t a = 0; a < arms.size(); ++a) {
    const ArmSpec& arm = arms[a];
    std::vector<double> sends, clicks, expected;
    ArmSummary summary;
    summary.label = arm.label;
    summary.strategy = arm.strategy;
    for (const auto& user : users) {
      for (std::int64_t day : days) {
        const DayOutcome o = run_day(user, arm, day, ctx, seed);
        const int s = std::accumulate(o.sends.begin(), o.sends.end(), 0);
        const int c = std::accumulate(o.clicks.begin(), o.clicks.end(), 0);
        sends.push_back(s);
        clicks.push_back(c);
        expected.push_back(o.expected_clicks);
        summary.sends += s;
        summary.clicks += c;
        summary.expected_clicks += o.expected_clicks;
        summary.max_slot_sends = std::max(
            summary.max_slot_sends, *std::max_element(o.sends.begin(), o.sends.end()));
      }
    }
    summary.user_days = sends.size();
    if (summary.sends > 0) {
      summary.ctr = static_cast<double>(summary.clicks) /
                    static_cast<double>(summary.sends);
    }

    const std::size_t n = sends.size();
    if (n > 0 && bootstrap_resamples > 0) {
      std::mt19937_64 rng(derive_seed(seed, a, 0, kStreamBootstrap));
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      std::vector<double> bs_sends, bs_clicks, bs_expected, bs_ctr;
      for (std::size_t b = 0; b < bootstrap_resamples; ++b) {
        double ts = 0.0, tc = 0.0, te = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t j = pick(rng);
          ts += sends[j];
          tc += clicks[j];
          te += expected[j];
        }
        bs_sends.push_back(ts);
        bs_clicks.push_back(tc);
        bs_expected.push_back(te);
        if (ts > 0.0) bs_ctr.push_back(tc / ts);
      }
      summary.sends_ci = {quantile(bs_sends, 0.025), quantile(bs_sends, 0.975)};
      summary.clicks_ci = {quantile(bs_clicks, 0.025), quantile(bs_clicks, 0.975)};
      summary.expected_clicks_ci = {quantile(bs_expected, 0.025),
                                    quantile(bs_expected, 0.975)};
      if (summary.ctr && !bs_ctr.empty()) {
        summary.ctr_ci = Interval{quantile(bs_ctr, 0.025), quantile(bs_ctr, 0.975)};
      }
    }
    report.arms.push_back(std::move(summary));
  }
  return report;
}

namespace {

std::string fixed(double v, int digits = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

void write_report_csv(const ComparisonReport& report, std::ostream& out) {
  out << "arm,strategy,user_days,sends,sends_lo,sends_hi,clicks,clicks_lo,"
         "clicks_hi,ctr,ctr_lo,ctr_hi,expected_clicks,expected_clicks_lo,"
         "expected_clicks_hi,max_slot_sends\n";
  for (const auto& a : report.arms) {
    out << a.label << ',' << strategy_name(a.strategy) << ',' << a.user_days << ','
        << a.sends << ',' << fixed(a.sends_ci.lo, 1) << ',' << fixed(a.sends_ci.hi, 1)
        << ',' << a.clicks << ',' << fixed(a.clicks_ci.lo, 1) << ','
        << fixed(a.clicks_ci.hi, 1) << ',';
    if (a.ctr) {
      out << fixed(*a.ctr) << ',';
    } else {
      out << "NA,";
    }
    if (a.ctr_ci) {
      out << fixed(a.ctr_ci->lo) << ',' << fixed(a.ctr_ci->hi) << ',';
    } else {
      out << "NA,NA,";
    }
    out << fixed(a.expected_clicks, 3) << ',' << fixed(a.expected_clicks_ci.lo, 3)
        << ',' << fixed(a.expected_clicks_ci.hi, 3) << ',' << a.max_slot_sends
        << '\n';
  }
}

void write_report_summary(const ComparisonReport& report, std::ostream& out) {
  out << "A/B comparison (" << report.bootstrap_resamples
      << " bootstrap resamples, 95% intervals)\n";
  for (const auto& a : report.arms) {
    out << "  " << std::left << std::setw(12) << a.label << std::right
        << " sends " << a.sends << " [" << fixed(a.sends_ci.lo, 0) << ", "
        << fixed(a.sends_ci.hi, 0) << "]  clicks " << a.clicks << " ["
        << fixed(a.clicks_ci.lo, 0) << ", " << fixed(a.clicks_ci.hi, 0) << "]  CTR ";
    if (a.ctr) {
      out << fixed(*a.ctr, 4);
      if (a.ctr_ci) {
        out << " [" << fixed(a.ctr_ci->lo, 4) << ", " << fixed(a.ctr_ci->hi, 4) << "]";
      }
    } else {
      out << "n/a";
    }
    out << "  max/slot " << a.max_slot_sends << '\n';
  }
}

}  // namespace tim
