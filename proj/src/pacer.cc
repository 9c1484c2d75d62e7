#include "tim/pacer.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "tim/errors.h"

namespace tim {

PacerSchedule::PacerSchedule(std::vector<double> ctr, double quota,
                             double slot_seconds)
    : ctr_(std::move(ctr)), quota_(quota), slot_seconds_(slot_seconds) {
  if (ctr_.empty()) throw InvalidInput("schedule needs at least one slot");
  for (double p : ctr_) {
    if (!std::isfinite(p) || p < 0.0) throw InvalidInput("negative or non-finite CTR");
  }
  if (!std::isfinite(quota_) || quota_ < 0.0) throw InvalidInput("quota must be >= 0");
  if (!std::isfinite(slot_seconds_) || !(slot_seconds_ > 0.0)) {
    throw InvalidInput("slot length must be positive");
  }
  double total = 0.0;
  for (double p : ctr_) total += p;
  if (!(total > 0.0)) {
    std::fill(ctr_.begin(), ctr_.end(), 1.0);
    uniform_fallback_ = true;
  }
  prefix_.assign(ctr_.size() + 1, 0.0);
  for (std::size_t s = 0; s < ctr_.size(); ++s) prefix_[s + 1] = prefix_[s] + ctr_[s];
  norm_ = prefix_.back();
}

std::size_t PacerSchedule::slot_at(double t) const {
  const auto s = static_cast<std::size_t>(std::floor(t / slot_seconds_));
  return std::min(s, slots() - 1);
}

double PacerSchedule::expected_sends(double t) const {
  if (!(t >= 0.0) || t > day_seconds()) {
    throw InvalidInput("time " + std::to_string(t) + " outside the day");
  }
  const std::size_t s = slot_at(t);
  const double offset = t - static_cast<double>(s) * slot_seconds_;
  return (prefix_[s] + offset / slot_seconds_ * ctr_[s]) * quota_ / norm_;
}

PacerState::PacerState(std::uint64_t seed) : rng(seed) { redraw(); }

void PacerState::redraw() {
  // 53 random bits, u in [0, 1).
  threshold = static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

DecisionDetail decide(const PacerSchedule& schedule, PacerState& state, double t) {
  if (t < state.last_decision_time) {
    throw MonotonicityError("decision at " + std::to_string(t) +
                            "s after one at " +
                            std::to_string(state.last_decision_time) + "s");
  }
  DecisionDetail d;
  d.expected = schedule.expected_sends(t);
  d.sent_before = state.sent;
  d.probability =
      std::clamp(d.expected - static_cast<double>(state.sent), 0.0, 1.0);
  if (state.threshold < d.probability) {
    d.decision = Decision::kSend;
    ++state.sent;
    state.redraw();
  }
  state.last_decision_time = t;
  return d;
}

std::pair<PacerSchedule, PacerState> new_day(std::vector<double> ctr, double quota,
                                             double slot_seconds, std::uint64_t seed) {
  return {PacerSchedule(std::move(ctr), quota, slot_seconds), PacerState(seed)};
}

}  // namespace tim
