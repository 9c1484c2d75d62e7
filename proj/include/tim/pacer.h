#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace tim {

// Cumulative-CTR send schedule for one user-day. Slot s covers
// [s*T, (s+1)*T) seconds after day start; the expected number of sends by
// time t grows linearly inside each slot at a rate proportional to p_s.
class PacerSchedule {
 public:
  // Throws InvalidInput for negative/non-finite p, q < 0 or T <= 0.
  // An all-zero p is replaced by the uniform curve (see uniform_fallback()).
  PacerSchedule(std::vector<double> ctr, double quota, double slot_seconds);

  std::size_t slots() const { return ctr_.size(); }
  double quota() const { return quota_; }
  double slot_seconds() const { return slot_seconds_; }
  double day_seconds() const { return slot_seconds_ * static_cast<double>(slots()); }
  double norm() const { return norm_; }
  bool uniform_fallback() const { return uniform_fallback_; }
  const std::vector<double>& ctr() const { return ctr_; }
  // prefix()[s] = p_0 + ... + p_{s-1}; length K + 1.
  const std::vector<double>& prefix() const { return prefix_; }

  std::size_t slot_at(double t) const;
  // P(t). Throws InvalidInput for t outside [0, K*T].
  double expected_sends(double t) const;

 private:
  std::vector<double> ctr_;
  std::vector<double> prefix_;
  double quota_;
  double slot_seconds_;
  double norm_;
  bool uniform_fallback_ = false;
};

// The uniform for the next send is drawn once and reused at every trigger
// until that send fires, so P(next send has happened by t) = clamp(P - H).
struct PacerState {
  std::int64_t sent = 0;               // H
  double last_decision_time = 0.0;     // seconds since day start
  std::mt19937_64 rng;
  double threshold = 0.0;              // u in [0, 1) for send H + 1

  explicit PacerState(std::uint64_t seed);
  void redraw();
};

enum class Decision { kHold, kSend };

struct DecisionDetail {
  Decision decision = Decision::kHold;
  double expected = 0.0;     // P(t)
  std::int64_t sent_before = 0;
  double probability = 0.0;  // clamp(P(t) - H, 0, 1)
};

// Sends iff threshold < clamp(P(t) - H, 0, 1). Throws MonotonicityError if
// t is earlier than the previous decision.
DecisionDetail decide(const PacerSchedule& schedule, PacerState& state, double t);

std::pair<PacerSchedule, PacerState> new_day(std::vector<double> ctr, double quota,
                                             double slot_seconds, std::uint64_t seed);

}  // namespace tim
