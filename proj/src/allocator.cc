#include "tim/allocator.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "tim/errors.h"

namespace tim {

void AllocationProblem::validate() const {
  if (ctr.empty()) throw InvalidInput("allocation needs at least one slot");
  for (double p : ctr) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      throw InvalidInput("slot CTR outside [0, 1]");
    }
  }
  if (!(quota > 0.0) || !std::isfinite(quota)) {
    throw InvalidInput("quota must be positive");
  }
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw InvalidInput("lambda must be positive");
  }
}

double allocation_objective(const AllocationProblem& problem,
                            std::span<const double> sends) {
  double value = 0.0;
  for (std::size_t i = 0; i < sends.size(); ++i) {
    value += -problem.ctr[i] * sends[i] + problem.lambda * sends[i] * sends[i];
  }
  return value;
}

double kkt_residual(const AllocationProblem& problem, std::span<const double> sends,
                    double phi, std::span<const double> mu) {
  double worst = 0.0;
  double total = 0.0;
  double slackness = 0.0;
  for (std::size_t i = 0; i < sends.size(); ++i) {
    const double stationarity =
        2.0 * problem.lambda * sends[i] - problem.ctr[i] + phi - mu[i];
    worst = std::max(worst, std::abs(stationarity));
    worst = std::max(worst, -sends[i]);
    worst = std::max(worst, -mu[i]);
    total += sends[i];
    slackness += mu[i] * sends[i];
  }
  worst = std::max(worst, std::abs(total - problem.quota));
  worst = std::max(worst, std::abs(slackness));
  return worst;
}

namespace {

double l1(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0);
}

void check_quota(double quota) {
  if (!(quota > 0.0) || !std::isfinite(quota)) {
    throw InvalidInput("quota must be positive");
  }
}

}  // namespace

AllocationResult allocate_proportional(std::span<const double> ctr, double quota) {
  check_quota(quota);
  if (ctr.empty()) throw InvalidInput("allocation needs at least one slot");
  for (double p : ctr) {
    if (!std::isfinite(p) || p < 0.0) throw InvalidInput("negative or non-finite CTR");
  }
  const double norm = l1(ctr);
  if (!(norm > 0.0)) {
    throw DegenerateInput("all-zero CTR vector has no proportional split");
  }
  AllocationResult r;
  r.sends.resize(ctr.size());
  for (std::size_t i = 0; i < ctr.size(); ++i) r.sends[i] = quota * ctr[i] / norm;
  r.mu.assign(ctr.size(), 0.0);
  r.phi = 0.0;
  r.lambda = norm / (2.0 * quota);
  AllocationProblem at_lambda{{ctr.begin(), ctr.end()}, quota, r.lambda};
  r.kkt_residual = kkt_residual(at_lambda, r.sends, r.phi, r.mu);
  return r;
}

AllocationResult allocate_proportional_or_uniform(std::span<const double> ctr,
                                                  double quota) {
  try {
    return allocate_proportional(ctr, quota);
  } catch (const DegenerateInput&) {
    AllocationResult r;
    r.sends.assign(ctr.size(), quota / static_cast<double>(ctr.size()));
    r.mu.assign(ctr.size(), 0.0);
    r.uniform_fallback = true;
    return r;
  }
}

AllocationResult solve_kkt(const AllocationProblem& problem) {
  problem.validate();
  const auto& p = problem.ctr;
  const double two_lambda = 2.0 * problem.lambda;
  auto excess = [&](double phi) {
    double total = 0.0;
    for (double pi : p) total += std::max(0.0, pi - phi) / two_lambda;
    return total - problem.quota;
  };

  // excess(hi) = -q < 0 and excess(lo) >= 0 since the top slot alone takes q.
  const double p_max = *std::max_element(p.begin(), p.end());
  double hi = p_max;
  double lo = p_max - two_lambda * problem.quota;
  constexpr int kMaxIterations = 200;
  bool converged = false;
  for (int it = 0; it < kMaxIterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double e = excess(mid);
    if (std::abs(e) <= 1e-10 || hi - lo <= 0.0) {
      lo = hi = mid;
      converged = true;
      break;
    }
    if (e > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  double phi = 0.5 * (lo + hi);
  if (!converged && std::abs(excess(phi)) > 1e-10) {
    throw NumericalError("water-filling bisection did not converge");
  }

  // Polish: phi is exact for the active set {i : p_i > phi}.
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > phi) active.push_back(i);
  }
  if (!active.empty()) {
    double active_sum = 0.0;
    for (std::size_t i : active) active_sum += p[i];
    const double exact =
        (active_sum - two_lambda * problem.quota) / static_cast<double>(active.size());
    bool consistent = true;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const bool in = p[i] > exact;
      const bool was = p[i] > phi;
      if (in != was && std::abs(p[i] - exact) > 1e-14) consistent = false;
    }
    if (consistent) phi = exact;
  }

  AllocationResult r;
  r.phi = phi;
  r.lambda = problem.lambda;
  r.sends.resize(p.size());
  r.mu.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > phi) {
      r.sends[i] = (p[i] - phi) / two_lambda;
      r.mu[i] = 0.0;
    } else {
      r.sends[i] = 0.0;
      r.mu[i] = phi - p[i];
    }
  }
  r.kkt_residual = kkt_residual(problem, r.sends, r.phi, r.mu);
  if (r.kkt_residual > 1e-8) {
    throw NumericalError("water-filling produced KKT residual " +
                         std::to_string(r.kkt_residual));
  }
  return r;
}

std::vector<double> project_to_simplex(std::span<const double> v, double total) {
  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double running = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    running += sorted[j];
    const double candidate = (running - total) / static_cast<double>(j + 1);
    if (sorted[j] - candidate > 0.0) theta = candidate;
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(0.0, v[i] - theta);
  return out;
}

AllocationResult brute_force_qp(const AllocationProblem& problem, std::size_t steps,
                                double step_size) {
  problem.validate();
  const auto& p = problem.ctr;
  const std::size_t k = p.size();
  const double eta = step_size > 0.0 ? step_size : 1.0 / (4.0 * problem.lambda);
  std::vector<double> n(k, problem.quota / static_cast<double>(k));
  std::vector<double> moved(k);
  for (std::size_t it = 0; it < steps; ++it) {
    for (std::size_t i = 0; i < k; ++i) {
      moved[i] = n[i] - eta * (2.0 * problem.lambda * n[i] - p[i]);
    }
    std::vector<double> next = project_to_simplex(moved, problem.quota);
    double change = 0.0;
    for (std::size_t i = 0; i < k; ++i) change = std::max(change, std::abs(next[i] - n[i]));
    n = std::move(next);
    if (change <= 1e-10) break;
  }

  AllocationResult r;
  r.sends = n;
  r.lambda = problem.lambda;
  // Recover multipliers from stationarity on the support.
  double phi_sum = 0.0;
  std::size_t support = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (n[i] > 0.0) {
      phi_sum += p[i] - 2.0 * problem.lambda * n[i];
      ++support;
    }
  }
  r.phi = support ? phi_sum / static_cast<double>(support) : 0.0;
  r.mu.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    r.mu[i] = n[i] > 0.0 ? 0.0 : std::max(0.0, r.phi - p[i]);
  }
  r.kkt_residual = kkt_residual(problem, r.sends, r.phi, r.mu);
  return r;
}

}  // namespace tim
