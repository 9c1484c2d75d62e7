#pragma once

#include <span>
#include <vector>

namespace tim {

// Daily send allocation:
//   minimize  -p.n + lambda * |n|_2^2   s.t.  sum(n) = q,  n >= 0.
struct AllocationProblem {
  std::vector<double> ctr;  // p, entries in [0, 1]
  double quota = 0.0;       // q > 0
  double lambda = 0.0;      // > 0

  void validate() const;
};

struct AllocationResult {
  std::vector<double> sends;  // n
  double phi = 0.0;           // multiplier of the quota equality
  std::vector<double> mu;     // multipliers of n >= 0
  double kkt_residual = 0.0;
  double lambda = 0.0;        // lambda the KKT point was certified against
  // Set when p carried no signal and the uniform split was returned.
  bool uniform_fallback = false;
};

double allocation_objective(const AllocationProblem& problem,
                            std::span<const double> sends);

// Largest violation among stationarity, primal feasibility (quota, n >= 0),
// dual feasibility (mu >= 0) and complementary slackness.
double kkt_residual(const AllocationProblem& problem, std::span<const double> sends,
                    double phi, std::span<const double> mu);

// n_i = q * p_i / |p|_1, the KKT point at lambda = |p|_1 / (2q).
// Throws DegenerateInput when p sums to zero.
AllocationResult allocate_proportional(std::span<const double> ctr, double quota);

// allocate_proportional, or q/K per slot with uniform_fallback set when p is
// all zero.
AllocationResult allocate_proportional_or_uniform(std::span<const double> ctr,
                                                  double quota);

// Water-filling for general lambda: bisection on phi so that
// sum_i max(0, p_i - phi) / (2 lambda) = q, then an exact polish on the
// resulting active set. Throws NumericalError if bisection fails to settle.
AllocationResult solve_kkt(const AllocationProblem& problem);

// Euclidean projection of v onto {x >= 0, sum(x) = total}; sort based.
std::vector<double> project_to_simplex(std::span<const double> v, double total);

// Projected gradient descent on the allocation objective. step_size <= 0
// picks 1 / (4 lambda). Iterates until successive iterates differ by at most
// 1e-10 or `steps` is exhausted.
AllocationResult brute_force_qp(const AllocationProblem& problem,
                                std::size_t steps = 100000,
                                double step_size = 0.0);

}  // namespace tim
