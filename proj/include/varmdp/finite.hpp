#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "varmdp/augmented.hpp"
#include "varmdp/avg.hpp"
#include "varmdp/mdp.hpp"
#include "varmdp/trace.hpp"

namespace varmdp {

// CDF of the T-step accumulated reward of one tracking policy from a fixed
// start state. Support ticks are exact; the tail from the last massive point
// is snapped to exactly 1 so quantile scans at alpha = 1 stop at the maximum
// achieved sum.
struct FiniteCdf {
  std::vector<std::int64_t> ticks;
  std::vector<double> values;
  std::vector<double> cdf;
};

FiniteCdf history_cdf(const FiniteMdp& mdp, const HistoryPolicy& policy, std::int32_t s0);

// Smallest achieved sum whose CDF reaches alpha; exact comparison, tolerance
// enters only through solver stop rules.
double finite_var(const FiniteMdp& mdp, const HistoryPolicy& policy, double alpha,
                  std::int32_t s0);

struct FiniteSolveResult {
  double var_star = 0.0;
  HistoryPolicy policy_star;
  std::vector<TraceEntry> trace;
  bool certified = false;
};

struct FiniteOptions {
  double epsilon_alpha = 1e-9;
  // Cap on accepted improvement steps; defaults to the number of achievable
  // sums, which the strictly monotone level sequence cannot exceed.
  std::optional<long long> max_outer;
  // Default start: lowest admissible actions tracking from T * r_max.
  std::optional<HistoryPolicy> init;
};

// Level iteration on the quantile: evaluate the current tracking policy's
// value-at-risk, read the optimal threshold probability there off one cached
// full-grid backward pass, and re-anchor the optimal augmented policy at the
// new level while it stays on the improvable side of alpha.
FiniteSolveResult solve_finite_max(const FiniteMdp& mdp, int T, double alpha, std::int32_t s0,
                                   const FiniteOptions& opts = {});
FiniteSolveResult solve_finite_min(const FiniteMdp& mdp, int T, double alpha, std::int32_t s0,
                                   const FiniteOptions& opts = {});

// Level scan answered for every start state from the same single backward
// pass: the first grid level whose optimal threshold probability reaches
// alpha, with the matching anchored policy.
struct FiniteBaselineResult {
  std::vector<double> var_star;
  std::vector<HistoryPolicy> policy;
};

FiniteBaselineResult baseline_finite(const FiniteMdp& mdp, int T, double alpha, Sense objective,
                                     double epsilon_alpha = 1e-9);

// Certificate check for a concrete tracking policy: max sense tests the
// optimal threshold probability at the policy's value-at-risk against
// alpha - eps, min sense tests it at the left predecessor among the sums
// reachable from s0 against alpha + eps.
bool certify_finite(const FiniteMdp& mdp, int T, const HistoryPolicy& policy, double alpha,
                    std::int32_t s0, Sense objective, double epsilon_alpha = 1e-9);

}  // namespace varmdp
