#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "varmdp/avg.hpp"
#include "varmdp/chain.hpp"
#include "varmdp/mdp.hpp"
#include "varmdp/trace.hpp"

namespace varmdp {

// CDF of the steady-state reward of one policy, on the instance-wide reward
// support. Mass sits only on on-policy recurrent rewards; the tail from the
// last massive point on is snapped to exactly 1 so quantile scans at alpha = 1
// stop at the on-policy maximum.
struct SteadyCdf {
  RewardSupport support;
  std::vector<double> cdf;
};

SteadyCdf steady_cdf(const FiniteMdp& mdp, const StationaryPolicy& policy,
                     const ChainOptions& opts = {});

// Same, with the pieces already at hand.
SteadyCdf steady_cdf_from(const FiniteMdp& mdp, const RewardSupport& support,
                          const StationaryPolicy& policy,
                          const StationaryDistribution& dist);

// Smallest support value whose CDF reaches alpha; the comparison is exact,
// tolerance enters only through solver stop rules.
double steady_var(const SteadyCdf& cdf, double alpha);

struct SteadySolveResult {
  double var_star = 0.0;
  StationaryPolicy policy_star;
  std::vector<TraceEntry> trace;
  bool certified = false;
};

struct SteadyOptions {
  double epsilon_alpha = 1e-9;
  // Cap on accepted improvement steps; defaults to the reward support size,
  // which the strictly monotone level sequence cannot exceed.
  std::optional<long long> max_outer;
  std::optional<StationaryPolicy> init;  // default: lowest admissible action
  AvgOptions avg;
};

// Policy iteration on the quantile itself: evaluate the current policy's
// value-at-risk, solve the indicator-reward average MDP at that level, adopt
// its optimizer while the optimal gain stays on the improvable side of alpha.
// The per-iteration level sequence is strictly monotone and the final policy
// carries the optimality certificate.
SteadySolveResult solve_steady_max(const FiniteMdp& mdp, double alpha,
                                   const SteadyOptions& opts = {});
SteadySolveResult solve_steady_min(const FiniteMdp& mdp, double alpha,
                                   const SteadyOptions& opts = {});

// Level scan: solve the indicator-reward MDP at ascending support values and
// return the first satisfied level. full_sweep keeps scanning every level
// (timing-comparison mode) instead of stopping at the first hit.
SteadySolveResult baseline_steady(const FiniteMdp& mdp, double alpha, Sense objective,
                                  const SteadyOptions& opts = {}, bool full_sweep = false);

// Certificate check for a concrete policy: max sense tests the optimal gain
// at the policy's value-at-risk against alpha - eps, min sense tests the gain
// at the left predecessor against alpha + eps.
bool certify_steady(const FiniteMdp& mdp, const StationaryPolicy& policy, double alpha,
                    Sense objective, const SteadyOptions& opts = {});

struct SteadyOracleResult {
  double var_star = 0.0;
  StationaryPolicy policy_star;
  long long evaluated = 0;
  long long skipped = 0;  // policies without a limiting distribution
};

// Enumerates every deterministic stationary policy (lexicographic order,
// first optimum kept, so ties resolve to lowest action indices). CapExceeded
// when the policy count would pass the cap.
SteadyOracleResult exhaustive_policy_oracle(const FiniteMdp& mdp, double alpha,
                                            Sense objective, long long cap = 100000,
                                            const ChainOptions& opts = {});

}  // namespace varmdp
