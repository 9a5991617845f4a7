#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "varmdp/avg.hpp"
#include "varmdp/mdp.hpp"

namespace varmdp {

// Remaining-goal axis for the augmented state (s, lambda). Everything runs on
// integer multiples of the declared reward resolution; [lo, hi] is the stored
// tick span. Values outside the span are still answerable whenever they fall
// outside the remaining-sum window [pin_lo(t), pin_hi(t)): at most
// (T - t) * r_max can still accrue, so the threshold event is decided there.
struct LambdaGrid {
  Rational resolution;
  int T = 0;
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  std::int64_t r_min_tick = 0;
  std::int64_t r_max_tick = 0;

  std::int64_t size() const { return hi - lo + 1; }
  bool contains(std::int64_t tick) const { return tick >= lo && tick <= hi; }
  std::size_t offset(std::int64_t tick) const { return static_cast<std::size_t>(tick - lo); }
  double value_of(std::int64_t tick) const;
  // Grid tick at or just below lambda.
  std::int64_t floor_tick(double lambda) const;

  // Window of achievable remaining sums over stages t..T-1. A value is
  // pinned to 1 at ticks >= pin_hi(t) and to 0 below pin_lo(t). At t = T the
  // window is empty and the pins reproduce the terminal indicator I{0 <= l}.
  std::int64_t pin_lo(int t) const { return static_cast<std::int64_t>(T - t) * r_min_tick; }
  std::int64_t pin_hi(int t) const { return static_cast<std::int64_t>(T - t) * r_max_tick; }
};

// Grid covering every remaining goal reachable from a starting target in
// [lambda0_lo, lambda0_hi] through lambda' = lambda - r. MissingResolution
// when the instance declares no reward grid.
LambdaGrid build_grid(const FiniteMdp& mdp, int T, double lambda0_lo, double lambda0_hi);

// Convenience span serving every achievable T-step sum as a starting target.
LambdaGrid build_grid(const FiniteMdp& mdp, int T);

// V_t(s, lambda), stage-major; each stage stores lambda-major slices of all
// states so a transition row dots a contiguous span. at() answers pinned
// ticks outside the stored span and throws GridUnderflow for the rest.
struct ValueTable {
  LambdaGrid grid;
  std::int32_t num_states = 0;
  std::vector<std::vector<double>> stages;  // [t][offset(tick) * S + s]

  double at(int t, std::int32_t s, std::int64_t tick) const;
};

// Stage decision rules on the grid. Cells in pinned regions carry the lowest
// admissible action (every action is optimal where the value is constant).
struct AugmentedMarkovPolicy {
  LambdaGrid grid;
  std::int32_t num_states = 0;
  std::vector<std::vector<std::int32_t>> stages;  // [t][offset(tick) * S + s], t < T

  std::int32_t action_at(const FiniteMdp& mdp, int t, std::int32_t s, std::int64_t tick) const;
};

// Lowest admissible action at every augmented state; the default start.
AugmentedMarkovPolicy constant_policy(const FiniteMdp& mdp, const LambdaGrid& grid);

// The remaining-goal tracker: at stage t with accumulated reward acc the
// decision is base's action at (s, lambda0 - acc).
struct HistoryPolicy {
  AugmentedMarkovPolicy base;
  double lambda0 = 0.0;
  std::int64_t lambda0_tick = 0;

  std::int32_t action(const FiniteMdp& mdp, int t, std::int32_t s, std::int64_t acc_tick) const;
};

// lambda0 must sit on the grid of the policy.
HistoryPolicy realize_history_policy(const AugmentedMarkovPolicy& policy, double lambda0);

// Terminal stage V_T(s, lambda) = I{0 <= lambda} laid out on the grid.
std::vector<double> terminal_stage(const LambdaGrid& grid, std::int32_t num_states);

// One evaluation step: V_t(s,l) = sum_s' P(s'|s, rule(s,l)) V_{t+1}(s', l - r).
// Lookups landing in a pinned region contribute exactly 0 or 1; off-grid
// lookups inside the window throw GridUnderflow.
std::vector<double> bellman_backup(const FiniteMdp& mdp, const LambdaGrid& grid, int t,
                                   const std::vector<double>& v_next,
                                   const std::vector<std::int32_t>& rule);

// Optimality step in the given sense; argopt ties resolve to the lowest
// action index, pinned cells record the lowest admissible action.
std::pair<std::vector<double>, std::vector<std::int32_t>> bellman_optimal_backup(
    const FiniteMdp& mdp, const LambdaGrid& grid, int t, const std::vector<double>& v_next,
    Sense sense);

// Full backward pass under a fixed augmented policy; stage 0 of the result
// carries F^u(s, lambda0) for the policy realized at each grid lambda0.
ValueTable evaluate_augmented(const FiniteMdp& mdp, const AugmentedMarkovPolicy& policy);

// Backward optimality pass over the whole grid, all starting targets at once.
std::pair<ValueTable, AugmentedMarkovPolicy> solve_augmented(const FiniteMdp& mdp,
                                                             const LambdaGrid& grid,
                                                             Sense sense);

// Exact pmf of the T-step accumulated reward (as ticks) under the tracking
// policy from s0, by stage-wise forward propagation over (state, sum) cells.
std::map<std::int64_t, double> history_pmf(const FiniteMdp& mdp, const HistoryPolicy& policy,
                                           std::int32_t s0);

// Same pmf by full trajectory-tree expansion; CapExceeded when the tree
// exceeds the branch cap. Test oracle for history_pmf and the tables.
std::map<std::int64_t, double> trajectory_oracle(const FiniteMdp& mdp,
                                                 const HistoryPolicy& policy, std::int32_t s0,
                                                 long long cap = 10000000);

// Ticks of every T-step sum reachable from s0 with positive probability
// under some admissible action sequence, ascending.
std::vector<std::int64_t> reachable_sums(const FiniteMdp& mdp, int T, std::int32_t s0);

}  // namespace varmdp
