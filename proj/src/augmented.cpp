#include "varmdp/augmented.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "varmdp/errors.hpp"
#include "varmdp/kernels.hpp"

namespace varmdp {

namespace {

constexpr std::int64_t kMaxGridCells = 50000000;

std::string tick_text(std::int64_t tick) { return std::to_string(tick); }

// Reward ticks per flat pair id, so backups never re-round in the inner loop.
std::vector<std::int64_t> pair_reward_ticks(const FiniteMdp& mdp) {
  std::vector<std::int64_t> ticks(mdp.pair_count());
  for (std::int32_t s = 0; s < mdp.num_states(); ++s)
    for (const std::int32_t a : mdp.admissible(s))
      ticks[static_cast<std::size_t>(mdp.pair_index(s, a))] = mdp.reward_tick(s, a);
  return ticks;
}

LambdaGrid build_grid_ticks(const FiniteMdp& mdp, int T, std::int64_t lo0, std::int64_t hi0) {
  if (T < 1) throw Error("horizon must be at least 1");
  const RewardSupport support = reward_support(mdp);
  if (!support.gridded()) throw MissingResolution("instance declares no reward_resolution");

  LambdaGrid grid;
  grid.resolution = *support.resolution;
  grid.T = T;
  grid.r_min_tick = support.ticks.front();
  grid.r_max_tick = support.ticks.back();
  grid.lo = lo0 - static_cast<std::int64_t>(T) * std::max<std::int64_t>(grid.r_max_tick, 0);
  grid.hi = hi0 - static_cast<std::int64_t>(T) * std::min<std::int64_t>(grid.r_min_tick, 0);
  if (grid.size() * mdp.num_states() > kMaxGridCells)
    throw CapExceeded("lambda grid of " + std::to_string(grid.size()) + " ticks x " +
                      std::to_string(mdp.num_states()) + " states exceeds the cell cap");
  return grid;
}

double scaled(const Rational& resolution, double lambda) {
  return lambda * static_cast<double>(resolution.den) / static_cast<double>(resolution.num);
}

}  // namespace

double LambdaGrid::value_of(std::int64_t tick) const {
  return static_cast<double>(tick) * static_cast<double>(resolution.num) /
         static_cast<double>(resolution.den);
}

std::int64_t LambdaGrid::floor_tick(double lambda) const {
  return static_cast<std::int64_t>(std::floor(scaled(resolution, lambda) + 1e-9));
}

LambdaGrid build_grid(const FiniteMdp& mdp, int T, double lambda0_lo, double lambda0_hi) {
  if (!(lambda0_lo <= lambda0_hi)) throw Error("empty lambda0 range");
  const RewardSupport support = reward_support(mdp);
  if (!support.gridded()) throw MissingResolution("instance declares no reward_resolution");
  const Rational res = *support.resolution;
  const std::int64_t lo0 = static_cast<std::int64_t>(std::floor(scaled(res, lambda0_lo) + 1e-9));
  const std::int64_t hi0 = -static_cast<std::int64_t>(std::floor(-scaled(res, lambda0_hi) + 1e-9));
  return build_grid_ticks(mdp, T, lo0, hi0);
}

LambdaGrid build_grid(const FiniteMdp& mdp, int T) {
  const RewardSupport support = reward_support(mdp);
  if (!support.gridded()) throw MissingResolution("instance declares no reward_resolution");
  const std::int64_t t = static_cast<std::int64_t>(T);
  return build_grid_ticks(mdp, T, t * support.ticks.front(), t * support.ticks.back());
}

double ValueTable::at(int t, std::int32_t s, std::int64_t tick) const {
  if (t < 0 || t > grid.T) throw Error("stage " + std::to_string(t) + " out of range");
  if (s < 0 || s >= num_states) throw Error("state " + std::to_string(s) + " out of range");
  if (tick >= grid.pin_hi(t)) return 1.0;
  if (tick < grid.pin_lo(t)) return 0.0;
  if (!grid.contains(tick))
    throw GridUnderflow("stage " + std::to_string(t) + " lookup at tick " + tick_text(tick) +
                        " outside grid [" + tick_text(grid.lo) + ", " + tick_text(grid.hi) + "]");
  return stages[t][grid.offset(tick) * static_cast<std::size_t>(num_states) + s];
}

std::int32_t AugmentedMarkovPolicy::action_at(const FiniteMdp& mdp, int t, std::int32_t s,
                                              std::int64_t tick) const {
  if (t < 0 || t >= grid.T) throw Error("stage " + std::to_string(t) + " out of range");
  if (grid.contains(tick))
    return stages[t][grid.offset(tick) * static_cast<std::size_t>(num_states) + s];
  // Off the stored span the value is pinned, so any admissible action serves.
  if (tick >= grid.pin_hi(t) || tick < grid.pin_lo(t)) {
    const auto& acts = mdp.admissible(s);
    if (acts.empty()) throw InfeasibleState("state " + std::to_string(s) + " has no actions");
    return acts.front();
  }
  throw GridUnderflow("stage " + std::to_string(t) + " decision at tick " + tick_text(tick) +
                      " outside grid [" + tick_text(grid.lo) + ", " + tick_text(grid.hi) + "]");
}

AugmentedMarkovPolicy constant_policy(const FiniteMdp& mdp, const LambdaGrid& grid) {
  AugmentedMarkovPolicy policy;
  policy.grid = grid;
  policy.num_states = mdp.num_states();
  std::vector<std::int32_t> base(mdp.num_states());
  for (std::int32_t s = 0; s < mdp.num_states(); ++s) {
    const auto& acts = mdp.admissible(s);
    if (acts.empty()) throw InfeasibleState("state " + std::to_string(s) + " has no actions");
    base[s] = acts.front();
  }
  std::vector<std::int32_t> stage;
  stage.reserve(static_cast<std::size_t>(grid.size()) * mdp.num_states());
  for (std::int64_t tick = grid.lo; tick <= grid.hi; ++tick)
    stage.insert(stage.end(), base.begin(), base.end());
  policy.stages.assign(static_cast<std::size_t>(grid.T), stage);
  return policy;
}

std::int32_t HistoryPolicy::action(const FiniteMdp& mdp, int t, std::int32_t s,
                                   std::int64_t acc_tick) const {
  return base.action_at(mdp, t, s, lambda0_tick - acc_tick);
}

HistoryPolicy realize_history_policy(const AugmentedMarkovPolicy& policy, double lambda0) {
  const LambdaGrid& grid = policy.grid;
  const std::int64_t tick = std::llround(scaled(grid.resolution, lambda0));
  if (std::abs(grid.value_of(tick) - lambda0) > 1e-9)
    throw Error("lambda0 " + std::to_string(lambda0) + " is not on the reward grid");
  if (!grid.contains(tick))
    throw GridUnderflow("lambda0 tick " + tick_text(tick) + " outside grid [" +
                        tick_text(grid.lo) + ", " + tick_text(grid.hi) + "]");
  HistoryPolicy u;
  u.base = policy;
  u.lambda0_tick = tick;
  u.lambda0 = grid.value_of(tick);
  return u;
}

std::vector<double> terminal_stage(const LambdaGrid& grid, std::int32_t num_states) {
  std::vector<double> v(static_cast<std::size_t>(grid.size()) * num_states);
  for (std::int64_t tick = grid.lo; tick <= grid.hi; ++tick)
    if (tick >= 0)
      std::fill_n(v.begin() + grid.offset(tick) * static_cast<std::size_t>(num_states),
                  num_states, 1.0);
  return v;
}

namespace {

// Action value at one cell. Lookups landing in the next stage's pinned
// region resolve to literal 0/1 before any floating sum, which keeps decided
// cells exact all the way down the recursion.
double action_value(const FiniteMdp& mdp, const LambdaGrid& grid, int t,
                    const std::vector<double>& v_next, std::int64_t tick, std::int64_t pair,
                    const std::vector<std::int64_t>& reward_ticks) {
  const std::int64_t next = tick - reward_ticks[static_cast<std::size_t>(pair)];
  if (next >= grid.pin_hi(t + 1)) return 1.0;
  if (next < grid.pin_lo(t + 1)) return 0.0;
  if (!grid.contains(next))
    throw GridUnderflow("stage " + std::to_string(t) + " backup reaches tick " + tick_text(next) +
                        " outside grid [" + tick_text(grid.lo) + ", " + tick_text(grid.hi) + "]");
  const std::size_t S = static_cast<std::size_t>(mdp.num_states());
  const double* slice = v_next.data() + grid.offset(next) * S;
  const TransitionRow& row = mdp.row_by_pair(pair);
  double q;
  if (row.dense()) {
    q = kernels::dot(row.probs.data(), slice, S);
  } else {
    q = 0.0;
    for (std::size_t i = 0; i < row.cols.size(); ++i) q += row.probs[i] * slice[row.cols[i]];
  }
  return q < 1.0 ? q : 1.0;
}

void check_stage_shape(const FiniteMdp& mdp, const LambdaGrid& grid, int t, std::size_t have,
                       const char* what) {
  const std::size_t want = static_cast<std::size_t>(grid.size()) * mdp.num_states();
  if (have != want)
    throw Error(std::string(what) + " at stage " + std::to_string(t) + " has " +
                std::to_string(have) + " cells, expected " + std::to_string(want));
}

}  // namespace

std::vector<double> bellman_backup(const FiniteMdp& mdp, const LambdaGrid& grid, int t,
                                   const std::vector<double>& v_next,
                                   const std::vector<std::int32_t>& rule) {
  if (t < 0 || t >= grid.T) throw Error("stage " + std::to_string(t) + " out of range");
  check_stage_shape(mdp, grid, t + 1, v_next.size(), "value stage");
  check_stage_shape(mdp, grid, t, rule.size(), "decision rule");
  const std::size_t S = static_cast<std::size_t>(mdp.num_states());
  const std::vector<std::int64_t> reward_ticks = pair_reward_ticks(mdp);
  const std::int64_t p_lo = grid.pin_lo(t);
  const std::int64_t p_hi = grid.pin_hi(t);
  std::vector<double> v(static_cast<std::size_t>(grid.size()) * S);
  for (std::int64_t tick = grid.lo; tick <= grid.hi; ++tick) {
    double* out = v.data() + grid.offset(tick) * S;
    if (tick >= p_hi) {
      std::fill_n(out, S, 1.0);
      continue;
    }
    if (tick < p_lo) continue;  // already zero
    const std::int32_t* acts = rule.data() + grid.offset(tick) * S;
    for (std::size_t s = 0; s < S; ++s) {
      const std::int64_t pair = mdp.pair_index(static_cast<std::int32_t>(s), acts[s]);
      if (pair < 0)
        throw Error("rule uses inadmissible action " + std::to_string(acts[s]) + " at state " +
                    std::to_string(s));
      out[s] = action_value(mdp, grid, t, v_next, tick, pair, reward_ticks);
    }
  }
  return v;
}

std::pair<std::vector<double>, std::vector<std::int32_t>> bellman_optimal_backup(
    const FiniteMdp& mdp, const LambdaGrid& grid, int t, const std::vector<double>& v_next,
    Sense sense) {
  if (t < 0 || t >= grid.T) throw Error("stage " + std::to_string(t) + " out of range");
  check_stage_shape(mdp, grid, t + 1, v_next.size(), "value stage");
  const std::size_t S = static_cast<std::size_t>(mdp.num_states());
  const std::vector<std::int64_t> reward_ticks = pair_reward_ticks(mdp);
  const std::int64_t p_lo = grid.pin_lo(t);
  const std::int64_t p_hi = grid.pin_hi(t);
  std::vector<double> v(static_cast<std::size_t>(grid.size()) * S);
  std::vector<std::int32_t> rule(v.size());
  for (std::int64_t tick = grid.lo; tick <= grid.hi; ++tick) {
    double* out = v.data() + grid.offset(tick) * S;
    std::int32_t* dec = rule.data() + grid.offset(tick) * S;
    const bool pinned = tick >= p_hi || tick < p_lo;
    for (std::size_t s = 0; s < S; ++s) {
      const auto& acts = mdp.admissible(static_cast<std::int32_t>(s));
      if (acts.empty())
        throw InfeasibleState("state " + std::to_string(s) + " has no actions");
      if (pinned) {
        out[s] = tick >= p_hi ? 1.0 : 0.0;
        dec[s] = acts.front();
        continue;
      }
      double best = 0.0;
      std::int32_t best_a = -1;
      for (const std::int32_t a : acts) {
        const std::int64_t pair = mdp.pair_index(static_cast<std::int32_t>(s), a);
        const double q = action_value(mdp, grid, t, v_next, tick, pair, reward_ticks);
        if (best_a < 0 || (sense == Sense::maximize ? q > best : q < best)) {
          best = q;
          best_a = a;
        }
      }
      out[s] = best;
      dec[s] = best_a;
    }
  }
  return {std::move(v), std::move(rule)};
}

ValueTable evaluate_augmented(const FiniteMdp& mdp, const AugmentedMarkovPolicy& policy) {
  if (policy.num_states != mdp.num_states())
    throw Error("policy covers " + std::to_string(policy.num_states) + " states, instance has " +
                std::to_string(mdp.num_states()));
  if (policy.stages.size() != static_cast<std::size_t>(policy.grid.T))
    throw Error("policy has " + std::to_string(policy.stages.size()) + " stages, grid horizon is " +
                std::to_string(policy.grid.T));
  ValueTable table;
  table.grid = policy.grid;
  table.num_states = mdp.num_states();
  table.stages.resize(static_cast<std::size_t>(policy.grid.T) + 1);
  table.stages[policy.grid.T] = terminal_stage(policy.grid, mdp.num_states());
  for (int t = policy.grid.T - 1; t >= 0; --t)
    table.stages[t] = bellman_backup(mdp, policy.grid, t, table.stages[t + 1], policy.stages[t]);
  return table;
}

std::pair<ValueTable, AugmentedMarkovPolicy> solve_augmented(const FiniteMdp& mdp,
                                                             const LambdaGrid& grid, Sense sense) {
  ValueTable table;
  table.grid = grid;
  table.num_states = mdp.num_states();
  table.stages.resize(static_cast<std::size_t>(grid.T) + 1);
  table.stages[grid.T] = terminal_stage(grid, mdp.num_states());
  AugmentedMarkovPolicy policy;
  policy.grid = grid;
  policy.num_states = mdp.num_states();
  policy.stages.resize(static_cast<std::size_t>(grid.T));
  for (int t = grid.T - 1; t >= 0; --t) {
    auto [v, rule] = bellman_optimal_backup(mdp, grid, t, table.stages[t + 1], sense);
    table.stages[t] = std::move(v);
    policy.stages[t] = std::move(rule);
  }
  return {std::move(table), std::move(policy)};
}

std::map<std::int64_t, double> history_pmf(const FiniteMdp& mdp, const HistoryPolicy& policy,
                                           std::int32_t s0) {
  const LambdaGrid& grid = policy.base.grid;
  if (s0 < 0 || s0 >= mdp.num_states())
    throw Error("state " + std::to_string(s0) + " out of range");
  const std::size_t S = static_cast<std::size_t>(mdp.num_states());
  const std::vector<std::int64_t> reward_ticks = pair_reward_ticks(mdp);

  // Stage t holds mass per (state, accumulated ticks); the sum axis spans
  // [t * r_min, t * r_max], indexed relative to its own base.
  std::int64_t base = 0;
  std::vector<double> cur(S, 0.0);
  cur[static_cast<std::size_t>(s0)] = 1.0;
  std::int64_t width = 1;
  for (int t = 0; t < grid.T; ++t) {
    const std::int64_t next_base = static_cast<std::int64_t>(t + 1) * grid.r_min_tick;
    const std::int64_t next_width =
        static_cast<std::int64_t>(t + 1) * (grid.r_max_tick - grid.r_min_tick) + 1;
    std::vector<double> next(static_cast<std::size_t>(next_width) * S, 0.0);
    for (std::int64_t w = 0; w < width; ++w) {
      const std::int64_t acc = base + w;
      const double* in = cur.data() + static_cast<std::size_t>(w) * S;
      for (std::size_t s = 0; s < S; ++s) {
        const double p = in[s];
        if (p == 0.0) continue;
        const std::int32_t a = policy.action(mdp, t, static_cast<std::int32_t>(s), acc);
        const std::int64_t pair = mdp.pair_index(static_cast<std::int32_t>(s), a);
        if (pair < 0)
          throw Error("policy uses inadmissible action " + std::to_string(a) + " at state " +
                      std::to_string(s));
        const std::int64_t nacc = acc + reward_ticks[static_cast<std::size_t>(pair)];
        double* out = next.data() + static_cast<std::size_t>(nacc - next_base) * S;
        const TransitionRow& row = mdp.row_by_pair(pair);
        if (row.dense()) {
          kernels::axpy(p, row.probs.data(), out, S);
        } else {
          for (std::size_t i = 0; i < row.cols.size(); ++i)
            out[row.cols[i]] += p * row.probs[i];
        }
      }
    }
    cur = std::move(next);
    base = next_base;
    width = next_width;
  }

  std::map<std::int64_t, double> mass;
  for (std::int64_t w = 0; w < width; ++w) {
    const double* in = cur.data() + static_cast<std::size_t>(w) * S;
    double total = 0.0;
    for (std::size_t s = 0; s < S; ++s) total += in[s];
    if (total > 0.0) mass[base + w] += total;
  }
  return mass;
}

namespace {

void walk_trajectories(const FiniteMdp& mdp, const HistoryPolicy& policy,
                       const std::vector<std::int64_t>& reward_ticks, int t, std::int32_t s,
                       std::int64_t acc, double prob, long long& budget,
                       std::map<std::int64_t, double>& mass) {
  if (t == policy.base.grid.T) {
    mass[acc] += prob;
    return;
  }
  if (--budget < 0) throw CapExceeded("trajectory tree exceeds the branch cap");
  const std::int32_t a = policy.action(mdp, t, s, acc);
  const std::int64_t pair = mdp.pair_index(s, a);
  if (pair < 0)
    throw Error("policy uses inadmissible action " + std::to_string(a) + " at state " +
                std::to_string(s));
  const std::int64_t nacc = acc + reward_ticks[static_cast<std::size_t>(pair)];
  const TransitionRow& row = mdp.row_by_pair(pair);
  if (row.dense()) {
    for (std::int32_t s2 = 0; s2 < mdp.num_states(); ++s2) {
      const double p = row.probs[static_cast<std::size_t>(s2)];
      if (p > 0.0) walk_trajectories(mdp, policy, reward_ticks, t + 1, s2, nacc, prob * p, budget, mass);
    }
  } else {
    for (std::size_t i = 0; i < row.cols.size(); ++i)
      if (row.probs[i] > 0.0)
        walk_trajectories(mdp, policy, reward_ticks, t + 1, row.cols[i], nacc, prob * row.probs[i],
                          budget, mass);
  }
}

}  // namespace

std::map<std::int64_t, double> trajectory_oracle(const FiniteMdp& mdp,
                                                 const HistoryPolicy& policy, std::int32_t s0,
                                                 long long cap) {
  if (s0 < 0 || s0 >= mdp.num_states())
    throw Error("state " + std::to_string(s0) + " out of range");
  const std::vector<std::int64_t> reward_ticks = pair_reward_ticks(mdp);
  std::map<std::int64_t, double> mass;
  long long budget = cap;
  walk_trajectories(mdp, policy, reward_ticks, 0, s0, 0, 1.0, budget, mass);
  return mass;
}

std::vector<std::int64_t> reachable_sums(const FiniteMdp& mdp, int T, std::int32_t s0) {
  if (T < 0) throw Error("horizon must be nonnegative");
  if (s0 < 0 || s0 >= mdp.num_states())
    throw Error("state " + std::to_string(s0) + " out of range");
  if (T == 0) return {0};
  const RewardSupport support = reward_support(mdp);
  if (!support.gridded()) throw MissingResolution("instance declares no reward_resolution");
  const std::int64_t r_min = support.ticks.front();
  const std::int64_t r_max = support.ticks.back();
  const std::size_t S = static_cast<std::size_t>(mdp.num_states());

  std::int64_t base = 0;
  std::int64_t width = 1;
  std::vector<char> cur(S, 0);
  cur[static_cast<std::size_t>(s0)] = 1;
  for (int t = 0; t < T; ++t) {
    const std::int64_t next_base = static_cast<std::int64_t>(t + 1) * r_min;
    const std::int64_t next_width = static_cast<std::int64_t>(t + 1) * (r_max - r_min) + 1;
    std::vector<char> next(static_cast<std::size_t>(next_width) * S, 0);
    for (std::int64_t w = 0; w < width; ++w) {
      const std::int64_t acc = base + w;
      const char* in = cur.data() + static_cast<std::size_t>(w) * S;
      for (std::size_t s = 0; s < S; ++s) {
        if (!in[s]) continue;
        for (const std::int32_t a : mdp.admissible(static_cast<std::int32_t>(s))) {
          const std::int64_t pair = mdp.pair_index(static_cast<std::int32_t>(s), a);
          const std::int64_t nacc = acc + mdp.reward_tick(static_cast<std::int32_t>(s), a);
          char* out = next.data() + static_cast<std::size_t>(nacc - next_base) * S;
          const TransitionRow& row = mdp.row_by_pair(pair);
          if (row.dense()) {
            for (std::size_t s2 = 0; s2 < S; ++s2)
              if (row.probs[s2] > 0.0) out[s2] = 1;
          } else {
            for (std::size_t i = 0; i < row.cols.size(); ++i)
              if (row.probs[i] > 0.0) out[row.cols[i]] = 1;
          }
        }
      }
    }
    cur = std::move(next);
    base = next_base;
    width = next_width;
  }

  std::vector<std::int64_t> sums;
  for (std::int64_t w = 0; w < width; ++w) {
    const char* in = cur.data() + static_cast<std::size_t>(w) * S;
    bool any = false;
    for (std::size_t s = 0; s < S && !any; ++s) any = in[s] != 0;
    if (any) sums.push_back(base + w);
  }
  return sums;
}

}  // namespace varmdp
