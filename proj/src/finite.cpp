#include "varmdp/finite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "varmdp/errors.hpp"

namespace varmdp {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0) || !(alpha <= 1.0))
    throw Error("alpha must lie in (0, 1], got " + std::to_string(alpha));
}

void check_state(const FiniteMdp& mdp, std::int32_t s0) {
  if (s0 < 0 || s0 >= mdp.num_states())
    throw Error("state " + std::to_string(s0) + " out of range");
}

std::int64_t first_tick_at_alpha(const FiniteCdf& cdf, double alpha) {
  for (std::size_t i = 0; i < cdf.cdf.size(); ++i)
    if (cdf.cdf[i] >= alpha) return cdf.ticks[i];
  throw Error("CDF never reaches alpha; mass is missing");
}

// Largest reachable sum strictly below tick; one grid step down when tick is
// at or below the reachable minimum.
std::int64_t predecessor_tick(const std::vector<std::int64_t>& sums, std::int64_t tick) {
  const auto it = std::lower_bound(sums.begin(), sums.end(), tick);
  if (it == sums.begin()) return tick - 1;
  return *(it - 1);
}

}  // namespace

FiniteCdf history_cdf(const FiniteMdp& mdp, const HistoryPolicy& policy, std::int32_t s0) {
  const auto mass = history_pmf(mdp, policy, s0);
  if (mass.empty()) throw Error("empty accumulated-reward distribution");
  FiniteCdf out;
  out.ticks.reserve(mass.size());
  out.values.reserve(mass.size());
  out.cdf.reserve(mass.size());
  double running = 0.0;
  for (const auto& [tick, p] : mass) {
    running = std::min(1.0, running + p);
    out.ticks.push_back(tick);
    out.values.push_back(policy.base.grid.value_of(tick));
    out.cdf.push_back(running);
  }
  if (std::abs(running - 1.0) > 1e-9)
    throw Error("accumulated-reward mass sums to " + std::to_string(running) +
                ", expected 1 within 1e-9");
  out.cdf.back() = 1.0;
  return out;
}

double finite_var(const FiniteMdp& mdp, const HistoryPolicy& policy, double alpha,
                  std::int32_t s0) {
  check_alpha(alpha);
  const FiniteCdf cdf = history_cdf(mdp, policy, s0);
  return policy.base.grid.value_of(first_tick_at_alpha(cdf, alpha));
}

namespace {

FiniteSolveResult finite_iterate(const FiniteMdp& mdp, int T, double alpha, std::int32_t s0,
                                 Sense objective, const FiniteOptions& opts) {
  check_alpha(alpha);
  check_state(mdp, s0);
  const auto t0 = Clock::now();
  const LambdaGrid grid = build_grid(mdp, T);
  const Sense inner_sense = objective == Sense::maximize ? Sense::minimize : Sense::maximize;
  const double eps = opts.epsilon_alpha;

  // The inner optimum is level-free: one backward pass answers every level,
  // so iterations only re-anchor its policy and re-read the table.
  const auto [table, opt_policy] = solve_augmented(mdp, grid, inner_sense);
  const std::vector<std::int64_t> sums =
      objective == Sense::minimize ? reachable_sums(mdp, T, s0) : std::vector<std::int64_t>{};

  HistoryPolicy u;
  if (opts.init) {
    u = *opts.init;
    if (u.base.grid.T != T || u.base.grid.lo > grid.lo || u.base.grid.hi < grid.hi)
      throw Error("initial policy grid does not cover the solve grid");
    if (u.base.num_states != mdp.num_states())
      throw Error("initial policy covers a different state count");
  } else {
    u = realize_history_policy(constant_policy(mdp, grid),
                               grid.value_of(static_cast<std::int64_t>(T) * grid.r_max_tick));
  }

  const long long cap = opts.max_outer.value_or(
      static_cast<long long>(T) * (grid.r_max_tick - grid.r_min_tick) + 1);

  FiniteSolveResult result;
  long long improvements = 0;
  for (int k = 0;; ++k) {
    const FiniteCdf cdf = history_cdf(mdp, u, s0);
    const std::int64_t var_tick = first_tick_at_alpha(cdf, alpha);
    const std::int64_t level_tick =
        objective == Sense::maximize ? var_tick : predecessor_tick(sums, var_tick);
    const double fstar = table.at(0, s0, level_tick);
    result.trace.push_back({k, grid.value_of(level_tick), fstar, 0, ms_since(t0)});

    const bool improvable =
        objective == Sense::maximize ? fstar < alpha - eps : fstar >= alpha + eps;
    if (!improvable) {
      result.var_star = grid.value_of(var_tick);
      result.policy_star = std::move(u);
      result.certified = true;
      return result;
    }
    if (++improvements > cap)
      throw IterationCapExceeded("no certificate after " + std::to_string(cap) +
                                 " accepted improvements");
    u = realize_history_policy(opt_policy, grid.value_of(level_tick));
  }
}

}  // namespace

FiniteSolveResult solve_finite_max(const FiniteMdp& mdp, int T, double alpha, std::int32_t s0,
                                   const FiniteOptions& opts) {
  return finite_iterate(mdp, T, alpha, s0, Sense::maximize, opts);
}

FiniteSolveResult solve_finite_min(const FiniteMdp& mdp, int T, double alpha, std::int32_t s0,
                                   const FiniteOptions& opts) {
  return finite_iterate(mdp, T, alpha, s0, Sense::minimize, opts);
}

FiniteBaselineResult baseline_finite(const FiniteMdp& mdp, int T, double alpha, Sense objective,
                                     double epsilon_alpha) {
  check_alpha(alpha);
  const LambdaGrid grid = build_grid(mdp, T);
  const Sense inner_sense = objective == Sense::maximize ? Sense::minimize : Sense::maximize;
  const auto [table, opt_policy] = solve_augmented(mdp, grid, inner_sense);
  const std::int64_t scan_lo = static_cast<std::int64_t>(T) * grid.r_min_tick;
  const std::int64_t scan_hi = static_cast<std::int64_t>(T) * grid.r_max_tick;

  FiniteBaselineResult result;
  result.var_star.reserve(mdp.num_states());
  result.policy.reserve(mdp.num_states());
  for (std::int32_t s0 = 0; s0 < mdp.num_states(); ++s0) {
    std::int64_t star = scan_hi;
    for (std::int64_t tick = scan_lo; tick <= scan_hi; ++tick) {
      if (table.at(0, s0, tick) >= alpha - epsilon_alpha) {
        star = tick;
        break;
      }
    }
    result.var_star.push_back(grid.value_of(star));
    if (objective == Sense::maximize) {
      // Anchoring one reachable step below the optimum forces the realized
      // policy's quantile up onto it; at the reachable minimum every policy
      // is already optimal and the anchor stays put.
      const std::int64_t pred = predecessor_tick(reachable_sums(mdp, T, s0), star);
      const std::int64_t anchor = grid.contains(pred) ? pred : star;
      result.policy.push_back(realize_history_policy(opt_policy, grid.value_of(anchor)));
    } else {
      result.policy.push_back(realize_history_policy(opt_policy, grid.value_of(star)));
    }
  }
  return result;
}

bool certify_finite(const FiniteMdp& mdp, int T, const HistoryPolicy& policy, double alpha,
                    std::int32_t s0, Sense objective, double epsilon_alpha) {
  check_alpha(alpha);
  check_state(mdp, s0);
  if (policy.base.grid.T != T)
    throw Error("policy horizon " + std::to_string(policy.base.grid.T) +
                " does not match T = " + std::to_string(T));
  const LambdaGrid grid = build_grid(mdp, T);
  const Sense inner_sense = objective == Sense::maximize ? Sense::minimize : Sense::maximize;
  const ValueTable table = solve_augmented(mdp, grid, inner_sense).first;
  const FiniteCdf cdf = history_cdf(mdp, policy, s0);
  const std::int64_t var_tick = first_tick_at_alpha(cdf, alpha);
  if (objective == Sense::maximize)
    return table.at(0, s0, var_tick) >= alpha - epsilon_alpha;
  const std::int64_t pred = predecessor_tick(reachable_sums(mdp, T, s0), var_tick);
  return table.at(0, s0, pred) < alpha + epsilon_alpha;
}

}  // namespace varmdp
