#include "varmdp/steady.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

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

std::size_t support_index(const RewardSupport& support, const FiniteMdp& mdp,
                          std::int32_t s, std::int32_t a) {
  if (support.gridded()) {
    const std::int64_t t = mdp.reward_tick(s, a);
    const auto it = std::lower_bound(support.ticks.begin(), support.ticks.end(), t);
    if (it == support.ticks.end() || *it != t)
      throw Error("reward tick missing from support");
    return it - support.ticks.begin();
  }
  const double r = mdp.reward(s, a);
  const auto it = std::lower_bound(support.values.begin(), support.values.end(), r - 1e-12);
  if (it == support.values.end())
    throw Error("reward value missing from support");
  return it - support.values.begin();
}

long long default_outer_cap(const SteadyOptions& opts, const RewardSupport& support) {
  if (opts.max_outer) return *opts.max_outer;
  return static_cast<long long>(support.size());
}

StationaryPolicy initial_policy(const FiniteMdp& mdp, const SteadyOptions& opts) {
  if (opts.init) {
    if (static_cast<std::int32_t>(opts.init->action.size()) != mdp.num_states())
      throw Error("initial policy size mismatch");
    return *opts.init;
  }
  return mdp.lowest_action_policy();
}

}  // namespace

SteadyCdf steady_cdf_from(const FiniteMdp& mdp, const RewardSupport& support,
                          const StationaryPolicy& policy,
                          const StationaryDistribution& dist) {
  SteadyCdf out;
  out.support = support;
  out.cdf.assign(support.size(), 0.0);
  std::size_t last_mass = 0;
  for (const std::int32_t s : dist.support) {
    const double mass = dist.state_prob[s];
    if (mass <= 0.0) continue;
    const std::size_t idx = support_index(support, mdp, s, policy.action[s]);
    out.cdf[idx] += mass;
    last_mass = std::max(last_mass, idx);
  }
  double running = 0.0;
  for (std::size_t i = 0; i < out.cdf.size(); ++i) {
    running += out.cdf[i];
    out.cdf[i] = std::min(running, 1.0);
  }
  if (std::fabs(running - 1.0) > 1e-9)
    throw Error("steady CDF mass " + std::to_string(running) + " != 1");
  for (std::size_t i = last_mass; i < out.cdf.size(); ++i) out.cdf[i] = 1.0;
  for (std::size_t i = 1; i < out.cdf.size(); ++i)
    out.cdf[i] = std::max(out.cdf[i], out.cdf[i - 1]);
  return out;
}

SteadyCdf steady_cdf(const FiniteMdp& mdp, const StationaryPolicy& policy,
                     const ChainOptions& opts) {
  const RewardSupport support = reward_support(mdp);
  const StationaryDistribution dist = stationary_distribution(mdp, policy, opts);
  return steady_cdf_from(mdp, support, policy, dist);
}

double steady_var(const SteadyCdf& cdf, double alpha) {
  check_alpha(alpha);
  for (std::size_t i = 0; i < cdf.cdf.size(); ++i)
    if (cdf.cdf[i] >= alpha) return cdf.support.values[i];
  throw Error("CDF never reaches alpha; mass is missing");
}

namespace {

SteadySolveResult steady_iterate(const FiniteMdp& mdp, double alpha, Sense objective,
                                 const SteadyOptions& opts) {
  check_alpha(alpha);
  const RewardSupport support = reward_support(mdp);
  const Sense inner_sense =
      objective == Sense::maximize ? Sense::minimize : Sense::maximize;
  const double eps = opts.epsilon_alpha;
  const long long cap = default_outer_cap(opts, support);

  StationaryPolicy u = initial_policy(mdp, opts);
  SteadySolveResult result;
  long long improvements = 0;
  for (int k = 0;; ++k) {
    const auto t0 = Clock::now();
    PolicyChainSolver solver(mdp, u, opts.avg.chain);
    const StationaryDistribution dist = solver.stationary();
    const SteadyCdf cdf = steady_cdf_from(mdp, support, u, dist);
    const double var_u = steady_var(cdf, alpha);
    const double lambda_k = objective == Sense::maximize
                                ? var_u
                                : left_predecessor(var_u, support);
    const ThresholdMdp tmdp = threshold_mdp(mdp, lambda_k, inner_sense);
    const AverageSolveResult inner = solve_average(tmdp, u, opts.avg, &solver);
    result.trace.push_back({k, lambda_k, inner.gain, inner.iterations, ms_since(t0)});

    const bool improvable = objective == Sense::maximize
                                ? inner.gain < alpha - eps
                                : inner.gain >= alpha + eps;
    if (!improvable) {
      result.var_star = var_u;
      result.policy_star = std::move(u);
      result.certified = true;
      return result;
    }
    if (++improvements > cap)
      throw IterationCapExceeded("steady solve exceeded " + std::to_string(cap) +
                                 " improvement steps");
    u = inner.policy;
  }
}

}  // namespace

SteadySolveResult solve_steady_max(const FiniteMdp& mdp, double alpha,
                                   const SteadyOptions& opts) {
  return steady_iterate(mdp, alpha, Sense::maximize, opts);
}

SteadySolveResult solve_steady_min(const FiniteMdp& mdp, double alpha,
                                   const SteadyOptions& opts) {
  return steady_iterate(mdp, alpha, Sense::minimize, opts);
}

SteadySolveResult baseline_steady(const FiniteMdp& mdp, double alpha, Sense objective,
                                  const SteadyOptions& opts, bool full_sweep) {
  check_alpha(alpha);
  const RewardSupport support = reward_support(mdp);
  const Sense inner_sense =
      objective == Sense::maximize ? Sense::minimize : Sense::maximize;
  const double eps = opts.epsilon_alpha;

  SteadySolveResult result;
  StationaryPolicy warm = initial_policy(mdp, opts);
  std::optional<std::size_t> found;
  std::optional<AverageSolveResult> found_inner;
  for (std::size_t i = 0; i < support.size(); ++i) {
    const auto t0 = Clock::now();
    const ThresholdMdp tmdp = threshold_mdp(mdp, support.values[i], inner_sense);
    AverageSolveResult inner = solve_average(tmdp, warm, opts.avg);
    warm = inner.policy;
    result.trace.push_back({static_cast<int>(i), support.values[i], inner.gain,
                            inner.iterations, ms_since(t0)});
    if (!found && inner.gain >= alpha - eps) {
      found = i;
      found_inner = std::move(inner);
      if (!full_sweep) break;
    }
  }
  if (!found)
    throw Error("level scan never satisfied alpha; CDF mass is missing");

  const std::size_t star = *found;
  result.var_star = support.values[star];
  result.certified = true;
  if (objective == Sense::maximize) {
    if (star == 0) {
      // Every policy's value-at-risk is the support minimum here.
      result.policy_star = initial_policy(mdp, opts);
    } else {
      const double pred = support.values[star - 1];
      const ThresholdMdp tmdp = threshold_mdp(mdp, pred, Sense::minimize);
      result.policy_star = solve_average(tmdp, found_inner->policy, opts.avg).policy;
    }
  } else {
    result.policy_star = found_inner->policy;
  }
  return result;
}

bool certify_steady(const FiniteMdp& mdp, const StationaryPolicy& policy, double alpha,
                    Sense objective, const SteadyOptions& opts) {
  check_alpha(alpha);
  const RewardSupport support = reward_support(mdp);
  PolicyChainSolver solver(mdp, policy, opts.avg.chain);
  const StationaryDistribution dist = solver.stationary();
  const SteadyCdf cdf = steady_cdf_from(mdp, support, policy, dist);
  const double var_u = steady_var(cdf, alpha);
  if (objective == Sense::maximize) {
    const ThresholdMdp tmdp = threshold_mdp(mdp, var_u, Sense::minimize);
    const AverageSolveResult inner = solve_average(tmdp, policy, opts.avg, &solver);
    return inner.gain >= alpha - opts.epsilon_alpha;
  }
  const double pred = left_predecessor(var_u, support);
  const ThresholdMdp tmdp = threshold_mdp(mdp, pred, Sense::maximize);
  const AverageSolveResult inner = solve_average(tmdp, policy, opts.avg, &solver);
  return inner.gain < alpha + opts.epsilon_alpha;
}

SteadyOracleResult exhaustive_policy_oracle(const FiniteMdp& mdp, double alpha,
                                            Sense objective, long long cap,
                                            const ChainOptions& opts) {
  check_alpha(alpha);
  const std::int32_t S = mdp.num_states();
  double total = 1.0;
  for (std::int32_t s = 0; s < S; ++s) {
    if (mdp.admissible(s).empty())
      throw InfeasibleState("state " + std::to_string(s) + " has no admissible action");
    total *= static_cast<double>(mdp.admissible(s).size());
    if (total > static_cast<double>(cap))
      throw CapExceeded("policy space larger than cap " + std::to_string(cap));
  }

  const RewardSupport support = reward_support(mdp);
  SteadyOracleResult result;
  std::vector<std::size_t> digit(S, 0);
  StationaryPolicy u;
  u.action.resize(S);
  bool have_best = false;
  for (;;) {
    for (std::int32_t s = 0; s < S; ++s) u.action[s] = mdp.admissible(s)[digit[s]];
    try {
      const StationaryDistribution dist = stationary_distribution(mdp, u, opts);
      const SteadyCdf cdf = steady_cdf_from(mdp, support, u, dist);
      const double v = steady_var(cdf, alpha);
      ++result.evaluated;
      const bool better = !have_best || (objective == Sense::maximize
                                             ? v > result.var_star
                                             : v < result.var_star);
      if (better) {
        result.var_star = v;
        result.policy_star = u;
        have_best = true;
      }
    } catch (const MultichainError&) {
      ++result.skipped;
    } catch (const PeriodicError&) {
      ++result.skipped;
    }
    // Lexicographic odometer: last state fastest.
    std::int32_t s = S - 1;
    for (; s >= 0; --s) {
      if (++digit[s] < mdp.admissible(s).size()) break;
      digit[s] = 0;
    }
    if (s < 0) break;
  }
  if (!have_best)
    throw Error("no policy induces a limiting distribution; nothing to rank");
  return result;
}

}  // namespace varmdp
