#include "varmdp/avg.hpp"

#include <cmath>
#include <memory>

#include "varmdp/errors.hpp"
#include "varmdp/kernels.hpp"

namespace varmdp {
namespace {

std::vector<double> indicator_under(const ThresholdMdp& tmdp, const StationaryPolicy& u) {
  const FiniteMdp& mdp = *tmdp.base;
  std::vector<double> r(mdp.num_states());
  for (std::int32_t s = 0; s < mdp.num_states(); ++s)
    r[s] = tmdp.indicator[mdp.pair_index(s, u.action[s])];
  return r;
}

double action_value(const ThresholdMdp& tmdp, std::int32_t s, std::int32_t a,
                    const std::vector<double>& bias) {
  const FiniteMdp& mdp = *tmdp.base;
  const TransitionRow& row = mdp.row(s, a);
  double exp_bias;
  if (row.dense()) {
    exp_bias = kernels::dot(row.probs.data(), bias.data(), bias.size());
  } else {
    exp_bias = 0.0;
    for (std::size_t k = 0; k < row.nnz(); ++k) exp_bias += row.probs[k] * bias[row.cols[k]];
  }
  return tmdp.indicator_of(s, a) + exp_bias;
}

}  // namespace

ThresholdMdp threshold_mdp(const FiniteMdp& mdp, double lambda, Sense sense) {
  ThresholdMdp tmdp;
  tmdp.base = &mdp;
  tmdp.lambda = lambda;
  tmdp.sense = sense;
  tmdp.indicator.resize(mdp.pair_count());
  if (mdp.reward_resolution()) {
    // Exact comparison on the integer grid; lambda itself may sit between
    // grid points, in which case the comparison floors it.
    const Rational res = *mdp.reward_resolution();
    const double scaled = lambda * static_cast<double>(res.den) / static_cast<double>(res.num);
    const std::int64_t lam_tick = static_cast<std::int64_t>(std::floor(scaled + 1e-9));
    for (std::int32_t s = 0; s < mdp.num_states(); ++s)
      for (const std::int32_t a : mdp.admissible(s))
        tmdp.indicator[mdp.pair_index(s, a)] =
            mdp.reward_tick(s, a) <= lam_tick ? 1.0 : 0.0;
  } else {
    for (std::int32_t s = 0; s < mdp.num_states(); ++s)
      for (const std::int32_t a : mdp.admissible(s))
        tmdp.indicator[mdp.pair_index(s, a)] = mdp.reward(s, a) <= lambda ? 1.0 : 0.0;
  }
  return tmdp;
}

GainBias evaluate_gain(const ThresholdMdp& tmdp, const StationaryPolicy& policy,
                       const ChainOptions& opts) {
  PolicyChainSolver solver(*tmdp.base, policy, opts);
  return solver.gain_bias(indicator_under(tmdp, policy));
}

StationaryPolicy improve_rule(const ThresholdMdp& tmdp, const StationaryPolicy& policy,
                              const std::vector<double>& bias, double slack) {
  const FiniteMdp& mdp = *tmdp.base;
  const bool maximize = tmdp.sense == Sense::maximize;
  StationaryPolicy out = policy;
  for (std::int32_t s = 0; s < mdp.num_states(); ++s) {
    const double incumbent = action_value(tmdp, s, policy.action[s], bias);
    std::int32_t best_a = -1;
    double best_q = 0.0;
    for (const std::int32_t a : mdp.admissible(s)) {
      const double q = action_value(tmdp, s, a, bias);
      if (best_a == -1 || (maximize ? q > best_q : q < best_q)) {
        best_a = a;
        best_q = q;
      }
    }
    const bool improves =
        maximize ? best_q > incumbent + slack : best_q < incumbent - slack;
    if (improves) out.action[s] = best_a;
  }
  return out;
}

AverageSolveResult solve_average(const ThresholdMdp& tmdp, const StationaryPolicy& init,
                                 const AvgOptions& opts,
                                 const PolicyChainSolver* init_solver) {
  std::unique_ptr<PolicyChainSolver> owned;
  const PolicyChainSolver* solver = init_solver;
  if (!solver) {
    owned = std::make_unique<PolicyChainSolver>(*tmdp.base, init, opts.chain);
    solver = owned.get();
  }

  StationaryPolicy cur = init;
  GainBias gb = solver->gain_bias(indicator_under(tmdp, cur));
  AverageSolveResult result;
  for (;;) {
    if (result.iterations >= opts.max_iterations)
      throw NonConvergence("policy iteration hit the cap of " +
                           std::to_string(opts.max_iterations) + " rounds");
    ++result.iterations;
    StationaryPolicy next = improve_rule(tmdp, cur, gb.bias, opts.improvement_slack);
    if (next == cur) break;
    owned = std::make_unique<PolicyChainSolver>(*tmdp.base, next, opts.chain);
    solver = owned.get();
    cur = std::move(next);
    gb = solver->gain_bias(indicator_under(tmdp, cur));
  }
  result.gain = gb.gain;
  result.policy = std::move(cur);
  result.bias = std::move(gb.bias);
  return result;
}

}  // namespace varmdp
