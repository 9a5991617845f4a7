#pragma once

#include <cstdint>
#include <vector>

#include "varmdp/chain.hpp"
#include "varmdp/mdp.hpp"

namespace varmdp {

enum class Sense { minimize, maximize };

// Indicator-reward average MDP over the base instance: the reward of (s, a)
// is 1 when r(s, a) <= lambda, else 0, so the optimal gain is the extremal
// stationary CDF value at lambda. The base instance must outlive this view.
struct ThresholdMdp {
  const FiniteMdp* base = nullptr;
  double lambda = 0.0;
  Sense sense = Sense::minimize;
  std::vector<double> indicator;  // per flat pair id of base

  double indicator_of(std::int32_t s, std::int32_t a) const {
    return indicator[base->pair_index(s, a)];
  }
};

ThresholdMdp threshold_mdp(const FiniteMdp& mdp, double lambda, Sense sense);

struct AvgOptions {
  long long max_iterations = 10000;
  double improvement_slack = 1e-9;
  ChainOptions chain;
};

// Gain and bias of one policy under the indicator rewards.
GainBias evaluate_gain(const ThresholdMdp& tmdp, const StationaryPolicy& policy,
                       const ChainOptions& opts = {});

// One Howard improvement pass: per state the action optimizing
// indicator(s,a) + sum_s' P(s'|s,a) bias(s') in tmdp.sense. Ties keep the
// lowest action index; the incumbent survives unless beaten by more than the
// slack.
StationaryPolicy improve_rule(const ThresholdMdp& tmdp, const StationaryPolicy& policy,
                              const std::vector<double>& bias, double slack = 1e-9);

struct AverageSolveResult {
  double gain = 0.0;
  StationaryPolicy policy;
  std::vector<double> bias;
  int iterations = 0;  // Howard evaluate/improve rounds
};

// Howard policy iteration from the given initial policy. Every visited policy
// must induce a unichain (MultichainError otherwise). init_solver, when
// given, must be a solver for init and is reused for the first evaluation.
AverageSolveResult solve_average(const ThresholdMdp& tmdp, const StationaryPolicy& init,
                                 const AvgOptions& opts = {},
                                 const PolicyChainSolver* init_solver = nullptr);

}  // namespace varmdp
