#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "varmdp/linalg.hpp"
#include "varmdp/mdp.hpp"

namespace varmdp {

struct ChainDiagnosis {
  bool unichain = false;
  bool aperiodic = false;  // every recurrent class aperiodic
  std::vector<std::vector<std::int32_t>> recurrent_classes;  // each ascending
  std::vector<std::int32_t> transient_states;                // ascending
  std::vector<std::int64_t> periods;                         // per recurrent class
};

// Classifies the chain induced by a policy: strongly connected components of
// the positive-probability graph, closed components are recurrent, cycle-gcd
// periods per recurrent class.
ChainDiagnosis diagnose_chain(const FiniteMdp& mdp, const StationaryPolicy& policy);

struct StationaryDistribution {
  std::vector<double> state_prob;     // zero on transient states, sums to 1
  std::vector<std::int32_t> support;  // the recurrent class, ascending
};

struct ChainOptions {
  // Dense linear solve up to this many states, power iteration above.
  std::size_t dense_threshold = 2000;
  double tol = 1e-12;
  long long max_power_iterations = 200000;
  long long max_rvi_iterations = 200000;
};

struct GainBias {
  double gain = 0.0;
  std::vector<double> bias;  // bias[0] pinned to 0
};

// Per-policy linear systems. With reference state 0 the gain/bias equations
// read A x = r where A = [1 | columns 1..S-1 of (I - P)] and
// x = (gain, bias_1, ..., bias_{S-1}); the stationary balance equations with
// the state-0 equation replaced by normalization are exactly A^T pi = e_0.
// One LU factorization per policy answers both solves. Above the dense
// threshold the fallbacks are power iteration (stationary) and relative value
// iteration (bias).
class PolicyChainSolver {
 public:
  // Throws MultichainError when the induced chain has several recurrent
  // classes. Periodic unichains are accepted here; stationary() refuses them.
  PolicyChainSolver(const FiniteMdp& mdp, const StationaryPolicy& policy,
                    const ChainOptions& opts = {});

  const ChainDiagnosis& diagnosis() const { return diag_; }
  const StationaryPolicy& policy() const { return policy_; }

  // Limiting distribution; PeriodicError when the recurrent class is periodic.
  StationaryDistribution stationary() const;

  // reward_per_state[s] is the reward of (s, policy(s)).
  GainBias gain_bias(const std::vector<double>& reward_per_state) const;

 private:
  StationaryDistribution stationary_power() const;

  const FiniteMdp* mdp_;
  StationaryPolicy policy_;
  ChainOptions opts_;
  ChainDiagnosis diag_;
  std::unique_ptr<linalg::DenseLu> lu_;
};

// MultichainError or PeriodicError when the limiting distribution does not
// exist; otherwise the unique stationary distribution of the induced chain.
StationaryDistribution stationary_distribution(const FiniteMdp& mdp,
                                               const StationaryPolicy& policy,
                                               const ChainOptions& opts = {});

}  // namespace varmdp
