#include "varmdp/chain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "varmdp/errors.hpp"
#include "varmdp/kernels.hpp"

namespace varmdp {
namespace {

struct InducedGraph {
  std::vector<std::size_t> offset;  // S + 1
  std::vector<std::int32_t> adj;
};

InducedGraph induced_graph(const FiniteMdp& mdp, const StationaryPolicy& policy) {
  const std::int32_t S = mdp.num_states();
  if (static_cast<std::int32_t>(policy.action.size()) != S)
    throw Error("policy size does not match num_states");
  InducedGraph g;
  g.offset.assign(S + 1, 0);
  for (std::int32_t s = 0; s < S; ++s) {
    const TransitionRow& row = mdp.row(s, policy.action[s]);
    std::size_t n = 0;
    if (row.dense()) {
      for (std::int32_t j = 0; j < S; ++j)
        if (row.probs[j] > 0.0) ++n;
    } else {
      for (const double p : row.probs)
        if (p > 0.0) ++n;
    }
    g.offset[s + 1] = g.offset[s] + n;
  }
  g.adj.resize(g.offset[S]);
  for (std::int32_t s = 0; s < S; ++s) {
    const TransitionRow& row = mdp.row(s, policy.action[s]);
    std::size_t at = g.offset[s];
    if (row.dense()) {
      for (std::int32_t j = 0; j < S; ++j)
        if (row.probs[j] > 0.0) g.adj[at++] = j;
    } else {
      for (std::size_t i = 0; i < row.nnz(); ++i)
        if (row.probs[i] > 0.0) g.adj[at++] = row.cols[i];
    }
  }
  return g;
}

std::vector<std::int32_t> strongly_connected_components(const InducedGraph& g,
                                                        std::int32_t S,
                                                        std::int32_t& ncomp) {
  std::vector<std::int32_t> comp(S, -1), index(S, -1), low(S, 0);
  std::vector<std::uint8_t> onstack(S, 0);
  std::vector<std::int32_t> stack;
  std::vector<std::pair<std::int32_t, std::size_t>> frames;
  std::int32_t next_index = 0;
  ncomp = 0;

  for (std::int32_t v0 = 0; v0 < S; ++v0) {
    if (index[v0] != -1) continue;
    index[v0] = low[v0] = next_index++;
    stack.push_back(v0);
    onstack[v0] = 1;
    frames.emplace_back(v0, g.offset[v0]);
    while (!frames.empty()) {
      auto& [v, it] = frames.back();
      if (it < g.offset[v + 1]) {
        const std::int32_t w = g.adj[it++];
        if (index[w] == -1) {
          index[w] = low[w] = next_index++;
          stack.push_back(w);
          onstack[w] = 1;
          frames.emplace_back(w, g.offset[w]);
        } else if (onstack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
      } else {
        if (low[v] == index[v]) {
          for (;;) {
            const std::int32_t w = stack.back();
            stack.pop_back();
            onstack[w] = 0;
            comp[w] = ncomp;
            if (w == v) break;
          }
          ++ncomp;
        }
        const std::int32_t done = v;
        frames.pop_back();
        if (!frames.empty())
          low[frames.back().first] = std::min(low[frames.back().first], low[done]);
      }
    }
  }
  return comp;
}

}  // namespace

ChainDiagnosis diagnose_chain(const FiniteMdp& mdp, const StationaryPolicy& policy) {
  const std::int32_t S = mdp.num_states();
  const InducedGraph g = induced_graph(mdp, policy);
  std::int32_t ncomp = 0;
  const std::vector<std::int32_t> comp = strongly_connected_components(g, S, ncomp);

  std::vector<std::uint8_t> open(ncomp, 0);
  for (std::int32_t s = 0; s < S; ++s)
    for (std::size_t it = g.offset[s]; it < g.offset[s + 1]; ++it)
      if (comp[g.adj[it]] != comp[s]) open[comp[s]] = 1;

  std::vector<std::vector<std::int32_t>> members(ncomp);
  for (std::int32_t s = 0; s < S; ++s) members[comp[s]].push_back(s);

  ChainDiagnosis diag;
  std::vector<std::int32_t> class_order;
  for (std::int32_t c = 0; c < ncomp; ++c)
    if (!open[c]) class_order.push_back(c);
  std::sort(class_order.begin(), class_order.end(),
            [&members](std::int32_t a, std::int32_t b) {
              return members[a].front() < members[b].front();
            });
  for (const std::int32_t c : class_order)
    diag.recurrent_classes.push_back(members[c]);
  for (std::int32_t s = 0; s < S; ++s)
    if (open[comp[s]]) diag.transient_states.push_back(s);

  // Period of a closed class: gcd over its edges of level(u) + 1 - level(w)
  // for BFS levels from any root.
  for (const auto& cls : diag.recurrent_classes) {
    std::vector<std::int64_t> level(S, -1);
    std::vector<std::int32_t> queue;
    queue.push_back(cls.front());
    level[cls.front()] = 0;
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
      const std::int32_t u = queue[qi];
      for (std::size_t it = g.offset[u]; it < g.offset[u + 1]; ++it) {
        const std::int32_t w = g.adj[it];
        if (level[w] == -1) {
          level[w] = level[u] + 1;
          queue.push_back(w);
        }
      }
    }
    std::int64_t period = 0;
    for (const std::int32_t u : cls)
      for (std::size_t it = g.offset[u]; it < g.offset[u + 1]; ++it) {
        const std::int32_t w = g.adj[it];
        period = std::gcd(period, std::llabs(level[u] + 1 - level[w]));
      }
    diag.periods.push_back(period == 0 ? 1 : period);
  }

  diag.unichain = diag.recurrent_classes.size() == 1;
  diag.aperiodic = true;
  for (const std::int64_t p : diag.periods)
    if (p != 1) diag.aperiodic = false;
  return diag;
}

PolicyChainSolver::PolicyChainSolver(const FiniteMdp& mdp, const StationaryPolicy& policy,
                                     const ChainOptions& opts)
    : mdp_(&mdp), policy_(policy), opts_(opts), diag_(diagnose_chain(mdp, policy)) {
  if (!diag_.unichain)
    throw MultichainError("induced chain has " +
                          std::to_string(diag_.recurrent_classes.size()) +
                          " recurrent classes");
  const std::size_t S = static_cast<std::size_t>(mdp.num_states());
  if (S > opts_.dense_threshold) return;

  std::vector<double> a(S * S, 0.0);
  for (std::size_t i = 0; i < S; ++i) {
    a[i * S] = 1.0;
    if (i >= 1) a[i * S + i] += 1.0;
    const TransitionRow& row = mdp.row(static_cast<std::int32_t>(i),
                                       policy.action[i]);
    if (row.dense()) {
      for (std::size_t j = 1; j < S; ++j) a[i * S + j] -= row.probs[j];
    } else {
      for (std::size_t k = 0; k < row.nnz(); ++k)
        if (row.cols[k] >= 1) a[i * S + row.cols[k]] -= row.probs[k];
    }
  }
  lu_ = std::make_unique<linalg::DenseLu>(std::move(a), S);
}

StationaryDistribution PolicyChainSolver::stationary() const {
  if (diag_.periods.front() != 1)
    throw PeriodicError("recurrent class has period " +
                        std::to_string(diag_.periods.front()));
  const std::size_t S = static_cast<std::size_t>(mdp_->num_states());
  StationaryDistribution dist;
  dist.support = diag_.recurrent_classes.front();

  if (lu_) {
    std::vector<double> b(S, 0.0);
    b[0] = 1.0;
    lu_->solve_transposed(b);
    dist.state_prob = std::move(b);
  } else {
    dist.state_prob = stationary_power().state_prob;
  }

  for (const std::int32_t s : diag_.transient_states) dist.state_prob[s] = 0.0;
  double sum = 0.0;
  for (const std::int32_t s : dist.support) {
    if (dist.state_prob[s] < 0.0) dist.state_prob[s] = 0.0;
    sum += dist.state_prob[s];
  }
  if (!(sum > 0.0) || std::fabs(sum - 1.0) > 1e-6)
    throw Error("stationary solve produced mass " + std::to_string(sum));
  kernels::scale(1.0 / sum, dist.state_prob.data(), S);
  return dist;
}

StationaryDistribution PolicyChainSolver::stationary_power() const {
  const std::int32_t S = mdp_->num_states();
  const auto& cls = diag_.recurrent_classes.front();
  std::vector<double> cur(S, 0.0), next(S, 0.0);
  for (const std::int32_t s : cls) cur[s] = 1.0 / static_cast<double>(cls.size());

  for (long long iter = 0; iter < opts_.max_power_iterations; ++iter) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::int32_t s = 0; s < S; ++s) {
      const double mass = cur[s];
      if (mass == 0.0) continue;
      const TransitionRow& row = mdp_->row(s, policy_.action[s]);
      if (row.dense()) {
        kernels::axpy(mass, row.probs.data(), next.data(), S);
      } else {
        for (std::size_t k = 0; k < row.nnz(); ++k)
          next[row.cols[k]] += mass * row.probs[k];
      }
    }
    double diff = 0.0;
    for (std::int32_t s = 0; s < S; ++s) diff += std::fabs(next[s] - cur[s]);
    cur.swap(next);
    if (diff < opts_.tol) {
      StationaryDistribution dist;
      dist.state_prob = std::move(cur);
      return dist;
    }
  }
  throw NonConvergence("power iteration did not reach tolerance within " +
                       std::to_string(opts_.max_power_iterations) + " iterations");
}

GainBias PolicyChainSolver::gain_bias(const std::vector<double>& reward_per_state) const {
  const std::size_t S = static_cast<std::size_t>(mdp_->num_states());
  if (reward_per_state.size() != S) throw Error("gain_bias: reward vector size mismatch");

  GainBias gb;
  if (lu_) {
    std::vector<double> b = reward_per_state;
    lu_->solve(b);
    gb.gain = b[0];
    gb.bias.assign(S, 0.0);
    for (std::size_t j = 1; j < S; ++j) gb.bias[j] = b[j];
    return gb;
  }

  // Iterative fallback: gain through the stationary distribution, bias by
  // relative value iteration pinned at state 0. Needs an aperiodic chain.
  const StationaryDistribution pi = stationary();
  gb.gain = kernels::dot(pi.state_prob.data(), reward_per_state.data(), S);
  std::vector<double> h(S, 0.0), hnext(S, 0.0);
  for (long long iter = 0; iter < opts_.max_rvi_iterations; ++iter) {
    for (std::size_t s = 0; s < S; ++s) {
      const TransitionRow& row = mdp_->row(static_cast<std::int32_t>(s),
                                           policy_.action[s]);
      double exp_h;
      if (row.dense()) {
        exp_h = kernels::dot(row.probs.data(), h.data(), S);
      } else {
        exp_h = 0.0;
        for (std::size_t k = 0; k < row.nnz(); ++k) exp_h += row.probs[k] * h[row.cols[k]];
      }
      hnext[s] = reward_per_state[s] - gb.gain + exp_h;
    }
    const double pin = hnext[0];
    double diff = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      hnext[s] -= pin;
      diff = std::max(diff, std::fabs(hnext[s] - h[s]));
    }
    h.swap(hnext);
    if (diff < opts_.tol) {
      gb.bias = std::move(h);
      return gb;
    }
  }
  throw NonConvergence("relative value iteration did not reach tolerance within " +
                       std::to_string(opts_.max_rvi_iterations) + " iterations");
}

StationaryDistribution stationary_distribution(const FiniteMdp& mdp,
                                               const StationaryPolicy& policy,
                                               const ChainOptions& opts) {
  return PolicyChainSolver(mdp, policy, opts).stationary();
}

}  // namespace varmdp
