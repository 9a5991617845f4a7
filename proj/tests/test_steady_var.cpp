#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "varmdp/avg.hpp"
#include "varmdp/errors.hpp"
#include "varmdp/mdp.hpp"
#include "varmdp/rng.hpp"
#include "varmdp/steady.hpp"

using namespace varmdp;

namespace {

FiniteMdp random_ergodic(Rng& rng, std::int32_t S, std::int32_t A, double r_lo, double r_hi) {
  FiniteMdp mdp(S, A);
  for (std::int32_t s = 0; s < S; ++s)
    for (std::int32_t a = 0; a < A; ++a) {
      std::vector<double> row(S);
      double total = 0.0;
      for (auto& p : row) {
        p = rng.next_open_unit();
        total += p;
      }
      for (auto& p : row) p /= total;
      mdp.add_action(s, a, TransitionRow::make_dense(std::move(row)), rng.next_real(r_lo, r_hi));
    }
  return mdp;
}

std::vector<StationaryPolicy> all_policies(const FiniteMdp& mdp) {
  std::vector<StationaryPolicy> out;
  StationaryPolicy u = mdp.lowest_action_policy();
  const std::int32_t S = mdp.num_states();
  while (true) {
    out.push_back(u);
    std::int32_t s = S - 1;
    for (; s >= 0; --s) {
      const auto& adm = mdp.admissible(s);
      std::size_t pos = 0;
      while (adm[pos] != u.action[s]) ++pos;
      if (pos + 1 < adm.size()) {
        u.action[s] = adm[pos + 1];
        break;
      }
      u.action[s] = adm.front();
    }
    if (s < 0) return out;
  }
}

void check_trace_monotone(const std::vector<TraceEntry>& trace, Sense objective) {
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (objective == Sense::maximize)
      CHECK(trace[i].lambda_k > trace[i - 1].lambda_k);
    else
      CHECK(trace[i].lambda_k < trace[i - 1].lambda_k);
  }
}

}  // namespace

TEST_CASE("steady cdf of fixed policies") {
  FiniteMdp one(1, 1);
  one.add_action(0, 0, TransitionRow::make_dense({1.0}), 5.0);
  auto cdf = steady_cdf(one, one.lowest_action_policy());
  CHECK(cdf.support.values == std::vector<double>{5.0});
  CHECK(cdf.cdf == std::vector<double>{1.0});

  FiniteMdp two(2, 1);
  two.add_action(0, 0, TransitionRow::make_dense({0.5, 0.5}), 1.0);
  two.add_action(1, 0, TransitionRow::make_dense({0.5, 0.5}), 3.0);
  cdf = steady_cdf(two, two.lowest_action_policy());
  CHECK(cdf.support.values == std::vector<double>{1.0, 3.0});
  CHECK(cdf.cdf[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(cdf.cdf[1] == 1.0);
}

TEST_CASE("off policy support points carry zero or snapped mass") {
  FiniteMdp mdp(2, 2);
  mdp.add_action(0, 0, TransitionRow::make_dense({0.5, 0.5}), 1.0);
  mdp.add_action(1, 0, TransitionRow::make_dense({0.5, 0.5}), 3.0);
  mdp.add_action(1, 1, TransitionRow::make_dense({0.5, 0.5}), 9.0);

  StationaryPolicy u{{0, 0}};
  auto cdf = steady_cdf(mdp, u);
  CHECK(cdf.support.values == std::vector<double>{1.0, 3.0, 9.0});
  CHECK(cdf.cdf[0] == doctest::Approx(0.5).epsilon(1e-12));
  // From the last on-policy reward upward the tail is exactly 1.
  CHECK(cdf.cdf[1] == 1.0);
  CHECK(cdf.cdf[2] == 1.0);

  // alpha = 1 therefore lands on the on-policy maximum, not the support max.
  CHECK(steady_var(cdf, 1.0) == 3.0);
}

TEST_CASE("steady cdf matches a long power iteration") {
  Rng rng(60601);
  for (int trial = 0; trial < 10; ++trial) {
    auto mdp = random_ergodic(rng, 4, 2, 0.0, 10.0);
    auto policies = all_policies(mdp);
    const auto& u = policies[trial % policies.size()];

    const std::int32_t S = mdp.num_states();
    std::vector<double> v(S, 1.0 / S), next(S);
    for (int it = 0; it < 10000; ++it) {
      std::fill(next.begin(), next.end(), 0.0);
      for (std::int32_t s = 0; s < S; ++s) {
        const auto& row = mdp.row(s, u.action[s]);
        for (std::int32_t t = 0; t < S; ++t) next[t] += v[s] * row.probs[t];
      }
      v.swap(next);
    }

    auto cdf = steady_cdf(mdp, u);
    for (std::size_t i = 0; i < cdf.support.size(); ++i) {
      double expect = 0.0;
      for (std::int32_t s = 0; s < S; ++s)
        if (mdp.reward(s, u.action[s]) <= cdf.support.values[i] + 1e-12) expect += v[s];
      CHECK(cdf.cdf[i] == doctest::Approx(std::min(expect, 1.0)).epsilon(1e-9));
      if (i > 0) CHECK(cdf.cdf[i] >= cdf.cdf[i - 1]);
    }
    CHECK(cdf.cdf.back() == 1.0);
  }
}

TEST_CASE("quantile scan uses an exact threshold") {
  SteadyCdf cdf;
  cdf.support.values = {1.0, 3.0};
  cdf.cdf = {0.5, 1.0};
  CHECK(steady_var(cdf, 0.5) == 1.0);
  CHECK(steady_var(cdf, 0.500000001) == 3.0);
  CHECK(steady_var(cdf, 1e-12) == 1.0);
  CHECK(steady_var(cdf, 1.0) == 3.0);
  CHECK_THROWS_AS(steady_var(cdf, 0.0), Error);
  CHECK_THROWS_AS(steady_var(cdf, 1.5), Error);
  CHECK_THROWS_AS(steady_var(cdf, -0.2), Error);
}

TEST_CASE("single policy instance solves with no improvement steps") {
  FiniteMdp mdp(2, 1);
  mdp.add_action(0, 0, TransitionRow::make_dense({0.5, 0.5}), 1.0);
  mdp.add_action(1, 0, TransitionRow::make_dense({0.5, 0.5}), 3.0);

  for (const double alpha : {0.25, 0.5, 0.75, 1.0}) {
    auto max_res = solve_steady_max(mdp, alpha);
    auto min_res = solve_steady_min(mdp, alpha);
    const double expect = alpha <= 0.5 ? 1.0 : 3.0;
    CHECK(max_res.var_star == expect);
    CHECK(min_res.var_star == expect);
    CHECK(max_res.certified);
    CHECK(min_res.certified);
    CHECK(max_res.trace.size() == 1);
    CHECK(min_res.trace.size() == 1);
    CHECK(max_res.policy_star.action == std::vector<std::int32_t>{0, 0});
  }
}

TEST_CASE("two action loop picks the extremal reward") {
  FiniteMdp mdp(1, 2);
  mdp.add_action(0, 0, TransitionRow::make_dense({1.0}), 1.0);
  mdp.add_action(0, 1, TransitionRow::make_dense({1.0}), 9.0);

  auto oracle_max = exhaustive_policy_oracle(mdp, 0.5, Sense::maximize);
  CHECK(oracle_max.var_star == 9.0);
  CHECK(oracle_max.policy_star.action == std::vector<std::int32_t>{1});
  CHECK(oracle_max.evaluated == 2);
  CHECK(oracle_max.skipped == 0);

  auto oracle_min = exhaustive_policy_oracle(mdp, 0.5, Sense::minimize);
  CHECK(oracle_min.var_star == 1.0);
  CHECK(oracle_min.policy_star.action == std::vector<std::int32_t>{0});

  auto res = solve_steady_max(mdp, 0.5);
  CHECK(res.var_star == 9.0);
  CHECK(res.certified);
  check_trace_monotone(res.trace, Sense::maximize);

  auto res_min = solve_steady_min(mdp, 0.5);
  CHECK(res_min.var_star == 1.0);
  check_trace_monotone(res_min.trace, Sense::minimize);

  CHECK_THROWS_AS(exhaustive_policy_oracle(mdp, 0.5, Sense::maximize, 1), CapExceeded);
}

TEST_CASE("oracle skips policies without a limit law") {
  FiniteMdp mdp(2, 2);
  mdp.add_action(0, 0, TransitionRow::make_dense({1.0, 0.0}), 1.0);
  mdp.add_action(0, 1, TransitionRow::make_dense({0.0, 1.0}), 2.0);
  mdp.add_action(1, 0, TransitionRow::make_dense({0.0, 1.0}), 3.0);
  mdp.add_action(1, 1, TransitionRow::make_dense({1.0, 0.0}), 4.0);

  // (0,0) is multichain, (1,1) is the period-2 swap; two policies remain.
  auto res = exhaustive_policy_oracle(mdp, 1.0, Sense::maximize);
  CHECK(res.evaluated == 2);
  CHECK(res.skipped == 2);
  CHECK(res.var_star == 3.0);
  CHECK(res.policy_star.action == std::vector<std::int32_t>{1, 0});

  auto res_min = exhaustive_policy_oracle(mdp, 1.0, Sense::minimize);
  CHECK(res_min.var_star == 1.0);
  CHECK(res_min.policy_star.action == std::vector<std::int32_t>{0, 1});
}

TEST_CASE("globally lowest reward policy wins the minimization") {
  FiniteMdp mdp(2, 2);
  mdp.add_action(0, 0, TransitionRow::make_dense({0.5, 0.5}), 5.0);
  mdp.add_action(0, 1, TransitionRow::make_dense({0.5, 0.5}), 0.0);
  mdp.add_action(1, 0, TransitionRow::make_dense({0.5, 0.5}), 7.0);
  mdp.add_action(1, 1, TransitionRow::make_dense({0.5, 0.5}), 0.0);

  auto res = solve_steady_min(mdp, 0.9);
  CHECK(res.var_star == 0.0);
  CHECK(res.policy_star.action == std::vector<std::int32_t>{1, 1});
  CHECK(res.certified);
  CHECK(certify_steady(mdp, res.policy_star, 0.9, Sense::minimize));
}

TEST_CASE("iterate and baseline agree with the exhaustive oracle") {
  Rng rng(77007);
  int suboptimal_checked = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const std::int32_t S = static_cast<std::int32_t>(2 + trial % 3);
    const std::int32_t A = static_cast<std::int32_t>(2 + trial % 2);
    auto mdp = random_ergodic(rng, S, A, 0.0, 10.0);
    for (const double alpha : {0.3, 0.9}) {
      for (const Sense sense : {Sense::maximize, Sense::minimize}) {
        auto oracle = exhaustive_policy_oracle(mdp, alpha, sense);
        auto iter = sense == Sense::maximize ? solve_steady_max(mdp, alpha)
                                             : solve_steady_min(mdp, alpha);
        auto base = baseline_steady(mdp, alpha, sense);

        CHECK(iter.var_star == oracle.var_star);
        CHECK(base.var_star == oracle.var_star);
        CHECK(iter.certified);
        check_trace_monotone(iter.trace, sense);
        CHECK(iter.trace.size() <= reward_support(mdp).size() + 1);

        CHECK(certify_steady(mdp, iter.policy_star, alpha, sense));
        CHECK(certify_steady(mdp, base.policy_star, alpha, sense));
        CHECK(certify_steady(mdp, oracle.policy_star, alpha, sense));

        // Full sweep walks every level but lands on the same answer.
        auto sweep = baseline_steady(mdp, alpha, sense, {}, true);
        CHECK(sweep.var_star == oracle.var_star);
        CHECK(sweep.trace.size() == reward_support(mdp).size());
      }
    }

    // A policy with strictly worse value-at-risk must fail the certificate.
    auto oracle_max = exhaustive_policy_oracle(mdp, 0.9, Sense::maximize);
    for (const auto& u : all_policies(mdp)) {
      double v;
      try {
        v = steady_var(steady_cdf(mdp, u), 0.9);
      } catch (const Error&) {
        continue;
      }
      if (v < oracle_max.var_star) {
        CHECK_FALSE(certify_steady(mdp, u, 0.9, Sense::maximize));
        ++suboptimal_checked;
        break;
      }
    }
  }
  CHECK(suboptimal_checked > 0);
}

TEST_CASE("inner solves sandwich every policy's cdf") {
  Rng rng(13579);
  auto mdp = random_ergodic(rng, 3, 3, 0.0, 10.0);
  auto policies = all_policies(mdp);
  const auto support = reward_support(mdp);
  for (const double lambda : support.values) {
    auto lo = solve_average(threshold_mdp(mdp, lambda, Sense::minimize),
                            mdp.lowest_action_policy());
    auto hi = solve_average(threshold_mdp(mdp, lambda, Sense::maximize),
                            mdp.lowest_action_policy());
    for (const auto& u : policies) {
      auto cdf = steady_cdf(mdp, u);
      const auto it = std::upper_bound(support.values.begin(), support.values.end(), lambda);
      const double f_u = it == support.values.begin() ? 0.0 : cdf.cdf[it - support.values.begin() - 1];
      CHECK(f_u >= lo.gain - 1e-9);
      CHECK(f_u <= hi.gain + 1e-9);
    }
  }
}

TEST_CASE("degenerate chains surface as typed errors") {
  FiniteMdp split(2, 1);
  split.add_action(0, 0, TransitionRow::make_dense({1.0, 0.0}), 1.0);
  split.add_action(1, 0, TransitionRow::make_dense({0.0, 1.0}), 2.0);
  CHECK_THROWS_AS(solve_steady_max(split, 0.5), MultichainError);

  FiniteMdp swap(2, 1);
  swap.add_action(0, 0, TransitionRow::make_dense({0.0, 1.0}), 1.0);
  swap.add_action(1, 0, TransitionRow::make_dense({1.0, 0.0}), 2.0);
  CHECK_THROWS_AS(solve_steady_max(swap, 0.5), PeriodicError);
}

TEST_CASE("outer iteration cap is enforced") {
  FiniteMdp mdp(1, 2);
  mdp.add_action(0, 0, TransitionRow::make_dense({1.0}), 1.0);
  mdp.add_action(0, 1, TransitionRow::make_dense({1.0}), 9.0);
  SteadyOptions opts;
  opts.max_outer = 0;
  CHECK_THROWS_AS(solve_steady_max(mdp, 1.0, opts), IterationCapExceeded);
}

TEST_CASE("explicit initial policies are honored") {
  FiniteMdp mdp(1, 2);
  mdp.add_action(0, 0, TransitionRow::make_dense({1.0}), 1.0);
  mdp.add_action(0, 1, TransitionRow::make_dense({1.0}), 9.0);

  SteadyOptions opts;
  opts.init = StationaryPolicy{{1}};
  auto res = solve_steady_max(mdp, 0.5, opts);
  CHECK(res.var_star == 9.0);
  CHECK(res.trace.size() == 1);  // starting at the optimum leaves nothing to do

  SteadyOptions bad;
  bad.init = StationaryPolicy{{0, 0}};
  CHECK_THROWS_AS(solve_steady_max(mdp, 0.5, bad), Error);
}
