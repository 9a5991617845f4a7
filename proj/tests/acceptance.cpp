// Acceptance gate: one line per criterion, nonzero exit when any fails.
// Every numeric expectation here is exact unless the line says otherwise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "varmdp/augmented.hpp"
#include "varmdp/finite.hpp"
#include "varmdp/instances.hpp"
#include "varmdp/mdp.hpp"
#include "varmdp/rng.hpp"
#include "varmdp/steady.hpp"

using namespace varmdp;
using Clock = std::chrono::steady_clock;

namespace {

double secs(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

int g_passed = 0;
int g_failed = 0;

void report(int n, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s %s\n", n, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  (pass ? g_passed : g_failed)++;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// ---------------------------------------------------------------------------
// 1 + 2: microgrid quantiles and their improvement traces.

struct MicrogridRun {
  double alpha;
  double want;
  SteadySolveResult result;
};

std::vector<MicrogridRun> g_microgrid;

void criterion_1() {
  const auto t0 = Clock::now();
  const FiniteMdp mdp = build_microgrid();
  g_microgrid = {{0.9, 0.6, {}}, {0.5, -0.6, {}}, {0.1, -1.6, {}}};
  bool pass = true;
  std::string vals;
  for (MicrogridRun& run : g_microgrid) {
    run.result = solve_steady_max(mdp, run.alpha);
    if (run.result.var_star != run.want || !run.result.certified) pass = false;
    if (!vals.empty()) vals += "/";
    vals += fmt("%g", run.result.var_star);
  }
  const double elapsed = secs(t0, Clock::now());
  if (elapsed >= 600.0) pass = false;
  report(1, pass,
         fmt("microgrid var_star %s at alpha 0.9/0.5/0.1, all certified, %.1fs", vals.c_str(),
             elapsed));
}

void criterion_2() {
  bool pass = !g_microgrid.empty();
  for (const MicrogridRun& run : g_microgrid) {
    const auto& trace = run.result.trace;
    if (trace.empty() || !run.result.certified) pass = false;
    for (std::size_t k = 1; k < trace.size(); ++k)
      if (!(trace[k].lambda_k > trace[k - 1].lambda_k)) pass = false;
    if (!trace.empty() && trace.back().lambda_k != run.result.var_star) pass = false;
  }
  report(2, pass, "every microgrid trace strictly increasing and ends at its certificate");
}

// ---------------------------------------------------------------------------
// 3: tiny steady instances against the exhaustive oracle.

void criterion_3() {
  Rng shape(30000);
  int comparisons = 0;
  int mismatches = 0;
  for (int i = 0; i < 100; ++i) {
    RandomSpec spec;
    spec.num_states = static_cast<std::int32_t>(shape.next_int(2, 4));
    spec.num_actions = static_cast<std::int32_t>(shape.next_int(2, 3));
    spec.rewards = ContinuousUniformRewards{0.0, 100.0};
    spec.seed = 30000 + static_cast<std::uint64_t>(i);
    const FiniteMdp mdp = gen_random(spec);
    for (const double alpha : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      const SteadyOracleResult want_max = exhaustive_policy_oracle(mdp, alpha, Sense::maximize);
      const SteadyOracleResult want_min = exhaustive_policy_oracle(mdp, alpha, Sense::minimize);
      const SteadySolveResult got_max = solve_steady_max(mdp, alpha);
      const SteadySolveResult got_min = solve_steady_min(mdp, alpha);
      comparisons += 2;
      if (got_max.var_star != want_max.var_star || !got_max.certified) ++mismatches;
      if (got_min.var_star != want_min.var_star || !got_min.certified) ++mismatches;
    }
  }
  report(3, mismatches == 0,
         fmt("100 random ergodic instances, %d solver/oracle comparisons, %d mismatches",
             comparisons, mismatches));
}

// ---------------------------------------------------------------------------
// 4: iterate versus the threshold-scan baseline on 50x20 instances.

void criterion_4() {
  int iterate_wins = 0;
  int disagreements = 0;
  double it_total = 0.0;
  double ba_total = 0.0;
  for (int i = 0; i < 20; ++i) {
    RandomSpec spec;
    spec.num_states = 50;
    spec.num_actions = 20;
    spec.rewards = ContinuousUniformRewards{0.0, 100.0};
    spec.seed = 40000 + static_cast<std::uint64_t>(i);
    const FiniteMdp mdp = gen_random(spec);
    double it_ms = 0.0;
    double ba_ms = 0.0;
    for (const double alpha : {0.1, 0.5, 0.9}) {
      for (const Sense sense : {Sense::maximize, Sense::minimize}) {
        const auto t0 = Clock::now();
        const SteadySolveResult it = sense == Sense::maximize ? solve_steady_max(mdp, alpha)
                                                              : solve_steady_min(mdp, alpha);
        const auto t1 = Clock::now();
        const SteadySolveResult ba = baseline_steady(mdp, alpha, sense);
        const auto t2 = Clock::now();
        it_ms += 1000.0 * secs(t0, t1);
        ba_ms += 1000.0 * secs(t1, t2);
        if (it.var_star != ba.var_star || !it.certified || !ba.certified) ++disagreements;
      }
    }
    if (it_ms < ba_ms) ++iterate_wins;
    it_total += it_ms;
    ba_total += ba_ms;
  }
  const bool pass = disagreements == 0 && iterate_wins >= 18;
  report(4, pass,
         fmt("20 instances x 6 solves: %d disagreements, iterate faster on %d/20 "
             "(totals %.0fms vs %.0fms)",
             disagreements, iterate_wins, it_total, ba_total));
}

// ---------------------------------------------------------------------------
// 5 + 7: finite-horizon agreement and the table invariants.

long long g_tables = 0;
long long g_cells = 0;
long long g_invariant_violations = 0;

// Lambda-monotonicity, [0,1] confinement, and boundary pinning over the
// stored span plus one pinned tick on each side.
void check_table(const ValueTable& table) {
  ++g_tables;
  const LambdaGrid& grid = table.grid;
  for (int t = 0; t <= grid.T; ++t) {
    for (std::int32_t s = 0; s < table.num_states; ++s) {
      double prev = -1.0;
      for (std::int64_t tick = grid.lo; tick <= grid.hi; ++tick) {
        const double v = table.at(t, s, tick);
        ++g_cells;
        if (!(v >= 0.0 && v <= 1.0)) ++g_invariant_violations;
        if (v < prev) ++g_invariant_violations;
        if (tick >= grid.pin_hi(t) && v != 1.0) ++g_invariant_violations;
        if (tick < grid.pin_lo(t) && v != 0.0) ++g_invariant_violations;
        prev = v;
      }
      if (table.at(t, s, grid.pin_hi(t)) != 1.0) ++g_invariant_violations;
      if (table.at(t, s, grid.pin_lo(t) - 1) != 0.0) ++g_invariant_violations;
    }
  }
}

void criterion_5() {
  Rng shape(50000);
  int tail_checks = 0;
  int tail_failures = 0;
  int agree_checks = 0;
  int agree_failures = 0;
  for (int i = 0; i < 100; ++i) {
    RandomSpec spec;
    spec.num_states = static_cast<std::int32_t>(shape.next_int(1, 3));
    spec.num_actions = static_cast<std::int32_t>(shape.next_int(1, 3));
    spec.rewards = IntegerUniformRewards{3};
    spec.seed = 50000 + static_cast<std::uint64_t>(i);
    const int T = static_cast<int>(shape.next_int(1, 4));
    const FiniteMdp mdp = gen_random(spec);

    const LambdaGrid grid = build_grid(mdp, T);
    const auto [table_max, policy_max] = solve_augmented(mdp, grid, Sense::maximize);
    const auto [table_min, policy_min] = solve_augmented(mdp, grid, Sense::minimize);
    const AugmentedMarkovPolicy constant = constant_policy(mdp, grid);
    const ValueTable table_const = evaluate_augmented(mdp, constant);
    check_table(table_max);
    check_table(table_min);
    check_table(table_const);

    // Tracked-policy tails against the trajectory-tree oracle at every grid
    // starting target.
    const std::pair<const AugmentedMarkovPolicy*, const ValueTable*> tracked[] = {
        {&constant, &table_const}, {&policy_max, &table_max}};
    for (const auto& [policy, table] : tracked) {
      for (std::int64_t tick = grid.lo; tick <= grid.hi; ++tick) {
        const HistoryPolicy hp = realize_history_policy(*policy, grid.value_of(tick));
        for (std::int32_t s0 = 0; s0 < mdp.num_states(); ++s0) {
          const std::map<std::int64_t, double> pmf = trajectory_oracle(mdp, hp, s0);
          double tail = 0.0;
          for (const auto& [sum_tick, p] : pmf)
            if (sum_tick <= tick) tail += p;
          ++tail_checks;
          if (std::fabs(table->at(0, s0, tick) - tail) > 1e-10) ++tail_failures;
        }
      }
    }

    // Iterative solver against full backward induction, every start state.
    for (int a10 = 1; a10 <= 9; ++a10) {
      const double alpha = a10 / 10.0;
      for (const Sense sense : {Sense::maximize, Sense::minimize}) {
        const FiniteBaselineResult base = baseline_finite(mdp, T, alpha, sense);
        for (std::int32_t s0 = 0; s0 < mdp.num_states(); ++s0) {
          const FiniteSolveResult got = sense == Sense::maximize
                                            ? solve_finite_max(mdp, T, alpha, s0)
                                            : solve_finite_min(mdp, T, alpha, s0);
          ++agree_checks;
          if (got.var_star != base.var_star[static_cast<std::size_t>(s0)] || !got.certified)
            ++agree_failures;
        }
      }
    }
  }
  report(5, tail_failures == 0 && agree_failures == 0,
         fmt("100 tiny instances: %d oracle tails (failures %d), %d solver/baseline values "
             "(failures %d)",
             tail_checks, tail_failures, agree_checks, agree_failures));
}

// ---------------------------------------------------------------------------
// 6: quantile duality lemmas on randomized discrete distributions.

// Probabilities are multiples of 1/64, so CDF sums are exact in doubles.
struct Dyadic {
  std::vector<double> values;
  std::vector<double> probs;

  double cdf_at(double t) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (values[i] <= t) acc += probs[i];
    return acc;
  }
  double var(double alpha) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      acc += probs[i];
      if (acc >= alpha) return values[i];
    }
    return values.back();
  }
};

Dyadic random_dyadic(Rng& rng) {
  const int m = static_cast<int>(rng.next_int(1, 6));
  std::vector<double> values;
  while (static_cast<int>(values.size()) < m) {
    const double v = static_cast<double>(rng.next_int(-10, 10));
    if (std::find(values.begin(), values.end(), v) == values.end()) values.push_back(v);
  }
  std::sort(values.begin(), values.end());
  std::vector<int> balls(values.size(), 0);
  for (int i = 0; i < 64; ++i) balls[rng.next_below(values.size())]++;
  Dyadic d;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (balls[i] == 0) continue;
    d.values.push_back(values[i]);
    d.probs.push_back(static_cast<double>(balls[i]) / 64.0);
  }
  return d;
}

void criterion_6() {
  int counterexamples = 0;
  int strict_max = 0;
  int strict_min = 0;

  // Maximization form: F_Y(VaR(X)) < alpha iff VaR(Y) > VaR(X).
  Rng rng_max(60001);
  for (int trial = 0; trial < 1000; ++trial) {
    const Dyadic x = random_dyadic(rng_max);
    const Dyadic y = random_dyadic(rng_max);
    const double alpha = static_cast<double>(rng_max.next_int(1, 64)) / 64.0;
    const double lam = x.var(alpha);
    const bool lhs = y.cdf_at(lam) < alpha;
    const bool rhs = y.var(alpha) > lam;
    if (lhs != rhs) ++counterexamples;
    if (lhs) ++strict_max;
  }

  // Minimization form: F_Y(pred(VaR(X))) >= alpha iff VaR(Y) < VaR(X).
  Rng rng_min(60002);
  for (int trial = 0; trial < 1000; ++trial) {
    const Dyadic x = random_dyadic(rng_min);
    const Dyadic y = random_dyadic(rng_min);
    const double alpha = static_cast<double>(rng_min.next_int(1, 64)) / 64.0;
    const double lam = x.var(alpha);
    RewardSupport sup_y;
    sup_y.values = y.values;
    const bool lhs = y.cdf_at(left_predecessor(lam, sup_y)) >= alpha;
    const bool rhs = y.var(alpha) < lam;
    if (lhs != rhs) ++counterexamples;
    if (lhs) ++strict_min;
  }

  const bool exercised = strict_max > 0 && strict_max < 1000 && strict_min > 0 && strict_min < 1000;
  report(6, counterexamples == 0 && exercised,
         fmt("2000 distribution pairs, %d counterexamples (both lemma branches hit)",
             counterexamples));
}

void criterion_7() {
  report(7, g_tables > 0 && g_invariant_violations == 0,
         fmt("%lld value tables, %lld cells: monotone, within [0,1], pinned at the boundaries, "
             "%lld violations",
             g_tables, g_cells, g_invariant_violations));
}

// ---------------------------------------------------------------------------
// 8: scaling smoke test.

void criterion_8() {
  RandomSpec spec;
  spec.num_states = 1000;
  spec.num_actions = 100;
  spec.rewards = ContinuousUniformRewards{0.0, 100.0};
  spec.seed = 80001;
  const FiniteMdp mdp = gen_random(spec);
  const auto t0 = Clock::now();
  const SteadySolveResult r = solve_steady_max(mdp, 0.7);
  const double elapsed = secs(t0, Clock::now());
  const long long iters = static_cast<long long>(r.trace.size()) - 1;
  report(8, r.certified && iters <= 30,
         fmt("1000x100 instance certified in %.1fs, %lld improvement iterations (cap 30), "
             "var_star %.6f",
             elapsed, iters, r.var_star));
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  std::printf("acceptance: %d/8 passed\n", g_passed);
  return g_failed == 0 ? 0 : 1;
}
