#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>

#include "varmdp/mdp.hpp"

namespace varmdp {

// Rewards drawn uniformly from the open interval (lo, hi), stored at full
// double precision with no reward_resolution. These instances exercise the
// non-gridded code paths.
struct ContinuousUniformRewards {
  double lo = 0.0;
  double hi = 100.0;
};

// Integer rewards drawn uniformly from {0, ..., r_max}; reward_resolution 1.
struct IntegerUniformRewards {
  std::int64_t r_max = 100;
};

using RewardModel = std::variant<ContinuousUniformRewards, IntegerUniformRewards>;

struct RandomSpec {
  std::int32_t num_states = 0;
  std::int32_t num_actions = 0;
  RewardModel rewards = IntegerUniformRewards{};
  std::uint64_t seed = 0;
  // Expected fraction of retained transition targets per row, in (0, 1].
  // At 1.0 every row is strictly positive, so every stationary policy induces
  // an irreducible aperiodic chain. Below 1.0 each target survives an
  // independent coin flip and ergodicity is no longer guaranteed.
  double density = 1.0;
};

// Seeded random instance. The generator is xoshiro256** seeded through
// splitmix64 (see rng.hpp), and the draw order is part of the contract:
// for each state s ascending, for each action a ascending,
//   1. num_states weights from (0, 1],
//   2. when density < 1.0, num_states unit draws for the survival flips
//      (a row that loses every target keeps its heaviest one instead),
//   3. one reward draw.
// Surviving weights are normalized to a distribution. Identical specs
// therefore produce bit-identical instances on every platform.
FiniteMdp gen_random(const RandomSpec& spec);

// Grid-connected storage model on the composite state (g, b, d): generation
// level g in {0.0, 0.6, ..., 3.0}, battery level b in {0.4, 0.5, ..., 3.4},
// demand level d in {0.6, 1.2, ..., 3.6}; 6 * 31 * 6 = 1116 states. The
// action is the battery discharge a in {-1.2, ..., 1.2} on the 0.1 grid,
// admissible when b' = b - a stays inside [0.4, 3.4]. Reward g + a - d,
// declared resolution 1/10. Generation and demand evolve by the two embedded
// 6x6 kernels, independently of each other and of the battery.
struct MicrogridSpec {
  std::array<std::array<double, 6>, 6> gen_kernel;
  std::array<std::array<double, 6>, 6> demand_kernel;

  MicrogridSpec();  // embedded default kernels
};

// State packing: index = (gi * 31 + bi) * 6 + di with level indices
// gi in [0, 6), bi in [0, 31), di in [0, 6). Action index ai in [0, 25)
// encodes discharge (ai - 12) / 10.
std::int32_t microgrid_state_index(std::int32_t gi, std::int32_t bi, std::int32_t di);
double microgrid_gen_value(std::int32_t gi);        // 0.0, 0.6, ..., 3.0
double microgrid_storage_value(std::int32_t bi);    // 0.4, 0.5, ..., 3.4
double microgrid_demand_value(std::int32_t di);     // 0.6, 1.2, ..., 3.6
double microgrid_action_value(std::int32_t ai);     // -1.2, -1.1, ..., 1.2

// Builds the 1116-state instance. Throws Error when a kernel row is not
// stochastic within 1e-9 and InfeasibleState if some storage level were left
// without an admissible action (cannot happen with the fixed grid bounds, but
// the guard stays on the arithmetic rather than on that argument).
FiniteMdp build_microgrid(const MicrogridSpec& spec = {});

// Canonical instance file: a single JSON document with fields
//   version          "1"
//   num_states, num_actions
//   admissible       per-state ascending action lists
//   transitions      dense nested arrays [s][k][s2] parallel to admissible
//                    when every row is stored dense, otherwise sparse records
//                    {s, a, s2, p} of the nonzero entries
//   rewards          records {s, a, r}
//   reward_resolution  optional "num/den" string
//   metadata         free-form string map
// Probabilities and rewards are written as shortest decimals that parse back
// to the identical double, so a round trip reproduces every field exactly.
// read_instance checks structure only (indices in range, admissible pairs
// covered exactly once); probability sums are left to validate() so a
// malformed instance can be loaded and then diagnosed. Throws ParseError
// with a line or field location, SchemaVersionError for an unknown version.
FiniteMdp read_instance(const std::string& path);
void write_instance(const FiniteMdp& mdp, const std::string& path);

}  // namespace varmdp
