#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "varmdp/chain.hpp"
#include "varmdp/errors.hpp"
#include "varmdp/instances.hpp"
#include "varmdp/mdp.hpp"
#include "varmdp/rng.hpp"

using namespace varmdp;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  REQUIRE(out.good());
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void require_equal_instances(const FiniteMdp& a, const FiniteMdp& b) {
  REQUIRE(a.num_states() == b.num_states());
  REQUIRE(a.num_actions() == b.num_actions());
  REQUIRE(a.reward_resolution() == b.reward_resolution());
  REQUIRE(a.metadata() == b.metadata());
  for (std::int32_t s = 0; s < a.num_states(); ++s) {
    REQUIRE(a.admissible(s) == b.admissible(s));
    for (const std::int32_t act : a.admissible(s)) {
      CHECK(a.reward(s, act) == b.reward(s, act));
      const TransitionRow& ra = a.row(s, act);
      const TransitionRow& rb = b.row(s, act);
      CHECK(ra.dense() == rb.dense());
      CHECK(ra.cols == rb.cols);
      CHECK(ra.probs == rb.probs);
    }
  }
}

}  // namespace

TEST_CASE("identical specs generate identical instances") {
  RandomSpec spec;
  spec.num_states = 5;
  spec.num_actions = 3;
  spec.rewards = IntegerUniformRewards{7};
  spec.seed = 42;
  const FiniteMdp a = gen_random(spec);
  const FiniteMdp b = gen_random(spec);
  require_equal_instances(a, b);

  spec.seed = 43;
  const FiniteMdp c = gen_random(spec);
  bool differs = false;
  for (std::int32_t s = 0; s < 5 && !differs; ++s)
    for (std::int32_t act = 0; act < 3 && !differs; ++act)
      differs = a.row(s, act).probs != c.row(s, act).probs;
  CHECK(differs);
}

TEST_CASE("generator draws are pinned") {
  // The draw order and the generator algorithm are a documented contract, so
  // these literals must reproduce on every platform.
  RandomSpec spec;
  spec.num_states = 2;
  spec.num_actions = 1;
  spec.rewards = IntegerUniformRewards{3};
  spec.seed = 42;
  const FiniteMdp m = gen_random(spec);
  CHECK(m.row(0, 0).probs[0] == 0.5959945282658472);
  CHECK(m.row(0, 0).probs[1] == 0.40400547173415285);
  CHECK(m.reward(0, 0) == 1.0);
  CHECK(m.row(1, 0).probs[0] == 0.90184697630087685);
  CHECK(m.row(1, 0).probs[1] == 0.098153023699123182);
  CHECK(m.reward(1, 0) == 0.0);
}

TEST_CASE("full density makes every policy ergodic") {
  RandomSpec spec;
  spec.num_states = 6;
  spec.num_actions = 2;
  spec.rewards = IntegerUniformRewards{10};
  spec.seed = 9;
  const FiniteMdp m = gen_random(spec);
  REQUIRE(validate(m).ok());
  for (std::int32_t s = 0; s < 6; ++s)
    for (std::int32_t a = 0; a < 2; ++a) {
      const TransitionRow& row = m.row(s, a);
      REQUIRE(row.dense());
      for (const double p : row.probs) CHECK(p > 0.0);
    }

  Rng rng(123);
  for (int trial = 0; trial < 100; ++trial) {
    StationaryPolicy policy;
    policy.action.resize(6);
    for (auto& a : policy.action) a = static_cast<std::int32_t>(rng.next_below(2));
    const ChainDiagnosis diag = diagnose_chain(m, policy);
    CHECK(diag.unichain);
    CHECK(diag.aperiodic);
    REQUIRE(diag.recurrent_classes.size() == 1);
    CHECK(diag.recurrent_classes[0].size() == 6);
  }
}

TEST_CASE("integer model grids rewards and continuous model does not") {
  RandomSpec spec;
  spec.num_states = 4;
  spec.num_actions = 3;
  spec.rewards = IntegerUniformRewards{100};
  spec.seed = 17;
  const FiniteMdp gridded = gen_random(spec);
  REQUIRE(gridded.reward_resolution() == Rational{1, 1});
  for (std::int32_t s = 0; s < 4; ++s)
    for (std::int32_t a = 0; a < 3; ++a) {
      const double r = gridded.reward(s, a);
      CHECK(r == std::floor(r));
      CHECK(r >= 0.0);
      CHECK(r <= 100.0);
    }
  CHECK(reward_support(gridded).gridded());

  spec.rewards = ContinuousUniformRewards{0.25, 0.75};
  const FiniteMdp smooth = gen_random(spec);
  CHECK(!smooth.reward_resolution().has_value());
  CHECK(!reward_support(smooth).gridded());
  for (std::int32_t s = 0; s < 4; ++s)
    for (std::int32_t a = 0; a < 3; ++a) {
      CHECK(smooth.reward(s, a) >= 0.25);
      CHECK(smooth.reward(s, a) < 0.75);
    }
}

TEST_CASE("thinned rows stay stochastic") {
  RandomSpec spec;
  spec.num_states = 8;
  spec.num_actions = 2;
  spec.rewards = IntegerUniformRewards{5};
  spec.seed = 5;
  spec.density = 0.35;
  const FiniteMdp m = gen_random(spec);
  REQUIRE(validate(m).ok());
  bool any_zero = false;
  for (std::int32_t s = 0; s < 8; ++s)
    for (std::int32_t a = 0; a < 2; ++a) {
      const TransitionRow& row = m.row(s, a);
      double sum = 0.0;
      for (const double p : row.probs) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        any_zero = any_zero || p == 0.0;
        sum += p;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  CHECK(any_zero);
}

TEST_CASE("generator rejects malformed specs") {
  RandomSpec spec;
  spec.num_states = 3;
  spec.num_actions = 2;
  spec.rewards = IntegerUniformRewards{4};

  RandomSpec bad = spec;
  bad.num_states = 0;
  CHECK_THROWS_AS(gen_random(bad), Error);
  bad = spec;
  bad.num_actions = -1;
  CHECK_THROWS_AS(gen_random(bad), Error);
  bad = spec;
  bad.density = 0.0;
  CHECK_THROWS_AS(gen_random(bad), Error);
  bad = spec;
  bad.density = 1.5;
  CHECK_THROWS_AS(gen_random(bad), Error);
  bad = spec;
  bad.rewards = IntegerUniformRewards{0};
  CHECK_THROWS_AS(gen_random(bad), Error);
  bad = spec;
  bad.rewards = ContinuousUniformRewards{2.0, 2.0};
  CHECK_THROWS_AS(gen_random(bad), Error);
}

TEST_CASE("microgrid instance has the expected shape") {
  const FiniteMdp m = build_microgrid();
  CHECK(m.num_states() == 1116);
  CHECK(m.num_actions() == 25);
  // Storage ticks 4..34 against action ticks -12..12: the middle levels
  // (ticks 16..22) admit all 25 actions, the 12 levels on each side lose one
  // action per tick (13..24 admissible), so the pair total over one (g, d)
  // slice is 7 * 25 + 2 * (13 + ... + 24) = 619 and 36 slices give 22284.
  CHECK(m.pair_count() == 22284);
  REQUIRE(validate(m).ok());
  REQUIRE(m.reward_resolution() == Rational{1, 10});
  CHECK(m.metadata().at("generator") == "microgrid");

  const RewardSupport support = reward_support(m);
  CHECK(support.size() == 85);
  CHECK(support.values.front() == -4.8);
  CHECK(support.values.back() == 3.6);
  CHECK(support.ticks.front() == -48);
  CHECK(support.ticks.back() == 36);
}

TEST_CASE("microgrid actions respect the storage bounds") {
  const FiniteMdp m = build_microgrid();

  // b = 0.4: only a <= 0 keeps b' <= 3.4 off the lower bound, 13 actions.
  const std::int32_t bottom = microgrid_state_index(2, 0, 3);
  CHECK(m.admissible(bottom).size() == 13);
  CHECK(m.is_admissible(bottom, 12));    // a = 0
  CHECK(!m.is_admissible(bottom, 13));   // a = 0.1 would drain below 0.4
  CHECK(m.is_admissible(bottom, 0));     // a = -1.2 charges up to 1.6

  // b = 3.4: only a >= 0, again 13 actions.
  const std::int32_t top = microgrid_state_index(2, 30, 3);
  CHECK(m.admissible(top).size() == 13);
  CHECK(m.is_admissible(top, 12));
  CHECK(!m.is_admissible(top, 11));      // a = -0.1 would overfill
  CHECK(m.is_admissible(top, 24));       // a = 1.2

  // Interior levels b in [1.6, 2.2] admit the full action grid.
  CHECK(m.admissible(microgrid_state_index(0, 12, 0)).size() == 25);
  CHECK(m.admissible(microgrid_state_index(0, 18, 0)).size() == 25);

  // Every transition lands exactly on the storage grid at b - a, and every
  // reward is g + a - d on the same tick grid.
  for (std::int32_t gi = 0; gi < 6; ++gi)
    for (std::int32_t bi = 0; bi < 31; ++bi)
      for (std::int32_t di = 0; di < 6; ++di) {
        const std::int32_t s = microgrid_state_index(gi, bi, di);
        for (const std::int32_t ai : m.admissible(s)) {
          const std::int32_t a_tick = ai - 12;
          const std::int32_t bi2 = bi - a_tick;
          REQUIRE(bi2 >= 0);
          REQUIRE(bi2 < 31);
          for (const std::int32_t col : m.row(s, ai).cols) {
            CHECK((col / 6) % 31 == bi2);
          }
          CHECK(m.reward_tick(s, ai) == 6 * gi + a_tick - (6 + 6 * di));
        }
      }
}

TEST_CASE("microgrid reward at peak generation and discharge") {
  const FiniteMdp m = build_microgrid();
  // g = 3.0, d = 0.6, a = 1.2 (admissible once b >= 1.6).
  const std::int32_t s = microgrid_state_index(5, 12, 0);
  REQUIRE(m.is_admissible(s, 24));
  CHECK(microgrid_action_value(24) == 1.2);
  CHECK(microgrid_gen_value(5) == 3.0);
  CHECK(microgrid_demand_value(0) == 0.6);
  CHECK(microgrid_storage_value(12) == 1.6);
  CHECK(m.reward(s, 24) == 3.6);
  CHECK(m.reward_tick(s, 24) == 36);

  CHECK_THROWS_AS(microgrid_state_index(6, 0, 0), Error);
  CHECK_THROWS_AS(microgrid_state_index(0, 31, 0), Error);
  CHECK_THROWS_AS(microgrid_gen_value(-1), Error);
  CHECK_THROWS_AS(microgrid_action_value(25), Error);
}

TEST_CASE("microgrid kernels must be stochastic") {
  MicrogridSpec spec;
  for (std::size_t i = 0; i < 6; ++i) {
    double gsum = 0.0;
    double dsum = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      gsum += spec.gen_kernel[i][j];
      dsum += spec.demand_kernel[i][j];
    }
    CHECK(std::abs(gsum - 1.0) <= 1e-9);
    CHECK(std::abs(dsum - 1.0) <= 1e-9);
  }

  MicrogridSpec bad;
  bad.gen_kernel[2][0] += 0.1;
  CHECK_THROWS_AS(build_microgrid(bad), Error);
  bad = MicrogridSpec{};
  bad.demand_kernel[4][0] = -0.1;
  CHECK_THROWS_AS(build_microgrid(bad), Error);
}

TEST_CASE("lowest action policy drifts storage to the top") {
  // Charging as hard as admissible walks b up to 3.4 from everywhere: one
  // recurrent class on the top storage level, the other 1080 states
  // transient. The steady solver's default initial policy is exactly this,
  // so the instance is solvable without any irreducibility assumption.
  const FiniteMdp m = build_microgrid();
  const ChainDiagnosis diag = diagnose_chain(m, m.lowest_action_policy());
  CHECK(diag.unichain);
  CHECK(diag.aperiodic);
  REQUIRE(diag.recurrent_classes.size() == 1);
  CHECK(diag.recurrent_classes[0].size() == 36);
  CHECK(diag.transient_states.size() == 1080);
  for (const std::int32_t s : diag.recurrent_classes[0]) {
    CHECK((s / 6) % 31 == 30);
  }
}

TEST_CASE("random instance round trip is exact") {
  RandomSpec spec;
  spec.num_states = 5;
  spec.num_actions = 2;
  spec.rewards = ContinuousUniformRewards{0.0, 100.0};
  spec.seed = 7;
  const FiniteMdp a = gen_random(spec);
  const std::string path = temp_path("varmdp_roundtrip_continuous.json");
  write_instance(a, path);
  require_equal_instances(a, read_instance(path));

  // Identical instance, identical bytes.
  const std::string again = temp_path("varmdp_roundtrip_continuous2.json");
  write_instance(a, again);
  CHECK(read_text(path) == read_text(again));

  spec.rewards = IntegerUniformRewards{100};
  spec.seed = 11;
  const FiniteMdp b = gen_random(spec);
  const std::string gpath = temp_path("varmdp_roundtrip_integer.json");
  write_instance(b, gpath);
  require_equal_instances(b, read_instance(gpath));

  std::filesystem::remove(path);
  std::filesystem::remove(again);
  std::filesystem::remove(gpath);
}

TEST_CASE("microgrid round trip preserves sparse structure") {
  const FiniteMdp a = build_microgrid();
  const std::string path = temp_path("varmdp_roundtrip_microgrid.json");
  write_instance(a, path);
  const FiniteMdp b = read_instance(path);
  require_equal_instances(a, b);
  REQUIRE(b.reward_resolution() == Rational{1, 10});
  CHECK(!b.row(microgrid_state_index(5, 12, 0), 24).dense());
  CHECK(b.reward(microgrid_state_index(5, 12, 0), 24) == 3.6);
  std::filesystem::remove(path);
}

TEST_CASE("reader locates schema and structure problems") {
  const std::string path = temp_path("varmdp_reader_case.json");

  CHECK_THROWS_AS(read_instance(temp_path("varmdp_does_not_exist.json")), Error);

  write_text(path, "{ oops\n");
  CHECK_THROWS_WITH_AS(read_instance(path), doctest::Contains(":1:"), ParseError);

  write_text(path, R"({"version": "2", "num_states": 1, "num_actions": 1,
    "admissible": [[0]], "rewards": [{"s":0,"a":0,"r":0.0}],
    "transitions": [[[1.0]]]})");
  CHECK_THROWS_AS(read_instance(path), SchemaVersionError);

  write_text(path, R"({"num_states": 1, "num_actions": 1, "admissible": [[0]],
    "rewards": [{"s":0,"a":0,"r":0.0}], "transitions": [[[1.0]]]})");
  CHECK_THROWS_WITH_AS(read_instance(path), doctest::Contains("version"), ParseError);

  // Structurally complete but numerically wrong: loads, then validate talks.
  write_text(path, R"({"version": "1", "num_states": 2, "num_actions": 1,
    "admissible": [[0], [0]],
    "rewards": [{"s":0,"a":0,"r":1.0}, {"s":1,"a":0,"r":0.0}],
    "transitions": [[[0.5, 0.4]], [[0.0, 1.0]]]})");
  const FiniteMdp lopsided = read_instance(path);
  CHECK(!validate(lopsided).ok());

  write_text(path, R"({"version": "1", "num_states": 2, "num_actions": 1,
    "admissible": [[0], [0]],
    "rewards": [{"s":0,"a":0,"r":1.0}, {"s":1,"a":0,"r":0.0}],
    "transitions": [{"s":0,"a":0,"s2":5,"p":1.0}, {"s":1,"a":0,"s2":0,"p":1.0}]})");
  CHECK_THROWS_WITH_AS(read_instance(path), doctest::Contains("out of range"), ParseError);

  write_text(path, R"({"version": "1", "num_states": 2, "num_actions": 1,
    "admissible": [[0], [0]],
    "rewards": [{"s":0,"a":0,"r":1.0}, {"s":1,"a":0,"r":0.0}],
    "transitions": [{"s":0,"a":0,"s2":1,"p":0.5}, {"s":0,"a":0,"s2":1,"p":0.5},
                    {"s":1,"a":0,"s2":0,"p":1.0}]})");
  CHECK_THROWS_WITH_AS(read_instance(path), doctest::Contains("duplicate target"), ParseError);

  write_text(path, R"({"version": "1", "num_states": 2, "num_actions": 1,
    "admissible": [[0], [0]],
    "rewards": [{"s":0,"a":0,"r":1.0}, {"s":1,"a":0,"r":0.0}],
    "transitions": [{"s":0,"a":0,"s2":0,"p":1.0}]})");
  CHECK_THROWS_WITH_AS(read_instance(path), doctest::Contains("no entries"), ParseError);

  write_text(path, R"({"version": "1", "num_states": 2, "num_actions": 2,
    "admissible": [[0], [0]],
    "rewards": [{"s":0,"a":0,"r":1.0}, {"s":0,"a":1,"r":1.0}, {"s":1,"a":0,"r":0.0}],
    "transitions": [{"s":0,"a":0,"s2":0,"p":1.0}, {"s":1,"a":0,"s2":0,"p":1.0}]})");
  CHECK_THROWS_WITH_AS(read_instance(path), doctest::Contains("not admissible"), ParseError);

  write_text(path, R"({"version": "1", "num_states": 1, "num_actions": 1,
    "admissible": [[0]], "rewards": [{"s":0,"a":0,"r":0.0}],
    "transitions": [[[1.0]]], "reward_resolution": "zebra"})");
  CHECK_THROWS_AS(read_instance(path), ParseError);

  write_text(path, R"({"version": "1", "num_states": 1, "num_actions": 1,
    "admissible": [[0]], "rewards": [{"s":0,"a":0,"r":0.0}],
    "transitions": [[[1.0]]], "metadata": {"note": 3}})");
  CHECK_THROWS_WITH_AS(read_instance(path), doctest::Contains("metadata"), ParseError);

  std::filesystem::remove(path);
}

TEST_CASE("writer refuses nonfinite values") {
  FiniteMdp m(1, 1);
  m.add_action(0, 0, TransitionRow::make_dense({1.0}), std::nan(""));
  CHECK_THROWS_AS(write_instance(m, temp_path("varmdp_never_written.json")), Error);
}
