#pragma once

#include <cstdint>

namespace varmdp {

// xoshiro256** 1.0 (Blackman/Vigna), state seeded through splitmix64.
//
// The generator is pinned to a named algorithm because reproducibility is a
// contract here: the same seed must give the same instance bytes on every
// platform and standard-library version. std::uniform_real_distribution and
// friends are implementation-defined, so none of them are used anywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // [0, 1), 53 random bits.
  double next_unit();

  // (0, 1]; used for row weights that must stay positive.
  double next_open_unit();

  // Unbiased draw from [0, bound); bound > 0.
  std::uint64_t next_below(std::uint64_t bound);

  // Inclusive on both ends.
  std::int64_t next_int(std::int64_t lo, std::int64_t hi);

  double next_real(double lo, double hi);

 private:
  std::uint64_t s_[4];
};

}  // namespace varmdp
