#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace varmdp {

// Exact positive step for reward values. Rewards of a gridded instance are
// integer multiples ("ticks") of this, and all grid arithmetic runs on the
// integer ticks so equality and predecessor queries are exact.
struct Rational {
  std::int64_t num = 1;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string to_string() const;

  // Accepts "n/d" or a plain integer "n".
  static Rational from_string(const std::string& text);

  // Best rational with den <= max_den within 1e-12 relative error, via
  // continued fractions. Empty if nothing representable fits.
  static std::optional<Rational> from_double(double x, std::int64_t max_den = 1000000000);

  bool operator==(const Rational&) const = default;
};

// One transition row P(. | s, a). Dense rows carry a probability for every
// state; sparse rows carry strictly increasing column indices. Dense storage
// is used up to 1000 states, sparse above (or whenever the builder knows the
// row is genuinely sparse).
struct TransitionRow {
  std::vector<std::int32_t> cols;
  std::vector<double> probs;

  bool dense() const { return cols.empty(); }
  std::size_t nnz() const { return probs.size(); }
  double sum() const;
  double at(std::int32_t s2) const;

  static TransitionRow make_dense(std::vector<double> probs);
  static TransitionRow make_sparse(std::vector<std::int32_t> cols, std::vector<double> probs);
};

struct ValidationIssue {
  std::string where;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
  std::string to_string() const;
};

// Deterministic stationary policy: one action index per state.
struct StationaryPolicy {
  std::vector<std::int32_t> action;
  bool operator==(const StationaryPolicy&) const = default;
};

// Sorted distinct reward values of an instance. When the instance declares a
// resolution the parallel tick array carries the exact integer grid.
struct RewardSupport {
  std::vector<double> values;
  std::vector<std::int64_t> ticks;  // parallel to values when gridded, else empty
  std::optional<Rational> resolution;

  std::size_t size() const { return values.size(); }
  bool gridded() const { return !ticks.empty(); }
};

class FiniteMdp {
 public:
  FiniteMdp(std::int32_t num_states, std::int32_t num_actions);

  // Declares (s, a) admissible. Rows and rewards are stored in registration
  // order; the per-state admissible list is kept sorted by action index.
  void add_action(std::int32_t s, std::int32_t a, TransitionRow row, double reward);

  void set_reward_resolution(Rational r);

  std::int32_t num_states() const { return num_states_; }
  std::int32_t num_actions() const { return num_actions_; }
  const std::vector<std::int32_t>& admissible(std::int32_t s) const { return admissible_[s]; }
  bool is_admissible(std::int32_t s, std::int32_t a) const { return pair_index(s, a) >= 0; }

  // Flat pair id, -1 when (s, a) is not admissible.
  std::int64_t pair_index(std::int32_t s, std::int32_t a) const {
    return pair_id_[static_cast<std::size_t>(s) * num_actions_ + a];
  }
  std::size_t pair_count() const { return rewards_.size(); }

  const TransitionRow& row(std::int32_t s, std::int32_t a) const { return rows_[pair_index_checked(s, a)]; }
  double reward(std::int32_t s, std::int32_t a) const { return rewards_[pair_index_checked(s, a)]; }
  const TransitionRow& row_by_pair(std::int64_t pair) const { return rows_[pair]; }
  double reward_by_pair(std::int64_t pair) const { return rewards_[pair]; }

  const std::optional<Rational>& reward_resolution() const { return resolution_; }

  // Integer tick of a gridded value; MissingResolution without a grid.
  std::int64_t tick_of(double value) const;
  double value_of_tick(std::int64_t tick) const;
  std::int64_t reward_tick(std::int32_t s, std::int32_t a) const { return tick_of(reward(s, a)); }

  std::map<std::string, std::string>& metadata() { return metadata_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  // Per-state lowest admissible action; the default initial policy everywhere.
  StationaryPolicy lowest_action_policy() const;

 private:
  std::int64_t pair_index_checked(std::int32_t s, std::int32_t a) const;

  std::int32_t num_states_;
  std::int32_t num_actions_;
  std::vector<std::vector<std::int32_t>> admissible_;
  std::vector<std::int64_t> pair_id_;
  std::vector<TransitionRow> rows_;
  std::vector<double> rewards_;
  std::optional<Rational> resolution_;
  std::map<std::string, std::string> metadata_;
};

// Structural and numeric checks; collects issues, never throws. Valid means:
// nonempty admissible sets, rows sum to 1 within 1e-9 with entries in [0, 1],
// sparse columns strictly increasing and in range, rewards finite and on the
// declared grid (within 1e-9) when a resolution is present.
ValidationReport validate(const FiniteMdp& mdp);

// Distinct reward values over admissible pairs, ascending. Gridded instances
// dedupe exactly on ticks; otherwise values closer than 1e-12 merge.
RewardSupport reward_support(const FiniteMdp& mdp);

// Largest support value strictly below lambda. Below the support minimum the
// convention is lambda - 1, or lambda - resolution when the support is
// gridded. lambda itself need not be a support member.
double left_predecessor(double lambda, const RewardSupport& support);

}  // namespace varmdp
