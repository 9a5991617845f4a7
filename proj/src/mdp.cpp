#include "varmdp/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "varmdp/errors.hpp"

namespace varmdp {

std::string Rational::to_string() const {
  if (den == 1) return std::to_string(num);
  return std::to_string(num) + "/" + std::to_string(den);
}

Rational Rational::from_string(const std::string& text) {
  const auto slash = text.find('/');
  try {
    if (slash == std::string::npos) {
      const std::int64_t n = std::stoll(text);
      if (n <= 0) throw ParseError("reward_resolution must be positive: " + text);
      return Rational{n, 1};
    }
    const std::int64_t n = std::stoll(text.substr(0, slash));
    const std::int64_t d = std::stoll(text.substr(slash + 1));
    if (n <= 0 || d <= 0) throw ParseError("reward_resolution must be positive: " + text);
    return Rational{n, d};
  } catch (const std::invalid_argument&) {
    throw ParseError("reward_resolution is not a rational: " + text);
  } catch (const std::out_of_range&) {
    throw ParseError("reward_resolution out of range: " + text);
  }
}

std::optional<Rational> Rational::from_double(double x, std::int64_t max_den) {
  if (!(x > 0) || !std::isfinite(x)) return std::nullopt;
  // Continued-fraction convergents of x.
  std::int64_t p0 = 0, q0 = 1, p1 = 1, q1 = 0;
  double frac = x;
  for (int iter = 0; iter < 64; ++iter) {
    const double ai = std::floor(frac);
    if (ai > 9e17) break;
    const std::int64_t a = static_cast<std::int64_t>(ai);
    const std::int64_t p2 = a * p1 + p0;
    const std::int64_t q2 = a * q1 + q0;
    if (q2 > max_den || q2 <= 0) break;
    p0 = p1;
    q0 = q1;
    p1 = p2;
    q1 = q2;
    const double approx = static_cast<double>(p1) / static_cast<double>(q1);
    if (p1 > 0 && std::fabs(approx - x) <= 1e-12 * std::max(1.0, std::fabs(x)))
      return Rational{p1, q1};
    const double rem = frac - ai;
    if (rem <= 0) break;
    frac = 1.0 / rem;
  }
  return std::nullopt;
}

double TransitionRow::sum() const {
  double acc = 0.0;
  for (const double p : probs) acc += p;
  return acc;
}

double TransitionRow::at(std::int32_t s2) const {
  if (dense()) return probs[s2];
  const auto it = std::lower_bound(cols.begin(), cols.end(), s2);
  if (it == cols.end() || *it != s2) return 0.0;
  return probs[it - cols.begin()];
}

TransitionRow TransitionRow::make_dense(std::vector<double> probs) {
  TransitionRow r;
  r.probs = std::move(probs);
  return r;
}

TransitionRow TransitionRow::make_sparse(std::vector<std::int32_t> cols,
                                         std::vector<double> probs) {
  if (cols.size() != probs.size())
    throw Error("TransitionRow: cols/probs length mismatch");
  TransitionRow r;
  r.cols = std::move(cols);
  r.probs = std::move(probs);
  return r;
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const auto& issue : issues) os << issue.where << ": " << issue.message << "\n";
  return os.str();
}

FiniteMdp::FiniteMdp(std::int32_t num_states, std::int32_t num_actions)
    : num_states_(num_states),
      num_actions_(num_actions),
      admissible_(num_states > 0 ? num_states : 0),
      pair_id_(static_cast<std::size_t>(num_states > 0 ? num_states : 0) *
                   (num_actions > 0 ? num_actions : 0),
               -1) {
  if (num_states < 1 || num_actions < 1)
    throw Error("FiniteMdp: needs at least one state and one action");
}

void FiniteMdp::add_action(std::int32_t s, std::int32_t a, TransitionRow row,
                           double reward) {
  if (s < 0 || s >= num_states_ || a < 0 || a >= num_actions_)
    throw Error("add_action: index out of range");
  if (pair_index(s, a) >= 0) throw Error("add_action: duplicate pair");
  if (row.dense()) {
    if (row.probs.size() != static_cast<std::size_t>(num_states_))
      throw Error("add_action: dense row length mismatch");
  } else {
    for (const std::int32_t c : row.cols)
      if (c < 0 || c >= num_states_) throw Error("add_action: sparse column out of range");
  }
  pair_id_[static_cast<std::size_t>(s) * num_actions_ + a] =
      static_cast<std::int64_t>(rows_.size());
  rows_.push_back(std::move(row));
  rewards_.push_back(reward);
  auto& adm = admissible_[s];
  adm.insert(std::upper_bound(adm.begin(), adm.end(), a), a);
}

void FiniteMdp::set_reward_resolution(Rational r) {
  if (r.num <= 0 || r.den <= 0) throw Error("reward_resolution must be positive");
  resolution_ = r;
}

std::int64_t FiniteMdp::pair_index_checked(std::int32_t s, std::int32_t a) const {
  const std::int64_t id = pair_index(s, a);
  if (id < 0) throw Error("pair (" + std::to_string(s) + "," + std::to_string(a) + ") not admissible");
  return id;
}

std::int64_t FiniteMdp::tick_of(double value) const {
  if (!resolution_) throw MissingResolution("instance declares no reward_resolution");
  const double t = value * static_cast<double>(resolution_->den) /
                   static_cast<double>(resolution_->num);
  return std::llround(t);
}

double FiniteMdp::value_of_tick(std::int64_t tick) const {
  if (!resolution_) throw MissingResolution("instance declares no reward_resolution");
  return static_cast<double>(tick) * static_cast<double>(resolution_->num) /
         static_cast<double>(resolution_->den);
}

StationaryPolicy FiniteMdp::lowest_action_policy() const {
  StationaryPolicy u;
  u.action.resize(num_states_);
  for (std::int32_t s = 0; s < num_states_; ++s) {
    if (admissible_[s].empty())
      throw InfeasibleState("state " + std::to_string(s) + " has no admissible action");
    u.action[s] = admissible_[s].front();
  }
  return u;
}

ValidationReport validate(const FiniteMdp& mdp) {
  ValidationReport report;
  auto issue = [&report](std::string where, std::string message) {
    report.issues.push_back({std::move(where), std::move(message)});
  };

  const std::int32_t S = mdp.num_states();
  for (std::int32_t s = 0; s < S; ++s) {
    if (mdp.admissible(s).empty()) {
      issue("state " + std::to_string(s), "empty admissible action set");
      continue;
    }
    for (const std::int32_t a : mdp.admissible(s)) {
      const std::string where = "pair (" + std::to_string(s) + "," + std::to_string(a) + ")";
      const TransitionRow& row = mdp.row(s, a);
      double sum = 0.0;
      bool entries_ok = true;
      for (const double p : row.probs) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0 + 1e-9) {
          issue(where, "probability entry outside [0, 1]: " + std::to_string(p));
          entries_ok = false;
          break;
        }
        sum += p;
      }
      if (entries_ok && std::fabs(sum - 1.0) > 1e-9)
        issue(where, "row sums to " + std::to_string(sum) + ", expected 1 within 1e-9");
      if (!row.dense()) {
        for (std::size_t i = 0; i + 1 < row.cols.size(); ++i)
          if (row.cols[i] >= row.cols[i + 1]) {
            issue(where, "sparse columns not strictly increasing");
            break;
          }
        for (const double p : row.probs)
          if (p == 0.0) {
            issue(where, "sparse row stores a zero probability");
            break;
          }
      }
      const double r = mdp.reward(s, a);
      if (!std::isfinite(r)) issue(where, "reward not finite");
    }
  }

  if (const auto& res = mdp.reward_resolution()) {
    if (res->num <= 0 || res->den <= 0) {
      issue("reward_resolution", "must be positive");
    } else {
      const double step = res->value();
      for (std::int32_t s = 0; s < S; ++s)
        for (const std::int32_t a : mdp.admissible(s)) {
          const double r = mdp.reward(s, a);
          if (!std::isfinite(r)) continue;
          const double snapped = std::llround(r / step) * step;
          if (std::fabs(snapped - r) > 1e-9)
            issue("pair (" + std::to_string(s) + "," + std::to_string(a) + ")",
                  "reward " + std::to_string(r) + " is off the declared grid");
        }
    }
  }
  return report;
}

RewardSupport reward_support(const FiniteMdp& mdp) {
  RewardSupport support;
  support.resolution = mdp.reward_resolution();
  if (support.resolution) {
    std::vector<std::int64_t> ticks;
    ticks.reserve(mdp.pair_count());
    for (std::int32_t s = 0; s < mdp.num_states(); ++s)
      for (const std::int32_t a : mdp.admissible(s)) ticks.push_back(mdp.reward_tick(s, a));
    std::sort(ticks.begin(), ticks.end());
    ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
    support.ticks = std::move(ticks);
    support.values.reserve(support.ticks.size());
    for (const std::int64_t t : support.ticks) support.values.push_back(mdp.value_of_tick(t));
  } else {
    std::vector<double> values;
    values.reserve(mdp.pair_count());
    for (std::int32_t s = 0; s < mdp.num_states(); ++s)
      for (const std::int32_t a : mdp.admissible(s)) values.push_back(mdp.reward(s, a));
    std::sort(values.begin(), values.end());
    for (const double v : values)
      if (support.values.empty() || v - support.values.back() > 1e-12)
        support.values.push_back(v);
  }
  return support;
}

double left_predecessor(double lambda, const RewardSupport& support) {
  if (support.values.empty()) throw Error("left_predecessor: empty support");
  const auto it = std::lower_bound(support.values.begin(), support.values.end(), lambda);
  if (it == support.values.begin()) {
    if (support.resolution) return lambda - support.resolution->value();
    return lambda - 1.0;
  }
  return *(it - 1);
}

}  // namespace varmdp
