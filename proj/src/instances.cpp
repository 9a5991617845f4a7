#include "varmdp/instances.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <utility>
#include <vector>

#include <json.hpp>

#include "varmdp/errors.hpp"
#include "varmdp/rng.hpp"

namespace varmdp {

using nlohmann::json;

namespace {

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void check_random_spec(const RandomSpec& spec) {
  if (spec.num_states < 1 || spec.num_actions < 1)
    throw Error("gen_random: num_states and num_actions must be positive");
  if (!(spec.density > 0.0) || spec.density > 1.0)
    throw Error("gen_random: density must lie in (0, 1], got " + fmt_double(spec.density));
  if (const auto* c = std::get_if<ContinuousUniformRewards>(&spec.rewards)) {
    if (!std::isfinite(c->lo) || !std::isfinite(c->hi) || !(c->lo < c->hi))
      throw Error("gen_random: continuous reward model needs lo < hi");
  } else {
    const auto& i = std::get<IntegerUniformRewards>(spec.rewards);
    if (i.r_max < 1) throw Error("gen_random: integer reward model needs r_max >= 1");
  }
}

}  // namespace

FiniteMdp gen_random(const RandomSpec& spec) {
  check_random_spec(spec);
  const std::int32_t S = spec.num_states;
  const std::int32_t A = spec.num_actions;
  // Sparse storage only pays off when the survival flips actually thin the
  // rows and the state space is large; everything else stays dense.
  const bool sparse = spec.density < 1.0 && S > 1000;

  FiniteMdp mdp(S, A);
  Rng rng(spec.seed);
  std::vector<double> weight(static_cast<std::size_t>(S));
  std::vector<char> keep(static_cast<std::size_t>(S));
  for (std::int32_t s = 0; s < S; ++s) {
    for (std::int32_t a = 0; a < A; ++a) {
      for (std::int32_t s2 = 0; s2 < S; ++s2) weight[s2] = rng.next_open_unit();
      std::fill(keep.begin(), keep.end(), char{1});
      if (spec.density < 1.0) {
        bool any = false;
        for (std::int32_t s2 = 0; s2 < S; ++s2) {
          keep[s2] = rng.next_unit() < spec.density;
          any = any || keep[s2];
        }
        if (!any) {
          // A row must stay stochastic; revive its heaviest target.
          keep[std::max_element(weight.begin(), weight.end()) - weight.begin()] = 1;
        }
      }
      double total = 0.0;
      for (std::int32_t s2 = 0; s2 < S; ++s2)
        if (keep[s2]) total += weight[s2];

      TransitionRow row;
      if (sparse) {
        std::vector<std::int32_t> cols;
        std::vector<double> probs;
        for (std::int32_t s2 = 0; s2 < S; ++s2) {
          if (!keep[s2]) continue;
          cols.push_back(s2);
          probs.push_back(weight[s2] / total);
        }
        row = TransitionRow::make_sparse(std::move(cols), std::move(probs));
      } else {
        std::vector<double> probs(static_cast<std::size_t>(S), 0.0);
        for (std::int32_t s2 = 0; s2 < S; ++s2)
          if (keep[s2]) probs[s2] = weight[s2] / total;
        row = TransitionRow::make_dense(std::move(probs));
      }

      double reward;
      if (const auto* c = std::get_if<ContinuousUniformRewards>(&spec.rewards)) {
        reward = rng.next_real(c->lo, c->hi);
      } else {
        reward = static_cast<double>(
            rng.next_int(0, std::get<IntegerUniformRewards>(spec.rewards).r_max));
      }
      mdp.add_action(s, a, std::move(row), reward);
    }
  }
  if (std::holds_alternative<IntegerUniformRewards>(spec.rewards))
    mdp.set_reward_resolution(Rational{1, 1});

  auto& meta = mdp.metadata();
  meta["generator"] = "random";
  meta["seed"] = std::to_string(spec.seed);
  meta["density"] = fmt_double(spec.density);
  if (const auto* c = std::get_if<ContinuousUniformRewards>(&spec.rewards))
    meta["reward_model"] = "continuous-uniform(" + fmt_double(c->lo) + "," + fmt_double(c->hi) + ")";
  else
    meta["reward_model"] =
        "integer-uniform(0.." +
        std::to_string(std::get<IntegerUniformRewards>(spec.rewards).r_max) + ")";
  return mdp;
}

namespace {

// Wind generation and demand kernels, both over six levels. Values are the
// published hourly transition frequencies; rows sum to one in excess of
// rounding.
constexpr std::array<std::array<double, 6>, 6> kGenKernel = {{
    {0.939, 0.051, 0.006, 0.002, 0.001, 0.001},
    {0.400, 0.443, 0.103, 0.029, 0.011, 0.014},
    {0.157, 0.373, 0.260, 0.115, 0.045, 0.050},
    {0.079, 0.240, 0.250, 0.192, 0.104, 0.135},
    {0.078, 0.139, 0.183, 0.192, 0.140, 0.268},
    {0.042, 0.074, 0.081, 0.099, 0.095, 0.609},
}};
constexpr std::array<std::array<double, 6>, 6> kDemandKernel = {{
    {0.751, 0.249, 0.000, 0.000, 0.000, 0.000},
    {0.031, 0.834, 0.135, 0.000, 0.000, 0.000},
    {0.000, 0.107, 0.819, 0.074, 0.000, 0.000},
    {0.000, 0.000, 0.139, 0.838, 0.023, 0.000},
    {0.000, 0.000, 0.000, 0.189, 0.794, 0.017},
    {0.000, 0.000, 0.000, 0.000, 0.267, 0.733},
}};

// All level arithmetic runs on integer tenths.
constexpr std::int32_t kGenTick[6] = {0, 6, 12, 18, 24, 30};
constexpr std::int32_t kDemandTick[6] = {6, 12, 18, 24, 30, 36};
constexpr std::int32_t kStorageLoTick = 4;    // 0.4
constexpr std::int32_t kStorageHiTick = 34;   // 3.4, 31 levels
constexpr std::int32_t kActionLoTick = -12;   // -1.2
constexpr std::int32_t kActionHiTick = 12;    // 1.2, 25 actions

void check_kernel(const std::array<std::array<double, 6>, 6>& kernel, const char* name) {
  for (std::size_t i = 0; i < 6; ++i) {
    double sum = 0.0;
    for (const double p : kernel[i]) {
      if (!(p >= 0.0) || p > 1.0)
        throw Error(std::string("microgrid: ") + name + " kernel row " + std::to_string(i) +
                    " has an entry outside [0, 1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw Error(std::string("microgrid: ") + name + " kernel row " + std::to_string(i) +
                  " sums to " + fmt_double(sum));
  }
}

}  // namespace

MicrogridSpec::MicrogridSpec() : gen_kernel(kGenKernel), demand_kernel(kDemandKernel) {}

std::int32_t microgrid_state_index(std::int32_t gi, std::int32_t bi, std::int32_t di) {
  if (gi < 0 || gi >= 6 || bi < 0 || bi >= 31 || di < 0 || di >= 6)
    throw Error("microgrid_state_index: level index out of range");
  return (gi * 31 + bi) * 6 + di;
}

double microgrid_gen_value(std::int32_t gi) {
  if (gi < 0 || gi >= 6) throw Error("microgrid_gen_value: index out of range");
  return static_cast<double>(kGenTick[gi]) / 10.0;
}

double microgrid_storage_value(std::int32_t bi) {
  if (bi < 0 || bi >= 31) throw Error("microgrid_storage_value: index out of range");
  return static_cast<double>(kStorageLoTick + bi) / 10.0;
}

double microgrid_demand_value(std::int32_t di) {
  if (di < 0 || di >= 6) throw Error("microgrid_demand_value: index out of range");
  return static_cast<double>(kDemandTick[di]) / 10.0;
}

double microgrid_action_value(std::int32_t ai) {
  if (ai < 0 || ai >= 25) throw Error("microgrid_action_value: index out of range");
  return static_cast<double>(kActionLoTick + ai) / 10.0;
}

FiniteMdp build_microgrid(const MicrogridSpec& spec) {
  check_kernel(spec.gen_kernel, "generation");
  check_kernel(spec.demand_kernel, "demand");

  FiniteMdp mdp(6 * 31 * 6, 25);
  for (std::int32_t gi = 0; gi < 6; ++gi) {
    for (std::int32_t bi = 0; bi < 31; ++bi) {
      const std::int32_t b_tick = kStorageLoTick + bi;
      // Discharge a keeps b' = b - a inside the storage bounds.
      const std::int32_t a_lo = std::max(kActionLoTick, b_tick - kStorageHiTick);
      const std::int32_t a_hi = std::min(kActionHiTick, b_tick - kStorageLoTick);
      if (a_lo > a_hi)
        throw InfeasibleState("microgrid: storage level " +
                              fmt_double(static_cast<double>(b_tick) / 10.0) +
                              " admits no action");
      for (std::int32_t di = 0; di < 6; ++di) {
        const std::int32_t s = microgrid_state_index(gi, bi, di);
        for (std::int32_t a_tick = a_lo; a_tick <= a_hi; ++a_tick) {
          const std::int32_t bi2 = b_tick - a_tick - kStorageLoTick;
          std::vector<std::int32_t> cols;
          std::vector<double> probs;
          cols.reserve(36);
          probs.reserve(36);
          for (std::int32_t g2 = 0; g2 < 6; ++g2) {
            const double pg = spec.gen_kernel[gi][g2];
            if (pg == 0.0) continue;
            for (std::int32_t d2 = 0; d2 < 6; ++d2) {
              const double pd = spec.demand_kernel[di][d2];
              if (pd == 0.0) continue;
              cols.push_back(microgrid_state_index(g2, bi2, d2));
              probs.push_back(pg * pd);
            }
          }
          const std::int32_t r_tick = kGenTick[gi] + a_tick - kDemandTick[di];
          mdp.add_action(s, a_tick - kActionLoTick,
                         TransitionRow::make_sparse(std::move(cols), std::move(probs)),
                         static_cast<double>(r_tick) / 10.0);
        }
      }
    }
  }
  mdp.set_reward_resolution(Rational{1, 10});

  auto& meta = mdp.metadata();
  meta["generator"] = "microgrid";
  meta["state_packing"] = "(gi * 31 + bi) * 6 + di";
  meta["action_encoding"] = "discharge (ai - 12) / 10";
  return mdp;
}

namespace {

std::string at_line(const std::string& path, const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  const std::size_t end = std::min(byte > 0 ? byte - 1 : std::size_t{0}, text.size());
  for (std::size_t i = 0; i < end; ++i)
    if (text[i] == '\n') ++line;
  return path + ":" + std::to_string(line);
}

[[noreturn]] void bad_field(const std::string& path, const std::string& field,
                            const std::string& what) {
  throw ParseError(path + ": field '" + field + "': " + what);
}

const json& need(const json& obj, const std::string& path, const std::string& field) {
  const auto it = obj.find(field);
  if (it == obj.end()) bad_field(path, field, "missing");
  return *it;
}

// Record member: looked up by key, reported with its enclosing record path.
const json& need_member(const json& obj, const std::string& path, const std::string& where,
                        const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) bad_field(path, where + "." + key, "missing");
  return *it;
}

std::int64_t need_int(const json& j, const std::string& path, const std::string& field) {
  if (!j.is_number_integer()) bad_field(path, field, "expected an integer");
  return j.get<std::int64_t>();
}

double need_number(const json& j, const std::string& path, const std::string& field) {
  if (!j.is_number()) bad_field(path, field, "expected a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) bad_field(path, field, "not a finite number");
  return x;
}

std::string pair_name(std::int64_t s, std::int64_t a) {
  return "(" + std::to_string(s) + ", " + std::to_string(a) + ")";
}

}  // namespace

FiniteMdp read_instance(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("read_instance: cannot open " + path);
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(at_line(path, text, e.byte) + ": " + e.what());
  }
  if (!root.is_object()) throw ParseError(path + ": top level is not an object");

  const json& jver = need(root, path, "version");
  if (!jver.is_string()) bad_field(path, "version", "expected a string");
  if (jver.get<std::string>() != "1")
    throw SchemaVersionError(path + ": unsupported instance schema version '" +
                             jver.get<std::string>() + "', this reader understands \"1\"");

  const std::int64_t ns = need_int(need(root, path, "num_states"), path, "num_states");
  const std::int64_t na = need_int(need(root, path, "num_actions"), path, "num_actions");
  if (ns < 1 || ns > std::numeric_limits<std::int32_t>::max())
    bad_field(path, "num_states", "must be a positive 32-bit integer");
  if (na < 1 || na > std::numeric_limits<std::int32_t>::max())
    bad_field(path, "num_actions", "must be a positive 32-bit integer");
  const std::int32_t S = static_cast<std::int32_t>(ns);
  const std::int32_t A = static_cast<std::int32_t>(na);

  const json& jadm = need(root, path, "admissible");
  if (!jadm.is_array() || jadm.size() != static_cast<std::size_t>(S))
    bad_field(path, "admissible", "expected an array with one action list per state");
  std::vector<std::vector<std::int32_t>> adm(static_cast<std::size_t>(S));
  std::vector<char> is_adm(static_cast<std::size_t>(S) * A, 0);
  for (std::int32_t s = 0; s < S; ++s) {
    const json& jrow = jadm[static_cast<std::size_t>(s)];
    const std::string where = "admissible[" + std::to_string(s) + "]";
    if (!jrow.is_array() || jrow.empty()) bad_field(path, where, "expected a nonempty array");
    for (const json& ja : jrow) {
      const std::int64_t a = need_int(ja, path, where);
      if (a < 0 || a >= A) bad_field(path, where, "action " + std::to_string(a) + " out of range");
      if (is_adm[static_cast<std::size_t>(s) * A + a])
        bad_field(path, where, "duplicate action " + std::to_string(a));
      is_adm[static_cast<std::size_t>(s) * A + a] = 1;
      adm[static_cast<std::size_t>(s)].push_back(static_cast<std::int32_t>(a));
    }
    std::sort(adm[static_cast<std::size_t>(s)].begin(), adm[static_cast<std::size_t>(s)].end());
  }

  const json& jrew = need(root, path, "rewards");
  if (!jrew.is_array()) bad_field(path, "rewards", "expected an array of {s, a, r} records");
  std::vector<double> reward(static_cast<std::size_t>(S) * A, 0.0);
  std::vector<char> has_reward(static_cast<std::size_t>(S) * A, 0);
  for (std::size_t i = 0; i < jrew.size(); ++i) {
    const json& jr = jrew[i];
    const std::string where = "rewards[" + std::to_string(i) + "]";
    if (!jr.is_object()) bad_field(path, where, "expected an object");
    const std::int64_t s = need_int(need_member(jr, path, where, "s"), path, where + ".s");
    const std::int64_t a = need_int(need_member(jr, path, where, "a"), path, where + ".a");
    if (s < 0 || s >= S || a < 0 || a >= A) bad_field(path, where, "pair index out of range");
    const std::size_t id = static_cast<std::size_t>(s) * A + a;
    if (!is_adm[id]) bad_field(path, where, "pair " + pair_name(s, a) + " is not admissible");
    if (has_reward[id]) bad_field(path, where, "duplicate reward for pair " + pair_name(s, a));
    has_reward[id] = 1;
    reward[id] = need_number(need_member(jr, path, where, "r"), path, where + ".r");
  }

  const json& jtr = need(root, path, "transitions");
  if (!jtr.is_array() || jtr.empty())
    bad_field(path, "transitions", "expected dense nested arrays or {s, a, s2, p} records");
  std::vector<TransitionRow> rows(static_cast<std::size_t>(S) * A);
  std::vector<char> has_row(static_cast<std::size_t>(S) * A, 0);
  if (jtr.front().is_array()) {
    if (jtr.size() != static_cast<std::size_t>(S))
      bad_field(path, "transitions", "dense form needs one entry per state");
    for (std::int32_t s = 0; s < S; ++s) {
      const json& jstate = jtr[static_cast<std::size_t>(s)];
      const std::string where = "transitions[" + std::to_string(s) + "]";
      if (!jstate.is_array() || jstate.size() != adm[static_cast<std::size_t>(s)].size())
        bad_field(path, where, "expected one row per admissible action");
      for (std::size_t k = 0; k < jstate.size(); ++k) {
        const json& jp = jstate[k];
        const std::string rw = where + "[" + std::to_string(k) + "]";
        if (!jp.is_array() || jp.size() != static_cast<std::size_t>(S))
          bad_field(path, rw, "expected num_states probabilities");
        std::vector<double> probs(static_cast<std::size_t>(S));
        for (std::int32_t s2 = 0; s2 < S; ++s2)
          probs[s2] = need_number(jp[static_cast<std::size_t>(s2)], path, rw);
        const std::size_t id =
            static_cast<std::size_t>(s) * A + adm[static_cast<std::size_t>(s)][k];
        rows[id] = TransitionRow::make_dense(std::move(probs));
        has_row[id] = 1;
      }
    }
  } else {
    std::vector<std::vector<std::pair<std::int32_t, double>>> entries(
        static_cast<std::size_t>(S) * A);
    for (std::size_t i = 0; i < jtr.size(); ++i) {
      const json& jt = jtr[i];
      const std::string where = "transitions[" + std::to_string(i) + "]";
      if (!jt.is_object()) bad_field(path, where, "expected an object");
      const std::int64_t s = need_int(need_member(jt, path, where, "s"), path, where + ".s");
      const std::int64_t a = need_int(need_member(jt, path, where, "a"), path, where + ".a");
      const std::int64_t s2 = need_int(need_member(jt, path, where, "s2"), path, where + ".s2");
      if (s < 0 || s >= S || a < 0 || a >= A) bad_field(path, where, "pair index out of range");
      if (s2 < 0 || s2 >= S)
        bad_field(path, where, "target state " + std::to_string(s2) + " out of range");
      const std::size_t id = static_cast<std::size_t>(s) * A + a;
      if (!is_adm[id]) bad_field(path, where, "pair " + pair_name(s, a) + " is not admissible");
      entries[id].emplace_back(static_cast<std::int32_t>(s2),
                               need_number(need_member(jt, path, where, "p"), path, where + ".p"));
    }
    for (std::int32_t s = 0; s < S; ++s) {
      for (const std::int32_t a : adm[static_cast<std::size_t>(s)]) {
        const std::size_t id = static_cast<std::size_t>(s) * A + a;
        auto& e = entries[id];
        if (e.empty())
          bad_field(path, "transitions", "no entries for admissible pair " + pair_name(s, a));
        std::sort(e.begin(), e.end());
        for (std::size_t i = 1; i < e.size(); ++i)
          if (e[i].first == e[i - 1].first)
            bad_field(path, "transitions",
                      "duplicate target " + std::to_string(e[i].first) + " for pair " +
                          pair_name(s, a));
        std::vector<std::int32_t> cols(e.size());
        std::vector<double> probs(e.size());
        for (std::size_t i = 0; i < e.size(); ++i) {
          cols[i] = e[i].first;
          probs[i] = e[i].second;
        }
        rows[id] = TransitionRow::make_sparse(std::move(cols), std::move(probs));
        has_row[id] = 1;
      }
    }
  }

  FiniteMdp mdp(S, A);
  for (std::int32_t s = 0; s < S; ++s) {
    for (const std::int32_t a : adm[static_cast<std::size_t>(s)]) {
      const std::size_t id = static_cast<std::size_t>(s) * A + a;
      if (!has_reward[id])
        bad_field(path, "rewards", "no reward for admissible pair " + pair_name(s, a));
      if (!has_row[id])
        bad_field(path, "transitions", "no row for admissible pair " + pair_name(s, a));
      mdp.add_action(s, a, std::move(rows[id]), reward[id]);
    }
  }

  if (const auto it = root.find("reward_resolution"); it != root.end()) {
    if (!it->is_string()) bad_field(path, "reward_resolution", "expected a string");
    try {
      mdp.set_reward_resolution(Rational::from_string(it->get<std::string>()));
    } catch (const ParseError& e) {
      bad_field(path, "reward_resolution", e.what());
    }
  }
  if (const auto it = root.find("metadata"); it != root.end()) {
    if (!it->is_object()) bad_field(path, "metadata", "expected an object");
    for (const auto& [key, value] : it->items()) {
      if (!value.is_string()) bad_field(path, "metadata." + key, "expected a string");
      mdp.metadata()[key] = value.get<std::string>();
    }
  }
  return mdp;
}

void write_instance(const FiniteMdp& mdp, const std::string& path) {
  const std::int32_t S = mdp.num_states();
  const auto finite_or_throw = [&](double x, const char* what) {
    if (!std::isfinite(x))
      throw Error("write_instance: " + std::string(what) + " is not finite");
    return x;
  };

  json root;
  root["version"] = "1";
  root["num_states"] = S;
  root["num_actions"] = mdp.num_actions();

  json jadm = json::array();
  bool all_dense = true;
  for (std::int32_t s = 0; s < S; ++s) {
    jadm.push_back(mdp.admissible(s));
    for (const std::int32_t a : mdp.admissible(s)) all_dense = all_dense && mdp.row(s, a).dense();
  }
  root["admissible"] = std::move(jadm);

  json jrew = json::array();
  json jtr = json::array();
  for (std::int32_t s = 0; s < S; ++s) {
    json jstate = json::array();
    for (const std::int32_t a : mdp.admissible(s)) {
      jrew.push_back({{"s", s}, {"a", a}, {"r", finite_or_throw(mdp.reward(s, a), "reward")}});
      const TransitionRow& row = mdp.row(s, a);
      if (all_dense) {
        for (const double p : row.probs) finite_or_throw(p, "probability");
        jstate.push_back(row.probs);
      } else if (row.dense()) {
        // A lone dense row in a sparse instance degrades to its nonzeros.
        for (std::int32_t s2 = 0; s2 < S; ++s2) {
          const double p = finite_or_throw(row.probs[s2], "probability");
          if (p != 0.0) jtr.push_back({{"s", s}, {"a", a}, {"s2", s2}, {"p", p}});
        }
      } else {
        for (std::size_t i = 0; i < row.nnz(); ++i)
          jtr.push_back({{"s", s},
                         {"a", a},
                         {"s2", row.cols[i]},
                         {"p", finite_or_throw(row.probs[i], "probability")}});
      }
    }
    if (all_dense) jtr.push_back(std::move(jstate));
  }
  root["rewards"] = std::move(jrew);
  root["transitions"] = std::move(jtr);

  if (mdp.reward_resolution()) root["reward_resolution"] = mdp.reward_resolution()->to_string();
  root["metadata"] = mdp.metadata();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("write_instance: cannot open " + path);
  out << root.dump(2) << "\n";
  if (!out.good()) throw Error("write_instance: cannot write " + path);
}

}  // namespace varmdp
