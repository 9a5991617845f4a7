#include "varmdp/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "varmdp/augmented.hpp"
#include "varmdp/chain.hpp"
#include "varmdp/errors.hpp"
#include "varmdp/finite.hpp"
#include "varmdp/instances.hpp"
#include "varmdp/mdp.hpp"
#include "varmdp/steady.hpp"

namespace varmdp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

// Shortest decimal that parses back to the identical double; the one number
// format used in every artifact so reruns are byte-identical.
std::string num(double x) { return json(x).dump(); }

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[24];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string());
  out << text;
  if (!out.good()) throw Error("cannot write " + path.string());
}

// ---------------------------------------------------------------------------
// Manifest

enum class SolverKind { iterate, baseline, oracle };

struct Manifest {
  bool finite = false;
  Sense sense = Sense::maximize;
  std::string instance_path;  // empty when generated
  RandomSpec generator;
  bool has_generator = false;
  std::vector<double> alphas;
  int horizon = 0;
  std::vector<std::int32_t> s0;
  SolverKind solver = SolverKind::iterate;
  std::vector<std::uint64_t> seeds;  // empty: one instance from the spec itself
  std::string out;
  std::string problem_name;
  std::string solver_name = "iterate";
  std::string text;  // verbatim bytes, copied into the run directory
};

[[noreturn]] void bad_manifest(const std::string& path, const std::string& what) {
  throw ParseError(path + ": " + what);
}

std::int64_t manifest_int(const json& j, const std::string& path, const std::string& field) {
  if (!j.is_number_integer()) bad_manifest(path, "field '" + field + "': expected an integer");
  return j.get<std::int64_t>();
}

std::vector<double> manifest_alphas(const json& j, const std::string& path) {
  std::vector<double> alphas;
  const auto take = [&](const json& v) {
    if (!v.is_number()) bad_manifest(path, "field 'alpha': expected a number");
    alphas.push_back(v.get<double>());
  };
  if (j.is_array())
    for (const json& v : j) take(v);
  else
    take(j);
  if (alphas.empty()) bad_manifest(path, "field 'alpha': empty list");
  for (const double a : alphas)
    if (!(a > 0.0) || a > 1.0)
      bad_manifest(path, "field 'alpha': " + num(a) + " outside (0, 1]");
  return alphas;
}

RandomSpec manifest_generator(const json& j, const std::string& path) {
  if (!j.is_object()) bad_manifest(path, "field 'generator': expected an object");
  static const std::set<std::string> allowed = {"num_states", "num_actions", "reward_model",
                                                "r_max",      "lo",          "hi",
                                                "density",    "seed"};
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      bad_manifest(path, "field 'generator': unknown key '" + item.key() + "'");

  RandomSpec spec;
  if (!j.contains("num_states") || !j.contains("num_actions"))
    bad_manifest(path, "field 'generator': num_states and num_actions are required");
  const std::int64_t ns = manifest_int(j.at("num_states"), path, "generator.num_states");
  const std::int64_t na = manifest_int(j.at("num_actions"), path, "generator.num_actions");
  if (ns < 1 || na < 1) bad_manifest(path, "field 'generator': sizes must be positive");
  spec.num_states = static_cast<std::int32_t>(ns);
  spec.num_actions = static_cast<std::int32_t>(na);

  std::string model = "integer-uniform";
  if (j.contains("reward_model")) {
    if (!j.at("reward_model").is_string())
      bad_manifest(path, "field 'generator.reward_model': expected a string");
    model = j.at("reward_model").get<std::string>();
  }
  if (model == "integer-uniform") {
    if (j.contains("lo") || j.contains("hi"))
      bad_manifest(path, "field 'generator': lo/hi belong to continuous-uniform");
    IntegerUniformRewards r;
    if (j.contains("r_max")) r.r_max = manifest_int(j.at("r_max"), path, "generator.r_max");
    if (r.r_max < 1) bad_manifest(path, "field 'generator.r_max': must be at least 1");
    spec.rewards = r;
  } else if (model == "continuous-uniform") {
    if (j.contains("r_max"))
      bad_manifest(path, "field 'generator': r_max belongs to integer-uniform");
    ContinuousUniformRewards r;
    if (j.contains("lo")) {
      if (!j.at("lo").is_number()) bad_manifest(path, "field 'generator.lo': expected a number");
      r.lo = j.at("lo").get<double>();
    }
    if (j.contains("hi")) {
      if (!j.at("hi").is_number()) bad_manifest(path, "field 'generator.hi': expected a number");
      r.hi = j.at("hi").get<double>();
    }
    if (!(r.lo < r.hi)) bad_manifest(path, "field 'generator': needs lo < hi");
    spec.rewards = r;
  } else {
    bad_manifest(path, "field 'generator.reward_model': unknown model '" + model + "'");
  }
  if (j.contains("density")) {
    if (!j.at("density").is_number())
      bad_manifest(path, "field 'generator.density': expected a number");
    spec.density = j.at("density").get<double>();
    if (!(spec.density > 0.0) || spec.density > 1.0)
      bad_manifest(path, "field 'generator.density': outside (0, 1]");
  }
  if (j.contains("seed"))
    spec.seed = static_cast<std::uint64_t>(manifest_int(j.at("seed"), path, "generator.seed"));
  return spec;
}

Manifest parse_manifest(const std::string& path) {
  Manifest m;
  m.text = read_file(path);
  json root;
  try {
    root = json::parse(m.text);
  } catch (const json::parse_error& e) {
    bad_manifest(path, e.what());
  }
  if (!root.is_object()) bad_manifest(path, "top level is not an object");
  static const std::set<std::string> allowed = {"problem", "instance", "alpha", "horizon",
                                                "s0",      "solver",   "seeds", "out"};
  for (const auto& item : root.items())
    if (!allowed.count(item.key())) bad_manifest(path, "unknown manifest field '" + item.key() + "'");

  if (!root.contains("problem") || !root.at("problem").is_string())
    bad_manifest(path, "field 'problem': required string");
  m.problem_name = root.at("problem").get<std::string>();
  if (m.problem_name == "steady-max") {
    m.finite = false;
    m.sense = Sense::maximize;
  } else if (m.problem_name == "steady-min") {
    m.finite = false;
    m.sense = Sense::minimize;
  } else if (m.problem_name == "finite-max") {
    m.finite = true;
    m.sense = Sense::maximize;
  } else if (m.problem_name == "finite-min") {
    m.finite = true;
    m.sense = Sense::minimize;
  } else {
    bad_manifest(path, "field 'problem': unknown problem '" + m.problem_name + "'");
  }

  if (!root.contains("instance") || !root.at("instance").is_object())
    bad_manifest(path, "field 'instance': required object with 'path' or 'generator'");
  const json& jinst = root.at("instance");
  const bool has_path = jinst.contains("path");
  m.has_generator = jinst.contains("generator");
  if (has_path == m.has_generator)
    bad_manifest(path, "field 'instance': exactly one of 'path' or 'generator'");
  if (jinst.size() != 1) bad_manifest(path, "field 'instance': unexpected extra keys");
  if (has_path) {
    if (!jinst.at("path").is_string()) bad_manifest(path, "field 'instance.path': expected a string");
    m.instance_path = jinst.at("path").get<std::string>();
  } else {
    m.generator = manifest_generator(jinst.at("generator"), path);
  }

  if (!root.contains("alpha")) bad_manifest(path, "field 'alpha': required");
  m.alphas = manifest_alphas(root.at("alpha"), path);

  if (m.finite) {
    if (!root.contains("horizon")) bad_manifest(path, "field 'horizon': required for finite problems");
    const std::int64_t T = manifest_int(root.at("horizon"), path, "horizon");
    if (T < 1) bad_manifest(path, "field 'horizon': must be at least 1");
    m.horizon = static_cast<int>(T);
    if (!root.contains("s0")) bad_manifest(path, "field 's0': required for finite problems");
    const json& js0 = root.at("s0");
    const auto take = [&](const json& v) {
      const std::int64_t s = manifest_int(v, path, "s0");
      if (s < 0) bad_manifest(path, "field 's0': negative state");
      m.s0.push_back(static_cast<std::int32_t>(s));
    };
    if (js0.is_array())
      for (const json& v : js0) take(v);
    else
      take(js0);
    if (m.s0.empty()) bad_manifest(path, "field 's0': empty list");
  } else {
    if (root.contains("horizon")) bad_manifest(path, "field 'horizon': only valid for finite problems");
    if (root.contains("s0")) bad_manifest(path, "field 's0': only valid for finite problems");
  }

  if (root.contains("solver")) {
    if (!root.at("solver").is_string()) bad_manifest(path, "field 'solver': expected a string");
    m.solver_name = root.at("solver").get<std::string>();
  }
  if (m.solver_name == "iterate")
    m.solver = SolverKind::iterate;
  else if (m.solver_name == "baseline")
    m.solver = SolverKind::baseline;
  else if (m.solver_name == "oracle")
    m.solver = SolverKind::oracle;
  else
    bad_manifest(path, "field 'solver': unknown solver '" + m.solver_name + "'");
  if (m.solver == SolverKind::oracle && m.finite)
    bad_manifest(path, "field 'solver': the exhaustive oracle covers steady problems only");

  if (root.contains("seeds")) {
    if (!m.has_generator) bad_manifest(path, "field 'seeds': needs a generator instance");
    const json& js = root.at("seeds");
    if (!js.is_array() || js.empty()) bad_manifest(path, "field 'seeds': expected a nonempty array");
    for (const json& v : js)
      m.seeds.push_back(static_cast<std::uint64_t>(manifest_int(v, path, "seeds")));
  }

  if (root.contains("out")) {
    if (!root.at("out").is_string()) bad_manifest(path, "field 'out': expected a string");
    m.out = root.at("out").get<std::string>();
  }
  return m;
}

// ---------------------------------------------------------------------------
// Entry planning and execution

struct PlannedEntry {
  std::size_t instance = 0;
  double alpha = 0.0;
  std::int32_t s0 = -1;  // steady entries carry no start state
  std::string seed_label = "-";
};

struct EntryOutcome {
  double var_star = 0.0;
  bool certified = false;
  long long iterations = 0;
  std::vector<TraceEntry> trace;
  std::vector<std::pair<double, double>> cdf_initial;
  std::vector<std::pair<double, double>> cdf_final;
  std::vector<std::int32_t> policy_final;  // steady only
  double wall_ms = 0.0;
};

std::vector<std::pair<double, double>> cdf_pairs(const SteadyCdf& cdf) {
  std::vector<std::pair<double, double>> out;
  out.reserve(cdf.cdf.size());
  for (std::size_t i = 0; i < cdf.cdf.size(); ++i)
    out.emplace_back(cdf.support.values[i], cdf.cdf[i]);
  return out;
}

std::vector<std::pair<double, double>> cdf_pairs(const FiniteCdf& cdf) {
  std::vector<std::pair<double, double>> out;
  out.reserve(cdf.cdf.size());
  for (std::size_t i = 0; i < cdf.cdf.size(); ++i) out.emplace_back(cdf.values[i], cdf.cdf[i]);
  return out;
}

std::string policy_text(const std::vector<std::int32_t>& action) {
  std::string s = "[";
  for (std::size_t i = 0; i < action.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(action[i]);
  }
  return s + "]";
}

EntryOutcome run_steady_entry(const FiniteMdp& mdp, Sense sense, double alpha, SolverKind kind) {
  const auto t0 = Clock::now();
  EntryOutcome out;

  const StationaryPolicy init = mdp.lowest_action_policy();
  const ChainDiagnosis diag = diagnose_chain(mdp, init);
  if (!diag.unichain)
    throw MultichainError("initial policy " + policy_text(init.action) + " induces " +
                          std::to_string(diag.recurrent_classes.size()) + " recurrent classes");

  StationaryPolicy final_policy;
  if (kind == SolverKind::oracle) {
    const SteadyOracleResult r = exhaustive_policy_oracle(mdp, alpha, sense);
    out.var_star = r.var_star;
    out.iterations = r.evaluated;
    final_policy = r.policy_star;
    out.certified = certify_steady(mdp, final_policy, alpha, sense);
  } else if (kind == SolverKind::baseline) {
    const SteadySolveResult r = baseline_steady(mdp, alpha, sense);
    out.var_star = r.var_star;
    out.certified = r.certified;
    out.trace = r.trace;
    out.iterations = static_cast<long long>(r.trace.size());
    final_policy = r.policy_star;
  } else {
    const SteadySolveResult r =
        sense == Sense::maximize ? solve_steady_max(mdp, alpha) : solve_steady_min(mdp, alpha);
    out.var_star = r.var_star;
    out.certified = r.certified;
    out.trace = r.trace;
    out.iterations = static_cast<long long>(r.trace.size()) - 1;
    final_policy = r.policy_star;
  }
  out.cdf_initial = cdf_pairs(steady_cdf(mdp, init));
  out.cdf_final = cdf_pairs(steady_cdf(mdp, final_policy));
  out.policy_final = final_policy.action;
  out.wall_ms = ms_between(t0, Clock::now());
  return out;
}

EntryOutcome run_finite_entry(const FiniteMdp& mdp, Sense sense, double alpha, int T,
                              std::int32_t s0, SolverKind kind) {
  const auto t0 = Clock::now();
  EntryOutcome out;

  const LambdaGrid grid = build_grid(mdp, T);
  const HistoryPolicy init =
      realize_history_policy(constant_policy(mdp, grid), grid.value_of(grid.pin_hi(0)));
  HistoryPolicy final_policy = init;
  if (kind == SolverKind::baseline) {
    const FiniteBaselineResult r = baseline_finite(mdp, T, alpha, sense);
    out.var_star = r.var_star[static_cast<std::size_t>(s0)];
    final_policy = r.policy[static_cast<std::size_t>(s0)];
    out.certified = certify_finite(mdp, T, final_policy, alpha, s0, sense);
    out.iterations = 0;
  } else {
    const FiniteSolveResult r = sense == Sense::maximize ? solve_finite_max(mdp, T, alpha, s0)
                                                         : solve_finite_min(mdp, T, alpha, s0);
    out.var_star = r.var_star;
    out.certified = r.certified;
    out.trace = r.trace;
    out.iterations = static_cast<long long>(r.trace.size()) - 1;
    final_policy = r.policy_star;
  }
  out.cdf_initial = cdf_pairs(history_cdf(mdp, init, s0));
  out.cdf_final = cdf_pairs(history_cdf(mdp, final_policy, s0));
  out.wall_ms = ms_between(t0, Clock::now());
  return out;
}

// The manifest's instance list: one per seed for generator specs, the single
// file otherwise. Labels name the seed column in results.csv.
struct ResolvedInstances {
  std::vector<FiniteMdp> mdps;
  std::vector<std::string> labels;
};

std::vector<PlannedEntry> plan_entries(const Manifest& m, std::size_t instances) {
  std::vector<PlannedEntry> entries;
  for (std::size_t i = 0; i < instances; ++i)
    for (const double alpha : m.alphas) {
      if (m.finite)
        for (const std::int32_t s0 : m.s0) entries.push_back({i, alpha, s0, ""});
      else
        entries.push_back({i, alpha, -1, ""});
    }
  return entries;
}

unsigned resolve_workers(unsigned flag_value, bool flag_set) {
  if (flag_set) return std::max(1u, flag_value);
  if (const char* env = std::getenv("VARMDP_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return 1;
}

// Runs one job per entry on a bounded pool; exceptions stay with their entry.
template <typename Fn>
std::vector<std::exception_ptr> run_pool(std::size_t entries, unsigned workers, Fn&& body) {
  std::vector<std::exception_ptr> errors(entries);
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= entries) return;
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n = static_cast<unsigned>(
      std::max<std::size_t>(1, std::min<std::size_t>(workers, entries)));
  if (n <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return errors;
}

// Maps the first failure (in stable entry order) to the exit-code contract
// after reporting every failure.
int report_failures(const std::vector<std::exception_ptr>& errors,
                    const std::vector<std::string>& labels, std::ostream& err) {
  int code = 0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    int this_code = 1;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const MultichainError& e) {
      err << labels[i] << ": " << e.what() << "\n";
      this_code = 4;
    } catch (const CapExceeded& e) {
      err << labels[i] << ": " << e.what() << "\n";
      this_code = 5;
    } catch (const IterationCapExceeded& e) {
      err << labels[i] << ": " << e.what() << "\n";
      this_code = 5;
    } catch (const std::exception& e) {
      err << labels[i] << ": " << e.what() << "\n";
      this_code = 1;
    }
    if (code == 0) code = this_code;
  }
  return code;
}

std::string entry_id(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "entry_%03zu", i);
  return buf;
}

std::string csv_cdf(const std::vector<std::pair<double, double>>& cdf) {
  std::string text = "lambda,F\n";
  for (const auto& [lambda, f] : cdf) text += num(lambda) + "," + num(f) + "\n";
  return text;
}

std::string csv_trace(const std::vector<TraceEntry>& trace) {
  std::string text = "k,lambda_k,inner_value,inner_iters\n";
  for (const TraceEntry& e : trace)
    text += std::to_string(e.k) + "," + num(e.lambda_k) + "," + num(e.inner_value) + "," +
            std::to_string(e.inner_iterations) + "\n";
  return text;
}

void write_run_dir(const fs::path& dir, const Manifest& m,
                   const std::vector<PlannedEntry>& entries,
                   const std::vector<EntryOutcome>& outcomes, const std::string& started,
                   const std::string& finished) {
  fs::create_directories(dir / "entries");
  write_file(dir / "manifest.json", m.text);

  std::string results =
      "entry,problem,solver,alpha,s0,seed,var_star,certified,iterations\n";
  json meta_entries = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const PlannedEntry& e = entries[i];
    const EntryOutcome& o = outcomes[i];
    const std::string id = entry_id(i);
    results += id + "," + m.problem_name + "," + m.solver_name + "," + num(e.alpha) + "," +
               (m.finite ? std::to_string(e.s0) : std::string("-")) + "," + e.seed_label + "," +
               num(o.var_star) + "," + (o.certified ? "1" : "0") + "," +
               std::to_string(o.iterations) + "\n";

    const fs::path edir = dir / "entries" / id;
    fs::create_directories(edir);
    write_file(edir / "trace.csv", csv_trace(o.trace));
    write_file(edir / "cdf_initial.csv", csv_cdf(o.cdf_initial));
    write_file(edir / "cdf_final.csv", csv_cdf(o.cdf_final));
    if (!o.policy_final.empty()) {
      std::string ptext = "state,action\n";
      for (std::size_t s = 0; s < o.policy_final.size(); ++s)
        ptext += std::to_string(s) + "," + std::to_string(o.policy_final[s]) + "\n";
      write_file(edir / "policy_final.csv", ptext);
    }

    json millis = json::array();
    for (const TraceEntry& t : o.trace) millis.push_back(t.millis);
    meta_entries.push_back({{"id", id}, {"wall_ms", o.wall_ms}, {"trace_millis", millis}});
  }
  write_file(dir / "results.csv", results);

  json meta;
  meta["started_at"] = started;
  meta["finished_at"] = finished;
  meta["entries"] = std::move(meta_entries);
  write_file(dir / "metadata.json", meta.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Commands

struct CommonFlags {
  std::string manifest;
  std::string out;
  unsigned workers = 1;
  bool workers_set = false;
  std::int64_t seed = 0;
  bool seed_set = false;
};

Manifest load_manifest_with_overrides(const CommonFlags& flags) {
  Manifest m = parse_manifest(flags.manifest);
  if (flags.seed_set) {
    if (!m.has_generator)
      bad_manifest(flags.manifest, "--seed override needs a generator instance");
    if (!m.seeds.empty())
      bad_manifest(flags.manifest, "--seed override conflicts with a seeds list");
    m.generator.seed = static_cast<std::uint64_t>(flags.seed);
  }
  if (!flags.out.empty()) m.out = flags.out;
  return m;
}

// Loads/generates instances and validates each; reports to err and returns
// false on any load or validation failure (exit 3 belongs to the caller).
// Post-load manifest consistency problems still throw ParseError (exit 2).
bool materialize(const Manifest& m, ResolvedInstances& out, std::ostream& err) {
  try {
    if (!m.has_generator) {
      out.mdps.push_back(read_instance(m.instance_path));
      out.labels.push_back("-");
    } else if (m.seeds.empty()) {
      out.mdps.push_back(gen_random(m.generator));
      out.labels.push_back(std::to_string(m.generator.seed));
    } else {
      for (const std::uint64_t seed : m.seeds) {
        RandomSpec spec = m.generator;
        spec.seed = seed;
        out.mdps.push_back(gen_random(spec));
        out.labels.push_back(std::to_string(seed));
      }
    }
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return false;
  }
  bool ok = true;
  for (std::size_t i = 0; i < out.mdps.size(); ++i) {
    const ValidationReport report = validate(out.mdps[i]);
    if (!report.ok()) {
      err << "instance " << out.labels[i] << " failed validation:\n" << report.to_string();
      ok = false;
    }
  }
  if (!ok) return false;

  for (const FiniteMdp& mdp : out.mdps) {
    if (m.finite) {
      if (!mdp.reward_resolution())
        bad_manifest("manifest", "finite problems need a gridded instance (reward_resolution)");
      for (const std::int32_t s0 : m.s0)
        if (s0 >= mdp.num_states())
          bad_manifest("manifest", "s0 " + std::to_string(s0) + " out of range for " +
                                       std::to_string(mdp.num_states()) + " states");
    }
  }
  return true;
}

int cmd_solve(const CommonFlags& flags, const std::string& cmd_name, SolverKind force_solver,
              bool has_force, std::ostream& out, std::ostream& err) {
  Manifest m = load_manifest_with_overrides(flags);
  if (has_force) {
    m.solver = force_solver;
    m.solver_name = "oracle";
    if (m.finite) bad_manifest(flags.manifest, "the exhaustive oracle covers steady problems only");
  }
  if (m.out.empty()) bad_manifest(flags.manifest, "no output directory: set 'out' or pass --out");

  ResolvedInstances inst;
  if (!materialize(m, inst, err)) return 3;

  const std::vector<PlannedEntry> plan = [&] {
    std::vector<PlannedEntry> p = plan_entries(m, inst.mdps.size());
    for (PlannedEntry& e : p) e.seed_label = inst.labels[e.instance];
    return p;
  }();

  const std::string started = utc_now();
  std::vector<EntryOutcome> outcomes(plan.size());
  const unsigned workers = resolve_workers(flags.workers, flags.workers_set);
  const auto errors = run_pool(plan.size(), workers, [&](std::size_t i) {
    const PlannedEntry& e = plan[i];
    const FiniteMdp& mdp = inst.mdps[e.instance];
    outcomes[i] = m.finite
                      ? run_finite_entry(mdp, m.sense, e.alpha, m.horizon, e.s0, m.solver)
                      : run_steady_entry(mdp, m.sense, e.alpha, m.solver);
  });
  const std::string finished = utc_now();

  std::vector<std::string> labels;
  labels.reserve(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) labels.push_back(entry_id(i));
  if (const int code = report_failures(errors, labels, err); code != 0) return code;

  write_run_dir(m.out, m, plan, outcomes, started, finished);

  std::size_t certified = 0;
  std::string stars;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    certified += outcomes[i].certified ? 1 : 0;
    if (i) stars += ",";
    stars += num(outcomes[i].var_star);
  }
  const bool ok = certified == outcomes.size();
  out << cmd_name << " status=" << (ok ? "ok" : "uncertified") << " entries=" << outcomes.size()
      << " certified=" << certified << " var_star=" << stars << " out=" << m.out << "\n";
  if (!ok) {
    for (std::size_t i = 0; i < outcomes.size(); ++i)
      if (!outcomes[i].certified) err << entry_id(i) << ": certificate not reached\n";
  }
  return ok ? 0 : 1;
}

int cmd_certify(const CommonFlags& flags, std::ostream& out, std::ostream& err) {
  const Manifest m = load_manifest_with_overrides(flags);
  ResolvedInstances inst;
  if (!materialize(m, inst, err)) return 3;

  std::vector<PlannedEntry> plan = plan_entries(m, inst.mdps.size());
  for (PlannedEntry& e : plan) e.seed_label = inst.labels[e.instance];
  std::vector<char> passed(plan.size(), 0);
  const unsigned workers = resolve_workers(flags.workers, flags.workers_set);
  const auto errors = run_pool(plan.size(), workers, [&](std::size_t i) {
    const PlannedEntry& e = plan[i];
    const FiniteMdp& mdp = inst.mdps[e.instance];
    if (m.finite) {
      const FiniteSolveResult r = m.sense == Sense::maximize
                                      ? solve_finite_max(mdp, m.horizon, e.alpha, e.s0)
                                      : solve_finite_min(mdp, m.horizon, e.alpha, e.s0);
      passed[i] = certify_finite(mdp, m.horizon, r.policy_star, e.alpha, e.s0, m.sense) ? 1 : 0;
    } else {
      const SteadySolveResult r = m.sense == Sense::maximize ? solve_steady_max(mdp, e.alpha)
                                                             : solve_steady_min(mdp, e.alpha);
      passed[i] = certify_steady(mdp, r.policy_star, e.alpha, m.sense) ? 1 : 0;
    }
  });

  std::vector<std::string> labels;
  labels.reserve(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) labels.push_back(entry_id(i));
  if (const int code = report_failures(errors, labels, err); code != 0) return code;

  std::size_t certified = 0;
  for (const char c : passed) certified += c ? 1 : 0;
  const bool ok = certified == plan.size();
  out << "certify status=" << (ok ? "ok" : "failed") << " entries=" << plan.size()
      << " certified=" << certified << "\n";
  if (!ok)
    for (std::size_t i = 0; i < plan.size(); ++i)
      if (!passed[i]) err << entry_id(i) << ": certificate check failed\n";
  return ok ? 0 : 1;
}

int cmd_compare(const CommonFlags& flags, std::ostream& out, std::ostream& err) {
  const Manifest m = load_manifest_with_overrides(flags);
  if (m.out.empty()) bad_manifest(flags.manifest, "no output directory: set 'out' or pass --out");
  ResolvedInstances inst;
  if (!materialize(m, inst, err)) return 3;

  std::vector<PlannedEntry> plan = plan_entries(m, inst.mdps.size());
  for (PlannedEntry& e : plan) e.seed_label = inst.labels[e.instance];

  struct Row {
    double iterate_var = 0.0;
    double baseline_var = 0.0;
    double iterate_ms = 0.0;
    double baseline_ms = 0.0;
  };
  std::vector<Row> rows(plan.size());
  const unsigned workers = resolve_workers(flags.workers, flags.workers_set);
  const auto errors = run_pool(plan.size(), workers, [&](std::size_t i) {
    const PlannedEntry& e = plan[i];
    const FiniteMdp& mdp = inst.mdps[e.instance];
    Row row;
    const auto t0 = Clock::now();
    if (m.finite) {
      const FiniteSolveResult r = m.sense == Sense::maximize
                                      ? solve_finite_max(mdp, m.horizon, e.alpha, e.s0)
                                      : solve_finite_min(mdp, m.horizon, e.alpha, e.s0);
      row.iterate_var = r.var_star;
    } else {
      const SteadySolveResult r = m.sense == Sense::maximize ? solve_steady_max(mdp, e.alpha)
                                                             : solve_steady_min(mdp, e.alpha);
      row.iterate_var = r.var_star;
    }
    const auto t1 = Clock::now();
    if (m.finite) {
      const FiniteBaselineResult r = baseline_finite(mdp, m.horizon, e.alpha, m.sense);
      row.baseline_var = r.var_star[static_cast<std::size_t>(e.s0)];
    } else {
      const SteadySolveResult r = baseline_steady(mdp, e.alpha, m.sense);
      row.baseline_var = r.var_star;
    }
    const auto t2 = Clock::now();
    row.iterate_ms = ms_between(t0, t1);
    row.baseline_ms = ms_between(t1, t2);
    rows[i] = row;
  });

  std::vector<std::string> labels;
  labels.reserve(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) labels.push_back(entry_id(i));
  if (const int code = report_failures(errors, labels, err); code != 0) return code;

  fs::create_directories(m.out);
  std::string csv = "entry,problem,alpha,s0,seed,iterate_var,baseline_var,agree\n";
  json meta_entries = json::array();
  std::size_t disagreements = 0;
  double iterate_ms = 0.0;
  double baseline_ms = 0.0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const PlannedEntry& e = plan[i];
    const Row& r = rows[i];
    const bool agree = r.iterate_var == r.baseline_var;
    disagreements += agree ? 0 : 1;
    iterate_ms += r.iterate_ms;
    baseline_ms += r.baseline_ms;
    csv += entry_id(i) + "," + m.problem_name + "," + num(e.alpha) + "," +
           (m.finite ? std::to_string(e.s0) : std::string("-")) + "," + e.seed_label + "," +
           num(r.iterate_var) + "," + num(r.baseline_var) + "," + (agree ? "1" : "0") + "\n";
    meta_entries.push_back({{"id", entry_id(i)},
                            {"iterate_ms", r.iterate_ms},
                            {"baseline_ms", r.baseline_ms}});
  }
  write_file(fs::path(m.out) / "compare.csv", csv);
  json meta;
  meta["entries"] = std::move(meta_entries);
  write_file(fs::path(m.out) / "metadata.json", meta.dump(2) + "\n");

  const bool ok = disagreements == 0;
  char timing[96];
  std::snprintf(timing, sizeof timing, "iterate_ms=%.3f baseline_ms=%.3f ratio=%.3f", iterate_ms,
                baseline_ms, iterate_ms > 0.0 ? baseline_ms / iterate_ms : 0.0);
  out << "compare status=" << (ok ? "ok" : "disagree") << " entries=" << plan.size()
      << " disagreements=" << disagreements << " " << timing << " out=" << m.out << "\n";
  return ok ? 0 : 1;
}

int cmd_export(const std::string& run_dir, std::string out_dir, std::ostream& out) {
  const fs::path run(run_dir);
  if (out_dir.empty()) out_dir = (run / "export").string();
  if (!fs::exists(run / "results.csv"))
    throw MissingArtifact(run_dir + ": results.csv not found");
  if (!fs::exists(run / "metadata.json"))
    throw MissingArtifact(run_dir + ": metadata.json not found");

  json meta;
  try {
    meta = json::parse(read_file((run / "metadata.json").string()));
  } catch (const json::parse_error& e) {
    throw MissingArtifact(run_dir + ": metadata.json unreadable: " + e.what());
  }
  if (!meta.contains("entries") || !meta.at("entries").is_array())
    throw MissingArtifact(run_dir + ": metadata.json lists no entries");

  fs::create_directories(out_dir);
  std::size_t count = 0;
  for (const json& je : meta.at("entries")) {
    const std::string id = je.at("id").get<std::string>();
    const fs::path edir = run / "entries" / id;
    for (const char* name : {"trace.csv", "cdf_initial.csv", "cdf_final.csv"})
      if (!fs::exists(edir / name))
        throw MissingArtifact(run_dir + ": " + id + "/" + name + " not found");

    // Join the deterministic trace with its wall-clock column.
    const std::string trace = read_file((edir / "trace.csv").string());
    const json& millis = je.at("trace_millis");
    std::istringstream lines(trace);
    std::string line;
    std::getline(lines, line);  // header
    std::string joined = "k,lambda_k,inner_value,millis\n";
    std::size_t row = 0;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      if (row >= millis.size())
        throw MissingArtifact(run_dir + ": " + id + ": trace timing shorter than trace");
      // Keep k, lambda_k, inner_value; swap the iteration count for millis.
      const auto last = line.rfind(',');
      joined += line.substr(0, last) + "," + num(millis[row].get<double>()) + "\n";
      ++row;
    }
    write_file(fs::path(out_dir) / (id + "_trace.csv"), joined);
    fs::copy_file(edir / "cdf_initial.csv", fs::path(out_dir) / (id + "_cdf_initial.csv"),
                  fs::copy_options::overwrite_existing);
    fs::copy_file(edir / "cdf_final.csv", fs::path(out_dir) / (id + "_cdf_final.csv"),
                  fs::copy_options::overwrite_existing);
    ++count;
  }
  out << "export status=ok entries=" << count << " out=" << out_dir << "\n";
  return 0;
}

int cmd_validate(const std::string& path, std::ostream& out, std::ostream& err) {
  std::optional<FiniteMdp> mdp;
  try {
    mdp.emplace(read_instance(path));
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    out << "validate status=error\n";
    return 3;
  }
  const ValidationReport report = validate(*mdp);
  if (!report.ok()) {
    err << report.to_string();
    out << "validate status=invalid issues=" << report.issues.size() << "\n";
    return 3;
  }
  out << "validate status=ok states=" << mdp->num_states() << " actions=" << mdp->num_actions()
      << " pairs=" << mdp->pair_count()
      << " gridded=" << (mdp->reward_resolution() ? "1" : "0") << "\n";
  return 0;
}

}  // namespace

int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"value-at-risk solvers for finite MDPs"};
  app.require_subcommand(1);

  CommonFlags flags;

  // gen
  auto* gen = app.add_subcommand("gen", "generate a random instance file");
  std::int64_t gen_states = 0;
  std::int64_t gen_actions = 0;
  std::string gen_model = "integer-uniform";
  std::int64_t gen_rmax = 100;
  double gen_lo = 0.0;
  double gen_hi = 100.0;
  double gen_density = 1.0;
  std::string gen_out;
  gen->add_option("--states", gen_states, "number of states")->required();
  gen->add_option("--actions", gen_actions, "number of actions")->required();
  gen->add_option("--reward-model", gen_model, "integer-uniform or continuous-uniform");
  gen->add_option("--r-max", gen_rmax, "integer model: largest reward");
  gen->add_option("--lo", gen_lo, "continuous model: lower bound");
  gen->add_option("--hi", gen_hi, "continuous model: upper bound");
  gen->add_option("--density", gen_density, "transition density in (0, 1]");
  gen->add_option("--seed", flags.seed, "generator seed");
  gen->add_option("--out", gen_out, "output instance path")->required();

  // microgrid
  auto* microgrid = app.add_subcommand("microgrid", "write the embedded storage instance");
  std::string microgrid_out;
  microgrid->add_option("--out", microgrid_out, "output instance path")->required();

  // validate
  auto* validate_cmd = app.add_subcommand("validate", "check an instance file");
  std::string validate_path;
  validate_cmd->add_option("instance", validate_path, "instance file")->required();

  // solve / oracle / certify / compare
  const auto add_manifest_flags = [&](CLI::App* cmd, bool with_out) {
    cmd->add_option("--manifest", flags.manifest, "manifest file")->required();
    if (with_out) cmd->add_option("--out", flags.out, "output directory (overrides manifest)");
    cmd->add_option("--workers", flags.workers, "worker pool size")
        ->check(CLI::PositiveNumber)
        ->each([&](const std::string&) { flags.workers_set = true; });
    cmd->add_option("--seed", flags.seed, "override the generator seed")
        ->each([&](const std::string&) { flags.seed_set = true; });
  };
  auto* solve = app.add_subcommand("solve", "solve every manifest entry");
  add_manifest_flags(solve, true);
  auto* oracle = app.add_subcommand("oracle", "solve by exhaustive policy enumeration");
  add_manifest_flags(oracle, true);
  auto* certify = app.add_subcommand("certify", "solve and independently certify each entry");
  add_manifest_flags(certify, false);
  auto* compare = app.add_subcommand("compare", "run iterate and baseline side by side");
  add_manifest_flags(compare, true);

  // export
  auto* export_cmd = app.add_subcommand("export", "emit timed trace and CDF tables from a run");
  std::string export_run;
  std::string export_out;
  export_cmd->add_option("run", export_run, "run directory written by solve")->required();
  export_cmd->add_option("--out", export_out, "output directory (default: <run>/export)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) {
      RandomSpec spec;
      if (gen_states < 1 || gen_actions < 1) bad_manifest("gen", "--states and --actions must be positive");
      spec.num_states = static_cast<std::int32_t>(gen_states);
      spec.num_actions = static_cast<std::int32_t>(gen_actions);
      if (gen_model == "integer-uniform") {
        if (gen->count("--lo") || gen->count("--hi"))
          bad_manifest("gen", "--lo/--hi belong to continuous-uniform");
        if (gen_rmax < 1) bad_manifest("gen", "--r-max must be at least 1");
        spec.rewards = IntegerUniformRewards{gen_rmax};
      } else if (gen_model == "continuous-uniform") {
        if (gen->count("--r-max")) bad_manifest("gen", "--r-max belongs to integer-uniform");
        if (!(gen_lo < gen_hi)) bad_manifest("gen", "--lo must be below --hi");
        spec.rewards = ContinuousUniformRewards{gen_lo, gen_hi};
      } else {
        bad_manifest("gen", "unknown reward model '" + gen_model + "'");
      }
      if (!(gen_density > 0.0) || gen_density > 1.0) bad_manifest("gen", "--density outside (0, 1]");
      spec.density = gen_density;
      spec.seed = static_cast<std::uint64_t>(flags.seed);
      const FiniteMdp mdp = gen_random(spec);
      write_instance(mdp, gen_out);
      out << "gen status=ok states=" << mdp.num_states() << " actions=" << mdp.num_actions()
          << " pairs=" << mdp.pair_count() << " out=" << gen_out << "\n";
      return 0;
    }
    if (microgrid->parsed()) {
      const FiniteMdp mdp = build_microgrid();
      write_instance(mdp, microgrid_out);
      out << "microgrid status=ok states=" << mdp.num_states()
          << " pairs=" << mdp.pair_count() << " out=" << microgrid_out << "\n";
      return 0;
    }
    if (validate_cmd->parsed()) return cmd_validate(validate_path, out, err);
    if (solve->parsed()) return cmd_solve(flags, "solve", SolverKind::iterate, false, out, err);
    if (oracle->parsed()) return cmd_solve(flags, "oracle", SolverKind::oracle, true, out, err);
    if (certify->parsed()) return cmd_certify(flags, out, err);
    if (compare->parsed()) return cmd_compare(flags, out, err);
    if (export_cmd->parsed()) return cmd_export(export_run, export_out, out);
  } catch (const SchemaVersionError& e) {
    err << e.what() << "\n";
    return 3;
  } catch (const ParseError& e) {
    err << e.what() << "\n";
    return 2;
  } catch (const MultichainError& e) {
    err << e.what() << "\n";
    return 4;
  } catch (const CapExceeded& e) {
    err << e.what() << "\n";
    return 5;
  } catch (const IterationCapExceeded& e) {
    err << e.what() << "\n";
    return 5;
  } catch (const MissingArtifact& e) {
    err << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return 1;
  }
  err << "no subcommand\n";
  return 2;
}

}  // namespace varmdp
