#include "experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace rgem::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path + ": " + msg);
}

// Reads one JSON object, remembering which keys were consumed so the rest
// can be rejected as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) out = as_number(*v, child(key));
  }
  void number(const std::string& key, std::optional<double>& out) {
    if (const json* v = find(key)) out = as_number(*v, child(key));
  }
  template <class Int>
  void integer(const std::string& key, Int& out) {
    if (const json* v = find(key)) out = static_cast<Int>(as_unsigned(*v, child(key)));
  }
  void boolean(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(child(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void string(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(child(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  template <class E>
  void choice(const std::string& key, E& out, const std::vector<std::pair<std::string, E>>& options) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_string()) fail(child(key), "expected a string");
    const auto s = v->get<std::string>();
    for (const auto& [name, value] : options) {
      if (name == s) {
        out = value;
        return;
      }
    }
    std::string names;
    for (const auto& [name, value] : options) names += (names.empty() ? "" : ", ") + name;
    fail(child(key), "'" + s + "' is not one of " + names);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail(child(it.key()), "unknown key");
    }
  }

  static double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(path, "must be finite");
    return d;
  }

  static std::uint64_t as_unsigned(const json& v, const std::string& path) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    fail(path, "expected a nonnegative integer");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::vector<double> number_list(const json& v, const std::string& path) {
  std::vector<double> out;
  if (v.is_number()) {
    out.push_back(ObjectReader::as_number(v, path));
    return out;
  }
  if (!v.is_array()) fail(path, "expected a number or an array of numbers");
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(ObjectReader::as_number(v[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

std::vector<std::uint64_t> unsigned_list(const json& v, const std::string& path) {
  std::vector<std::uint64_t> out;
  if (!v.is_array()) {
    out.push_back(ObjectReader::as_unsigned(v, path));
    return out;
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(ObjectReader::as_unsigned(v[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

const std::vector<std::string> kMethods{"gem", "rgem", "rgem_stochastic", "simulate"};
const std::vector<std::string> kGemPolicies{"strongly_convex", "smooth_a", "smooth_b", "constant"};

bool is_stochastic(const SolverSpec& s) {
  return s.method == "rgem_stochastic" || (s.method == "simulate" && s.mode == SimMode::stochastic);
}

void check_semantics(const ExperimentConfig& c) {
  const ProblemSpec& p = c.problem;
  const SolverSpec& s = c.solver;
  if (p.family != "quadratic" && p.family != "logistic") {
    fail("problem.family", "'" + p.family + "' is not one of quadratic, logistic");
  }
  if (p.m < 1) fail("problem.m", "must be >= 1");
  if (p.family == "quadratic" || !p.dataset) {
    if (p.n < 1) fail("problem.n", "must be >= 1");
  }
  if (p.mu && p.cond) fail("problem", "give either mu or cond, not both");
  if (p.mu && *p.mu < 0.0) fail("problem.mu", "must be >= 0");
  if (p.cond && !(*p.cond > 0.0)) fail("problem.cond", "must be > 0");
  if (p.family == "quadratic" && !p.mu && !p.cond) fail("problem", "quadratic problems need mu or cond");
  if (!(p.spectrum_lo >= 0.0 && p.spectrum_hi >= p.spectrum_lo && p.spectrum_hi > 0.0)) {
    fail("problem.spectrum", "need 0 <= lo <= hi and hi > 0");
  }
  if (p.noise_sigma < 0.0) fail("problem.noise_sigma", "must be >= 0");
  if (!(p.reference_tol > 0.0)) fail("problem.reference_tol", "must be > 0");
  if (p.dataset && p.dataset->path.empty()) fail("problem.dataset.path", "required");
  if (p.per_agent < 1) fail("problem.per_agent", "must be >= 1");

  if (std::find(kMethods.begin(), kMethods.end(), s.method) == kMethods.end()) {
    fail("solver.method", "'" + s.method + "' is not one of gem, rgem, rgem_stochastic, simulate");
  }
  if (s.method == "gem") {
    if (std::find(kGemPolicies.begin(), kGemPolicies.end(), s.policy) == kGemPolicies.end()) {
      fail("solver.policy", "'" + s.policy + "' is not one of strongly_convex, smooth_a, smooth_b, constant");
    }
    if (s.policy == "constant" && (!s.alpha || !s.eta || !s.tau)) {
      fail("solver", "the constant policy needs alpha, eta and tau");
    }
  } else {
    if ((p.mu && *p.mu == 0.0) || (!p.mu && !p.cond)) fail("problem.mu", "randomized methods require mu > 0");
    if (s.alpha && !(*s.alpha > 0.0 && *s.alpha < 1.0)) fail("solver.alpha", "must lie in (0, 1)");
  }
  if (is_stochastic(s) && s.init != InitMode::zero_init) {
    fail("solver.init", "stochastic runs start from zero gradients; use \"zero\"");
  }
  if (is_stochastic(s) && !s.persist) fail("solver.persist", "stochastic agents must persist their gradients");
  if (s.method == "simulate") {
    if (s.responsiveness.size() > 1 && static_cast<index_t>(s.responsiveness.size()) != p.m) {
      fail("solver.responsiveness", "give one value or exactly m values");
    }
    for (double v : s.responsiveness) {
      if (!(v >= 0.0 && v <= 1.0)) fail("solver.responsiveness", "values must lie in [0, 1]");
    }
    if (s.retry_cap < 1) fail("solver.retry_cap", "must be >= 1");
  }
  if (!(s.audit_fraction >= 0.0 && s.audit_fraction <= 1.0)) fail("solver.audit_fraction", "must lie in [0, 1]");

  if (c.k < 1) fail("k", "must be >= 1");
  if (c.seeds.empty()) fail("seeds", "need at least one seed");
  if (c.output.cadence < 1) fail("output.cadence", "must be >= 1");
  if (c.sweep) {
    const SweepSpec& w = *c.sweep;
    if (w.m.empty()) fail("sweep.m", "grid must be nonempty");
    if (w.cond.empty()) fail("sweep.cond", "grid must be nonempty");
    if (w.sigma.empty()) fail("sweep.sigma", "grid must be nonempty");
    for (index_t m : w.m) if (m < 1) fail("sweep.m", "values must be >= 1");
    for (double v : w.cond) if (!(v > 0.0)) fail("sweep.cond", "values must be > 0");
    for (double v : w.sigma) if (!(v >= 0.0)) fail("sweep.sigma", "values must be >= 0");
    if (!(w.eps > 0.0)) fail("sweep.eps", "must be > 0");
    if (w.seeds < 1) fail("sweep.seeds", "must be >= 1");
    if (w.n < 1) fail("sweep.n", "must be >= 1");
    if (!(w.budget_factor >= 1.0)) fail("sweep.budget_factor", "must be >= 1");
  }
}

std::string fmt_double(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  ObjectReader root(j, "");

  if (const json* pj = root.find("problem")) {
    ObjectReader r(*pj, "problem");
    ProblemSpec& p = c.problem;
    r.string("family", p.family);
    r.integer("m", p.m);
    r.integer("n", p.n);
    r.number("mu", p.mu);
    r.number("cond", p.cond);
    if (const json* sp = r.find("spectrum")) {
      const auto v = number_list(*sp, "problem.spectrum");
      if (v.size() != 2) fail("problem.spectrum", "expected [lo, hi]");
      p.spectrum_lo = v[0];
      p.spectrum_hi = v[1];
    }
    r.number("b_scale", p.b_scale);
    r.integer("seed", p.seed);
    r.integer("per_agent", p.per_agent);
    r.number("noise_sigma", p.noise_sigma);
    r.number("reference_tol", p.reference_tol);
    if (const json* dj = r.find("dataset")) {
      ObjectReader d(*dj, "problem.dataset");
      DatasetSpec ds;
      d.string("path", ds.path);
      d.choice("format", ds.format, {{"sparse", DataFormat::sparse}, {"csv", DataFormat::csv}});
      d.integer("dim", ds.dim);
      d.choice("partition", ds.partition,
               {{"round_robin", PartitionScheme::round_robin}, {"contiguous", PartitionScheme::contiguous}});
      if (const json* s = d.find("shuffle_seed")) ds.shuffle_seed = ObjectReader::as_unsigned(*s, "problem.dataset.shuffle_seed");
      d.finish();
      p.dataset = ds;
    }
    r.finish();
  }

  if (const json* sj = root.find("solver")) {
    ObjectReader r(*sj, "solver");
    SolverSpec& s = c.solver;
    r.string("method", s.method);
    r.string("policy", s.policy);
    r.choice("init", s.init, {{"zero", InitMode::zero_init}, {"exact", InitMode::exact_init}});
    r.number("alpha", s.alpha);
    r.number("eta", s.eta);
    r.number("tau", s.tau);
    r.choice("mode", s.mode, {{"deterministic", SimMode::deterministic}, {"stochastic", SimMode::stochastic}});
    if (const json* v = r.find("responsiveness")) s.responsiveness = number_list(*v, "solver.responsiveness");
    r.choice("retry", s.retry, {{"redraw", RetryMode::redraw}, {"recontact", RetryMode::recontact}});
    r.boolean("persist", s.persist);
    r.integer("retry_cap", s.retry_cap);
    r.number("audit_fraction", s.audit_fraction);
    r.finish();
  }

  root.integer("k", c.k);
  if (const json* v = root.find("seeds")) c.seeds = unsigned_list(*v, "seeds");
  root.integer("workers", c.workers);

  if (const json* oj = root.find("output")) {
    ObjectReader r(*oj, "output");
    r.string("dir", c.output.dir);
    r.integer("cadence", c.output.cadence);
    r.boolean("timing", c.output.timing);
    r.boolean("jsonl", c.output.jsonl);
    r.boolean("message_log", c.output.message_log);
    r.finish();
  }

  if (const json* wj = root.find("sweep")) {
    ObjectReader r(*wj, "sweep");
    SweepSpec w;
    if (const json* v = r.find("m")) {
      for (std::uint64_t m : unsigned_list(*v, "sweep.m")) w.m.push_back(static_cast<index_t>(m));
    }
    if (const json* v = r.find("cond")) w.cond = number_list(*v, "sweep.cond");
    if (const json* v = r.find("sigma")) w.sigma = number_list(*v, "sweep.sigma");
    r.number("eps", w.eps);
    r.integer("seeds", w.seeds);
    r.integer("n", w.n);
    r.number("budget_factor", w.budget_factor);
    r.finish();
    c.sweep = w;
  }
  root.finish();
  check_semantics(c);
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_config(j);
}

fs::path resolve_out_dir(const ExperimentConfig& cfg) {
  if (!cfg.output.dir.empty()) return cfg.output.dir;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return "rgem_out";
}

ProblemInstance build_problem(const ProblemSpec& spec) {
  Rng rng = make_stream(spec.seed, kProblemStream);
  if (spec.family == "quadratic") {
    const double mu = spec.mu ? *spec.mu : spec.spectrum_hi / *spec.cond;
    ProblemInstance p = make_quadratic(spec.m, spec.n, mu, Spectrum{spec.spectrum_lo, spec.spectrum_hi}, rng, spec.b_scale);
    attach_noise_oracles(p, spec.noise_sigma);
    return p;
  }
  Dataset data = spec.dataset
                     ? load_and_partition(spec.dataset->path, spec.m, spec.dataset->partition,
                                          spec.dataset->shuffle_seed, spec.dataset->format, spec.dataset->dim)
                     : make_synthetic_dataset(spec.m, spec.n, spec.per_agent, rng);
  double lambda = spec.mu.value_or(0.0);
  if (spec.cond) lambda = make_logistic_components(data, 0.0).lhat() / *spec.cond;
  ProblemInstance p = make_logistic(data, lambda, spec.reference_tol);
  if (spec.noise_sigma > 0.0) attach_noise_oracles(p, spec.noise_sigma);
  return p;
}

namespace {

StepSchedule gem_schedule(const SolverSpec& s, const ProblemInstance& p) {
  if (s.policy == "strongly_convex") return StepSchedule::strongly_convex(p.lf(), p.mu());
  if (s.policy == "smooth_a") return StepSchedule::smooth_a(p.lf());
  if (s.policy == "smooth_b") return StepSchedule::smooth_b(p.lf());
  return StepSchedule::constant(*s.alpha, *s.eta, *s.tau);
}

RgemPolicy rgem_policy_for(const SolverSpec& s, const ProblemInstance& p) {
  if (s.alpha) return RgemPolicy::from_alpha(p.m(), *s.alpha, p.mu(), s.init);
  return rgem_policy(p.m(), p.lhat(), p.mu(), s.init);
}

std::vector<double> responsiveness_for(const SolverSpec& s, index_t m) {
  if (s.responsiveness.empty()) return std::vector<double>(static_cast<std::size_t>(m), 1.0);
  if (s.responsiveness.size() == 1) return std::vector<double>(static_cast<std::size_t>(m), s.responsiveness[0]);
  return s.responsiveness;
}

SeedOutput run_one(const ExperimentConfig& cfg, const ProblemInstance& problem, std::uint64_t seed) {
  SeedOutput out;
  out.seed = seed;
  const SolverSpec& s = cfg.solver;
  RunOptions opts;
  opts.cadence = cfg.output.cadence;
  opts.audit_fraction = s.audit_fraction;
  opts.audit_seed = seed;
  const Vector x0 = Vector::Zero(problem.dim());
  if (s.method == "gem") {
    out.trace = gem_run(problem, problem.geometry(), gem_schedule(s, problem), x0, cfg.k, opts).trace;
  } else if (s.method == "rgem") {
    out.trace = rgem_run(problem, problem.geometry(), rgem_policy_for(s, problem), x0, cfg.k, seed, opts).trace;
  } else if (s.method == "rgem_stochastic") {
    out.trace = rgem_stochastic_run(problem, problem.geometry(), rgem_policy_for(s, problem), x0, cfg.k, seed, opts).trace;
  } else {
    SimOptions so;
    so.retry = s.retry;
    so.persist = s.persist;
    so.retry_cap = s.retry_cap;
    so.keep_log = cfg.output.message_log;
    so.run = opts;
    SimResult r = simulate(problem, problem.geometry(), rgem_policy_for(s, problem), x0, cfg.k,
                           responsiveness_for(s, problem.m()), s.mode, seed, so);
    out.trace = std::move(r.trace);
    out.comm = r.stats;
    if (cfg.output.message_log) {
      std::ostringstream ss;
      r.log.write_jsonl(ss);
      out.message_log = ss.str();
    }
  }
  return out;
}

const char* kColumns =
    "series,seed,iteration,psi_gap,P_to_opt,q_gap,exact_grads,stochastic_samples,comm_rounds,retries,wall_ns";

}  // namespace

std::vector<SeedOutput> run_replicas(const ExperimentConfig& cfg, const ProblemInstance& problem) {
  std::vector<SeedOutput> outputs(cfg.seeds.size());
  unsigned workers = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, cfg.seeds.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cfg.seeds.size(); i = next++) {
      try {
        outputs[i] = run_one(cfg, problem, cfg.seeds[i]);
      } catch (const std::exception& e) {
        outputs[i].seed = cfg.seeds[i];
        outputs[i].error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return outputs;
}

void write_trace_csv(std::ostream& out, const std::string& series, std::optional<std::uint64_t> seed,
                     const RunTrace& trace, bool timing, bool header) {
  if (header) out << "#schema=" << kTraceSchema << "\n" << kColumns << "\n";
  const std::string seed_s = seed ? std::to_string(*seed) : "";
  for (const TraceRecord& r : trace.records) {
    out << series << ',' << seed_s << ',' << r.iteration << ',' << fmt_double(r.psi_gap) << ','
        << fmt_double(r.P_to_opt) << ',' << fmt_double(r.q_gap) << ',' << r.exact_grads << ','
        << r.stochastic_samples << ',' << r.comm_rounds << ',' << r.retries << ','
        << (timing ? r.wall_ns : 0) << '\n';
  }
}

void write_trace_jsonl(std::ostream& out, std::uint64_t seed, const RunTrace& trace, bool timing) {
  for (const TraceRecord& r : trace.records) {
    json j;
    j["schema"] = kTraceSchema;
    j["seed"] = seed;
    j["iteration"] = r.iteration;
    auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    j["psi_gap"] = num(r.psi_gap);
    j["P_to_opt"] = num(r.P_to_opt);
    j["q_gap"] = num(r.q_gap);
    j["exact_grads"] = r.exact_grads;
    j["stochastic_samples"] = r.stochastic_samples;
    j["comm_rounds"] = r.comm_rounds;
    j["retries"] = r.retries;
    j["wall_ns"] = timing ? r.wall_ns : 0;
    out << j.dump() << '\n';
  }
}

void write_aggregate_csv(std::ostream& out, const std::vector<SeedOutput>& runs, bool timing) {
  out << "#schema=" << kTraceSchema << "\n" << kColumns << "\n";
  if (runs.empty()) return;
  const std::size_t rows = runs.front().trace.records.size();
  const double n = static_cast<double>(runs.size());
  RunTrace mean, sd;
  for (std::size_t r = 0; r < rows; ++r) {
    auto stat = [&](auto field) {
      double s = 0.0;
      for (const auto& run : runs) s += static_cast<double>(field(run.trace.records[r]));
      const double mu = s / n;
      double v = 0.0;
      for (const auto& run : runs) {
        const double d = static_cast<double>(field(run.trace.records[r])) - mu;
        v += d * d;
      }
      return std::pair{mu, runs.size() > 1 ? std::sqrt(v / (n - 1.0)) : 0.0};
    };
    TraceRecord m, s;
    m.iteration = s.iteration = runs.front().trace.records[r].iteration;
    std::tie(m.psi_gap, s.psi_gap) = stat([](const TraceRecord& t) { return t.psi_gap; });
    std::tie(m.P_to_opt, s.P_to_opt) = stat([](const TraceRecord& t) { return t.P_to_opt; });
    std::tie(m.q_gap, s.q_gap) = stat([](const TraceRecord& t) { return t.q_gap; });
    // Counters are reported as rounded means / standard deviations.
    auto counter = [&](auto field, std::uint64_t& mo, std::uint64_t& so) {
      const auto [a, b] = stat(field);
      mo = static_cast<std::uint64_t>(std::llround(a));
      so = static_cast<std::uint64_t>(std::llround(b));
    };
    counter([](const TraceRecord& t) { return t.exact_grads; }, m.exact_grads, s.exact_grads);
    counter([](const TraceRecord& t) { return t.stochastic_samples; }, m.stochastic_samples, s.stochastic_samples);
    counter([](const TraceRecord& t) { return t.comm_rounds; }, m.comm_rounds, s.comm_rounds);
    counter([](const TraceRecord& t) { return t.retries; }, m.retries, s.retries);
    const auto [wm, ws] = stat([](const TraceRecord& t) { return t.wall_ns; });
    m.wall_ns = static_cast<std::int64_t>(wm);
    s.wall_ns = static_cast<std::int64_t>(ws);
    mean.records.push_back(m);
    sd.records.push_back(s);
  }
  write_trace_csv(out, "mean", std::nullopt, mean, timing, false);
  write_trace_csv(out, "std", std::nullopt, sd, timing, false);
}

void write_bound_csv(std::ostream& out, const std::vector<std::uint64_t>& iterations,
                     const std::vector<real_ext>& psi_curve, const std::vector<real_ext>& p_curve) {
  out << "#schema=" << kTraceSchema << "\n" << kColumns << "\n";
  RunTrace t;
  for (std::uint64_t k : iterations) {
    TraceRecord r;
    r.iteration = k;
    if (k < psi_curve.size()) r.psi_gap = static_cast<double>(psi_curve[k]);
    if (k < p_curve.size()) r.P_to_opt = static_cast<double>(p_curve[k]);
    t.records.push_back(r);
  }
  write_trace_csv(out, "bound", std::nullopt, t, false, false);
}

namespace {

struct Curves {
  std::vector<real_ext> psi;
  std::vector<real_ext> p;
  std::optional<BoundReport> report;
};

Curves bound_curves(const ExperimentConfig& cfg, const ProblemInstance& problem) {
  Curves c;
  if (!problem.has_optimum()) return c;
  const Vector x0 = Vector::Zero(problem.dim());
  const SolverSpec& s = cfg.solver;
  if (s.method == "gem") {
    if (s.policy != "constant") c.psi = gem_bound_curve(problem, gem_schedule(s, problem), x0, cfg.k);
    return c;
  }
  const RgemPolicy policy = rgem_policy_for(s, problem);
  BoundReport r = is_stochastic(s) ? stochastic_bounds(problem, x0, policy, problem.sigma_sq(), cfg.k)
                                   : deterministic_bounds(problem, x0, policy, cfg.k);
  c.psi = r.psi_curve;
  c.p = r.p_curve;
  c.report = std::move(r);
  return c;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << content;
  if (!f) throw Error("write failed for " + path.string());
}

void print_report(std::ostream& out, const BoundReport& r) {
  out << "kind            " << (r.stochastic ? "stochastic" : "deterministic") << "\n"
      << "init            " << to_string(r.init) << "\n"
      << "m               " << r.m << "\n"
      << "mu              " << fmt_double(r.mu) << "\n"
      << "cond            " << fmt_double(r.cond) << "\n"
      << "alpha           " << fmt_double(r.alpha) << "\n"
      << "P(x0,x*)        " << fmt_double(static_cast<double>(r.start.p0)) << "\n"
      << "psi(x0)-psi*    " << fmt_double(static_cast<double>(r.start.psi_gap0)) << "\n"
      << "sigma0^2        " << fmt_double(static_cast<double>(r.start.sigma0_sq)) << "\n";
  if (r.stochastic) out << "sigma^2         " << fmt_double(static_cast<double>(r.sigma_sq)) << "\n";
  out << "Delta           " << fmt_double(static_cast<double>(r.delta)) << "\n"
      << "eps             " << fmt_double(r.eps) << "\n"
      << "K(eps)          " << fmt_double(static_cast<double>(r.k_eps)) << "\n"
      << "K_distance(eps) " << fmt_double(static_cast<double>(r.k_distance)) << "\n";
  if (r.batches) {
    out << "sum B_t         " << r.batches->sum << "\n"
        << "sum B_t bound   " << fmt_double(static_cast<double>(r.batches->bound)) << "\n"
        << "sum B_t holds   " << (r.batches->holds ? "yes" : "no") << "\n";
  }
  const std::size_t last = r.p_curve.size() - 1;
  out << "P bound at k    " << fmt_double(static_cast<double>(r.p_curve[last])) << "\n"
      << "psi bound at k  " << fmt_double(static_cast<double>(r.psi_curve[last])) << "\n";
}

template <class Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const PolicyError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const ParseError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const std::exception& e) {
    err << "run failure: " << e.what() << "\n";
    return kRunFailure;
  }
}

}  // namespace

int cmd_validate(const ExperimentConfig& cfg, std::ostream& out) {
  out << "config ok: method=" << cfg.solver.method << " family=" << cfg.problem.family << " k=" << cfg.k
      << " seeds=" << cfg.seeds.size() << "\n";
  return kOk;
}

int cmd_bounds(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ProblemInstance problem = build_problem(cfg.problem);
    if (!problem.has_optimum()) throw UnavailableError("problem optimum is unknown; bounds need it");
    const Curves c = bound_curves(cfg, problem);
    if (c.report) {
      print_report(out, *c.report);
    } else {
      out << "policy          " << cfg.solver.policy << "\n";
      out << "psi bound at k  " << (c.psi.empty() ? "n/a" : fmt_double(static_cast<double>(c.psi.back()))) << "\n";
    }
    return static_cast<int>(kOk);
  });
}

int cmd_run(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const fs::path dir = resolve_out_dir(cfg);
    fs::create_directories(dir);
    const ProblemInstance problem = build_problem(cfg.problem);
    // Policy and geometry errors surface before any replica starts.
    if (cfg.solver.method != "gem") (void)rgem_policy_for(cfg.solver, problem);
    else (void)gem_schedule(cfg.solver, problem);

    const std::vector<SeedOutput> runs = run_replicas(cfg, problem);
    int code = kOk;
    for (const SeedOutput& r : runs) {
      if (!r.error.empty()) {
        err << "seed " << r.seed << ": run failure: " << r.error << "\n";
        code = kRunFailure;
      }
    }
    if (code != kOk) return code;

    const bool timing = cfg.output.timing;
    for (const SeedOutput& r : runs) {
      std::ostringstream csv;
      write_trace_csv(csv, "trace", r.seed, r.trace, timing);
      write_file(dir / ("trace_seed" + std::to_string(r.seed) + ".csv"), csv.str());
      if (cfg.output.jsonl) {
        std::ostringstream jl;
        write_trace_jsonl(jl, r.seed, r.trace, timing);
        write_file(dir / ("trace_seed" + std::to_string(r.seed) + ".jsonl"), jl.str());
      }
      if (cfg.output.message_log && !r.message_log.empty()) {
        write_file(dir / ("messages_seed" + std::to_string(r.seed) + ".jsonl"), r.message_log);
      }
    }
    std::ostringstream agg;
    write_aggregate_csv(agg, runs, timing);
    write_file(dir / "aggregate.csv", agg.str());

    const Curves c = bound_curves(cfg, problem);
    std::vector<std::uint64_t> iterations;
    for (const TraceRecord& r : runs.front().trace.records) iterations.push_back(r.iteration);
    std::ostringstream bnd;
    write_bound_csv(bnd, iterations, c.psi, c.p);
    write_file(dir / "bounds.csv", bnd.str());

    // Summary: aggregate means against the bound curves (5% margin on means). Rows whose
    // bound is below the resolution of the reference optimum cannot be judged and are skipped.
    if (problem.has_optimum() && !c.psi.empty()) {
      const double solve_tol = problem.hessian() ? 0.0 : cfg.problem.reference_tol;
      const double psi_floor = std::max(solve_tol, 1e-13 * (1.0 + std::abs(problem.psi_star())));
      const double p_floor = problem.mu() > 0.0 ? psi_floor / problem.mu() : psi_floor;
      const std::size_t rows = iterations.size();
      bool psi_ok = true, p_ok = true;
      std::size_t skipped = 0;
      for (std::size_t r = 0; r < rows; ++r) {
        const std::uint64_t k = iterations[r];
        double psi = 0.0, p = 0.0;
        for (const auto& run : runs) {
          psi += run.trace.records[r].psi_gap;
          p += run.trace.records[r].P_to_opt;
        }
        psi /= static_cast<double>(runs.size());
        p /= static_cast<double>(runs.size());
        const double margin = cfg.solver.method == "gem" ? 1.0 + 1e-9 : 1.05;
        const double bpsi = static_cast<double>(c.psi[k]);
        const double bp = c.p.empty() ? 0.0 : static_cast<double>(c.p[k]);
        if (bpsi < psi_floor || (!c.p.empty() && bp < p_floor)) {
          ++skipped;
          continue;
        }
        if (psi > bpsi * margin) psi_ok = false;
        if (!c.p.empty() && p > bp * margin) p_ok = false;
      }
      out << "bound check psi: " << (psi_ok ? "ok" : "VIOLATED") << "\n";
      if (!c.p.empty()) out << "bound check P:   " << (p_ok ? "ok" : "VIOLATED") << "\n";
      if (skipped > 0) out << "bound check: " << skipped << " row(s) below numerical resolution skipped\n";
    }
    for (const SeedOutput& r : runs) {
      const TraceRecord& last = r.trace.back();
      out << "seed " << r.seed << ": k=" << last.iteration << " psi_gap=" << fmt_double(last.psi_gap)
          << " P=" << fmt_double(last.P_to_opt) << " grads=" << last.exact_grads
          << " samples=" << last.stochastic_samples;
      if (r.comm) {
        out << " contacts=" << r.comm->attempted_contacts << " retries=" << r.comm->retries
            << " bytes=" << (r.comm->bytes_down + r.comm->bytes_up);
      }
      out << "\n";
    }
    out << "wrote " << runs.size() << " trace file(s) to " << dir.string() << "\n";
    return static_cast<int>(kOk);
  });
}

namespace {

struct SweepRow {
  index_t m = 0;
  double cond = 0, sigma = 0, alpha = 0;
  std::uint64_t measured = 0;
  double predicted = 0, distance_count = 0;
  std::uint64_t samples = 0;
  std::uint64_t retries = 0;
  double final_mean_p = std::nan("");
  bool pass = false;
};

SweepRow stochastic_cell(const SweepSpec& w, const SolverSpec& s, index_t m, double cond, double sigma,
                         std::uint64_t master_seed) {
  Rng prng = make_stream(master_seed ^ (static_cast<std::uint64_t>(m) << 32) ^
                             static_cast<std::uint64_t>(std::llround(cond)),
                         kProblemStream);
  ProblemInstance problem = make_mu_conditioned_quadratic(m, w.n, 1.0 / cond, prng);
  attach_noise_oracles(problem, sigma);
  const Vector x0 = Vector::Zero(problem.dim());
  const RgemPolicy policy = rgem_policy(m, problem.lhat(), problem.mu(), InitMode::zero_init);
  const BoundReport probe = stochastic_bounds(problem, x0, policy, problem.sigma_sq(), 1, w.eps);
  const auto k = static_cast<std::uint64_t>(std::ceil(static_cast<double>(probe.k_distance)));
  const BoundReport report = stochastic_bounds(problem, x0, policy, problem.sigma_sq(), k, w.eps);

  SweepRow row;
  row.m = m;
  row.cond = problem.condition();
  row.sigma = sigma;
  row.alpha = policy.alpha;
  row.predicted = static_cast<double>(report.k_eps);
  row.distance_count = static_cast<double>(report.k_distance);
  SimOptions opts;
  opts.keep_log = false;
  opts.run.record_trace = false;
  const std::vector<double> p = responsiveness_for(s, m);
  double mean_p = 0.0;
  for (int seed = 0; seed < w.seeds; ++seed) {
    Simulator sim(problem, problem.geometry(), policy, x0, k, p, SimMode::stochastic,
                  master_seed + static_cast<std::uint64_t>(seed), opts);
    while (!sim.done()) sim.step();
    mean_p += sim.distance_to_opt();
    row.samples += sim.ledger().stochastic_samples();
    row.retries += sim.stats().retries;
  }
  mean_p /= static_cast<double>(w.seeds);
  row.measured = k;
  row.final_mean_p = mean_p;
  row.samples /= static_cast<std::uint64_t>(w.seeds);
  row.pass = mean_p <= w.eps * 1.05 && report.batches->holds;
  return row;
}

}  // namespace

int cmd_sweep(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!cfg.sweep) throw ConfigError("sweep: section missing");
    const SweepSpec& w = *cfg.sweep;
    const fs::path dir = resolve_out_dir(cfg);
    fs::create_directories(dir);
    const std::uint64_t master = cfg.seeds.front();

    std::vector<SweepRow> rows;
    const bool any_det = std::any_of(w.sigma.begin(), w.sigma.end(), [](double s) { return s == 0.0; });
    if (any_det) {
      ProbeConfig pc;
      pc.m_list = w.m;
      pc.cond_list = w.cond;
      pc.eps = w.eps;
      pc.seeds = w.seeds;
      pc.master_seed = master;
      pc.budget_factor = w.budget_factor;
      const auto resp = cfg.solver.responsiveness;
      pc.responsiveness = resp.empty() ? 1.0 : resp.front();
      for (const ProbeRow& r : comm_complexity_probe(pc, quadratic_family(w.n))) {
        SweepRow s;
        s.m = r.m;
        s.cond = r.cond;
        s.alpha = r.alpha;
        s.measured = r.measured;
        s.predicted = r.predicted;
        s.distance_count = r.distance_count;
        s.pass = r.pass;
        rows.push_back(s);
      }
    }
    for (double sigma : w.sigma) {
      if (sigma == 0.0) continue;
      for (index_t m : w.m) {
        for (double cond : w.cond) rows.push_back(stochastic_cell(w, cfg.solver, m, cond, sigma, master));
      }
    }

    std::ostringstream csv;
    csv << "#schema=rgem-sweep/1\n"
        << "m,cond,sigma,alpha,measured_rounds,predicted_K,distance_K,samples,retries,final_mean_P,pass\n";
    bool all = true;
    for (const SweepRow& r : rows) {
      csv << r.m << ',' << fmt_double(r.cond) << ',' << fmt_double(r.sigma) << ',' << fmt_double(r.alpha) << ','
          << r.measured << ',' << fmt_double(r.predicted) << ',' << fmt_double(r.distance_count) << ','
          << r.samples << ',' << r.retries << ',' << fmt_double(r.final_mean_p) << ','
          << (r.pass ? "pass" : "fail") << '\n';
      all = all && r.pass;
    }
    write_file(dir / "sweep.csv", csv.str());
    out << csv.str();
    return static_cast<int>(all ? kOk : kRunFailure);
  });
}

}  // namespace rgem::cli
