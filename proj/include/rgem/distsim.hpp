#pragma once

#include <rgem/bounds.hpp>
#include <rgem/geometry.hpp>
#include <rgem/oracles.hpp>
#include <rgem/problems.hpp>
#include <rgem/rgem.hpp>
#include <rgem/rng.hpp>
#include <rgem/trace.hpp>
#include <rgem/types.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

// Server/agent execution of RGEM as an explicit message-passing protocol.
// Logical rounds only: no latency model, single-threaded event order.

namespace rgem {

enum class MessageKind { signal, iterate_download, delta_upload, no_response };

inline const char* to_string(MessageKind k) {
  switch (k) {
    case MessageKind::signal: return "Signal";
    case MessageKind::iterate_download: return "IterateDownload";
    case MessageKind::delta_upload: return "DeltaUpload";
    case MessageKind::no_response: return "NoResponse";
  }
  return "?";
}

inline constexpr index_t kServerNode = -1;

inline std::string node_name(index_t id) {
  return id == kServerNode ? std::string("server") : "agent" + std::to_string(id);
}

/// FNV-1a over the raw bytes of a vector; identifies an iterate in the log.
inline std::uint64_t vector_digest(const Vector& v) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* p = reinterpret_cast<const unsigned char*>(v.data());
  const std::size_t bytes = static_cast<std::size_t>(v.size()) * sizeof(double);
  for (std::size_t b = 0; b < bytes; ++b) {
    h ^= p[b];
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Log entry. Payload vectors are not retained, only their size; x_digest is
/// the server iterate at send time (0 for agent-originated messages).
struct Message {
  std::uint64_t round = 0;
  MessageKind kind = MessageKind::signal;
  index_t from = kServerNode;
  index_t to = kServerNode;
  std::uint64_t payload_size = 0;  // bytes
  std::uint64_t x_digest = 0;
};

class MessageLog {
 public:
  explicit MessageLog(bool enabled = true) : enabled_(enabled) {}

  void push(const Message& msg) {
    if (enabled_) messages_.push_back(msg);
  }
  bool enabled() const { return enabled_; }
  const std::vector<Message>& messages() const { return messages_; }
  std::size_t size() const { return messages_.size(); }

  void write_jsonl(std::ostream& out) const {
    for (const Message& m : messages_) {
      out << "{\"round\":" << m.round << ",\"kind\":\"" << to_string(m.kind) << "\",\"from\":\""
          << node_name(m.from) << "\",\"to\":\"" << node_name(m.to)
          << "\",\"payload_size\":" << m.payload_size << "}\n";
    }
  }

 private:
  bool enabled_;
  std::vector<Message> messages_;
};

struct CommStats {
  std::uint64_t attempted_contacts = 0;
  std::uint64_t successful_rounds = 0;
  std::uint64_t retries = 0;
  std::uint64_t payload_messages = 0;  // downloads + uploads
  std::uint64_t bytes_down = 0;
  std::uint64_t bytes_up = 0;
};

enum class SimMode { deterministic, stochastic };
enum class RetryMode {
  redraw,     // a non-responsive contact re-draws i_t uniformly
  recontact,  // signal the same agent again
};

struct SimOptions {
  RetryMode retry = RetryMode::redraw;
  bool persist = true;                 // agents keep y_i; otherwise recomputed on activation
  std::uint64_t retry_cap = 100'000;   // consecutive failures within one iteration
  bool keep_log = true;
  RunOptions run;
};

inline constexpr std::uint64_t kDownloadBytesPerCoord = 8;
inline constexpr std::uint64_t kUploadBytesPerNonzero = 12;  // 4-byte index + 8-byte value

/// An agent holds x_i and (optionally) its last y_i. It never sends either.
class AgentNode {
 public:
  AgentNode(index_t id, const ProblemInstance& problem, const Vector& x0, bool persist, Rng noise)
      : id_(id), problem_(&problem), x_under_(x0), y_(Vector::Zero(x0.size())),
        persist_(persist), noise_(std::move(noise)) {}

  index_t id() const { return id_; }
  bool activated() const { return activated_; }
  const Vector& x_under() const { return x_under_; }

  /// Preload y_i^0 = grad f_i(x0) (exact initialization).
  Vector initialize_exact(CounterLedger& ledger) {
    grad(problem_->component(id_), id_, x_under_, y_, ledger);
    activated_ = true;
    return y_;
  }

  /// Process an iterate download and return the delta upload.
  Vector on_download(const Vector& x, double tau, SimMode mode, std::uint64_t batch,
                     CounterLedger& ledger) {
    Vector y_old;
    if (!activated_) {
      y_old = Vector::Zero(x.size());
    } else if (persist_) {
      y_old = y_;
    } else {
      grad(problem_->component(id_), id_, x_under_, y_old, ledger);
    }
    x_under_ = (x + tau * x_under_) / (1.0 + tau);
    Vector y_new(x.size());
    if (mode == SimMode::deterministic) {
      grad(problem_->component(id_), id_, x_under_, y_new, ledger);
    } else {
      sfo_batch(problem_->stochastic_oracle(id_), id_, x_under_, batch, noise_, y_new, ledger);
    }
    if (persist_) y_ = y_new;
    activated_ = true;
    return y_new - y_old;
  }

 private:
  index_t id_;
  const ProblemInstance* problem_;
  Vector x_under_;
  Vector y_;
  bool persist_;
  bool activated_ = false;
  Rng noise_;
};

/// Server state: x^t, g^t, the last received delta and the ergodic average.
struct ServerNode {
  std::uint64_t t = 0;
  Vector x;
  Vector g_agg;
  Vector delta_y;
  Vector x_bar;
  double ergodic_scale = 0.0;
};

struct SimResult {
  Vector x_k;
  Vector x_bar_k;
  RunTrace trace;
  CommStats stats;
  MessageLog log;
  CounterSnapshot counters;
};

/**
 * Steppable simulation. Each step() is one server iteration: compute x^t and
 * the ergodic update, then signal agents until one responds, download x^t to
 * it and apply its delta as g += delta / m. Non-responses never touch x^t.
 */
class Simulator {
 public:
  Simulator(const ProblemInstance& problem, Geometry geom, const RgemPolicy& policy, const Vector& x0,
            std::uint64_t k, std::vector<double> responsiveness, SimMode mode, std::uint64_t seed,
            SimOptions opts = {})
      : problem_(problem), geom_(std::move(geom)), policy_(policy), k_(k),
        p_(std::move(responsiveness)), mode_(mode), opts_(opts),
        selector_(make_stream(seed, kSelectionStream)),
        responder_(make_stream(seed, kResponsivenessStream)),
        pick_(0, problem.m() - 1), ledger_(problem.m()), log_(opts.keep_log) {
    validate(x0);
    const index_t m = problem.m();
    const index_t n = problem.dim();
    agents_.reserve(static_cast<std::size_t>(m));
    for (index_t i = 0; i < m; ++i) {
      agents_.emplace_back(i, problem, x0, opts_.persist, agent_stream(seed, static_cast<std::uint64_t>(i)));
    }
    geom_.reset(x0);
    server_.x = x0;
    server_.g_agg = Vector::Zero(n);
    server_.delta_y = Vector::Zero(n);
    server_.x_bar = x0;

    if (policy_.init == InitMode::exact_init) {
      // Setup broadcast: every agent receives x0 and uploads its full gradient.
      for (auto& a : agents_) {
        send(MessageKind::iterate_download, kServerNode, a.id(), download_bytes());
        const Vector y0 = a.initialize_exact(ledger_);
        send(MessageKind::delta_upload, a.id(), kServerNode, upload_bytes(y0));
        server_.g_agg += y0;
      }
      server_.g_agg /= static_cast<double>(m);
    }
    if (should_log(opts_.run, 0, k_)) record();
  }

  bool done() const { return server_.t >= k_; }
  std::uint64_t iteration() const { return server_.t; }
  const ServerNode& server() const { return server_; }
  const std::vector<AgentNode>& agents() const { return agents_; }
  const CommStats& stats() const { return stats_; }
  const MessageLog& log() const { return log_; }
  const RunTrace& trace() const { return trace_; }
  const CounterLedger& ledger() const { return ledger_; }
  index_t last_agent() const { return last_agent_; }

  /// P(x^t, x*).
  double distance_to_opt() const {
    return geom_.bregman_distance(server_.x, geom_.subgradient_at(server_.x), problem_.x_star());
  }

  void step() {
    if (done()) throw ConfigError("simulator: iteration limit reached");
    const std::uint64_t t = ++server_.t;
    const double md = static_cast<double>(problem_.m());

    const Vector prox_in = server_.g_agg + (policy_.alpha_t / md) * server_.delta_y;
    server_.x = geom_.prox_map(prox_in, server_.x, problem_.mu(), policy_.eta);
    server_.ergodic_scale = 1.0 + policy_.alpha * server_.ergodic_scale;
    if (t == 1) server_.x_bar = server_.x;
    else server_.x_bar += (server_.x - server_.x_bar) / server_.ergodic_scale;
    const std::uint64_t digest = log_.enabled() ? vector_digest(server_.x) : 0;

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uint64_t failures = 0;
    index_t i = pick_(selector_);
    for (;;) {
      ++stats_.attempted_contacts;
      send(MessageKind::signal, kServerNode, i, 0, digest);
      const bool responsive = unif(responder_) < p_[static_cast<std::size_t>(i)];
      if (responsive) break;
      send(MessageKind::no_response, i, kServerNode, 0);
      ++stats_.retries;
      if (++failures >= opts_.retry_cap) {
        throw LivelockError("simulator: no agent responded after " + std::to_string(failures) +
                            " consecutive contacts at iteration " + std::to_string(t));
      }
      if (opts_.retry == RetryMode::redraw) i = pick_(selector_);
    }

    send(MessageKind::iterate_download, kServerNode, i, download_bytes(), digest);
    const std::uint64_t batch = mode_ == SimMode::stochastic ? stochastic_batch_size(k_, policy_.alpha, t) : 0;
    Vector delta = agents_[static_cast<std::size_t>(i)].on_download(server_.x, policy_.tau, mode_, batch, ledger_);
    send(MessageKind::delta_upload, i, kServerNode, upload_bytes(delta));

    server_.delta_y = std::move(delta);
    server_.g_agg += server_.delta_y / md;
    ++stats_.successful_rounds;
    last_agent_ = i;
    if (should_log(opts_.run, t, k_)) record();
  }

  SimResult finish() {
    while (!done()) step();
    SimResult r;
    r.x_k = server_.x;
    r.x_bar_k = server_.x_bar;
    r.trace = trace_;
    r.stats = stats_;
    r.log = log_;
    r.counters = ledger_.snapshot();
    return r;
  }

 private:
  void validate(const Vector& x0) const {
    if (k_ < 1) throw ConfigError("simulate: k must be >= 1");
    if (policy_.m != problem_.m()) throw ConfigError("simulate: policy m does not match problem m");
    if (!(problem_.mu() > 0.0)) throw PolicyError("simulate: requires mu > 0");
    if (!geom_.is_euclidean()) throw ConfigError("simulate: mu > 0 requires the Euclidean dgf");
    if (x0.size() != problem_.dim()) throw DomainError("simulate: x0 has wrong dimension");
    if (!geom_.is_feasible(x0, 1e-9)) throw DomainError("simulate: x0 is infeasible");
    if (static_cast<index_t>(p_.size()) != problem_.m()) {
      throw ConfigError("simulate: need one responsiveness value per agent");
    }
    for (double p : p_) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("simulate: responsiveness must lie in [0, 1]");
    }
    if (mode_ == SimMode::stochastic) {
      if (!problem_.has_stochastic_oracles()) throw ConfigError("simulate: stochastic mode needs oracles");
      if (policy_.init != InitMode::zero_init) throw ConfigError("simulate: stochastic mode uses zero_init");
      // A stochastic y_i cannot be recomputed; the agent must keep it.
      if (!opts_.persist) throw ConfigError("simulate: stochastic agents must persist y_i");
    }
  }

  std::uint64_t download_bytes() const {
    return kDownloadBytesPerCoord * static_cast<std::uint64_t>(problem_.dim());
  }

  static std::uint64_t upload_bytes(const Vector& delta) {
    std::uint64_t nnz = 0;
    for (index_t j = 0; j < delta.size(); ++j) nnz += delta[j] != 0.0 ? 1 : 0;
    return kUploadBytesPerNonzero * nnz;
  }

  void send(MessageKind kind, index_t from, index_t to, std::uint64_t bytes, std::uint64_t digest = 0) {
    if (kind == MessageKind::iterate_download) {
      ++stats_.payload_messages;
      stats_.bytes_down += bytes;
    } else if (kind == MessageKind::delta_upload) {
      ++stats_.payload_messages;
      stats_.bytes_up += bytes;
    }
    log_.push(Message{server_.t, kind, from, to, bytes, digest});
  }

  void record() {
    TraceRecord rec;
    rec.iteration = server_.t;
    if (problem_.has_optimum()) {
      const Vector& out = server_.t == 0 ? server_.x : server_.x_bar;
      rec.psi_gap = problem_.psi_gap(out);
      rec.P_to_opt = distance_to_opt();
      rec.q_gap = problem_.q_gap(out);
    }
    rec.exact_grads = ledger_.exact_gradient_evals();
    rec.stochastic_samples = ledger_.stochastic_samples();
    rec.comm_rounds = stats_.payload_messages;
    rec.retries = stats_.retries;
    rec.wall_ns = clock_.elapsed_ns();
    trace_.records.push_back(rec);
  }

  const ProblemInstance& problem_;
  Geometry geom_;
  RgemPolicy policy_;
  std::uint64_t k_;
  std::vector<double> p_;
  SimMode mode_;
  SimOptions opts_;
  Rng selector_;
  Rng responder_;
  std::uniform_int_distribution<index_t> pick_;
  CounterLedger ledger_;
  MessageLog log_;
  CommStats stats_;
  RunTrace trace_;
  ServerNode server_;
  std::vector<AgentNode> agents_;
  index_t last_agent_ = -1;
  Stopwatch clock_;
};

inline SimResult simulate(const ProblemInstance& problem, const Geometry& geom, const RgemPolicy& policy,
                          const Vector& x0, std::uint64_t k, std::vector<double> responsiveness,
                          SimMode mode, std::uint64_t seed, const SimOptions& opts = {}) {
  Simulator sim(problem, geom, policy, x0, k, std::move(responsiveness), mode, seed, opts);
  return sim.finish();
}

// ---------------------------------------------------------------------------
// Communication complexity probe

struct ProbeRow {
  index_t m = 0;
  double cond = 0;
  double alpha = 0;
  std::uint64_t measured = 0;  // first k with mean_seeds P(x^k, x*) <= eps
  double predicted = 0;        // K(eps) from the zero_init complexity formula
  double distance_count = 0;   // iterations for the distance bound to reach eps
  std::uint64_t budget = 0;
  bool converged = false;
  bool pass = false;
};

struct ProbeConfig {
  std::vector<index_t> m_list;
  std::vector<double> cond_list;
  double eps = 1e-6;
  int seeds = 10;
  std::uint64_t master_seed = 1;
  double responsiveness = 1.0;
  double budget_factor = 10.0;
};

/// Builds the problem for one grid cell: m components and Lhat/mu = cond, with a known optimum.
using ProblemFamily = std::function<ProblemInstance(index_t m, double cond, Rng& rng)>;

/// Quadratic family with n coordinates, L_i = 1 and mu = 1/cond, where mu alone sets the conditioning.
inline ProblemFamily quadratic_family(index_t n) {
  return [n](index_t m, double cond, Rng& rng) { return make_mu_conditioned_quadratic(m, n, 1.0 / cond, rng); };
}

inline std::vector<ProbeRow> comm_complexity_probe(const ProbeConfig& cfg, const ProblemFamily& family) {
  if (cfg.m_list.empty() || cfg.cond_list.empty()) throw ConfigError("probe: empty grid");
  if (cfg.seeds < 1) throw ConfigError("probe: need at least one seed");
  std::vector<ProbeRow> rows;
  for (index_t m : cfg.m_list) {
    for (double cond : cfg.cond_list) {
      Rng prng = make_stream(cfg.master_seed ^ (static_cast<std::uint64_t>(m) << 32) ^
                                 static_cast<std::uint64_t>(std::llround(cond)),
                             kProblemStream);
      const ProblemInstance problem = family(m, cond, prng);
      const Vector x0 = Vector::Zero(problem.dim());
      const RgemPolicy policy = rgem_policy(m, problem.lhat(), problem.mu(), InitMode::zero_init);
      const BoundReport report = deterministic_bounds(problem, x0, policy, 0, cfg.eps);

      ProbeRow row;
      row.m = m;
      row.cond = problem.condition();
      row.alpha = policy.alpha;
      row.predicted = static_cast<double>(report.k_eps);
      row.distance_count = static_cast<double>(report.k_distance);
      row.budget = static_cast<std::uint64_t>(std::ceil(cfg.budget_factor * row.predicted));

      SimOptions opts;
      opts.keep_log = false;
      opts.run.record_trace = false;
      std::vector<std::unique_ptr<Simulator>> sims;
      const std::vector<double> p(static_cast<std::size_t>(m), cfg.responsiveness);
      for (int s = 0; s < cfg.seeds; ++s) {
        sims.push_back(std::make_unique<Simulator>(problem, problem.geometry(), policy, x0, row.budget, p,
                                                   SimMode::deterministic,
                                                   cfg.master_seed + static_cast<std::uint64_t>(s), opts));
      }
      for (std::uint64_t k = 1; k <= row.budget; ++k) {
        double mean = 0.0;
        for (auto& sim : sims) {
          sim->step();
          mean += sim->distance_to_opt();
        }
        mean /= static_cast<double>(cfg.seeds);
        if (mean <= cfg.eps) {
          row.measured = k;
          row.converged = true;
          break;
        }
      }
      row.pass = row.converged && static_cast<double>(row.measured) <= row.predicted;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace rgem
