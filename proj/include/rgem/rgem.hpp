#pragma once

#include <rgem/geometry.hpp>
#include <rgem/oracles.hpp>
#include <rgem/problems.hpp>
#include <rgem/rng.hpp>
#include <rgem/trace.hpp>
#include <rgem/types.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace rgem {

enum class InitMode {
  zero_init,   // y^{-1} = y^0 = 0, no gradient evaluation up front
  exact_init,  // y_i^{-1} = y_i^0 = grad f_i(x0), m counted evaluations
};

inline std::string to_string(InitMode m) { return m == InitMode::zero_init ? "zero" : "exact"; }

/**
 * Constant step sizes of the randomized method:
 *   tau = 1/(m(1-alpha)) - 1,  eta = alpha mu / (1-alpha),  alpha_t = m alpha,
 *   theta_t = alpha^{-t}.
 */
struct RgemPolicy {
  index_t m = 1;
  double alpha = 0.5;
  double tau = 0.0;
  double eta = 1.0;
  double alpha_t = 0.5;
  double mu = 1.0;
  InitMode init = InitMode::zero_init;

  /// Derive tau, eta and alpha_t from alpha.
  static RgemPolicy from_alpha(index_t m, double alpha, double mu, InitMode init) {
    if (m < 1) throw PolicyError("RGEM policy needs m >= 1");
    if (!(mu > 0.0)) throw PolicyError("RGEM policy requires strong convexity (mu > 0)");
    if (!(alpha > 0.0 && alpha < 1.0)) throw PolicyError("RGEM policy needs alpha in (0, 1)");
    RgemPolicy p;
    p.m = m;
    p.alpha = alpha;
    p.mu = mu;
    p.init = init;
    p.tau = 1.0 / (static_cast<double>(m) * (1.0 - alpha)) - 1.0;
    p.eta = alpha * mu / (1.0 - alpha);
    p.alpha_t = static_cast<double>(m) * alpha;
    if (p.tau < 0.0) {
      if (p.tau > -1e-12) p.tau = 0.0;
      else throw PolicyError("RGEM policy needs alpha >= 1 - 1/m so that tau >= 0");
    }
    return p;
  }
};

/**
 * zero_init:  alpha = 1 - 1/(m + sqrt(m^2 + 16 m Lhat/mu))
 * exact_init: alpha = 1 - 2/(m + sqrt(m^2 +  8 m Lhat/mu))
 */
inline RgemPolicy rgem_policy(index_t m, double lhat, double mu, InitMode init) {
  if (!(mu > 0.0)) throw PolicyError("RGEM policy requires strong convexity (mu > 0)");
  if (!(lhat >= 0.0)) throw PolicyError("RGEM policy needs Lhat >= 0");
  const long double md = static_cast<long double>(m);
  const long double c = static_cast<long double>(lhat) / static_cast<long double>(mu);
  long double alpha = 0.0L;
  if (init == InitMode::zero_init) {
    alpha = 1.0L - 1.0L / (md + std::sqrt(md * md + 16.0L * md * c));
  } else {
    alpha = 1.0L - 2.0L / (md + std::sqrt(md * md + 8.0L * md * c));
  }
  return RgemPolicy::from_alpha(m, static_cast<double>(alpha), mu, init);
}

/// B_t = ceil(k (1-alpha)^2 alpha^{-t}), evaluated in extended precision.
inline std::uint64_t stochastic_batch_size(std::uint64_t k, double alpha, std::uint64_t t) {
  const long double a = alpha;
  const long double v = static_cast<long double>(k) * (1.0L - a) * (1.0L - a) *
                        std::pow(a, -static_cast<long double>(t));
  if (!(v < 4.0e18L)) throw ConfigError("batch size overflows; reduce k or raise alpha");
  const long double c = std::ceil(v);
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(c));
}

/// Server- and agent-side state of one run.
struct RgemState {
  std::uint64_t t = 0;
  Vector x;                        // x^t
  std::vector<Vector> x_under;     // x_i^t per agent
  std::vector<Vector> y;           // y_i^t per agent
  std::vector<bool> touched;       // agent updated at least once
  Vector g_agg;                    // g^t = (1/m) sum_i y_i^t, maintained recursively
  Vector delta_y;                  // y^t_{i_t} - y^{t-1}_{i_t}
  Vector x_bar;                    // theta-weighted average of x^1..x^t
  double ergodic_scale = 0.0;      // S_t = sum_{s<=t} alpha^{t-s} = (sum theta_s) / theta_t
  index_t last_agent = -1;
};

struct RgemResult {
  Vector x_k;
  Vector x_bar_k;
  RunTrace trace;
  CounterSnapshot counters;
  std::vector<std::uint64_t> batch_sizes;  // stochastic runs only
  double max_prox_residual = 0.0;
  std::uint64_t prox_audits = 0;
};

namespace detail {

inline void rgem_log(const ProblemInstance& problem, const Geometry& geom, const RgemState& s,
                     const CounterLedger& ledger, const Stopwatch& clock, RunTrace& trace) {
  TraceRecord rec;
  rec.iteration = s.t;
  if (problem.has_optimum()) {
    const Vector& out = s.t == 0 ? s.x : s.x_bar;
    rec.psi_gap = problem.psi_gap(out);
    rec.P_to_opt = geom.bregman_distance(s.x, geom.subgradient_at(s.x), problem.x_star());
    rec.q_gap = problem.q_gap(out);
  }
  rec.exact_grads = ledger.exact_gradient_evals();
  rec.stochastic_samples = ledger.stochastic_samples();
  rec.wall_ns = clock.elapsed_ns();
  trace.records.push_back(rec);
}

// Shared iteration for the exact and stochastic variants. `refresh(i, t, x_under_i, y_out)`
// produces the new y_i^t for the selected agent.
template <class Refresh, class Observer>
RgemResult rgem_core(const ProblemInstance& problem, Geometry geom, const RgemPolicy& policy,
                     const Vector& x0, std::uint64_t k, std::uint64_t seed, const RunOptions& opts,
                     CounterLedger& ledger, Refresh&& refresh, Observer&& observer) {
  if (k < 1) throw ConfigError("rgem: k must be >= 1");
  if (policy.m != problem.m()) throw ConfigError("rgem: policy m does not match problem m");
  if (!(problem.mu() > 0.0)) throw PolicyError("rgem: requires mu > 0");
  if (!geom.is_euclidean()) throw ConfigError("rgem: mu > 0 requires the Euclidean dgf");
  if (x0.size() != problem.dim()) throw DomainError("rgem: x0 has wrong dimension");
  if (!geom.is_feasible(x0, 1e-9)) throw DomainError("rgem: x0 is infeasible");

  const index_t m = problem.m();
  const index_t n = problem.dim();
  const double mu = problem.mu();
  const double md = static_cast<double>(m);
  Stopwatch clock;
  Rng selector = make_stream(seed, kSelectionStream);
  std::uniform_int_distribution<index_t> pick(0, m - 1);
  Rng audit_rng = make_stream(opts.audit_seed, kAuditStream);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  RgemResult res;
  RgemState s;
  geom.reset(x0);
  s.x = x0;
  s.x_under.assign(static_cast<std::size_t>(m), x0);
  s.y.assign(static_cast<std::size_t>(m), Vector::Zero(n));
  s.touched.assign(static_cast<std::size_t>(m), false);
  s.g_agg = Vector::Zero(n);
  s.delta_y = Vector::Zero(n);
  s.x_bar = x0;

  if (policy.init == InitMode::exact_init) {
    for (index_t i = 0; i < m; ++i) {
      grad(problem.component(i), i, x0, s.y[static_cast<std::size_t>(i)], ledger);
      s.g_agg += s.y[static_cast<std::size_t>(i)];
    }
    s.g_agg /= md;
  }

  if (should_log(opts, 0, k)) rgem_log(problem, geom, s, ledger, clock, res.trace);

  Vector prox_in(n);
  Vector y_new(n);
  for (std::uint64_t t = 1; t <= k; ++t) {
    s.t = t;
    // (1/m) sum_i y~_i^t = g^{t-1} + (alpha_t/m) (y^{t-1}_{i_{t-1}} - y^{t-2}_{i_{t-1}})
    prox_in = s.g_agg + (policy.alpha_t / md) * s.delta_y;

    const bool audit = opts.audit_fraction > 0.0 && unif(audit_rng) < opts.audit_fraction;
    Vector s0;
    if (audit) s0 = geom.subgradient_at(s.x);
    Vector x_new = geom.prox_map(prox_in, s.x, mu, policy.eta);
    if (audit) {
      res.max_prox_residual = std::max(
          res.max_prox_residual,
          geom.normal_cone_residual(prox_in, s0, x_new, geom.stored_subgradient(), mu, policy.eta));
      ++res.prox_audits;
    }
    s.x = std::move(x_new);

    s.ergodic_scale = 1.0 + policy.alpha * s.ergodic_scale;
    if (t == 1) s.x_bar = s.x;
    else s.x_bar += (s.x - s.x_bar) / s.ergodic_scale;

    const index_t i = pick(selector);
    const auto iu = static_cast<std::size_t>(i);
    s.x_under[iu] = (s.x + policy.tau * s.x_under[iu]) / (1.0 + policy.tau);
    refresh(i, t, s.x_under[iu], y_new);
    s.delta_y = y_new - s.y[iu];
    s.y[iu] = y_new;
    s.touched[iu] = true;
    s.g_agg += s.delta_y / md;
    s.last_agent = i;

    observer(static_cast<const RgemState&>(s));
    if (should_log(opts, t, k)) rgem_log(problem, geom, s, ledger, clock, res.trace);
  }

  res.x_k = s.x;
  res.x_bar_k = s.x_bar;
  res.counters = ledger.snapshot();
  return res;
}

}  // namespace detail

/**
 * Randomized gradient extrapolation with exact component gradients. Each
 * iteration takes one prox step from the extrapolated aggregate, then
 * refreshes the block of a single uniformly drawn agent. Returns the last
 * iterate x^k and the ergodic output with weights alpha^{-t}.
 */
template <class Observer = NoopObserver>
RgemResult rgem_run(const ProblemInstance& problem, const Geometry& geom, const RgemPolicy& policy,
                    const Vector& x0, std::uint64_t k, std::uint64_t seed, const RunOptions& opts = {},
                    Observer&& observer = Observer{}) {
  CounterLedger ledger(problem.m());
  return detail::rgem_core(
      problem, geom, policy, x0, k, seed, opts, ledger,
      [&](index_t i, std::uint64_t, const Vector& xu, Vector& out) {
        grad(problem.component(i), i, xu, out, ledger);
      },
      std::forward<Observer>(observer));
}

/**
 * Stochastic variant: the selected agent's block is refreshed with the mean
 * of B_t = ceil(k (1-alpha)^2 alpha^{-t}) SFO draws taken from that agent's
 * own stream. Needs the inner-product (Euclidean) geometry.
 */
template <class Observer = NoopObserver>
RgemResult rgem_stochastic_run(const ProblemInstance& problem, const Geometry& geom,
                               const RgemPolicy& policy, const Vector& x0, std::uint64_t k,
                               std::uint64_t seed, const RunOptions& opts = {},
                               Observer&& observer = Observer{}) {
  if (!geom.is_euclidean()) throw ConfigError("stochastic RGEM requires the Euclidean geometry");
  if (!problem.has_stochastic_oracles()) throw ConfigError("stochastic RGEM needs stochastic oracles");
  if (policy.init != InitMode::zero_init) {
    throw ConfigError("stochastic RGEM starts from zero gradients (zero_init)");
  }
  CounterLedger ledger(problem.m());
  std::vector<Rng> streams;
  for (index_t i = 0; i < problem.m(); ++i) streams.push_back(agent_stream(seed, static_cast<std::uint64_t>(i)));
  std::vector<std::uint64_t> batches;
  batches.reserve(k);
  RgemResult res = detail::rgem_core(
      problem, geom, policy, x0, k, seed, opts, ledger,
      [&](index_t i, std::uint64_t t, const Vector& xu, Vector& out) {
        const std::uint64_t b = stochastic_batch_size(k, policy.alpha, t);
        batches.push_back(b);
        sfo_batch(problem.stochastic_oracle(i), i, xu, b, streams[static_cast<std::size_t>(i)], out, ledger);
      },
      std::forward<Observer>(observer));
  res.batch_sizes = std::move(batches);
  return res;
}

}  // namespace rgem
