#pragma once

#include <rgem/geometry.hpp>
#include <rgem/oracles.hpp>
#include <rgem/problems.hpp>
#include <rgem/rng.hpp>
#include <rgem/trace.hpp>
#include <rgem/types.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace rgem {

enum class GemPolicy { strongly_convex, smooth_a, smooth_b, constant };

inline std::string to_string(GemPolicy p) {
  switch (p) {
    case GemPolicy::strongly_convex: return "strongly_convex";
    case GemPolicy::smooth_a: return "smooth_a";
    case GemPolicy::smooth_b: return "smooth_b";
    case GemPolicy::constant: return "constant";
  }
  return "unknown";
}

/**
 * Step-size sequences {alpha_t, eta_t, tau_t} and ergodic weights theta_t for
 * the gradient extrapolation method, t = 1, 2, ...
 *
 *   strongly_convex: tau = sqrt(2 L_f / mu), eta = sqrt(2 L_f mu),
 *                    alpha = tau / (1 + tau), theta_t = alpha^{-t}
 *   smooth_a:        tau_t = t/2, eta_t = 4 L_f / t, alpha_t = t/(t+1), theta_t = t+1
 *   smooth_b:        tau_t = (t-1)/2, eta_t = 6 L_f / t, alpha_t = (t-1)/t, theta_t = t
 *   constant:        caller-supplied constants, theta_t = alpha^{-t}
 */
class StepSchedule {
 public:
  static StepSchedule strongly_convex(double lf, double mu) {
    if (!(mu > 0.0)) throw PolicyError("strongly convex GEM policy requires mu > 0");
    if (!(lf > 0.0)) throw PolicyError("strongly convex GEM policy requires L_f > 0");
    const double r = std::sqrt(2.0 * lf / mu);
    StepSchedule s(GemPolicy::strongly_convex, lf, mu);
    s.tau_ = r;
    s.eta_ = std::sqrt(2.0 * lf * mu);
    s.alpha_ = r / (1.0 + r);
    return s;
  }

  static StepSchedule smooth_a(double lf) {
    if (!(lf > 0.0)) throw PolicyError("smooth GEM policy requires L_f > 0");
    return StepSchedule(GemPolicy::smooth_a, lf, 0.0);
  }

  static StepSchedule smooth_b(double lf) {
    if (!(lf > 0.0)) throw PolicyError("smooth GEM policy requires L_f > 0");
    return StepSchedule(GemPolicy::smooth_b, lf, 0.0);
  }

  static StepSchedule constant(double alpha, double eta, double tau) {
    if (!(alpha >= 0.0) || !(eta > 0.0) || !(tau >= 0.0)) {
      throw PolicyError("constant schedule needs alpha >= 0, eta > 0, tau >= 0");
    }
    StepSchedule s(GemPolicy::constant, 0.0, 0.0);
    s.alpha_ = alpha;
    s.eta_ = eta;
    s.tau_ = tau;
    return s;
  }

  GemPolicy policy() const { return policy_; }
  std::string name() const { return to_string(policy_); }
  double lf() const { return lf_; }

  double alpha(std::uint64_t t) const {
    const double td = static_cast<double>(t);
    switch (policy_) {
      case GemPolicy::smooth_a: return td / (td + 1.0);
      case GemPolicy::smooth_b: return (td - 1.0) / td;
      default: return alpha_;
    }
  }

  double eta(std::uint64_t t) const {
    const double td = static_cast<double>(t);
    switch (policy_) {
      case GemPolicy::smooth_a: return 4.0 * lf_ / td;
      case GemPolicy::smooth_b: return 6.0 * lf_ / td;
      default: return eta_;
    }
  }

  double tau(std::uint64_t t) const {
    const double td = static_cast<double>(t);
    switch (policy_) {
      case GemPolicy::smooth_a: return td / 2.0;
      case GemPolicy::smooth_b: return (td - 1.0) / 2.0;
      default: return tau_;
    }
  }

  /// Ergodic weight theta_t (may overflow to inf for large t on the linear-rate policies).
  double theta(std::uint64_t t) const {
    const double td = static_cast<double>(t);
    switch (policy_) {
      case GemPolicy::smooth_a: return td + 1.0;
      case GemPolicy::smooth_b: return td;
      default: return std::pow(alpha_, -td);
    }
  }

  /// The constant alpha of the linear-rate policies.
  double rate() const { return alpha_; }

 private:
  StepSchedule(GemPolicy p, double lf, double mu) : policy_(p), lf_(lf), mu_(mu) {}

  GemPolicy policy_;
  double lf_ = 0.0;
  double mu_ = 0.0;
  double alpha_ = 0.0;
  double eta_ = 0.0;
  double tau_ = 0.0;
};

struct GemResult {
  Vector x_k;             // last prox iterate x^k
  Vector x_underline_k;   // output solution
  RunTrace trace;
  CounterSnapshot counters;
  double max_prox_residual = 0.0;
  std::uint64_t prox_audits = 0;
};

namespace detail {

template <FiniteSumProblem P>
void full_gradient_counted(const P& problem, const Vector& x, Vector& out, Vector& scratch,
                           CounterLedger& ledger) {
  out.setZero(problem.dim());
  for (index_t i = 0; i < problem.m(); ++i) {
    grad(problem.component(i), i, x, scratch, ledger);
    out += scratch;
  }
  out /= static_cast<double>(problem.m());
}

inline void fill_gaps(const ProblemInstance& problem, const Geometry& geom, const Vector& x_t,
                      const Vector& output, TraceRecord& rec) {
  if (!problem.has_optimum()) return;
  rec.psi_gap = problem.psi_gap(output);
  rec.P_to_opt = geom.bregman_distance(x_t, geom.subgradient_at(x_t), problem.x_star());
  rec.q_gap = problem.q_gap(output);
}

}  // namespace detail

/**
 * Gradient extrapolation method:
 *
 *   g~t  = alpha_t (g^{t-1} - g^{t-2}) + g^{t-1}
 *   x^t  = M_X(g~t, x^{t-1}, eta_t)
 *   x_^t = (x^t + tau_t x_^{t-1}) / (1 + tau_t)
 *   g^t  = grad f(x_^t)
 *
 * started from x_^0 = x^0 and g^{-1} = g^0 = grad f(x^0) (one counted full
 * gradient). Returns x_^k as the solution. The observer is called after every
 * iteration as obs(t, x^t, x_^t, g^t).
 */
template <class Observer = NoopObserver>
GemResult gem_run(const ProblemInstance& problem, Geometry geom, const StepSchedule& schedule,
                  const Vector& x0, std::uint64_t k, const RunOptions& opts = {},
                  Observer&& observer = Observer{}) {
  if (k < 1) throw ConfigError("gem_run: k must be >= 1");
  if (x0.size() != problem.dim()) throw DomainError("gem_run: x0 has wrong dimension");
  if (!geom.is_feasible(x0, 1e-9)) throw DomainError("gem_run: x0 is infeasible");
  if (problem.mu() > 0.0 && !geom.is_euclidean()) {
    throw ConfigError("gem_run: mu > 0 requires the Euclidean dgf");
  }

  const index_t n = problem.dim();
  const double mu = problem.mu();
  CounterLedger ledger(problem.m());
  Stopwatch clock;
  Rng audit_rng = make_stream(opts.audit_seed, kAuditStream);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  GemResult res;
  geom.reset(x0);
  Vector x = x0;
  Vector x_under = x0;
  Vector g_prev(n), g_prev2(n), scratch(n), g_tilde(n);
  detail::full_gradient_counted(problem, x0, g_prev, scratch, ledger);
  g_prev2 = g_prev;

  auto log = [&](std::uint64_t t) {
    TraceRecord rec;
    rec.iteration = t;
    detail::fill_gaps(problem, geom, x, x_under, rec);
    rec.exact_grads = ledger.exact_gradient_evals();
    rec.wall_ns = clock.elapsed_ns();
    res.trace.records.push_back(rec);
  };
  if (should_log(opts, 0, k)) log(0);

  for (std::uint64_t t = 1; t <= k; ++t) {
    const double alpha = schedule.alpha(t);
    const double eta = schedule.eta(t);
    const double tau = schedule.tau(t);
    g_tilde = alpha * (g_prev - g_prev2) + g_prev;

    const bool audit = opts.audit_fraction > 0.0 && unif(audit_rng) < opts.audit_fraction;
    Vector s0;
    if (audit) s0 = geom.subgradient_at(x);
    Vector x_new = geom.prox_map(g_tilde, x, mu, eta);
    if (audit) {
      res.max_prox_residual = std::max(
          res.max_prox_residual,
          geom.normal_cone_residual(g_tilde, s0, x_new, geom.stored_subgradient(), mu, eta));
      ++res.prox_audits;
    }
    x = std::move(x_new);
    x_under = (x + tau * x_under) / (1.0 + tau);

    g_prev2 = g_prev;
    detail::full_gradient_counted(problem, x_under, g_prev, scratch, ledger);

    observer(t, x, x_under, g_prev);
    if (should_log(opts, t, k)) log(t);
  }

  res.x_k = x;
  res.x_underline_k = x_under;
  res.counters = ledger.snapshot();
  return res;
}

}  // namespace rgem
