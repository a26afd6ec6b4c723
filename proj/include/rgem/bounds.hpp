#pragma once

#include <rgem/gem.hpp>
#include <rgem/problems.hpp>
#include <rgem/rgem.hpp>
#include <rgem/types.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

// Closed-form constants and bound curves. All arithmetic is long double so
// alpha^k stays representable and constant-factor audits stay honest.

namespace rgem {

using real_ext = long double;

/// Gap quantities at the start point that every bound is built from.
struct StartQuantities {
  real_ext p0 = 0;        // P(x0, x*)
  real_ext psi_gap0 = 0;  // psi(x0) - psi*
  real_ext f_gap0 = 0;    // f(x0) - f(x*)
  real_ext sigma0_sq = 0; // (1/m) sum_i ||grad f_i(x0)||_*^2
};

inline StartQuantities start_quantities(const ProblemInstance& problem, const Vector& x0,
                                        std::optional<double> sigma0_sq = std::nullopt) {
  if (!problem.has_optimum()) throw UnavailableError("bounds need a known optimum");
  StartQuantities q;
  const Geometry& geom = problem.geometry();
  q.p0 = geom.bregman_distance(x0, problem.x_star());
  q.psi_gap0 = problem.psi_gap(x0);
  q.f_gap0 = problem.mu() == 0.0 ? q.psi_gap0
                                 : static_cast<real_ext>(problem.f(x0)) - problem.f(problem.x_star());
  q.sigma0_sq = sigma0_sq ? *sigma0_sq : estimate_sigma0(problem, x0);
  return q;
}

/// K(eps) for zero_init: 2 (m + sqrt(m^2 + 16 m C)) log(6 max{m, C} Delta / eps).
inline real_ext complexity_zero_init(index_t m, real_ext cond, real_ext delta, real_ext eps) {
  const real_ext md = m;
  const real_ext lead = 2.0L * (md + std::sqrt(md * md + 16.0L * md * cond));
  return lead * std::log(6.0L * std::max(md, cond) * delta / eps);
}

/// Exact-init count: (m + sqrt(m^2 + 8 m C)) log(6 max{m, C} Delta_00 / eps) + m.
inline real_ext complexity_exact_init(index_t m, real_ext cond, real_ext delta, real_ext eps) {
  const real_ext md = m;
  const real_ext lead = md + std::sqrt(md * md + 8.0L * md * cond);
  return lead * std::log(6.0L * std::max(md, cond) * delta / eps) + md;
}

/// log_{1/alpha}(2 Delta / (mu eps)): iterations until the distance bound reaches eps.
inline real_ext complexity_distance(real_ext alpha, real_ext delta, real_ext mu, real_ext eps) {
  return std::log(2.0L * delta / (mu * eps)) / -std::log(alpha);
}

struct BatchSumCheck {
  std::uint64_t sum = 0;  // sum_{t=1}^k B_t by direct summation
  real_ext bound = 0;     // k sum_t (1-alpha)^2 alpha^{-t} + k
  bool holds = false;
};

inline BatchSumCheck batch_sum_check(std::uint64_t k, double alpha) {
  BatchSumCheck c;
  const real_ext a = alpha;
  real_ext geo = 0;
  for (std::uint64_t t = 1; t <= k; ++t) {
    c.sum += stochastic_batch_size(k, alpha, t);
    geo += (1.0L - a) * (1.0L - a) * std::pow(a, -static_cast<real_ext>(t));
  }
  c.bound = static_cast<real_ext>(k) * geo + static_cast<real_ext>(k);
  c.holds = static_cast<real_ext>(c.sum) <= c.bound;
  return c;
}

struct BoundReport {
  bool stochastic = false;
  InitMode init = InitMode::zero_init;
  index_t m = 0;
  double mu = 0;
  double cond = 0;  // Lhat / mu
  double alpha = 0;
  double eps = 0;
  StartQuantities start;
  real_ext sigma_sq = 0;
  real_ext delta = 0;       // the Delta used by the curves below
  real_ext k_eps = 0;       // iteration count for the objective bound
  real_ext k_distance = 0;  // iteration count for the distance bound
  std::vector<real_ext> p_curve;    // 2 Delta alpha^k / mu, k = 0..k_max
  std::vector<real_ext> psi_curve;  // 6 max{m, C} Delta alpha^{k/2}
  std::optional<BatchSumCheck> batches;

  real_ext p_bound(std::uint64_t k) const { return p_curve.at(k); }
  real_ext psi_bound(std::uint64_t k) const { return psi_curve.at(k); }
};

namespace detail {

inline void fill_curves(BoundReport& r, std::uint64_t k_max) {
  const real_ext a = r.alpha;
  const real_ext scale = 6.0L * std::max<real_ext>(r.m, r.cond);
  r.p_curve.resize(k_max + 1);
  r.psi_curve.resize(k_max + 1);
  for (std::uint64_t k = 0; k <= k_max; ++k) {
    const real_ext kd = static_cast<real_ext>(k);
    r.p_curve[k] = 2.0L * r.delta * std::pow(a, kd) / static_cast<real_ext>(r.mu);
    r.psi_curve[k] = scale * r.delta * std::pow(a, kd / 2.0L);
  }
}

}  // namespace detail

/**
 * Bounds for the exact-gradient method. zero_init uses
 *   Delta = mu P(x0,x*) + psi(x0) - psi* + sigma0^2 / (m mu);
 * exact_init drops the sigma0 term.
 */
inline BoundReport deterministic_bounds(const ProblemInstance& problem, const Vector& x0,
                                        const RgemPolicy& policy, std::uint64_t k_max,
                                        double eps = 1e-6,
                                        std::optional<double> sigma0_sq = std::nullopt) {
  BoundReport r;
  r.init = policy.init;
  r.m = problem.m();
  r.mu = problem.mu();
  r.cond = problem.condition();
  r.alpha = policy.alpha;
  r.eps = eps;
  r.start = start_quantities(problem, x0, sigma0_sq);
  const real_ext mu = r.mu;
  r.delta = mu * r.start.p0 + r.start.psi_gap0;
  if (policy.init == InitMode::zero_init) {
    r.delta += r.start.sigma0_sq / (static_cast<real_ext>(r.m) * mu);
    r.k_eps = complexity_zero_init(r.m, r.cond, r.delta, eps);
  } else {
    r.k_eps = complexity_exact_init(r.m, r.cond, r.delta, eps);
  }
  r.k_distance = complexity_distance(r.alpha, r.delta, mu, eps);
  detail::fill_curves(r, k_max);
  return r;
}

/**
 * Bounds for the stochastic method:
 *   Delta = mu P(x0,x*) + psi(x0) - psi* + (sigma0^2/m + 5 sigma^2) / mu,
 * plus the direct check of sum_t B_t against its closed-form bound.
 */
inline BoundReport stochastic_bounds(const ProblemInstance& problem, const Vector& x0,
                                     const RgemPolicy& policy, double sigma_sq, std::uint64_t k,
                                     double eps = 1e-6,
                                     std::optional<double> sigma0_sq = std::nullopt) {
  if (!(sigma_sq >= 0.0)) throw ConfigError("stochastic_bounds: sigma^2 must be nonnegative");
  BoundReport r;
  r.stochastic = true;
  r.init = policy.init;
  r.m = problem.m();
  r.mu = problem.mu();
  r.cond = problem.condition();
  r.alpha = policy.alpha;
  r.eps = eps;
  r.sigma_sq = sigma_sq;
  r.start = start_quantities(problem, x0, sigma0_sq);
  const real_ext mu = r.mu;
  r.delta = mu * r.start.p0 + r.start.psi_gap0 +
            (r.start.sigma0_sq / static_cast<real_ext>(r.m) + 5.0L * r.sigma_sq) / mu;
  r.k_eps = complexity_zero_init(r.m, r.cond, r.delta, eps);
  r.k_distance = complexity_distance(r.alpha, r.delta, mu, eps);
  detail::fill_curves(r, k);
  r.batches = batch_sum_check(k, policy.alpha);
  return r;
}

// GEM bound curves, index k = 0..k_max. The smooth_b curve is +inf at k = 0.

/// alpha^k [mu P(x0,x*) + psi(x0) - psi*].
inline std::vector<real_ext> gem_bound_strongly_convex(const ProblemInstance& problem,
                                                       const StepSchedule& schedule,
                                                       const Vector& x0, std::uint64_t k_max) {
  const StartQuantities q = start_quantities(problem, x0, 0.0);
  const real_ext base = static_cast<real_ext>(problem.mu()) * q.p0 + q.psi_gap0;
  std::vector<real_ext> c(k_max + 1);
  for (std::uint64_t k = 0; k <= k_max; ++k) {
    c[k] = std::pow(static_cast<real_ext>(schedule.rate()), static_cast<real_ext>(k)) * base;
  }
  return c;
}

/// 2 [f(x0) - f* + 8 L_f P(x0,x*)] / ((k+1)(k+2)).
inline std::vector<real_ext> gem_bound_smooth_a(real_ext lf, real_ext f_gap0, real_ext p0,
                                                std::uint64_t k_max) {
  std::vector<real_ext> c(k_max + 1);
  for (std::uint64_t k = 0; k <= k_max; ++k) {
    const real_ext kd = static_cast<real_ext>(k);
    c[k] = 2.0L * (f_gap0 + 8.0L * lf * p0) / ((kd + 1.0L) * (kd + 2.0L));
  }
  return c;
}

/// 12 L_f P(x0,x*) / (k(k+1)).
inline std::vector<real_ext> gem_bound_smooth_b(real_ext lf, real_ext p0, std::uint64_t k_max) {
  std::vector<real_ext> c(k_max + 1);
  c[0] = std::numeric_limits<real_ext>::infinity();
  for (std::uint64_t k = 1; k <= k_max; ++k) {
    const real_ext kd = static_cast<real_ext>(k);
    c[k] = 12.0L * lf * p0 / (kd * (kd + 1.0L));
  }
  return c;
}

/// The bound curve matching a GEM schedule (smooth policies take mu = 0 problems).
inline std::vector<real_ext> gem_bound_curve(const ProblemInstance& problem, const StepSchedule& schedule,
                                             const Vector& x0, std::uint64_t k_max) {
  switch (schedule.policy()) {
    case GemPolicy::strongly_convex:
      return gem_bound_strongly_convex(problem, schedule, x0, k_max);
    case GemPolicy::smooth_a: {
      const StartQuantities q = start_quantities(problem, x0, 0.0);
      return gem_bound_smooth_a(schedule.lf(), q.f_gap0, q.p0, k_max);
    }
    case GemPolicy::smooth_b: {
      const StartQuantities q = start_quantities(problem, x0, 0.0);
      return gem_bound_smooth_b(schedule.lf(), q.p0, k_max);
    }
    case GemPolicy::constant:
      break;
  }
  throw ConfigError("no bound curve for the constant schedule");
}

}  // namespace rgem
