#pragma once

#include <rgem/gem.hpp>
#include <rgem/problems.hpp>

#include <cmath>
#include <cstdint>

namespace rgem {

struct ReferenceSolution {
  Vector x_star;
  double psi_star = 0.0;
  std::uint64_t iterations = 0;
  double certified_gap = 0.0;  // upper bound on psi(x_star) - true optimum
};

/**
 * High-accuracy optimum of a strongly convex problem, certified by the GEM
 * linear-rate bound psi(x_^k) - psi* <= alpha^k [mu P(x0,x*) + psi(x0) - psi*].
 * The bracket is bounded without knowing x*: with G = ||grad psi(x0)||, strong
 * convexity gives ||x0 - x*|| <= 2G/mu, hence the bracket is at most 4 G^2 / mu.
 * The iteration count is fixed up front from that bound.
 */
inline ReferenceSolution reference_solve(const ProblemInstance& problem, double tol,
                                         const Vector& x0, std::uint64_t budget = 10'000'000) {
  if (!(problem.mu() > 0.0)) throw PolicyError("reference_solve requires mu > 0");
  if (!problem.geometry().is_euclidean()) throw ConfigError("reference_solve requires the Euclidean dgf");
  if (!(tol > 0.0)) throw ConfigError("reference_solve: tol must be positive");

  const double mu = problem.mu();
  const Vector grad_psi = problem.full_gradient(x0) + mu * x0;
  const double g = grad_psi.norm();
  const double bracket = 4.0 * g * g / mu;

  ReferenceSolution sol;
  if (bracket <= tol) {
    sol.x_star = x0;
    sol.psi_star = problem.psi(x0);
    sol.certified_gap = bracket;
    return sol;
  }

  // Any upper bound on L_f is admissible; keep it away from zero.
  const double lf = std::max(problem.lf(), mu);
  const auto schedule = StepSchedule::strongly_convex(lf, mu);
  const double alpha = schedule.rate();
  const double k_real = std::ceil(std::log(bracket / tol) / -std::log(alpha));
  if (!(k_real <= static_cast<double>(budget))) {
    throw BudgetError("reference_solve: certificate needs " + std::to_string(k_real) +
                      " iterations, budget is " + std::to_string(budget));
  }
  const auto k = static_cast<std::uint64_t>(std::max(1.0, k_real));
  RunOptions opts;
  opts.record_trace = false;
  const GemResult r = gem_run(problem, problem.geometry(), schedule, x0, k, opts);
  sol.x_star = r.x_underline_k;
  sol.psi_star = problem.psi(sol.x_star);
  sol.iterations = k;
  sol.certified_gap = std::pow(alpha, static_cast<double>(k)) * bracket;
  return sol;
}

inline ReferenceSolution reference_solve(const ProblemInstance& problem, double tol) {
  return reference_solve(problem, tol, Vector::Zero(problem.dim()));
}

/**
 * l2-regularised logistic regression over a partitioned dataset. With
 * lambda > 0 the optimum is attached from a certified reference solve.
 */
inline ProblemInstance make_logistic(const Dataset& data, double lambda, double tol = 1e-12) {
  ProblemInstance p = make_logistic_components(data, lambda);
  if (lambda > 0.0) {
    const ReferenceSolution sol = reference_solve(p, tol);
    p.set_optimum(sol.x_star, sol.psi_star);
  }
  return p;
}

}  // namespace rgem
