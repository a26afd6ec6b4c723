// Solve a random 8-agent quadratic with RGEM and compare the last iterate
// against the bound curve for the same start point.
#include <rgem/all.hpp>

#include <cstdio>

int main() {
  using namespace rgem;
  Rng rng = make_stream(7, kProblemStream);
  const ProblemInstance problem = make_mu_conditioned_quadratic(8, 50, 0.01, rng);
  const RgemPolicy policy = rgem_policy(problem.m(), problem.lhat(), problem.mu(), InitMode::zero_init);
  const Vector x0 = Vector::Zero(problem.dim());

  const std::uint64_t k = 400;
  const RgemResult run = rgem_run(problem, problem.geometry(), policy, x0, k, /*seed=*/1, RunOptions{100});
  const BoundReport bound = deterministic_bounds(problem, x0, policy, k);

  std::printf("alpha %.6f, predicted iterations to 1e-6: %.0f\n", policy.alpha, static_cast<double>(bound.k_eps));
  for (const TraceRecord& r : run.trace.records) {
    std::printf("k=%4llu  P=%.3e (bound %.3e)  psi gap=%.3e (bound %.3e)  grads=%llu\n",
                static_cast<unsigned long long>(r.iteration), r.P_to_opt,
                static_cast<double>(bound.p_bound(r.iteration)), r.psi_gap,
                static_cast<double>(bound.psi_bound(r.iteration)), static_cast<unsigned long long>(r.exact_grads));
  }
  return 0;
}
