#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace rgem {
namespace {

ProblemInstance quad(index_t m, index_t n, double mu, std::uint64_t seed) {
  Rng rng = make_stream(seed, kProblemStream);
  return make_quadratic(m, n, mu, Spectrum{0.0, 1.0}, rng);
}

ProblemInstance zero_gradient_problem(double mu) {
  const Matrix id = Matrix::Identity(3, 3);
  return make_quadratic({id, 2.0 * id}, {Vector::Zero(3), Vector::Zero(3)}, mu);
}

TEST(Bounds, StartAtOptimumGivesZero) {
  const ProblemInstance p = zero_gradient_problem(0.5);
  const RgemPolicy policy = rgem_policy(2, p.lhat(), p.mu(), InitMode::zero_init);
  const BoundReport r = deterministic_bounds(p, Vector::Zero(3), policy, 50);
  EXPECT_EQ(r.delta, 0.0L);
  for (std::uint64_t k = 0; k <= 50; ++k) {
    EXPECT_EQ(r.p_bound(k), 0.0L);
    EXPECT_EQ(r.psi_bound(k), 0.0L);
  }
}

TEST(Bounds, SingleComponentZeroConditionHalves) {
  const ProblemInstance p = make_quadratic({Matrix::Zero(2, 2)}, {Vector::Constant(2, 1.0)}, 1.0);
  const RgemPolicy policy = rgem_policy(1, p.lhat(), p.mu(), InitMode::zero_init);
  EXPECT_DOUBLE_EQ(policy.alpha, 0.5);
  const BoundReport r = deterministic_bounds(p, Vector::Zero(2), policy, 20);
  for (std::uint64_t k = 0; k < 20; ++k) EXPECT_NEAR(r.p_bound(k + 1) / r.p_bound(k), 0.5L, 1e-18L);
}

TEST(Bounds, DeltaTwoPaths) {
  const ProblemInstance p = quad(4, 6, 0.1, 1);
  const Vector x0 = Vector::LinSpaced(6, -0.5, 0.5);
  double analytic = 0.0;
  for (index_t i = 0; i < p.m(); ++i) {
    const auto& q = dynamic_cast<const QuadraticComponent&>(p.component(i));
    analytic += (q.q() * x0 + q.b()).squaredNorm();
  }
  analytic /= 4.0;
  const RgemPolicy policy = rgem_policy(4, p.lhat(), p.mu(), InitMode::zero_init);
  const BoundReport measured = deterministic_bounds(p, x0, policy, 10);
  const BoundReport closed = deterministic_bounds(p, x0, policy, 10, 1e-6, analytic);
  EXPECT_NEAR(static_cast<double>(measured.delta), static_cast<double>(closed.delta), 1e-10 * static_cast<double>(closed.delta));

  // Independent assembly of Delta from its definition.
  const double mu = p.mu();
  const double expect = mu * 0.5 * (x0 - p.x_star()).squaredNorm() + (p.psi(x0) - p.psi(p.x_star())) + analytic / (4.0 * mu);
  EXPECT_NEAR(static_cast<double>(closed.delta), expect, 1e-10 * expect);
}

TEST(Bounds, ExactInitDropsSigmaTerm) {
  const ProblemInstance p = quad(3, 5, 0.2, 2);
  const Vector x0 = Vector::Zero(5);
  const BoundReport z = deterministic_bounds(p, x0, rgem_policy(3, p.lhat(), p.mu(), InitMode::zero_init), 5);
  const BoundReport e = deterministic_bounds(p, x0, rgem_policy(3, p.lhat(), p.mu(), InitMode::exact_init), 5);
  EXPECT_NEAR(static_cast<double>(z.delta - e.delta), static_cast<double>(z.start.sigma0_sq) / (3.0 * p.mu()), 1e-12);
}

TEST(Bounds, NoiselessStochasticReducesToDeterministic) {
  const ProblemInstance p = quad(4, 5, 0.1, 3);
  const Vector x0 = Vector::Zero(5);
  const RgemPolicy policy = rgem_policy(4, p.lhat(), p.mu(), InitMode::zero_init);
  const BoundReport d = deterministic_bounds(p, x0, policy, 100);
  const BoundReport s = stochastic_bounds(p, x0, policy, 0.0, 100);
  EXPECT_NEAR(static_cast<double>(s.delta), static_cast<double>(d.delta), 1e-15 * static_cast<double>(d.delta));
  for (std::uint64_t k = 0; k <= 100; k += 10) {
    EXPECT_NEAR(static_cast<double>(s.p_bound(k)), static_cast<double>(d.p_bound(k)), 1e-14 * static_cast<double>(d.p_bound(k)));
  }
  ASSERT_TRUE(s.batches.has_value());
  EXPECT_TRUE(s.batches->holds);
}

TEST(Bounds, NoiseOnlyDeltaIsFiveMu) {
  const double mu = 0.3;
  const ProblemInstance p = zero_gradient_problem(mu);
  const RgemPolicy policy = rgem_policy(2, p.lhat(), mu, InitMode::zero_init);
  const BoundReport r = stochastic_bounds(p, Vector::Zero(3), policy, mu * mu, 10);
  EXPECT_NEAR(static_cast<double>(r.delta), 5.0 * mu, 1e-15);
}

TEST(Bounds, BatchSumDirectSummation) {
  const BatchSumCheck c = batch_sum_check(100, 0.95);
  std::uint64_t sum = 0;
  long double geo = 0;
  for (std::uint64_t t = 1; t <= 100; ++t) {
    const long double v = 100.0L * 0.0025L * std::pow(0.95L, -static_cast<long double>(t));
    sum += static_cast<std::uint64_t>(std::ceil(v));
    geo += v;
  }
  EXPECT_EQ(c.sum, sum);
  EXPECT_NEAR(static_cast<double>(c.bound), static_cast<double>(geo + 100.0L), 1e-9);
  EXPECT_TRUE(c.holds);
}

TEST(Bounds, ComplexityMonotone) {
  const real_ext delta = 3.0L, eps = 1e-6L;
  for (index_t m : {1, 2, 4, 16, 64}) {
    real_ext prev = 0;
    for (real_ext c : {1.0L, 10.0L, 100.0L, 400.0L, 1e4L}) {
      const real_ext k = complexity_zero_init(m, c, delta, eps);
      EXPECT_GT(k, prev);
      prev = k;
      EXPECT_GT(complexity_zero_init(2 * m, c, delta, eps), k);
      EXPECT_LT(complexity_zero_init(m, c, delta, 10.0L * eps), k);
      EXPECT_GT(complexity_exact_init(m, 2.0L * c, delta, eps), complexity_exact_init(m, c, delta, eps));
    }
  }
}

TEST(Bounds, ComplexityRatioAcrossM) {
  const real_ext c = 100.0L, delta = 2.5L, eps = 1e-6L;
  const double k4 = static_cast<double>(complexity_zero_init(4, c, delta, eps));
  const double k16 = static_cast<double>(complexity_zero_init(16, c, delta, eps));
  auto formula = [&](double m) {
    return 2.0 * (m + std::sqrt(m * m + 16.0 * m * 100.0)) * std::log(6.0 * std::max(m, 100.0) * 2.5 / 1e-6);
  };
  EXPECT_NEAR(k16 / k4, formula(16.0) / formula(4.0), 1e-12);
}

TEST(Bounds, CurvesMonotoneAndDominateStart) {
  const ProblemInstance p = quad(5, 6, 0.05, 4);
  const Vector x0 = Vector::Zero(6);
  const RgemPolicy policy = rgem_policy(5, p.lhat(), p.mu(), InitMode::zero_init);
  const BoundReport r = deterministic_bounds(p, x0, policy, 300);
  for (std::uint64_t k = 1; k <= 300; ++k) {
    EXPECT_LT(r.p_bound(k), r.p_bound(k - 1));
    EXPECT_LT(r.psi_bound(k), r.psi_bound(k - 1));
    EXPECT_GE(r.p_bound(k), 0.0L);
  }
  EXPECT_GE(r.p_bound(0), r.start.p0);
  EXPECT_GE(r.psi_bound(0), r.start.psi_gap0);
  EXPECT_GE(r.k_eps, 0.0L);
  EXPECT_GE(r.k_distance, 0.0L);

  const auto s = StepSchedule::strongly_convex(p.lf(), p.mu());
  const auto g = gem_bound_strongly_convex(p, s, x0, 50);
  EXPECT_GE(g[0], r.start.psi_gap0);
  for (std::size_t k = 1; k < g.size(); ++k) EXPECT_LT(g[k], g[k - 1]);
}

TEST(Bounds, SmoothCurves) {
  const auto a = gem_bound_smooth_a(2.0L, 3.0L, 0.5L, 10);
  EXPECT_NEAR(static_cast<double>(a[0]), 2.0 * (3.0 + 8.0 * 2.0 * 0.5) / 2.0, 1e-15);
  EXPECT_NEAR(static_cast<double>(a[3]), 2.0 * (3.0 + 8.0) / 20.0, 1e-15);
  const auto b = gem_bound_smooth_b(2.0L, 0.5L, 10);
  EXPECT_TRUE(std::isinf(static_cast<double>(b[0])));
  EXPECT_NEAR(static_cast<double>(b[2]), 12.0 * 2.0 * 0.5 / 6.0, 1e-15);
  for (std::size_t k = 2; k < b.size(); ++k) EXPECT_LT(b[k], b[k - 1]);
  const ProblemInstance p = quad(2, 3, 0.1, 5);
  EXPECT_THROW(gem_bound_curve(p, StepSchedule::constant(0.5, 1.0, 1.0), Vector::Zero(3), 5), ConfigError);
}

TEST(Bounds, MissingOptimumIsUnavailable) {
  Rng rng = make_stream(6, kProblemStream);
  const ProblemInstance p = make_logistic_components(make_synthetic_dataset(2, 3, 5, rng), 0.1);
  const RgemPolicy policy = rgem_policy(2, p.lhat(), p.mu(), InitMode::zero_init);
  EXPECT_THROW(deterministic_bounds(p, Vector::Zero(3), policy, 5), UnavailableError);
  EXPECT_THROW(stochastic_bounds(p, Vector::Zero(3), policy, 1.0, 5), UnavailableError);
}

}  // namespace
}  // namespace rgem
