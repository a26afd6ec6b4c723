#pragma once

// Reference computations that share no code with the library: power
// iteration, bisection solvers, finite differences and a
// Newton solver. Tests compare library output against these.

#include <rgem/all.hpp>

#include <cmath>
#include <functional>
#include <stdexcept>

namespace rgem::testing {

inline double power_iteration(const Matrix& q, int iters = 20000, std::uint64_t seed = 3) {
  Rng rng = make_stream(seed, kAuditStream);
  std::normal_distribution<double> z(0.0, 1.0);
  Vector v(q.rows());
  for (index_t j = 0; j < v.size(); ++j) v[j] = z(rng);
  v.normalize();
  double lam = 0.0;
  for (int it = 0; it < iters; ++it) {
    Vector w = q * v;
    const double next = v.dot(w);
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    v = w / nw;
    if (it > 10 && std::abs(next - lam) <= 1e-15 * std::abs(next)) return next;
    lam = next;
  }
  return lam;
}

/// Root of an increasing function on [lo, hi].
inline double bisect(const std::function<double(double)>& f, double lo, double hi, int iters = 300) {
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) > 0.0) hi = mid;
    else lo = mid;
  }
  return 0.5 * (lo + hi);
}

/// Euclidean prox objective <g,x> + mu/2 ||x||^2 + eta/2 ||x - x0||^2 minimised over a box,
/// coordinate by coordinate: bisection on the increasing derivative, clamped at the faces.
inline Vector prox_box_reference(const Vector& g, const Vector& x0, double mu, double eta, const Box& box) {
  Vector x(g.size());
  for (index_t j = 0; j < g.size(); ++j) {
    auto dphi = [&](double t) { return g[j] + mu * t + eta * (t - x0[j]); };
    if (dphi(box.lo[j]) >= 0.0) x[j] = box.lo[j];
    else if (dphi(box.hi[j]) <= 0.0) x[j] = box.hi[j];
    else x[j] = bisect(dphi, box.lo[j], box.hi[j]);
  }
  return x;
}

/// Same objective over the simplex: x_j = max(0, c_j - lambda) with lambda found by bisection.
inline Vector prox_simplex_reference(const Vector& g, const Vector& x0, double mu, double eta) {
  const Vector c = (eta * x0 - g) / (mu + eta);
  auto excess = [&](double lam) { return -((c.array() - lam).max(0.0).sum() - 1.0); };
  const double lam = bisect(excess, c.minCoeff() - 1.0, c.maxCoeff());
  return (c.array() - lam).max(0.0).matrix();
}

/// Same objective over a ball: stationarity with multiplier nu found by bisection on ||x(nu) - center|| = r.
inline Vector prox_ball_reference(const Vector& g, const Vector& x0, double mu, double eta, const Ball& ball) {
  const double s = mu + eta;
  const Vector c = (eta * x0 - g) / s;
  if ((c - ball.center).norm() <= ball.radius) return c;
  auto x_of = [&](double nu) -> Vector { return (s * c + nu * ball.center) / (s + nu); };
  auto gap = [&](double nu) { return ball.radius - (x_of(nu) - ball.center).norm(); };
  double hi = 1.0;
  while (gap(hi) < 0.0) hi *= 2.0;
  return x_of(bisect(gap, 0.0, hi));
}

inline Vector finite_difference_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                                         double h = 1e-6) {
  Vector g(x.size());
  for (index_t j = 0; j < x.size(); ++j) {
    Vector xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    g[j] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/**
 * Newton's method with backtracking on the unregularised logistic loss
 * (1/m) sum_i (1/N_i) sum_j log(1 + exp(-b_j a_j'x)), written out directly.
 */
inline Vector logistic_newton(const std::vector<Matrix>& features, const std::vector<Vector>& labels,
                              double tol = 1e-13, int max_iter = 200) {
  const index_t n = features.front().cols();
  const double m = static_cast<double>(features.size());
  auto loss = [&](const Vector& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
      const Vector z = -(labels[i].array() * (features[i] * x).array()).matrix();
      double li = 0.0;
      for (index_t r = 0; r < z.size(); ++r) li += z[r] > 0 ? z[r] + std::log1p(std::exp(-z[r])) : std::log1p(std::exp(z[r]));
      s += li / static_cast<double>(z.size());
    }
    return s / m;
  };
  Vector x = Vector::Zero(n);
  for (int it = 0; it < max_iter; ++it) {
    Vector g = Vector::Zero(n);
    Matrix h = Matrix::Zero(n, n);
    for (std::size_t i = 0; i < features.size(); ++i) {
      const Matrix& a = features[i];
      const double ni = static_cast<double>(a.rows());
      for (index_t r = 0; r < a.rows(); ++r) {
        const double b = labels[i][r];
        const double s = 1.0 / (1.0 + std::exp(b * a.row(r).dot(x)));  // sigmoid(-b a'x)
        g -= (b * s / ni / m) * a.row(r).transpose();
        h += (s * (1.0 - s) / ni / m) * a.row(r).transpose() * a.row(r);
      }
    }
    if (g.norm() <= tol) return x;
    const Vector step = h.ldlt().solve(-g);
    double t = 1.0;
    const double f0 = loss(x);
    while (loss(x + t * step) > f0 + 1e-4 * t * g.dot(step) && t > 1e-12) t *= 0.5;
    x += t * step;
  }
  throw std::runtime_error("logistic_newton did not converge");
}

/// mu-free quadratic with Qbar = Q, given through one component.
inline ProblemInstance single_quadratic(const Matrix& q, const Vector& b, double mu) {
  return make_quadratic(std::vector<Matrix>{q}, std::vector<Vector>{b}, mu);
}

}  // namespace rgem::testing
