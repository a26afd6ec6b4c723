#pragma once

#include <rgem/types.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace rgem {

struct Unconstrained {};

struct Box {
  Vector lo;
  Vector hi;
};

struct Ball {
  Vector center;
  double radius = 1.0;
};

/// Probability simplex {x >= 0, sum(x) = 1}.
struct Simplex {};

using FeasibleSet = std::variant<Unconstrained, Box, Ball, Simplex>;

/// Distance-generating function w (strongly convex with modulus 1).
enum class Dgf {
  half_squared_euclidean,  // w(x) = ||x||_2^2 / 2, norm ||.||_2
  negative_entropy,        // w(x) = sum x log x on the simplex, norm ||.||_1
};

inline std::string to_string(Dgf d) {
  return d == Dgf::half_squared_euclidean ? "euclidean" : "entropy";
}

/**
 * Feasible set plus distance-generating function, and the prox-mapping
 *
 *     argmin_{x in X} <g, x> + mu w(x) + eta P(x0, x)
 *
 * where P is the generalized Bregman distance built from a maintained
 * subgradient selection w'(x0). After every prox_map the stored selection is
 * replaced by the w'(x1) that makes
 *
 *     g + (mu + eta) w'(x1) - eta w'(x0)
 *
 * satisfy the optimality condition of the subproblem at x1, so the next call
 * (anchored at x1) uses a selection consistent with the previous one even when
 * w is not differentiable at x1.
 *
 * A Geometry carries per-run mutable state; copy it to get an independent
 * replica.
 */
class Geometry {
 public:
  explicit Geometry(FeasibleSet set = Unconstrained{},
                    Dgf dgf = Dgf::half_squared_euclidean)
      : set_(std::move(set)), dgf_(dgf) {
    if (dgf_ == Dgf::negative_entropy && !std::holds_alternative<Simplex>(set_)) {
      throw ConfigError("negative-entropy dgf requires the simplex feasible set");
    }
    if (const auto* box = std::get_if<Box>(&set_)) {
      if (box->lo.size() != box->hi.size()) {
        throw ConfigError("box bounds have mismatched dimensions");
      }
      if ((box->lo.array() > box->hi.array()).any()) {
        throw ConfigError("box has lo > hi in some coordinate");
      }
    }
    if (const auto* ball = std::get_if<Ball>(&set_)) {
      if (!(ball->radius > 0.0) || !std::isfinite(ball->radius)) {
        throw ConfigError("ball radius must be positive and finite");
      }
    }
  }

  static Geometry euclidean() { return Geometry(Unconstrained{}); }
  static Geometry entropy_simplex() { return Geometry(Simplex{}, Dgf::negative_entropy); }

  const FeasibleSet& feasible_set() const { return set_; }
  Dgf dgf() const { return dgf_; }

  /// True when the norm is the one induced by the standard inner product.
  bool is_euclidean() const { return dgf_ == Dgf::half_squared_euclidean; }

  std::string set_name() const {
    return std::visit(
        [](const auto& s) -> std::string {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, Unconstrained>) return "unconstrained";
          else if constexpr (std::is_same_v<S, Box>) return "box";
          else if constexpr (std::is_same_v<S, Ball>) return "ball";
          else return "simplex";
        },
        set_);
  }

  double norm(const Vector& x) const {
    return is_euclidean() ? x.norm() : x.lpNorm<1>();
  }

  double dual_norm(const Vector& g) const {
    return is_euclidean() ? g.norm() : g.lpNorm<Eigen::Infinity>();
  }

  bool is_feasible(const Vector& x, double tol = 1e-12) const {
    if (!x.allFinite()) return false;
    return std::visit(
        [&](const auto& s) -> bool {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, Unconstrained>) {
            return true;
          } else if constexpr (std::is_same_v<S, Box>) {
            if (x.size() != s.lo.size()) return false;
            return ((x.array() >= s.lo.array() - tol) && (x.array() <= s.hi.array() + tol)).all();
          } else if constexpr (std::is_same_v<S, Ball>) {
            if (x.size() != s.center.size()) return false;
            return (x - s.center).norm() <= s.radius * (1.0 + tol) + tol;
          } else {
            return (x.array() >= -tol).all() && std::abs(x.sum() - 1.0) <= tol;
          }
        },
        set_);
  }

  double w(const Vector& x) const {
    if (is_euclidean()) return 0.5 * x.squaredNorm();
    double s = 0.0;
    for (index_t j = 0; j < x.size(); ++j) {
      if (x[j] > 0.0) s += x[j] * std::log(x[j]);
    }
    return s;
  }

  /// Analytic subgradient of w; for entropy only defined at strictly positive points.
  Vector w_grad(const Vector& x) const {
    if (is_euclidean()) return x;
    if ((x.array() <= 0.0).any()) {
      throw DomainError("entropy gradient undefined at a point with a zero coordinate");
    }
    return (x.array().log() + 1.0).matrix();
  }

  /// P(x0, x) using the analytic subgradient at x0.
  double bregman_distance(const Vector& x0, const Vector& x) const {
    check_feasible(x0, "bregman_distance: reference point");
    check_feasible(x, "bregman_distance: argument");
    if (is_euclidean()) return 0.5 * (x - x0).squaredNorm();
    // KL(x || x0) on the simplex; 0 log 0 = 0.
    double kl = 0.0;
    for (index_t j = 0; j < x.size(); ++j) {
      if (x[j] <= 0.0) continue;
      if (x0[j] <= 0.0) {
        throw DomainError("bregman_distance: entropy reference has a zero coordinate where x > 0");
      }
      kl += x[j] * std::log(x[j] / x0[j]);
    }
    // Rounding can push the sum a hair below zero when x == x0.
    return std::max(kl, 0.0);
  }

  /// P(x0, x) using an explicit subgradient selection w'(x0).
  double bregman_distance(const Vector& x0, const Vector& x0_subgradient, const Vector& x) const {
    if (is_euclidean()) return 0.5 * (x - x0).squaredNorm();
    double p = w(x) - w(x0) - x0_subgradient.dot(x - x0);
    return std::max(p, 0.0);
  }

  /// Start a run at x0: stored selection becomes the analytic w'(x0).
  void reset(const Vector& x0) {
    check_feasible(x0, "reset");
    anchor_ = x0;
    if (is_euclidean()) {
      stored_subgradient_ = x0;
    } else {
      stored_subgradient_ = w_grad(x0);
    }
  }

  const Vector& stored_subgradient() const { return stored_subgradient_; }
  const Vector& anchor() const { return anchor_; }

  /// Subgradient selection at x: the stored one when x is the current anchor.
  Vector subgradient_at(const Vector& x) const {
    if (anchor_.size() == x.size() && anchor_ == x) return stored_subgradient_;
    return w_grad(x);
  }

  /**
   * Prox-mapping M_X(g, x0, eta) with strong-convexity weight mu. Uses the
   * stored subgradient as w'(x0) when x0 is the current anchor, the analytic
   * one otherwise. The result becomes the new anchor.
   */
  Vector prox_map(const Vector& g, const Vector& x0, double mu, double eta) {
    if (!(eta > 0.0) || !std::isfinite(eta)) {
      throw DomainError("prox_map: eta must be positive and finite");
    }
    if (!(mu >= 0.0) || !std::isfinite(mu)) {
      throw DomainError("prox_map: mu must be nonnegative and finite");
    }
    if (g.size() != x0.size()) throw DomainError("prox_map: dimension mismatch");
    if (!g.allFinite()) throw DomainError("prox_map: non-finite prox input");
    if (!is_feasible(x0, 1e-9)) throw DomainError("prox_map: x0 is infeasible");
    if (!is_euclidean() && mu > 0.0) {
      throw ConfigError("prox_map: mu > 0 is only supported with the Euclidean dgf");
    }

    const Vector s0 = subgradient_at(x0);
    Vector x1;
    if (is_euclidean()) {
      // argmin (mu+eta)/2 ||x - y||^2 over X
      Vector y = (eta * s0 - g) / (mu + eta);
      x1 = project(y);
      stored_subgradient_ = x1;
    } else {
      // x1_j proportional to exp(w'(x0)_j - g_j / eta); normalisation is the
      // multiplier of the simplex constraint, absorbed into the selection.
      Vector s = s0 - g / eta;
      const double smax = s.maxCoeff();
      Vector e = (s.array() - smax).exp().matrix();
      const double z = e.sum();
      x1 = e / z;
      // w'(x1) = s - lse(s) + 1, in the same class as log(x1) + 1 modulo span(1).
      const double lse = smax + std::log(z);
      stored_subgradient_ = (s.array() - lse + 1.0).matrix();
    }
    anchor_ = x1;
    return x1;
  }

  /// Euclidean projection onto X.
  Vector project(const Vector& y) const {
    return std::visit(
        [&](const auto& s) -> Vector {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, Unconstrained>) {
            return y;
          } else if constexpr (std::is_same_v<S, Box>) {
            return y.cwiseMax(s.lo).cwiseMin(s.hi);
          } else if constexpr (std::is_same_v<S, Ball>) {
            Vector d = y - s.center;
            const double nd = d.norm();
            if (nd <= s.radius) return y;
            return s.center + d * (s.radius / nd);
          } else {
            return project_simplex(y);
          }
        },
        set_);
  }

  /**
   * How far v = g + (mu+eta) w'(x1) - eta w'(x0) is from certifying x1 as
   * the prox minimizer: the largest decrease rate -<v, d>/||d|| of the prox
   * objective along a feasible direction d at x1, clipped at zero. Zero iff
   * -v lies in the normal cone of X at x1.
   */
  double normal_cone_residual(const Vector& g, const Vector& x0, const Vector& x1, double mu,
                              double eta) const {
    const Vector s1 = subgradient_at(x1);
    const Vector s0 = w_grad_or_anchor(x0);
    return stationarity_residual(g + (mu + eta) * s1 - eta * s0, x1);
  }

  double normal_cone_residual(const Vector& g, const Vector& x0_subgradient,
                              const Vector& x1, const Vector& x1_subgradient, double mu,
                              double eta) const {
    return stationarity_residual(g + (mu + eta) * x1_subgradient - eta * x0_subgradient, x1);
  }

  /// max over feasible directions d at x of -<v, d>/||d||, clipped at zero.
  double stationarity_residual(const Vector& v, const Vector& x) const {
    return std::visit(
        [&](const auto& s) -> double {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, Unconstrained>) {
            return v.norm();
          } else if constexpr (std::is_same_v<S, Box>) {
            double acc = 0.0;
            for (index_t j = 0; j < x.size(); ++j) {
              const bool at_lo = x[j] <= s.lo[j];
              const bool at_hi = x[j] >= s.hi[j];
              double c = 0.0;
              if (at_lo && at_hi) c = 0.0;
              else if (at_lo) c = std::max(0.0, -v[j]);
              else if (at_hi) c = std::max(0.0, v[j]);
              else c = v[j];
              acc += c * c;
            }
            return std::sqrt(acc);
          } else if constexpr (std::is_same_v<S, Ball>) {
            Vector d = x - s.center;
            const double nd = d.norm();
            if (nd < s.radius * (1.0 - 1e-12)) return v.norm();
            Vector n = d / nd;
            Vector u = -v;
            const double un = u.dot(n);
            if (un <= 0.0) return u.norm();
            return (u - un * n).norm();
          } else {
            // Tangent cone generated by e_j - e_k with x_k > 0.
            double max_support = -std::numeric_limits<double>::infinity();
            for (index_t k = 0; k < x.size(); ++k) {
              if (x[k] > 0.0) max_support = std::max(max_support, v[k]);
            }
            const double gap = max_support - v.minCoeff();
            const double dnorm = is_euclidean() ? std::sqrt(2.0) : 2.0;
            return std::max(0.0, gap / dnorm);
          }
        },
        set_);
  }

 private:
  void check_feasible(const Vector& x, const char* what) const {
    if (!is_feasible(x, 1e-9)) throw DomainError(std::string(what) + " is infeasible");
  }

  Vector w_grad_or_anchor(const Vector& x) const { return subgradient_at(x); }

  static Vector project_simplex(const Vector& y) {
    const index_t n = y.size();
    std::vector<double> u(y.data(), y.data() + n);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumsum = 0.0;
    double theta = 0.0;
    for (index_t j = 0; j < n; ++j) {
      cumsum += u[j];
      const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
      if (u[j] - t > 0.0) theta = t;
    }
    Vector x = (y.array() - theta).max(0.0).matrix();
    // Renormalise the support so the sum is 1 to rounding.
    const double s = x.sum();
    if (s > 0.0) x /= s;
    return x;
  }

  FeasibleSet set_;
  Dgf dgf_;
  Vector anchor_;
  Vector stored_subgradient_;
};

}  // namespace rgem
