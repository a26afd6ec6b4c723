#pragma once

#include <rgem/geometry.hpp>
#include <rgem/rng.hpp>
#include <rgem/types.hpp>

#include <Eigen/Eigenvalues>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <vector>

namespace rgem {

/// One smooth convex component f_i with a declared gradient Lipschitz constant L_i.
class ComponentFunction {
 public:
  virtual ~ComponentFunction() = default;
  virtual index_t dim() const = 0;
  virtual double value(const Vector& x) const = 0;
  virtual void gradient(const Vector& x, Vector& out) const = 0;
  virtual double lipschitz() const = 0;

  Vector gradient(const Vector& x) const {
    Vector g(dim());
    gradient(x, g);
    return g;
  }
};

/// f(x) = 1/2 x'Qx + b'x + c with Q symmetric PSD.
class QuadraticComponent final : public ComponentFunction {
 public:
  QuadraticComponent(Matrix q, Vector b, double c = 0.0)
      : q_(std::move(q)), b_(std::move(b)), c_(c) {
    if (q_.rows() != q_.cols() || q_.rows() != b_.size()) {
      throw ConfigError("QuadraticComponent: dimension mismatch");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(q_, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw ConfigError("QuadraticComponent: eigensolver failed");
    const double lmin = es.eigenvalues().minCoeff();
    lmax_ = std::max(0.0, es.eigenvalues().maxCoeff());
    if (lmin < -1e-10 * std::max(1.0, lmax_)) {
      throw ConfigError("QuadraticComponent: Q is not positive semidefinite");
    }
  }

  index_t dim() const override { return b_.size(); }
  double value(const Vector& x) const override { return 0.5 * x.dot(q_ * x) + b_.dot(x) + c_; }
  using ComponentFunction::gradient;
  void gradient(const Vector& x, Vector& out) const override { out.noalias() = q_ * x; out += b_; }
  double lipschitz() const override { return lmax_; }

  const Matrix& q() const { return q_; }
  const Vector& b() const { return b_; }

 private:
  Matrix q_;
  Vector b_;
  double c_;
  double lmax_ = 0.0;
};

/// Numerically stable log(1 + exp(z)).
inline double log1pexp(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

/// 1 / (1 + exp(-z)).
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/**
 * f(x) = (1/N) sum_j log(1 + exp(-b_j a_j'x)) over one agent's examples.
 * Declared L uses the 1/4 bound on the logistic curvature:
 * L = lambda_max(A'A) / (4N).
 */
class LogisticComponent final : public ComponentFunction {
 public:
  LogisticComponent(Matrix a, Vector labels) : a_(std::move(a)), labels_(std::move(labels)) {
    if (a_.rows() == 0) throw ConfigError("LogisticComponent: empty agent partition");
    if (a_.rows() != labels_.size()) throw ConfigError("LogisticComponent: label count mismatch");
    const Matrix gram = a_.transpose() * a_ / (4.0 * static_cast<double>(a_.rows()));
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
    lmax_ = std::max(0.0, es.eigenvalues().maxCoeff());
  }

  index_t dim() const override { return a_.cols(); }
  index_t count() const { return a_.rows(); }
  const Matrix& features() const { return a_; }
  const Vector& labels() const { return labels_; }

  double value(const Vector& x) const override {
    const Vector margins = a_ * x;
    double s = 0.0;
    for (index_t j = 0; j < margins.size(); ++j) s += log1pexp(-labels_[j] * margins[j]);
    return s / static_cast<double>(a_.rows());
  }

  using ComponentFunction::gradient;
  void gradient(const Vector& x, Vector& out) const override {
    const Vector margins = a_ * x;
    Vector coef(margins.size());
    for (index_t j = 0; j < margins.size(); ++j) {
      coef[j] = -labels_[j] * sigmoid(-labels_[j] * margins[j]);
    }
    out.noalias() = a_.transpose() * coef;
    out /= static_cast<double>(a_.rows());
  }

  /// Gradient of a single example's loss.
  void datum_gradient(index_t j, const Vector& x, Vector& out) const {
    const double bj = labels_[j];
    const double z = bj * a_.row(j).dot(x);
    out = (-bj * sigmoid(-z)) * a_.row(j).transpose();
  }

  double lipschitz() const override { return lmax_; }

 private:
  Matrix a_;
  Vector labels_;
  double lmax_ = 0.0;
};

struct CounterSnapshot {
  std::uint64_t exact_gradient_evals = 0;
  std::uint64_t stochastic_samples = 0;
  std::vector<std::uint64_t> oracle_calls;
};

/// Gradient and sample counters for one run. Increments are atomic.
class CounterLedger {
 public:
  explicit CounterLedger(index_t m = 0) : calls_(static_cast<std::size_t>(m)) {}

  void count_exact(index_t i, std::uint64_t n = 1) {
    exact_.fetch_add(n, std::memory_order_relaxed);
    calls_[static_cast<std::size_t>(i)].fetch_add(1, std::memory_order_relaxed);
  }

  void count_stochastic(index_t i, std::uint64_t samples) {
    stochastic_.fetch_add(samples, std::memory_order_relaxed);
    calls_[static_cast<std::size_t>(i)].fetch_add(1, std::memory_order_relaxed);
  }

  std::uint64_t exact_gradient_evals() const { return exact_.load(std::memory_order_relaxed); }
  std::uint64_t stochastic_samples() const { return stochastic_.load(std::memory_order_relaxed); }
  std::uint64_t oracle_calls(index_t i) const {
    return calls_[static_cast<std::size_t>(i)].load(std::memory_order_relaxed);
  }
  index_t size() const { return static_cast<index_t>(calls_.size()); }

  CounterSnapshot snapshot() const {
    CounterSnapshot s{exact_gradient_evals(), stochastic_samples(), {}};
    s.oracle_calls.reserve(calls_.size());
    for (const auto& c : calls_) s.oracle_calls.push_back(c.load(std::memory_order_relaxed));
    return s;
  }

 private:
  std::atomic<std::uint64_t> exact_{0};
  std::atomic<std::uint64_t> stochastic_{0};
  std::vector<std::atomic<std::uint64_t>> calls_;
};

/// Exact gradient of component i, counted.
inline void grad(const ComponentFunction& f, index_t i, const Vector& x, Vector& out,
                 CounterLedger& ledger) {
  f.gradient(x, out);
  ledger.count_exact(i);
}

inline Vector grad(const ComponentFunction& f, index_t i, const Vector& x, CounterLedger& ledger) {
  Vector g(f.dim());
  grad(f, i, x, g, ledger);
  return g;
}

/// Stochastic first-order oracle: unbiased G(x, xi) with E||G - grad f||^2 <= sigma^2.
class StochasticOracle {
 public:
  virtual ~StochasticOracle() = default;
  virtual const ComponentFunction& base() const = 0;
  virtual double variance_bound() const = 0;
  /// One draw G(x, xi).
  virtual void sample(const Vector& x, Rng& rng, Vector& out) const = 0;

  /// Mean of `batch` independent draws.
  virtual void sample_mean(const Vector& x, std::uint64_t batch, Rng& rng, Vector& out) const {
    Vector g(x.size());
    out.setZero(x.size());
    for (std::uint64_t j = 0; j < batch; ++j) {
      sample(x, rng, g);
      out += g;
    }
    out /= static_cast<double>(batch);
  }
};

/// Exact gradient plus N(0, sigma^2/n I) noise, so E||noise||^2 = sigma^2 exactly.
class AdditiveNoiseOracle final : public StochasticOracle {
 public:
  AdditiveNoiseOracle(std::shared_ptr<const ComponentFunction> base, double sigma)
      : base_(std::move(base)), sigma_(sigma) {
    if (!(sigma_ >= 0.0) || !std::isfinite(sigma_)) {
      throw ConfigError("AdditiveNoiseOracle: sigma must be nonnegative and finite");
    }
  }

  const ComponentFunction& base() const override { return *base_; }
  double variance_bound() const override { return sigma_ * sigma_; }
  double sigma() const { return sigma_; }

  void sample(const Vector& x, Rng& rng, Vector& out) const override {
    base_->gradient(x, out);
    if (sigma_ == 0.0) return;
    std::normal_distribution<double> z(0.0, sigma_ / std::sqrt(static_cast<double>(x.size())));
    for (index_t j = 0; j < out.size(); ++j) out[j] += z(rng);
  }

  // The mean of `batch` Gaussian draws is itself Gaussian with variance
  // sigma^2/(n batch) per coordinate, so one draw per coordinate suffices.
  void sample_mean(const Vector& x, std::uint64_t batch, Rng& rng, Vector& out) const override {
    base_->gradient(x, out);
    if (sigma_ == 0.0) return;
    const double sd = sigma_ / std::sqrt(static_cast<double>(x.size()) * static_cast<double>(batch));
    std::normal_distribution<double> z(0.0, sd);
    for (index_t j = 0; j < out.size(); ++j) out[j] += z(rng);
  }

 private:
  std::shared_ptr<const ComponentFunction> base_;
  double sigma_;
};

/**
 * Uniform data-subsampling oracle for a logistic component: one draw is the
 * gradient of a uniformly chosen example. Variance bound: each example's
 * gradient has norm <= ||a_j||, so E||G - grad f||^2 <= max_j ||a_j||^2.
 */
class SubsamplingOracle final : public StochasticOracle {
 public:
  explicit SubsamplingOracle(std::shared_ptr<const LogisticComponent> base)
      : base_(std::move(base)) {
    bound_ = base_->features().rowwise().squaredNorm().maxCoeff();
  }

  const ComponentFunction& base() const override { return *base_; }
  double variance_bound() const override { return bound_; }

  void sample(const Vector& x, Rng& rng, Vector& out) const override {
    std::uniform_int_distribution<index_t> pick(0, base_->count() - 1);
    base_->datum_gradient(pick(rng), x, out);
  }

 private:
  std::shared_ptr<const LogisticComponent> base_;
  double bound_ = 0.0;
};

/// Mean of B stochastic gradients of component i; counts B samples.
inline void sfo_batch(const StochasticOracle& oracle, index_t i, const Vector& x,
                      std::uint64_t batch, Rng& rng, Vector& out, CounterLedger& ledger) {
  if (batch == 0) throw DomainError("sfo_batch: batch size must be >= 1");
  oracle.sample_mean(x, batch, rng, out);
  ledger.count_stochastic(i, batch);
}

inline Vector sfo_batch(const StochasticOracle& oracle, index_t i, const Vector& x,
                        std::uint64_t batch, Rng& rng, CounterLedger& ledger) {
  Vector out(x.size());
  sfo_batch(oracle, i, x, batch, rng, out, ledger);
  return out;
}

/// Random feasible point of the geometry's set, coordinates roughly of size `scale`.
inline Vector sample_feasible(const Geometry& geom, index_t n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> z(0.0, 1.0);
  Vector v(n);
  for (index_t j = 0; j < n; ++j) v[j] = scale * z(rng);
  if (std::holds_alternative<Simplex>(geom.feasible_set())) {
    // Dirichlet(1) draw via normalised exponentials.
    std::exponential_distribution<double> e(1.0);
    for (index_t j = 0; j < n; ++j) v[j] = e(rng);
    return v / v.sum();
  }
  if (const auto* box = std::get_if<Box>(&geom.feasible_set())) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (index_t j = 0; j < n; ++j) v[j] = box->lo[j] + u(rng) * (box->hi[j] - box->lo[j]);
    return v;
  }
  return geom.project(v);
}

/**
 * Largest observed ratio ||grad f(x1) - grad f(x2)||_* / (L ||x1 - x2||) over
 * `pairs` random feasible pairs. Values <= 1 + 1e-9 pass the audit.
 */
inline double lipschitz_audit(const ComponentFunction& f, const Geometry& geom, int pairs,
                              Rng& rng, double scale = 1.0) {
  double worst = 0.0;
  const index_t n = f.dim();
  Vector g1(n), g2(n);
  for (int p = 0; p < pairs; ++p) {
    const Vector x1 = sample_feasible(geom, n, rng, scale);
    const Vector x2 = sample_feasible(geom, n, rng, scale);
    const double dx = geom.norm(x1 - x2);
    if (dx == 0.0) continue;
    f.gradient(x1, g1);
    f.gradient(x2, g2);
    const double dg = geom.dual_norm(g1 - g2);
    const double lip = f.lipschitz();
    if (lip == 0.0) {
      worst = std::max(worst, dg == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    } else {
      worst = std::max(worst, dg / (lip * dx));
    }
  }
  return worst;
}

}  // namespace rgem
