#pragma once

#include <rgem/geometry.hpp>
#include <rgem/oracles.hpp>
#include <rgem/rng.hpp>
#include <rgem/types.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <concepts>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace rgem {

/**
 * Finite-sum problem
 *
 *     min_{x in X}  psi(x) = (1/m) sum_i f_i(x) + mu w(x)
 *
 * with per-component Lipschitz constants L_i, L = mean L_i, Lhat = max L_i
 * and L_f (Lipschitz constant of the averaged gradient, defaults to L).
 * Optionally carries the optimum, a constant Hessian of f (quadratic
 * problems, used for cancellation-free gap evaluation) and one stochastic
 * oracle per component. Immutable once built and shared between replicas.
 */
class ProblemInstance {
 public:
  ProblemInstance(std::vector<std::shared_ptr<const ComponentFunction>> components, double mu,
                  Geometry geometry = Geometry::euclidean())
      : components_(std::move(components)), mu_(mu), geometry_(std::move(geometry)) {
    if (components_.empty()) throw ConfigError("problem needs at least one component");
    if (!(mu_ >= 0.0) || !std::isfinite(mu_)) throw ConfigError("mu must be nonnegative and finite");
    if (mu_ > 0.0 && !geometry_.is_euclidean()) {
      throw ConfigError("mu > 0 is only supported with the Euclidean dgf");
    }
    dim_ = components_.front()->dim();
    double sum = 0.0;
    lhat_ = 0.0;
    for (const auto& c : components_) {
      if (c->dim() != dim_) throw ConfigError("components have mismatched dimensions");
      sum += c->lipschitz();
      lhat_ = std::max(lhat_, c->lipschitz());
    }
    lbar_ = sum / static_cast<double>(components_.size());
    lf_ = lbar_;
  }

  index_t m() const { return static_cast<index_t>(components_.size()); }
  index_t dim() const { return dim_; }
  double mu() const { return mu_; }
  const Geometry& geometry() const { return geometry_; }

  const ComponentFunction& component(index_t i) const { return *components_[static_cast<std::size_t>(i)]; }
  std::shared_ptr<const ComponentFunction> component_ptr(index_t i) const {
    return components_[static_cast<std::size_t>(i)];
  }

  double lipschitz(index_t i) const { return component(i).lipschitz(); }
  double lhat() const { return lhat_; }
  double lbar() const { return lbar_; }
  double lf() const { return lf_; }
  void set_lf(double lf) {
    if (!(lf >= 0.0) || lf > lbar_ * (1.0 + 1e-12) + 1e-300) {
      throw ConfigError("L_f must lie in [0, mean L_i]");
    }
    lf_ = lf;
  }

  /// Condition number Lhat / mu.
  double condition() const { return mu_ > 0.0 ? lhat_ / mu_ : std::numeric_limits<double>::infinity(); }

  double f(const Vector& x) const {
    double s = 0.0;
    for (const auto& c : components_) s += c->value(x);
    return s / static_cast<double>(components_.size());
  }

  double psi(const Vector& x) const { return f(x) + (mu_ > 0.0 ? mu_ * geometry_.w(x) : 0.0); }

  /// grad f(x) = (1/m) sum_i grad f_i(x); not counted against any ledger.
  Vector full_gradient(const Vector& x) const {
    Vector acc = Vector::Zero(dim_);
    Vector g(dim_);
    for (const auto& c : components_) {
      c->gradient(x, g);
      acc += g;
    }
    acc /= static_cast<double>(components_.size());
    return acc;
  }

  bool has_optimum() const { return x_star_.has_value(); }

  void set_optimum(Vector x_star, double psi_star) {
    if (x_star.size() != dim_) throw ConfigError("optimum has wrong dimension");
    grad_f_star_ = full_gradient(x_star);
    x_star_ = std::move(x_star);
    psi_star_ = psi_star;
  }

  void set_optimum(Vector x_star) {
    const double p = psi(x_star);
    set_optimum(std::move(x_star), p);
  }

  const Vector& x_star() const {
    if (!x_star_) throw UnavailableError("problem optimum is unknown");
    return *x_star_;
  }

  double psi_star() const {
    if (!x_star_) throw UnavailableError("problem optimum is unknown");
    return psi_star_;
  }

  /// Constant Hessian of f; enables exact-arithmetic gap formulas.
  void set_hessian(Matrix h) { hessian_ = std::move(h); }
  const std::optional<Matrix>& hessian() const { return hessian_; }

  /**
   * psi(x) - psi*. For quadratic f with Euclidean w the Taylor expansion
   * around x* is exact, so the gap is evaluated from delta = x - x* without
   * the cancellation of subtracting two nearly equal objective values.
   */
  double psi_gap(const Vector& x) const {
    const Vector& xs = x_star();
    if (hessian_ && geometry_.is_euclidean()) {
      const Vector d = x - xs;
      return (grad_f_star_ + mu_ * xs).dot(d) + 0.5 * d.dot(*hessian_ * d) + 0.5 * mu_ * d.squaredNorm();
    }
    return psi(x) - psi_star_;
  }

  /// Q(xbar, x*) = <grad f(x*), xbar - x*> + mu w(xbar) - mu w(x*).
  double q_gap(const Vector& xbar) const {
    const Vector& xs = x_star();
    const Vector d = xbar - xs;
    double q = grad_f_star_.dot(d);
    if (mu_ > 0.0) q += mu_ * (xs.dot(d) + 0.5 * d.squaredNorm());  // Euclidean w only when mu > 0
    return q;
  }

  // Stochastic oracles, one per component (optional).
  void set_stochastic_oracles(std::vector<std::shared_ptr<const StochasticOracle>> oracles) {
    if (static_cast<index_t>(oracles.size()) != m()) {
      throw ConfigError("need exactly one stochastic oracle per component");
    }
    sigma_sq_ = 0.0;
    for (const auto& o : oracles) sigma_sq_ = std::max(sigma_sq_, o->variance_bound());
    oracles_ = std::move(oracles);
  }
  bool has_stochastic_oracles() const { return !oracles_.empty(); }
  const StochasticOracle& stochastic_oracle(index_t i) const {
    if (oracles_.empty()) throw ConfigError("problem has no stochastic oracles");
    return *oracles_[static_cast<std::size_t>(i)];
  }
  /// Declared sigma^2 (max over components of the oracle variance bound).
  double sigma_sq() const { return sigma_sq_; }

 private:
  std::vector<std::shared_ptr<const ComponentFunction>> components_;
  double mu_;
  Geometry geometry_;
  index_t dim_ = 0;
  double lhat_ = 0.0;
  double lbar_ = 0.0;
  double lf_ = 0.0;
  std::optional<Vector> x_star_;
  double psi_star_ = 0.0;
  Vector grad_f_star_;
  std::optional<Matrix> hessian_;
  std::vector<std::shared_ptr<const StochasticOracle>> oracles_;
  double sigma_sq_ = 0.0;
};

/// What the solvers need from a problem.
template <class P>
concept FiniteSumProblem = requires(const P& p, const Vector& x, index_t i) {
  { p.m() } -> std::convertible_to<index_t>;
  { p.dim() } -> std::convertible_to<index_t>;
  { p.mu() } -> std::convertible_to<double>;
  { p.component(i) } -> std::convertible_to<const ComponentFunction&>;
  { p.psi(x) } -> std::convertible_to<double>;
  { p.geometry() } -> std::convertible_to<const Geometry&>;
};

/// sigma_0^2 = (1/m) sum_i ||grad f_i(x0)||_*^2, exact and uncounted.
template <FiniteSumProblem P>
double estimate_sigma0(const P& problem, const Vector& x0) {
  const Geometry& geom = problem.geometry();
  Vector g(problem.dim());
  double s = 0.0;
  for (index_t i = 0; i < problem.m(); ++i) {
    problem.component(i).gradient(x0, g);
    const double d = geom.dual_norm(g);
    s += d * d;
  }
  return s / static_cast<double>(problem.m());
}

/// Largest Lipschitz-audit ratio over all components (<= 1 + 1e-9 passes).
inline double audit_lipschitz(const ProblemInstance& problem, int pairs, std::uint64_t seed,
                              double scale = 1.0) {
  Rng rng = make_stream(seed, kAuditStream);
  double worst = 0.0;
  for (index_t i = 0; i < problem.m(); ++i) {
    worst = std::max(worst, lipschitz_audit(problem.component(i), problem.geometry(), pairs, rng, scale));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Quadratic test problems

struct Spectrum {
  double lo = 0.0;  // smallest eigenvalue of each Q_i
  double hi = 1.0;  // largest eigenvalue of each Q_i; L_i == hi
};

/// Random orthogonal matrix (Haar-distributed via QR with sign fix).
inline Matrix random_orthogonal(index_t n, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix g(n, n);
  for (index_t c = 0; c < n; ++c)
    for (index_t r = 0; r < n; ++r) g(r, c) = z(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (index_t j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

/**
 * Quadratic finite sum with explicit data: f_i(x) = 1/2 x'Q_i x + b_i'x,
 * Euclidean w. When unconstrained and Qbar + mu I is positive definite, the
 * optimum x* = -(Qbar + mu I)^{-1} bbar is attached.
 */
inline ProblemInstance make_quadratic(const std::vector<Matrix>& qs, const std::vector<Vector>& bs,
                                      double mu, Geometry geometry = Geometry::euclidean()) {
  if (qs.empty() || qs.size() != bs.size()) throw ConfigError("make_quadratic: need matching Q_i and b_i");
  std::vector<std::shared_ptr<const ComponentFunction>> comps;
  const index_t n = bs.front().size();
  Matrix qbar = Matrix::Zero(n, n);
  Vector bbar = Vector::Zero(n);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    comps.push_back(std::make_shared<QuadraticComponent>(qs[i], bs[i]));
    qbar += qs[i];
    bbar += bs[i];
  }
  qbar /= static_cast<double>(qs.size());
  bbar /= static_cast<double>(qs.size());

  ProblemInstance p(std::move(comps), mu, std::move(geometry));
  Eigen::SelfAdjointEigenSolver<Matrix> es(qbar, Eigen::EigenvaluesOnly);
  p.set_lf(std::min(p.lbar(), std::max(0.0, es.eigenvalues().maxCoeff())));
  p.set_hessian(qbar);

  if (std::holds_alternative<Unconstrained>(p.geometry().feasible_set())) {
    const Matrix h = qbar + mu * Matrix::Identity(n, n);
    Eigen::LDLT<Matrix> ldlt(h);
    const double hmin = es.eigenvalues().minCoeff() + mu;
    if (ldlt.info() == Eigen::Success && hmin > 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff())) {
      Vector xs = ldlt.solve(-bbar);
      p.set_optimum(std::move(xs));
    }
  }
  return p;
}

/**
 * Random quadratic: each Q_i = U_i diag(lambda_i) U_i' with eigenvalues drawn
 * uniformly from [lo, hi] and one pinned at hi (so L_i = hi), b_i ~ N(0, b_scale^2 I).
 */
inline ProblemInstance make_quadratic(index_t m, index_t n, double mu, Spectrum spectrum, Rng& rng,
                                      double b_scale = 1.0) {
  if (m < 1 || n < 1) throw ConfigError("make_quadratic: m and n must be positive");
  if (!(spectrum.lo >= 0.0) || !(spectrum.hi >= spectrum.lo)) {
    throw ConfigError("make_quadratic: spectrum needs 0 <= lo <= hi");
  }
  std::uniform_real_distribution<double> u(spectrum.lo, spectrum.hi);
  std::normal_distribution<double> z(0.0, b_scale);
  std::vector<Matrix> qs;
  std::vector<Vector> bs;
  for (index_t i = 0; i < m; ++i) {
    Vector lam(n);
    for (index_t j = 0; j < n; ++j) lam[j] = u(rng);
    lam[0] = spectrum.hi;
    const Matrix uo = random_orthogonal(n, rng);
    Matrix q = uo * lam.asDiagonal() * uo.transpose();
    q = 0.5 * (q + q.transpose());
    Vector b(n);
    for (index_t j = 0; j < n; ++j) b[j] = z(rng);
    qs.push_back(std::move(q));
    bs.push_back(std::move(b));
  }
  return make_quadratic(qs, bs, mu);
}

/**
 * Quadratic whose conditioning is set by mu: all Q_i share one random
 * eigenbasis, eigenvalue j of Q_i is d_j v_ij with d_j = (1 - j/(n-1))^2 and
 * v_ij ~ U[1/2, 1], and the leading one is pinned at 1. Hence L_i = 1 and
 * Qbar has a zero eigenvalue, so L_f/(lambda_min(Qbar) + mu) = 1/mu.
 */
inline ProblemInstance make_mu_conditioned_quadratic(index_t m, index_t n, double mu, Rng& rng,
                                                     double b_scale = 1.0) {
  if (m < 1 || n < 2) throw ConfigError("make_mu_conditioned_quadratic: need m >= 1 and n >= 2");
  const Matrix u = random_orthogonal(n, rng);
  std::uniform_real_distribution<double> v(0.5, 1.0);
  std::normal_distribution<double> z(0.0, b_scale);
  std::vector<Matrix> qs;
  std::vector<Vector> bs;
  for (index_t i = 0; i < m; ++i) {
    Vector lam(n);
    for (index_t j = 0; j < n; ++j) {
      const double d = 1.0 - static_cast<double>(j) / static_cast<double>(n - 1);
      lam[j] = d * d * v(rng);
    }
    lam[0] = 1.0;
    Matrix q = u * lam.asDiagonal() * u.transpose();
    q = 0.5 * (q + q.transpose());
    Vector b(n);
    for (index_t j = 0; j < n; ++j) b[j] = z(rng);
    qs.push_back(std::move(q));
    bs.push_back(std::move(b));
  }
  return make_quadratic(qs, bs, mu);
}

// ---------------------------------------------------------------------------
// Datasets

/// Per-agent labelled examples; labels in {-1, +1}.
struct Dataset {
  index_t dim = 0;
  std::vector<Matrix> features;  // agent i: N_i x dim
  std::vector<Vector> labels;    // agent i: N_i

  index_t agents() const { return static_cast<index_t>(features.size()); }
  std::vector<index_t> counts() const {
    std::vector<index_t> c;
    for (const auto& f : features) c.push_back(f.rows());
    return c;
  }
  index_t total() const {
    index_t s = 0;
    for (const auto& f : features) s += f.rows();
    return s;
  }
};

enum class DataFormat { sparse, csv };
enum class PartitionScheme { round_robin, contiguous };

struct RawExamples {
  index_t dim = 0;
  std::vector<std::vector<std::pair<index_t, double>>> rows;  // 0-based (index, value)
  std::vector<double> labels;
};

namespace detail {

inline double map_label(double raw, std::size_t line) {
  if (raw == 1.0) return 1.0;
  if (raw == -1.0 || raw == 0.0) return -1.0;  // 0/1 convention maps 0 -> -1
  throw ParseError("line " + std::to_string(line) + ": label must be -1, +1, 0 or 1");
}

inline double parse_double(const std::string& tok, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    if (!std::isfinite(v)) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line) + ": malformed number '" + tok + "'");
  }
}

}  // namespace detail

/**
 * Parse examples. Sparse format: `label idx:val idx:val ...` with 1-based
 * indices. CSV format: `label,v1,v2,...`. Blank lines and lines starting with
 * '#' are skipped. `dim` of 0 infers the dimension from the data.
 */
inline RawExamples parse_examples(std::istream& in, DataFormat format, index_t dim = 0) {
  RawExamples out;
  std::string line;
  std::size_t lineno = 0;
  index_t max_index = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::vector<std::pair<index_t, double>> row;
    double label = 0.0;
    if (format == DataFormat::sparse) {
      std::istringstream ss(line);
      std::string tok;
      ss >> tok;
      label = detail::map_label(detail::parse_double(tok, lineno), lineno);
      while (ss >> tok) {
        const auto colon = tok.find(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 == tok.size()) {
          throw ParseError("line " + std::to_string(lineno) + ": expected idx:val, got '" + tok + "'");
        }
        const std::string idx_s = tok.substr(0, colon);
        if (idx_s.find_first_not_of("0123456789") != std::string::npos) {
          throw ParseError("line " + std::to_string(lineno) + ": bad feature index '" + idx_s + "'");
        }
        const long long idx = std::stoll(idx_s);
        if (idx < 1) throw ParseError("line " + std::to_string(lineno) + ": feature indices are 1-based");
        if (dim > 0 && idx > dim) {
          throw ParseError("line " + std::to_string(lineno) + ": feature index exceeds dimension");
        }
        row.emplace_back(static_cast<index_t>(idx - 1), detail::parse_double(tok.substr(colon + 1), lineno));
        max_index = std::max<index_t>(max_index, static_cast<index_t>(idx));
      }
    } else {
      std::istringstream ss(line);
      std::string tok;
      std::vector<std::string> toks;
      while (std::getline(ss, tok, ',')) toks.push_back(tok);
      if (toks.empty()) throw ParseError("line " + std::to_string(lineno) + ": empty record");
      label = detail::map_label(detail::parse_double(toks[0], lineno), lineno);
      for (std::size_t j = 1; j < toks.size(); ++j) {
        row.emplace_back(static_cast<index_t>(j - 1), detail::parse_double(toks[j], lineno));
      }
      const auto width = static_cast<index_t>(toks.size() - 1);
      if (!out.rows.empty() && width != max_index) {
        throw ParseError("line " + std::to_string(lineno) + ": inconsistent CSV column count");
      }
      if (dim > 0 && width != dim) throw ParseError("line " + std::to_string(lineno) + ": CSV width != dimension");
      max_index = width;
    }
    out.rows.push_back(std::move(row));
    out.labels.push_back(label);
  }
  out.dim = dim > 0 ? dim : max_index;
  return out;
}

/**
 * Split examples over m agents. round_robin sends example j to agent j mod m;
 * contiguous gives agent i a consecutive block, the first N mod m blocks one
 * longer. Either way counts differ by at most one. A shuffle seed permutes
 * the examples first.
 */
inline Dataset partition(const RawExamples& raw, index_t m, PartitionScheme scheme,
                         std::optional<std::uint64_t> shuffle_seed = std::nullopt) {
  if (m < 1) throw ConfigError("partition: m must be positive");
  const auto total = static_cast<index_t>(raw.rows.size());
  std::vector<index_t> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), index_t{0});
  if (shuffle_seed) {
    Rng rng = make_stream(*shuffle_seed, kProblemStream);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::vector<index_t>> members(static_cast<std::size_t>(m));
  if (scheme == PartitionScheme::round_robin) {
    for (index_t j = 0; j < total; ++j) members[static_cast<std::size_t>(j % m)].push_back(order[static_cast<std::size_t>(j)]);
  } else {
    const index_t base = total / m;
    const index_t extra = total % m;
    index_t pos = 0;
    for (index_t i = 0; i < m; ++i) {
      const index_t len = base + (i < extra ? 1 : 0);
      for (index_t j = 0; j < len; ++j) members[static_cast<std::size_t>(i)].push_back(order[static_cast<std::size_t>(pos++)]);
    }
  }
  Dataset d;
  d.dim = raw.dim;
  for (const auto& mem : members) {
    Matrix a = Matrix::Zero(static_cast<index_t>(mem.size()), raw.dim);
    Vector b(static_cast<index_t>(mem.size()));
    for (std::size_t r = 0; r < mem.size(); ++r) {
      const auto src = static_cast<std::size_t>(mem[r]);
      for (const auto& [idx, val] : raw.rows[src]) a(static_cast<index_t>(r), idx) = val;
      b[static_cast<index_t>(r)] = raw.labels[src];
    }
    d.features.push_back(std::move(a));
    d.labels.push_back(std::move(b));
  }
  return d;
}

inline Dataset load_and_partition(const std::string& path, index_t m, PartitionScheme scheme,
                                  std::optional<std::uint64_t> shuffle_seed = std::nullopt,
                                  DataFormat format = DataFormat::sparse, index_t dim = 0) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset '" + path + "'");
  return partition(parse_examples(in, format, dim), m, scheme, shuffle_seed);
}

/**
 * Synthetic classification data: features N(0, 1/n), labels sign(a'w + 0.1 z)
 * for a random unit w. The label noise keeps the classes non-separable.
 */
inline Dataset make_synthetic_dataset(index_t m, index_t n, index_t per_agent, Rng& rng) {
  if (m < 1 || n < 1 || per_agent < 1) throw ConfigError("synthetic dataset: m, n, per_agent must be positive");
  std::normal_distribution<double> z(0.0, 1.0);
  Vector w(n);
  for (index_t j = 0; j < n; ++j) w[j] = z(rng);
  w.normalize();
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  Dataset d;
  d.dim = n;
  for (index_t i = 0; i < m; ++i) {
    Matrix a(per_agent, n);
    Vector b(per_agent);
    for (index_t r = 0; r < per_agent; ++r) {
      for (index_t j = 0; j < n; ++j) a(r, j) = s * z(rng);
      b[r] = a.row(r).dot(w) + 0.1 * z(rng) >= 0.0 ? 1.0 : -1.0;
    }
    d.features.push_back(std::move(a));
    d.labels.push_back(std::move(b));
  }
  return d;
}

/**
 * Logistic-regression finite sum over a partitioned dataset, w = ||x||^2/2,
 * mu = lambda. No optimum is attached here; see reference_solve.
 */
inline ProblemInstance make_logistic_components(const Dataset& data, double lambda) {
  if (data.features.empty()) throw ConfigError("make_logistic: dataset has no agents");
  std::vector<std::shared_ptr<const ComponentFunction>> comps;
  std::vector<std::shared_ptr<const StochasticOracle>> oracles;
  Matrix gram = Matrix::Zero(data.dim, data.dim);
  for (std::size_t i = 0; i < data.features.size(); ++i) {
    if (data.features[i].rows() == 0) {
      throw ConfigError("make_logistic: agent " + std::to_string(i) + " has an empty partition");
    }
    auto c = std::make_shared<LogisticComponent>(data.features[i], data.labels[i]);
    gram += data.features[i].transpose() * data.features[i] / (4.0 * static_cast<double>(data.features[i].rows()));
    oracles.push_back(std::make_shared<SubsamplingOracle>(c));
    comps.push_back(std::move(c));
  }
  gram /= static_cast<double>(data.features.size());
  ProblemInstance p(std::move(comps), lambda);
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
  p.set_lf(std::min(p.lbar(), std::max(0.0, es.eigenvalues().maxCoeff())));
  p.set_stochastic_oracles(std::move(oracles));
  return p;
}

/// Wrap each component in a Gaussian additive-noise oracle with the given sigma.
inline void attach_noise_oracles(ProblemInstance& p, double sigma) {
  std::vector<std::shared_ptr<const StochasticOracle>> oracles;
  for (index_t i = 0; i < p.m(); ++i) {
    oracles.push_back(std::make_shared<AdditiveNoiseOracle>(p.component_ptr(i), sigma));
  }
  p.set_stochastic_oracles(std::move(oracles));
}

}  // namespace rgem
