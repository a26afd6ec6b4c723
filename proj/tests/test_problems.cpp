#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace rgem {
namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<index_t>(xs.size()));
  index_t j = 0;
  for (double x : xs) v[j++] = x;
  return v;
}

RawExamples parse(const std::string& text, DataFormat format = DataFormat::sparse, index_t dim = 0) {
  std::istringstream in(text);
  return parse_examples(in, format, dim);
}

std::string parse_error(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

TEST(Problems, IdentityQuadratic) {
  const Matrix id = Matrix::Identity(3, 3);
  const ProblemInstance p = make_quadratic({id, id, id}, {Vector::Zero(3), Vector::Zero(3), Vector::Zero(3)}, 1.0);
  EXPECT_TRUE(p.x_star().isZero(0.0));
  EXPECT_EQ(p.psi_star(), 0.0);
  EXPECT_EQ(p.lhat(), 1.0);
  EXPECT_EQ(p.lbar(), 1.0);
}

TEST(Problems, TwoByTwoQuadratic) {
  const ProblemInstance p = make_quadratic({Vector(vec({1.0, 4.0})).asDiagonal(), Vector(vec({2.0, 2.0})).asDiagonal()},
                                           {vec({-3.0, 0.0}), vec({-3.0, 0.0})}, 0.5);
  EXPECT_NEAR(p.x_star()[0], 1.5, 1e-15);
  EXPECT_NEAR(p.x_star()[1], 0.0, 1e-15);
  EXPECT_EQ(p.lhat(), 4.0);
  EXPECT_EQ(p.lbar(), 3.0);
}

TEST(Problems, DeclaredLipschitzMatchesPowerIteration) {
  Rng rng = make_stream(1, kProblemStream);
  const ProblemInstance p = make_quadratic(4, 10, 0.1, Spectrum{0.2, 3.0}, rng);
  for (index_t i = 0; i < p.m(); ++i) {
    const auto& q = dynamic_cast<const QuadraticComponent&>(p.component(i));
    EXPECT_NEAR(p.lipschitz(i), testing::power_iteration(q.q()), 1e-8 * p.lipschitz(i));
  }
  EXPECT_LE(audit_lipschitz(p, 200, 1), 1.0 + 1e-9);
}

TEST(Problems, MuConditionedFamily) {
  Rng rng = make_stream(2, kProblemStream);
  const ProblemInstance p = make_mu_conditioned_quadratic(5, 12, 0.01, rng);
  EXPECT_NEAR(p.lhat(), 1.0, 1e-12);
  EXPECT_NEAR(p.condition(), 100.0, 1e-9);
  Eigen::SelfAdjointEigenSolver<Matrix> es(*p.hessian(), Eigen::EigenvaluesOnly);
  EXPECT_NEAR(es.eigenvalues().minCoeff(), 0.0, 1e-12);
  EXPECT_NEAR(es.eigenvalues().maxCoeff(), 1.0, 1e-12);
}

TEST(Problems, Sigma0MatchesClosedForm) {
  Rng rng = make_stream(3, kProblemStream);
  const ProblemInstance p = make_quadratic(5, 6, 0.1, Spectrum{0.0, 1.0}, rng);
  const Vector x0 = Vector::LinSpaced(6, -1.0, 1.0);
  double expect = 0.0;
  for (index_t i = 0; i < p.m(); ++i) {
    const auto& q = dynamic_cast<const QuadraticComponent&>(p.component(i));
    expect += (q.q() * x0 + q.b()).squaredNorm();
  }
  expect /= 5.0;
  EXPECT_NEAR(estimate_sigma0(p, x0), expect, 1e-12 * (1.0 + expect));
}

TEST(Problems, OptimumIsStationary) {
  Rng rng = make_stream(4, kProblemStream);
  const ProblemInstance q = make_quadratic(3, 8, 0.05, Spectrum{0.0, 1.0}, rng);
  EXPECT_LE((q.full_gradient(q.x_star()) + q.mu() * q.x_star()).norm(), 1e-8);
  const ProblemInstance l = make_logistic(make_synthetic_dataset(3, 5, 20, rng), 0.1);
  EXPECT_LE((l.full_gradient(l.x_star()) + l.mu() * l.x_star()).norm(), 1e-8);
}

TEST(Problems, LogisticExamples) {
  Dataset one;
  one.dim = 2;
  one.features.push_back(vec({1.0, 0.0}).transpose());
  one.labels.push_back(vec({1.0}));
  const ProblemInstance p = make_logistic_components(one, 0.0);
  EXPECT_DOUBLE_EQ(p.f(Vector::Zero(2)), std::log(2.0));

  Dataset zeros;
  zeros.dim = 3;
  zeros.features.push_back(Matrix::Zero(4, 3));
  zeros.labels.push_back(vec({1.0, -1.0, 1.0, 1.0}));
  const ProblemInstance z = make_logistic_components(zeros, 0.0);
  for (const Vector& x : {Vector(Vector::Zero(3)), vec({1.0, -2.0, 3.0})}) {
    EXPECT_DOUBLE_EQ(z.f(x), std::log(2.0));
    EXPECT_TRUE(z.full_gradient(x).isZero(0.0));
  }

  Rng rng = make_stream(5, kProblemStream);
  const ProblemInstance l = make_logistic_components(make_synthetic_dataset(4, 6, 25, rng), 0.0);
  EXPECT_LE(audit_lipschitz(l, 200, 5, 4.0), 1.0 + 1e-9);
}

TEST(Problems, EmptyPartitionIsAnError) {
  const RawExamples raw = parse("1 1:1\n-1 2:1\n1 1:0.5\n");
  const Dataset d = partition(raw, 5, PartitionScheme::round_robin);
  EXPECT_THROW(make_logistic(d, 0.1), ConfigError);
}

TEST(Problems, SparseParse) {
  const RawExamples raw = parse("-1 3:0.5\n", DataFormat::sparse, 3);
  const Dataset d = partition(raw, 1, PartitionScheme::round_robin);
  EXPECT_EQ(d.features[0].row(0).transpose(), vec({0.0, 0.0, 0.5}));
  EXPECT_EQ(d.labels[0][0], -1.0);

  const RawExamples mapped = parse("# comment\n0 1:2\n\n1 2:1 4:3\n");
  EXPECT_EQ(mapped.dim, 4);
  EXPECT_EQ(mapped.labels, (std::vector<double>{-1.0, 1.0}));
}

TEST(Problems, ParseErrorsCarryLineNumbers) {
  EXPECT_NE(parse_error("1 1:1\n1 a:2\n").find("line 2"), std::string::npos);
  EXPECT_NE(parse_error("1 1:1\n-1 1:1\n2 1:1\n").find("line 3"), std::string::npos);
  EXPECT_NE(parse_error("1 0:1\n").find("line 1"), std::string::npos);
  EXPECT_NE(parse_error("1 1:x\n").find("line 1"), std::string::npos);
  EXPECT_NE(parse_error("1 11\n").find("line 1"), std::string::npos);
  std::istringstream wide("1 5:1\n");
  EXPECT_THROW(parse_examples(wide, DataFormat::sparse, 3), ParseError);
}

TEST(Problems, CsvParse) {
  const RawExamples raw = parse("1,0.5,2\n0,1,-1\n", DataFormat::csv);
  EXPECT_EQ(raw.dim, 2);
  const Dataset d = partition(raw, 1, PartitionScheme::contiguous);
  EXPECT_EQ(d.features[0].row(1).transpose(), vec({1.0, -1.0}));
  EXPECT_EQ(d.labels[0][1], -1.0);
  std::istringstream ragged("1,0.5,2\n0,1\n");
  EXPECT_THROW(parse_examples(ragged, DataFormat::csv), ParseError);
}

TEST(Problems, PartitionIsADisjointCover) {
  std::string text;
  for (int j = 1; j <= 10; ++j) text += (j % 2 ? "1 1:" : "-1 1:") + std::to_string(j) + "\n";
  const RawExamples raw = parse(text);
  for (PartitionScheme scheme : {PartitionScheme::round_robin, PartitionScheme::contiguous}) {
    for (std::optional<std::uint64_t> shuffle : {std::optional<std::uint64_t>{}, std::optional<std::uint64_t>{7}}) {
      const Dataset d = partition(raw, 3, scheme, shuffle);
      EXPECT_EQ(d.counts(), (std::vector<index_t>{4, 3, 3}));
      EXPECT_EQ(d.total(), 10);
      std::multiset<double> seen;
      for (const auto& a : d.features)
        for (index_t r = 0; r < a.rows(); ++r) seen.insert(a(r, 0));
      EXPECT_EQ(seen.size(), 10u);
      EXPECT_EQ(std::set<double>(seen.begin(), seen.end()).size(), 10u);
    }
  }
}

TEST(Problems, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "rgem_problems_test.svm";
  {
    std::ofstream out(path);
    out << "1 1:0.5 2:1\n-1 2:-1\n1 1:2\n";
  }
  const Dataset d = load_and_partition(path.string(), 2, PartitionScheme::round_robin);
  EXPECT_EQ(d.counts(), (std::vector<index_t>{2, 1}));
  std::filesystem::remove(path);
  EXPECT_THROW(load_and_partition(path.string(), 2, PartitionScheme::round_robin), ParseError);
}

TEST(Problems, ReferenceSolveMatchesAnalyticOptimum) {
  Rng rng = make_stream(6, kProblemStream);
  const ProblemInstance p = make_quadratic(3, 6, 0.2, Spectrum{0.0, 1.0}, rng);
  for (double tol : {1e-6, 1e-9}) {
    const ReferenceSolution s = reference_solve(p, tol);
    EXPECT_LE(std::abs(s.psi_star - p.psi_star()), tol);
    EXPECT_LE((s.x_star - p.x_star()).norm(), std::sqrt(2.0 * tol / p.mu()));
  }
  const ProblemInstance small = make_quadratic({Vector(vec({1.0, 3.0})).asDiagonal()}, {vec({1.0, -2.0})}, 0.5);
  const ReferenceSolution s = reference_solve(small, 1e-12);
  EXPECT_LE((s.x_star - small.x_star()).lpNorm<Eigen::Infinity>(), 1e-6);

  const ReferenceSolution again = reference_solve(small, 1e-12, small.x_star());
  EXPECT_EQ(again.iterations, 0u);
  EXPECT_EQ(again.x_star, small.x_star());
}

TEST(Problems, ReferenceSolveErrors) {
  Rng rng = make_stream(7, kProblemStream);
  const ProblemInstance p = make_quadratic(2, 4, 0.01, Spectrum{0.0, 1.0}, rng);
  EXPECT_THROW(reference_solve(p, 1e-12, Vector::Zero(4), 5), BudgetError);
  const ProblemInstance flat = make_quadratic(2, 4, 0.0, Spectrum{0.5, 1.0}, rng);
  EXPECT_THROW(reference_solve(flat, 1e-6), PolicyError);
}

TEST(Problems, ReferenceOptimumHasVanishingFiniteDifferenceGradient) {
  Rng rng = make_stream(8, kProblemStream);
  const ProblemInstance p = make_logistic(make_synthetic_dataset(3, 4, 30, rng), 0.05);
  const Vector g = testing::finite_difference_gradient([&](const Vector& x) { return p.psi(x); }, p.x_star(), 1e-5);
  EXPECT_LE(g.norm(), 1e-8);
}

}  // namespace
}  // namespace rgem
