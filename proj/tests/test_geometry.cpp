#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "featgeo/generators.hpp"
#include "featgeo/geometry.hpp"
#include "featgeo/serialize.hpp"

using namespace featgeo;

namespace {

ProbTable table2x2(double a, double b, double c, double d) {
  Eigen::VectorXd m(4);
  m << a, b, c, d;
  return ProbTable({2, 2}, m);
}

// Brute-force weighted least squares onto an explicit basis, used as a reference projection.
Eigen::VectorXd ls_project(const Eigen::MatrixXd& basis, const Eigen::VectorXd& g, const Eigen::VectorXd& w) {
  const Eigen::MatrixXd sw = w.cwiseSqrt().asDiagonal() * basis;
  const Eigen::VectorXd coef = sw.completeOrthogonalDecomposition().solve(w.cwiseSqrt().cwiseProduct(g));
  return basis * coef;
}

}  // namespace

TEST_CASE("empirical distribution counts cells") {
  const ProbTable p = empirical_distribution({{0, 0}, {0, 1}, {1, 1}, {1, 1}}, {2, 2});
  CHECK(p.at({0, 0}) == doctest::Approx(0.25));
  CHECK(p.at({0, 1}) == doctest::Approx(0.25));
  CHECK(p.at({1, 0}) == 0.0);
  CHECK(p.at({1, 1}) == doctest::Approx(0.5));

  const ProbTable point = empirical_distribution({{2}}, {5});
  CHECK(point.at({2}) == 1.0);
  CHECK(point.mass().sum() == 1.0);
}

TEST_CASE("empirical distribution ignores sample order") {
  std::mt19937 rng(7);
  std::vector<Index> samples;
  for (int i = 0; i < 200; ++i) samples.push_back({rng() % 3, rng() % 4});
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(12);
  for (const auto& s : samples) counts[static_cast<Eigen::Index>(s[0] * 4 + s[1])] += 1.0;
  const Eigen::VectorXd expected = counts / 200.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::shuffle(samples.begin(), samples.end(), rng);
    CHECK((empirical_distribution(samples, {3, 4}).mass() - expected).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("empirical distribution rejects bad input") {
  CHECK_THROWS_AS(empirical_distribution({}, {2}), EmptyData);
  CHECK_THROWS_AS(empirical_distribution({{0, 2}}, {2, 2}), BadSample);
}

TEST_CASE("cdk of a symmetric 2x2 table") {
  const JointFunction xi = cdk(table2x2(0.4, 0.1, 0.1, 0.4));
  CHECK(xi.at({0, 0}) == doctest::Approx(0.6));
  CHECK(xi.at({0, 1}) == doctest::Approx(-0.6));
  CHECK(xi.at({1, 0}) == doctest::Approx(-0.6));
  CHECK(xi.at({1, 1}) == doctest::Approx(0.6));
}

TEST_CASE("cdk vanishes on product tables and has zero mean") {
  const ProbTable px = gen_discrete_joint({4}, 1), py = gen_discrete_joint({3}, 2);
  CHECK(cdk(px.product(py)).values().cwiseAbs().maxCoeff() < 1e-12);

  const ProbTable p = gen_discrete_joint({5, 4}, 3);
  const MetricDistribution prod(p.marginal({0}).product(p.marginal({1})));
  CHECK(std::abs(inner_product(cdk(p), JointFunction::constant({5, 4}, 1.0), prod)) < 1e-12);
}

// On a midpoint grid both marginals stay exactly uniform, so the match is exact up to rounding.
TEST_CASE("cdk of a discretised raised cosine is cos(pi(x - y))") {
  for (std::size_t n : {16, 64, 256}) {
    Eigen::VectorXd w(static_cast<Eigen::Index>(n * n));
    std::vector<double> mid(n);
    for (std::size_t i = 0; i < n; ++i) mid[i] = -1.0 + (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        w[static_cast<Eigen::Index>(i * n + j)] = 1.0 + std::cos(std::numbers::pi * (mid[i] - mid[j]));
    const JointFunction xi = cdk(ProbTable::normalized({n, n}, w));
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        err = std::max(err, std::abs(xi.at({i, j}) - std::cos(std::numbers::pi * (mid[i] - mid[j]))));
    CHECK(err < 1e-12);
  }
}

TEST_CASE("cdk needs strictly positive marginals") {
  Eigen::VectorXd m(4);
  m << 0.5, 0.5, 0.0, 0.0;
  CHECK_THROWS_AS(cdk(ProbTable({2, 2}, m)), DegenerateMarginal);
}

TEST_CASE("restricting to support drops empty symbols") {
  Eigen::VectorXd m(6);
  m << 0.2, 0.0, 0.3, 0.1, 0.0, 0.4;
  const SupportRestriction r = restrict_to_support(ProbTable({2, 3}, m));
  CHECK(r.table.shape() == Shape{2, 2});
  CHECK(r.kept[1] == std::vector<std::size_t>{0, 2});
  CHECK_NOTHROW(cdk(r.table));
}

TEST_CASE("inner product basics") {
  const ProbTable p = gen_discrete_joint({3, 4}, 4);
  const MetricDistribution r(p);
  const JointFunction one = JointFunction::constant({3, 4}, 1.0);
  CHECK(inner_product(one, one, r) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(inner_product(cdk(p), JointFunction::zeros({3, 4}), r) == 0.0);
  CHECK_THROWS_AS(inner_product(one, JointFunction::constant({4, 3}, 1.0), r), ShapeError);
}

TEST_CASE("inner product with the cdk is a covariance") {
  const ProbTable p = gen_discrete_joint({3, 4}, 5);
  const Eigen::VectorXd px = p.marginal({0}).mass(), py = p.marginal({1}).mass();
  Eigen::VectorXd f(3), g(4);
  f << 0.3, -1.2, 2.0;
  g << 1.0, 0.5, -0.7, 0.1;
  const MetricDistribution prod(p.marginal({0}).product(p.marginal({1})));
  const double lhs = inner_product(cdk(p), JointFunction::outer(f, g, {3}, {4}), prod);
  const Eigen::MatrixXd pm = p.as_matrix(1);
  const double cov = f.dot(pm * g) - px.dot(f) * py.dot(g);
  CHECK(lhs == doctest::Approx(cov).epsilon(1e-12));
}

TEST_CASE("projection onto constants is the mean") {
  const ProbTable p = gen_discrete_joint({3, 3}, 6);
  const MetricDistribution r(p);
  JointFunction g({3, 3}, Eigen::VectorXd::LinSpaced(9, -1.0, 3.0));
  const JointFunction pr = project(g, Constants{}, r);
  const double mean = p.mass().dot(g.values());
  CHECK((pr.values().array() - mean).abs().maxCoeff() < 1e-12);
}

TEST_CASE("projection onto sums of factors matches least squares") {
  const Shape s{2, 3, 2};
  const ProbTable r = gen_discrete_joint(s, 8);
  Eigen::VectorXd gv(12);
  for (int i = 0; i < 12; ++i) gv[i] = std::sin(1.7 * i);
  const JointFunction g(s, gv);
  const JointFunction pr = project(g, SumOfFactors{{{0, 2}, {1, 2}}}, MetricDistribution(r));
  // Basis: indicators of (x1, y) and (x2, y) cells.
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(12, 4 + 6);
  for (std::size_t cell = 0; cell < 12; ++cell) {
    const Index id = unravel(cell, s);
    basis(static_cast<Eigen::Index>(cell), static_cast<Eigen::Index>(id[0] * 2 + id[2])) = 1.0;
    basis(static_cast<Eigen::Index>(cell), static_cast<Eigen::Index>(4 + id[1] * 2 + id[2])) = 1.0;
  }
  CHECK((pr.values() - ls_project(basis, gv, r.mass())).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("projection residual is orthogonal and projection is idempotent and linear") {
  const Shape s{2, 2, 3};
  const MetricDistribution r(gen_discrete_joint(s, 9));
  std::mt19937 rng(10);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto rand_fn = [&](const Shape& sh) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(cell_count(sh)));
    for (auto& e : v) e = u(rng);
    return JointFunction(sh, v);
  };
  const std::vector<SubspaceSpec> specs{Constants{}, FactorFunctions{{0}}, FactorFunctions{{0, 1}},
                                        ZeroMeanGiven{{1}}, SumOfFactors{{{0, 2}, {1, 2}}},
                                        SpanOfFeatures{{2}, {rand_fn({3})}}};
  for (const auto& spec : specs) {
    const JointFunction a = rand_fn(s), b = rand_fn(s);
    const JointFunction pa = project(a, spec, r);
    CHECK((project(pa, spec, r) - pa).values().cwiseAbs().maxCoeff() < 1e-10);
    const JointFunction lin = project(a * 2.5 + b * -0.75, spec, r);
    CHECK((lin - (pa * 2.5 + project(b, spec, r) * -0.75)).values().cwiseAbs().maxCoeff() < 1e-10);
    // Residual orthogonal to the projection of anything.
    CHECK(std::abs(inner_product(a - pa, project(b, spec, r), r)) < 1e-10);
    CHECK(squared_norm(a, r) ==
          doctest::Approx(squared_norm(pa, r) + squared_norm(a - pa, r)).epsilon(1e-12));
  }
}

TEST_CASE("zero-mean-given projection centres per condition") {
  const Shape s{3, 4};
  const ProbTable p = gen_discrete_joint(s, 11);
  const MetricDistribution r(p);
  Eigen::VectorXd gv(12);
  for (int i = 0; i < 12; ++i) gv[i] = std::cos(0.9 * i * i);
  const JointFunction g(s, gv);
  const JointFunction pr = project(g, ZeroMeanGiven{{0}}, r);
  const Eigen::MatrixXd pm = p.as_matrix(1), gm = g.as_matrix(1);
  for (Eigen::Index a = 0; a < 3; ++a) {
    const double cm = pm.row(a).dot(gm.row(a)) / pm.row(a).sum();
    for (Eigen::Index b = 0; b < 4; ++b) CHECK(pr.as_matrix(1)(a, b) == doctest::Approx(gm(a, b) - cm).epsilon(1e-12));
  }
}

TEST_CASE("projection of a three-way cdk onto functions of (x, s) is the (x, s) cdk") {
  const ProbTable p = gen_discrete_joint({2, 2, 3}, 12);
  const MetricDistribution r(p.marginal({0}).product(p.marginal({1, 2})));
  const JointFunction pr = project(cdk(p), FactorFunctions{{0, 1}}, r);
  const JointFunction lifted = lift(cdk(p.marginal({0, 1})), {0, 1}, {2, 2, 3});
  CHECK((pr - lifted).values().cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("tables round-trip through json and validate") {
  const ProbTable p = gen_discrete_joint({3, 2}, 13);
  const ProbTable q = prob_table_from_json(to_json(p));
  CHECK(q.shape() == p.shape());
  CHECK((q.mass() - p.mass()).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(prob_table_from_json(nlohmann::json{{"shape", {2}}, {"mass", {0.7, 0.7}}}), BadDistribution);
  CHECK_THROWS_AS(prob_table_from_json(nlohmann::json{{"shape", {3}}, {"mass", {0.5, 0.5}}}), ShapeError);
}
