#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "featgeo/experiments.hpp"
#include "featgeo/generators.hpp"
#include "featgeo/metrics.hpp"
#include "featgeo/oracle.hpp"

using namespace featgeo;
using std::numbers::pi;

TEST_CASE("discrete tables are seeded and positive") {
  const ProbTable a = gen_discrete_joint({8, 6}, 0), b = gen_discrete_joint({8, 6}, 0);
  CHECK(a.mass() == b.mass());
  CHECK(a.mass().minCoeff() > 0.0);
  CHECK(a.mass().sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(gen_discrete_joint({8, 6}, 1).mass() != a.mass());
  const ModalDecomposition md = modal_decompose(a, 5);
  CHECK(md.sigmas.minCoeff() > 1e-6);
}

TEST_CASE("sampling a table is deterministic and consistent") {
  const ProbTable p = gen_discrete_joint({3, 2}, 2);
  const auto s1 = sample_table(p, 60000, 9), s2 = sample_table(p, 60000, 9);
  CHECK(s1 == s2);
  const ProbTable e = empirical_distribution(s1, {3, 2});
  CHECK((e.mass() - p.mass()).cwiseAbs().maxCoeff() < 0.01);
}

TEST_CASE("raised cosine pairs") {
  const ContinuousPairs d = gen_raised_cosine(100000, 3);
  CHECK(ks_uniform(d.x.col(0), -1.0, 1.0) < 0.02);
  CHECK(ks_uniform(d.y.col(0), -1.0, 1.0) < 0.02);
  // Proposal Unif[-1,1], bound 1 on a density with mean 1/2.
  CHECK(d.acceptance == doctest::Approx(0.5).epsilon(0.02));
  const Eigen::ArrayXd cx = (pi * d.x.col(0).array()).cos(), cy = (pi * d.y.col(0).array()).cos();
  const double corr = ((cx - cx.mean()) * (cy - cy.mean())).mean() /
                      std::sqrt((cx - cx.mean()).square().mean() * (cy - cy.mean()).square().mean());
  CHECK(corr == doctest::Approx(0.5).epsilon(0.04));

  const ContinuousPairs again = gen_raised_cosine(100000, 3);
  CHECK(again.x == d.x);
  CHECK(again.y == d.y);
  CHECK_THROWS_AS(gen_raised_cosine(0, 3), EmptyData);
}

TEST_CASE("binary markov sequences") {
  Eigen::VectorXd m(4);
  m << 0.25, 0.25, 0.25, 0.25;
  const ProbTable puv({2, 2}, m);
  SUBCASE("no flips gives constant sequences") {
    const SequencePairs s = gen_bms_pairs(200, 12, 9, 0.0, 0.0, puv, 4);
    for (Eigen::Index i = 0; i < 200; ++i) {
      CHECK((s.x.row(i).array() == s.x(i, 0)).all());
      CHECK((s.y.row(i).array() == s.y(i, 0)).all());
    }
  }
  SUBCASE("fair flips") {
    const SequencePairs s = gen_bms_pairs(2000, 51, 2, 0.5, 0.5, puv, 5);
    double flips = 0.0;
    for (Eigen::Index i = 0; i < s.x.rows(); ++i)
      for (Eigen::Index j = 1; j < s.x.cols(); ++j) flips += s.x(i, j) != s.x(i, j - 1) ? 1.0 : 0.0;
    CHECK(flips / (2000.0 * 50.0) == doctest::Approx(0.5).epsilon(0.02));
  }
  SUBCASE("hidden factor sets the flip rate") {
    const SequencePairs s = gen_bms_pairs(500, 40, 30, 0.1, 0.9, puv, 6);
    double flips[2] = {0.0, 0.0}, count[2] = {0.0, 0.0};
    for (Eigen::Index i = 0; i < s.x.rows(); ++i)
      for (Eigen::Index j = 1; j < s.x.cols(); ++j) {
        flips[s.u[i]] += s.x(i, j) != s.x(i, j - 1) ? 1.0 : 0.0;
        count[s.u[i]] += 1.0;
      }
    CHECK(flips[0] / count[0] == doctest::Approx(0.1).epsilon(0.15));
    CHECK(flips[1] / count[1] == doctest::Approx(0.9).epsilon(0.02));
    CHECK(s.x.cols() == 40);
    CHECK(s.y.cols() == 30);
  }
  SUBCASE("bad hidden table") {
    CHECK_THROWS_AS(gen_bms_pairs(10, 4, 4, 0.1, 0.9, gen_discrete_joint({3, 2}, 1), 7), BadDistribution);
    CHECK_THROWS_AS(gen_bms_pairs(10, 4, 4, 1.5, 0.9, puv, 7), ConfigError);
  }
}

// P(Y = 1) after clamping, integrated on a midpoint grid under the pair density 1 + cos 2 pi (x1 - x2).
double clamped_label_rate(std::size_t n) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double a = -1.0 + (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
      const double b = -1.0 + (2.0 * static_cast<double>(j) + 1.0) / static_cast<double>(n);
      const double w = 1.0 + std::cos(2.0 * pi * (a - b));
      const double p = 0.5 + 0.25 * (std::cos(pi * a) + std::cos(pi * b) + std::cos(pi * (a + b)));
      num += w * std::clamp(p, 0.0, 1.0);
      den += w;
    }
  return num / den;
}

TEST_CASE("multimodal samples") {
  const MultimodalSamples a = gen_multimodal(50000, MultimodalVariant::Interaction, 8);
  const double p1 = (a.y.array() == 1).cast<double>().mean();
  // Clamping the peak above 1 pulls the label rate below one half (about 0.486).
  CHECK(std::abs(p1 - clamped_label_rate(1000)) <= 0.01);
  CHECK(a.clamp_frequency == doctest::Approx(0.094).epsilon(0.1));
  const MultimodalSamples b = gen_multimodal(50000, MultimodalVariant::Interaction, 8);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);

  const MultimodalSamples pw = gen_multimodal(50000, MultimodalVariant::Pairwise, 9);
  CHECK(pw.clamp_frequency == 0.0);
  CHECK(std::abs((pw.y.array() == 1).cast<double>().mean() - 0.5) <= 0.01);
  // The pairwise conditional stays in [0, 1] everywhere on a fine grid.
  const Eigen::MatrixXd g = grid_2d(101);
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    const double c = multimodal_conditional(MultimodalVariant::Pairwise, g(i, 0), g(i, 1));
    CHECK((c >= 0.0 && c <= 1.0));
  }
  CHECK(multimodal_conditional(MultimodalVariant::Interaction, 0.0, 0.0) == doctest::Approx(1.25));
  CHECK_THROWS_AS(parse_multimodal_variant("triple"), ConfigError);
}

TEST_CASE("triples split into pairwise datasets with the same marginals") {
  SUBCASE("single triple") {
    Eigen::MatrixXd x(1, 2);
    x << 0.3, -0.7;
    Eigen::VectorXi y(1);
    y << -1;
    const PairwiseDatasets d = decompose_triples(x, y);
    CHECK(d.x1x2.rows() == 1);
    CHECK(d.x1y.rows() == 1);
    CHECK(d.x2y.rows() == 1);
    CHECK(d.x1y(0, 0) == 0.3);
    CHECK(d.x1y(0, 1) == -1.0);
    CHECK(d.x2y(0, 0) == -0.7);
  }
  SUBCASE("counting equality on a discrete triple set") {
    std::mt19937 rng(10);
    const Eigen::Index n = 3000;
    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXi y(n);
    Eigen::MatrixXd c12 = Eigen::MatrixXd::Zero(3, 3), c1y = Eigen::MatrixXd::Zero(3, 2), c2y = Eigen::MatrixXd::Zero(3, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int a = static_cast<int>(rng() % 3), b = static_cast<int>(rng() % 3), l = static_cast<int>(rng() % 2);
      x(i, 0) = a;
      x(i, 1) = b;
      y[i] = 2 * l - 1;
      c12(a, b) += 1;
      c1y(a, l) += 1;
      c2y(b, l) += 1;
    }
    const PairwiseDatasets d = decompose_triples(x, y);
    Eigen::MatrixXd e12 = Eigen::MatrixXd::Zero(3, 3), e1y = Eigen::MatrixXd::Zero(3, 2), e2y = Eigen::MatrixXd::Zero(3, 2);
    for (Eigen::Index i = 0; i < d.x1x2.rows(); ++i)
      e12(static_cast<Eigen::Index>(d.x1x2(i, 0)), static_cast<Eigen::Index>(d.x1x2(i, 1))) += 1;
    for (Eigen::Index i = 0; i < d.x1y.rows(); ++i)
      e1y(static_cast<Eigen::Index>(d.x1y(i, 0)), static_cast<Eigen::Index>((d.x1y(i, 1) + 1) / 2)) += 1;
    for (Eigen::Index i = 0; i < d.x2y.rows(); ++i)
      e2y(static_cast<Eigen::Index>(d.x2y(i, 0)), static_cast<Eigen::Index>((d.x2y(i, 1) + 1) / 2)) += 1;
    CHECK(e12 / static_cast<double>(d.x1x2.rows()) == c12 / static_cast<double>(n));
    CHECK(e1y / static_cast<double>(d.x1y.rows()) == c1y / static_cast<double>(n));
    CHECK(e2y / static_cast<double>(d.x2y.rows()) == c2y / static_cast<double>(n));
  }
}

TEST_CASE("aligned correlation") {
  const Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(50, -1.0, 2.0).array().sin();
  CHECK(metric_aligned_correlation(v, v) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(metric_aligned_correlation(-v, v) == doctest::Approx(1.0).epsilon(1e-14));
  std::mt19937 rng(11);
  Eigen::VectorXd a(10000), b(10000);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a[i] = (rng() & 1) ? 1.0 : -1.0;
    b[i] = (rng() & 1) ? 1.0 : -1.0;
  }
  CHECK(metric_aligned_correlation(a, b) <= 0.05);
  CHECK_THROWS_AS(metric_aligned_correlation(Eigen::VectorXd::Constant(5, 2.0), v.head(5)), DegenerateFeature);
  CHECK_THROWS_AS(metric_aligned_correlation(v.head(1), v.head(1)), TooFewSamples);
}

TEST_CASE("subspace residual") {
  const Eigen::VectorXd x = grid_1d(201);
  Eigen::MatrixXd oracle(x.size(), 2);
  oracle.col(0) = (pi * x.array()).cos();
  oracle.col(1) = (pi * x.array()).sin();
  const double c = std::cos(0.4), s = std::sin(0.4);
  Eigen::Matrix2d rot;
  rot << c, -s, s, c;
  CHECK(metric_subspace_residual(oracle * rot, oracle) < 1e-12);
  const Eigen::MatrixXd shifted = (pi * x.array() + pi / 7.0).cos().matrix();
  CHECK(metric_subspace_residual(shifted, oracle) <= 1e-6);
  // sin 2 pi x is orthogonal to both over a full period of the grid.
  const Eigen::MatrixXd ortho = (2.0 * pi * x.array()).sin().matrix();
  CHECK(metric_subspace_residual(ortho, oracle) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("csv artifacts round-trip") {
  Artifact a{{"x", "value"}, Eigen::MatrixXd(3, 2)};
  a.data << -1.0, 0.123456789, 0.0, 1e-9, 1.0, -42.5;
  const auto path = std::filesystem::temp_directory_path() / "featgeo_artifact_roundtrip.csv";
  write_csv(path.string(), a);
  const Artifact b = read_csv(path.string());
  CHECK(b.header == a.header);
  CHECK((b.data - a.data).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(b.column("value")[2] == -42.5);
  std::filesystem::remove(path);
}

TEST_CASE("grids") {
  const Eigen::VectorXd g = grid_1d(5);
  CHECK(g[0] == -1.0);
  CHECK(g[4] == 1.0);
  CHECK(g[2] == doctest::Approx(0.0));
  const Eigen::MatrixXd g2 = grid_2d(3);
  CHECK(g2.rows() == 9);
  CHECK(g2(1, 0) == -1.0);
  CHECK(g2(1, 1) == 0.0);
}

TEST_CASE("discrete modal preset passes all of its checks") {
  const ExperimentResult r = run_experiment("discrete_modal");
  std::size_t sigma = 0, corr = 0;
  for (const auto& m : r.metrics) {
    CHECK_MESSAGE(m.pass(), m.name, " = ", m.value);
    if (m.name.rfind("sigma", 0) == 0) ++sigma;
    if (m.name.rfind("corr", 0) == 0) ++corr;
  }
  CHECK(sigma == 3);
  CHECK(corr == 6);
  CHECK(r.passed());
  CHECK(r.artifacts.count("empirical_table") == 1);
}

TEST_CASE("unknown presets are configuration errors") {
  CHECK_FALSE(is_preset("nope"));
  CHECK_THROWS_AS(run_experiment("nope"), ConfigError);
  for (const auto& name : preset_names()) CHECK(is_preset(name));
}
