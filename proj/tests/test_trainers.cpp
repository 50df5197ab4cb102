#include <cmath>
#include <limits>

#include "doctest.h"
#include "featgeo/generators.hpp"
#include "featgeo/inference.hpp"
#include "featgeo/metrics.hpp"
#include "featgeo/oracle.hpp"
#include "featgeo/trainers.hpp"

using namespace featgeo;

namespace {

PairData pairs_from(const std::vector<Index>& s) {
  PairData d{Eigen::MatrixXd(static_cast<Eigen::Index>(s.size()), 1), Eigen::MatrixXd(static_cast<Eigen::Index>(s.size()), 1)};
  for (std::size_t i = 0; i < s.size(); ++i) {
    d.x(static_cast<Eigen::Index>(i), 0) = static_cast<double>(s[i][0]);
    d.y(static_cast<Eigen::Index>(i), 0) = static_cast<double>(s[i][1]);
  }
  return d;
}

Eigen::MatrixXd symbols(std::size_t n) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) m(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
  return m;
}

TrainConfig config(std::size_t epochs, std::size_t batch, std::uint64_t seed, double lr = 1e-3) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = batch;
  c.seed = seed;
  c.adam.lr = lr;
  return c;
}

// 2x2 sample set whose empirical table is exactly [[.4, .1], [.1, .4]].
PairData exact_2x2() {
  std::vector<Index> s;
  for (int i = 0; i < 40; ++i) s.push_back({0, 0});
  for (int i = 0; i < 10; ++i) s.push_back({0, 1});
  for (int i = 0; i < 10; ++i) s.push_back({1, 0});
  for (int i = 0; i < 40; ++i) s.push_back({1, 1});
  return pairs_from(s);
}

ExtractorPtr table_feature(const Eigen::MatrixXd& table) {
  return std::make_shared<FrozenFeature>(
      [table](const Eigen::MatrixXd& in) {
        Eigen::MatrixXd out(in.rows(), table.cols());
        for (Eigen::Index i = 0; i < in.rows(); ++i) out.row(i) = table.row(static_cast<Eigen::Index>(in(i, 0)));
        return out;
      },
      static_cast<std::size_t>(table.cols()), "table");
}

}  // namespace

TEST_CASE("mode extraction normalises and reads off strengths") {
  const PairData d = exact_2x2();
  Eigen::MatrixXd f(2, 1), g(2, 1);
  f << 0.6, -0.6;
  g << 1.0, -1.0;
  LearnedModes m = extract_modes(table_feature(f), table_feature(g), d.x, d.y);
  CHECK(m.sigmas[0] == doctest::Approx(0.6).epsilon(1e-12));
  const Eigen::MatrixXd fl = m.left(d.x), gl = m.right(d.y);
  CHECK(fl.col(0).squaredNorm() / 100.0 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(gl.col(0).squaredNorm() / 100.0 == doctest::Approx(1.0).epsilon(1e-9));

  // Opposite rescaling leaves the strengths alone.
  const LearnedModes scaled = extract_modes(table_feature(3.0 * f), table_feature(g / 3.0), d.x, d.y);
  CHECK(scaled.sigmas[0] == doctest::Approx(0.6).epsilon(1e-12));

  // Unit-moment features come back unchanged up to sign.
  const LearnedModes unit = extract_modes(table_feature(g), table_feature(g), d.x, d.y);
  CHECK((unit.left(symbols(2)).cwiseAbs() - g.cwiseAbs()).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(extract_modes(table_feature(Eigen::MatrixXd::Zero(2, 1)), table_feature(g), d.x, d.y),
                  DegenerateFeature);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const PairData d = pairs_from(sample_table(gen_discrete_joint({4, 3}, 1), 2000, 2));
  auto run = [&] {
    return train_modal(d, 2, config(3, 64, 5), std::make_shared<OneHotLinear>(4, 2, 7),
                       std::make_shared<OneHotLinear>(3, 2, 8));
  };
  const LearnedModes a = run(), b = run();
  CHECK(a.log.epoch_objective == b.log.epoch_objective);
  CHECK(a.f_raw->evaluate(symbols(4)) == b.f_raw->evaluate(symbols(4)));
}

TEST_CASE("non-finite objectives abort training") {
  auto f = std::make_shared<OneHotLinear>(3, 1, 1);
  const TrainConfig cfg = config(2, 4, 1);
  CHECK_THROWS_AS(run_training({f}, {}, {16}, cfg,
                               [&](ad::Tape& t, const std::vector<std::vector<std::size_t>>&) {
                                 return t.constant(Eigen::MatrixXd::Constant(1, 1, std::numeric_limits<double>::quiet_NaN()));
                               }),
                  TrainingDiverged);
}

TEST_CASE("tabular modal training recovers the empirical modes") {
  const ProbTable p = gen_discrete_joint({5, 4}, 4);
  const PairData d = pairs_from(sample_table(p, 20000, 5));
  std::vector<Index> s(20000);
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] = {static_cast<std::size_t>(d.x(static_cast<Eigen::Index>(i), 0)), static_cast<std::size_t>(d.y(static_cast<Eigen::Index>(i), 0))};
  const ProbTable ph = empirical_distribution(s, {5, 4});
  const ModalDecomposition oracle = modal_decompose(ph, 3);
  const LearnedModes m = train_modal(d, 3, config(400, 1000, 6, 1e-2), std::make_shared<OneHotLinear>(5, 3, 9),
                                     std::make_shared<OneHotLinear>(4, 3, 10));

  const Eigen::MatrixXd f = m.left(symbols(5)), g = m.right(symbols(4));
  const Eigen::VectorXd px = ph.marginal({0}).mass(), py = ph.marginal({1}).mass();
  // Distinct learned modes are uncorrelated.
  const Eigen::MatrixXd gram = f.transpose() * px.asDiagonal() * f;
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 3; ++j)
      if (i != j) CHECK(std::abs(gram(i, j)) <= 0.02);

  // Every prefix reconstructs the matching truncation of the kernel.
  const MetricDistribution r(ph.marginal({0}).product(ph.marginal({1})));
  for (std::size_t dd = 1; dd <= 3; ++dd) {
    Eigen::MatrixXd approx = Eigen::MatrixXd::Zero(5, 4);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(dd); ++i) approx += m.sigmas[i] * f.col(i) * g.col(i).transpose();
    Eigen::MatrixXd flat = approx.transpose();
    const JointFunction learned({5, 4}, Eigen::Map<Eigen::VectorXd>(flat.data(), flat.size()));
    const JointFunction target = oracle.reconstruct(dd);
    CHECK(squared_norm(learned - target, r) / squared_norm(target, r) <= 0.02);
  }

  // Epoch means do not drift down over the second half.
  const auto& h = m.log.epoch_objective;
  for (std::size_t e = h.size() / 2 + 1; e < h.size(); ++e) CHECK(h[e] >= h[e - 1] - 0.01);
}

TEST_CASE("independent data has weak learned modes") {
  const ProbTable p = gen_discrete_joint({6}, 11).product(gen_discrete_joint({5}, 12));
  const PairData d = pairs_from(sample_table(p, 30000, 13));
  const LearnedModes m = train_modal(d, 3, config(20, 128, 14), std::make_shared<OneHotLinear>(6, 3, 15),
                                     std::make_shared<OneHotLinear>(5, 3, 16));
  CHECK(m.sigmas.maxCoeff() <= 0.05);
}

TEST_CASE("fixing the top mode leaves a residual with nothing to learn") {
  // Rank-one table: the frozen feature spans the whole dependence.
  const ProbTable base = gen_discrete_joint({4}, 17).product(gen_discrete_joint({3}, 18));
  Eigen::VectorXd w = base.mass();
  for (std::size_t c = 0; c < 12; ++c) {
    const Index id = unravel(c, {4, 3});
    w[static_cast<Eigen::Index>(c)] *= 1.0 + 0.6 * (id[0] < 2 ? 1.0 : -1.0) * (id[1] == 0 ? 1.0 : -0.5);
  }
  const ProbTable p = ProbTable::normalized({4, 3}, w);
  const ModalDecomposition exact = modal_decompose(p, 2);
  REQUIRE(exact.sigmas[1] < 1e-3);
  const PairData d = pairs_from(sample_table(p, 20000, 19));
  const LearnedModes m =
      train_orthogonal(d, table_feature(exact.left.leftCols(1)), 1, 1, config(30, 128, 20, 3e-3),
                       std::make_shared<OneHotLinear>(3, 1, 21), std::make_shared<OneHotLinear>(4, 1, 22),
                       std::make_shared<OneHotLinear>(3, 1, 23));
  CHECK(m.sigmas[0] <= 0.05);
}

TEST_CASE("side information training") {
  SUBCASE("no dependence at all") {
    const ProbTable p = gen_discrete_joint({5}, 24).product(gen_discrete_joint({3}, 25)).product(gen_discrete_joint({3}, 26));
    TripleData d;
    const auto s = sample_table(p, 30000, 27);
    d.x.resize(30000, 1);
    d.s.resize(30000, 1);
    d.y.resize(30000, 1);
    for (std::size_t i = 0; i < s.size(); ++i) {
      d.x(static_cast<Eigen::Index>(i), 0) = static_cast<double>(s[i][0]);
      d.s(static_cast<Eigen::Index>(i), 0) = static_cast<double>(s[i][1]);
      d.y(static_cast<Eigen::Index>(i), 0) = static_cast<double>(s[i][2]);
    }
    const auto [markov, cond] = train_side_info(d, 5, 3, 3, 2, 1, config(20, 256, 28));
    CHECK(markov.sigmas.maxCoeff() <= 0.05);
    CHECK(cond.sigmas.maxCoeff() <= 0.05);

    // Conditional-independence statistic stays small and nonnegative.
    const SpectrumReport rep = dependence_report(
        {{"conditional", evaluate_batched(*cond.f_raw, d.x), evaluate_batched(*cond.g_raw, d.s * 3.0 + d.y)}});
    REQUIRE(rep.ci_statistic.has_value());
    CHECK(*rep.ci_statistic >= 0.0);
    CHECK(*rep.ci_statistic <= 0.01);
  }
}

TEST_CASE("conditional expectation regression") {
  SUBCASE("constant target") {
    Eigen::MatrixXd in = Eigen::VectorXd::LinSpaced(400, -1.0, 1.0), target = Eigen::MatrixXd::Constant(400, 1, 0.7);
    auto reg = make_mlp(1, 1, 29, 8);
    train_conditional_expectation(in, target, config(100, 64, 30, 1e-2), reg);
    CHECK((reg->evaluate(in).array() - 0.7).abs().maxCoeff() < 0.02);
  }
  SUBCASE("tabular regressor matches the conditional mean table") {
    const ProbTable p = gen_discrete_joint({4, 3}, 31);
    const auto s = sample_table(p, 8000, 32);
    Eigen::VectorXd phi(3);
    phi << 1.0, -2.0, 0.5;
    Eigen::MatrixXd in(8000, 1), target(8000, 1);
    Eigen::VectorXd sums = Eigen::VectorXd::Zero(4), counts = Eigen::VectorXd::Zero(4);
    for (std::size_t i = 0; i < s.size(); ++i) {
      in(static_cast<Eigen::Index>(i), 0) = static_cast<double>(s[i][0]);
      target(static_cast<Eigen::Index>(i), 0) = phi[static_cast<Eigen::Index>(s[i][1])];
      sums[static_cast<Eigen::Index>(s[i][0])] += target(static_cast<Eigen::Index>(i), 0);
      counts[static_cast<Eigen::Index>(s[i][0])] += 1.0;
    }
    auto reg = std::make_shared<OneHotLinear>(4, 1, 33);
    train_conditional_expectation(in, target, config(400, 1000, 34, 1e-2), reg);
    const Eigen::VectorXd counted = sums.cwiseQuotient(counts);
    CHECK((reg->evaluate(symbols(4)).col(0) - counted).cwiseAbs().maxCoeff() < 0.02);
  }
}

TEST_CASE("heterogeneous training needs conditional expectation operators") {
  const ProbTable p = gen_discrete_joint({2, 2, 2}, 35);
  HeterogeneousTables ht{p.as_matrix(2), p.marginal({0, 2}).as_matrix(1), p.marginal({1, 2}).as_matrix(1),
                         p.marginal({0, 1}).mass(), p.marginal({2}).mass(), {0.5, 0.25, 0.25}};
  CHECK_THROWS_AS(train_multimodal_heterogeneous(ht, 2, 2, 1, 0, std::nullopt, std::nullopt, config(2, 2, 36)),
                  MissingOperator);
}
