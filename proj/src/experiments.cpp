#include "featgeo/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "featgeo/closed_form.hpp"
#include "featgeo/generators.hpp"
#include "featgeo/inference.hpp"
#include "featgeo/oracle.hpp"
#include "featgeo/serialize.hpp"
#include "featgeo/trainers.hpp"

namespace featgeo {

namespace {

constexpr double kPi = std::numbers::pi;

struct Context {
  std::uint32_t seed;
  TrainConfig cfg;
  std::size_t grid;
  std::optional<std::size_t> samples;
  ExperimentResult* out;

  std::size_t n(std::size_t preset_default) const { return samples.value_or(preset_default); }

  void metric(std::string name, double value, double threshold, bool upper) {
    out->metrics.push_back({std::move(name), value, threshold, upper});
  }
  void artifact(const std::string& name, std::vector<std::string> header, Eigen::MatrixXd data) {
    out->artifacts[name] = Artifact{std::move(header), std::move(data)};
  }
  void history(const TrainLog& log, const std::string& name = "history") {
    Eigen::MatrixXd h(static_cast<Eigen::Index>(log.epoch_objective.size()), 2);
    for (std::size_t i = 0; i < log.epoch_objective.size(); ++i)
      h.row(static_cast<Eigen::Index>(i)) << static_cast<double>(i + 1), log.epoch_objective[i];
    artifact(name, {"epoch", "objective"}, std::move(h));
  }
};

Eigen::MatrixXd hcat(std::initializer_list<Eigen::MatrixXd> parts) {
  Eigen::Index rows = parts.begin()->rows(), cols = 0;
  for (const auto& p : parts) cols += p.cols();
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p;
    at += p.cols();
  }
  return out;
}

Eigen::MatrixXd index_column(std::size_t n) {
  Eigen::MatrixXd c(static_cast<Eigen::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) c(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
  return c;
}

std::vector<std::string> numbered(const std::string& stem, std::size_t k) {
  std::vector<std::string> v;
  for (std::size_t i = 1; i <= k; ++i) v.push_back(stem + std::to_string(i));
  return v;
}

std::vector<std::string> join(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Rows of a cell-indexed table looked up at sample indices.
Eigen::MatrixXd lookup(const Eigen::MatrixXd& table, const Eigen::MatrixXd& idx) {
  Eigen::MatrixXd out(idx.rows(), table.cols());
  for (Eigen::Index i = 0; i < idx.rows(); ++i) out.row(i) = table.row(static_cast<Eigen::Index>(idx(i, 0)));
  return out;
}

// ---------------------------------------------------------------------------

void discrete_modal(Context& c) {
  const Shape shape{8, 6};
  const std::size_t k = 3;
  const ProbTable p = gen_discrete_joint(shape, c.seed);
  const std::vector<Index> samples = sample_table(p, c.n(30000), c.seed + 1);
  const ProbTable phat = empirical_distribution(samples, shape);
  const ModalDecomposition oracle = modal_decompose(phat, k);

  PairData data{Eigen::MatrixXd(static_cast<Eigen::Index>(samples.size()), 1),
                Eigen::MatrixXd(static_cast<Eigen::Index>(samples.size()), 1)};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    data.x(static_cast<Eigen::Index>(i), 0) = static_cast<double>(samples[i][0]);
    data.y(static_cast<Eigen::Index>(i), 0) = static_cast<double>(samples[i][1]);
  }
  LearnedModes m = train_modal(data, k, c.cfg, std::make_shared<OneHotLinear>(8, k, c.seed + 2, "f"),
                               std::make_shared<OneHotLinear>(6, k, c.seed + 3, "g"));
  m.align_signs(data.x, lookup(oracle.left, data.x));

  const Eigen::MatrixXd xs = index_column(8), ys = index_column(6);
  const Eigen::MatrixXd fl = m.left(xs), gl = m.right(ys);
  const Eigen::MatrixXd fs = lookup(fl, data.x), gs = lookup(gl, data.y);
  const Eigen::MatrixXd fo = lookup(oracle.left, data.x), go = lookup(oracle.right, data.y);
  for (std::size_t i = 0; i < k; ++i)
    c.metric("sigma" + std::to_string(i + 1) + "_error", std::abs(m.sigmas[static_cast<Eigen::Index>(i)] - oracle.sigmas[static_cast<Eigen::Index>(i)]), 0.05, true);
  for (std::size_t i = 0; i < k; ++i)
    c.metric("corr_f" + std::to_string(i + 1), metric_aligned_correlation(fs.col(static_cast<Eigen::Index>(i)), fo.col(static_cast<Eigen::Index>(i))), 0.99, false);
  for (std::size_t i = 0; i < k; ++i)
    c.metric("corr_g" + std::to_string(i + 1), metric_aligned_correlation(gs.col(static_cast<Eigen::Index>(i)), go.col(static_cast<Eigen::Index>(i))), 0.99, false);

  Eigen::MatrixXd spectrum(static_cast<Eigen::Index>(k), 3);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(k); ++i) spectrum.row(i) << static_cast<double>(i + 1), m.sigmas[i], oracle.sigmas[i];
  c.artifact("spectrum", {"mode", "sigma_learned", "sigma_oracle"}, spectrum);
  c.artifact("features_x", join(join({"x", "weight"}, numbered("f", k)), numbered("f_oracle", k)),
             hcat({xs, phat.marginal({0}).mass(), fl, oracle.left}));
  c.artifact("features_y", join(join({"y", "weight"}, numbered("g", k)), numbered("g_oracle", k)),
             hcat({ys, phat.marginal({1}).mass(), gl, oracle.right}));
  Eigen::MatrixXd table(static_cast<Eigen::Index>(cell_count(shape)), 3);
  for (std::size_t cell = 0; cell < cell_count(shape); ++cell) {
    const Index id = unravel(cell, shape);
    table.row(static_cast<Eigen::Index>(cell)) << static_cast<double>(id[0]), static_cast<double>(id[1]), phat.mass()[static_cast<Eigen::Index>(cell)];
  }
  c.artifact("empirical_table", {"x", "y", "p"}, table);
  c.history(m.log);
}

struct CosineRun {
  ContinuousPairs data;
  LearnedModes modes;
};

CosineRun train_cosine(Context& c) {
  CosineRun r{gen_raised_cosine(c.n(50000), c.seed), {}};
  r.modes = train_modal(PairData{r.data.x, r.data.y}, 2, c.cfg, make_mlp(1, 2, c.seed + 2, 32, "f"),
                        make_mlp(1, 2, c.seed + 3, 32, "g"));
  c.out->notes["acceptance_rate"] = r.data.acceptance;
  c.history(r.modes.log);
  return r;
}

void cosine_estimator_metrics(Context& c, const CosineRun& r) {
  const Eigen::VectorXd xg = grid_1d(c.grid);
  const Eigen::MatrixXd y = r.data.y;
  Eigen::MatrixXd psi(y.rows(), 3);
  psi << y, y.array().square().matrix(), y.array().exp().matrix();
  const Eigen::MatrixXd g_raw = evaluate_batched(*r.modes.g_raw, y);
  const SpanCheck span = psi_span_check(psi, g_raw);
  for (const auto& w : span.warnings) c.out->notes["warnings"].push_back(w);
  const Eigen::MatrixXd est = mmse_estimate(evaluate_batched(*r.modes.f_raw, xg), cross_moment(psi, g_raw),
                                            psi.colwise().mean().transpose());
  const Eigen::MatrixXd truth = closed_form_oracle("cosine_estimators", xg);
  const char* names[3] = {"y", "y2", "exp_y"};
  for (Eigen::Index j = 0; j < 3; ++j)
    c.metric(std::string("rmse_estimator_") + names[j], rmse(est.col(j), truth.col(j)), 0.05, true);
  c.artifact("estimators", {"x", "est_y", "est_y2", "est_exp_y", "oracle_y", "oracle_y2", "oracle_exp_y"},
             hcat({xg, est, truth}));
}

void cosine_modal(Context& c) {
  const CosineRun r = train_cosine(c);
  const Eigen::VectorXd xg = grid_1d(c.grid);
  const Eigen::MatrixXd fl = r.modes.left(xg);
  for (Eigen::Index i = 0; i < 2; ++i) {
    c.metric("sigma" + std::to_string(i + 1) + "_low", r.modes.sigmas[i], 0.45, false);
    c.metric("sigma" + std::to_string(i + 1) + "_high", r.modes.sigmas[i], 0.55, true);
  }
  Eigen::MatrixXd span(xg.size(), 2);
  span << (kPi * xg.array()).cos().matrix(), (kPi * xg.array()).sin().matrix();
  c.metric("subspace_residual", metric_subspace_residual(fl, span), 0.05, true);
  c.artifact("features", {"x", "f1", "f2"}, hcat({xg, fl}));
  Eigen::MatrixXd spectrum(2, 3);
  spectrum << 1, r.modes.sigmas[0], 0.5, 2, r.modes.sigmas[1], 0.5;
  c.artifact("spectrum", {"mode", "sigma_learned", "sigma_oracle"}, spectrum);
  cosine_estimator_metrics(c, r);
}

void cosine_estimators(Context& c) {
  const CosineRun r = train_cosine(c);
  cosine_estimator_metrics(c, r);
}

void sequence(Context& c) {
  const double q0 = 0.1, q1 = 0.9;
  Eigen::VectorXd uv(4);
  uv << 0.1, 0.4, 0.2, 0.3;  // (u, v) = (0,0), (0,1), (1,0), (1,1)
  const ProbTable p_uv({2, 2}, uv);
  const SequencePairs train = gen_bms_pairs(c.n(50000), 40, 30, q0, q1, p_uv, c.seed);
  const SequencePairs test = gen_bms_pairs(10000, 40, 30, q0, q1, p_uv, c.seed + 1);
  Conv1dEncoder::Shape shape;
  const LearnedModes m =
      train_modal(PairData{train.x.cast<double>(), train.y.cast<double>()}, 1, c.cfg,
                  std::make_shared<Conv1dEncoder>(shape, c.seed + 2, "f"), std::make_shared<Conv1dEncoder>(shape, c.seed + 3, "g"));
  const Eigen::MatrixXd tx = test.x.cast<double>(), ty = test.y.cast<double>();
  const Eigen::MatrixXd f = m.left(tx), g = m.right(ty);
  const double pu1 = p_uv.marginal({0}).mass()[1], pv1 = p_uv.marginal({1}).mass()[1];
  const Eigen::MatrixXd fo = closed_form_oracle("bms_features", tx, {{"q0", q0}, {"q1", q1}, {"p_one", pu1}});
  const Eigen::MatrixXd go = closed_form_oracle("bms_features", ty, {{"q0", q0}, {"q1", q1}, {"p_one", pv1}});
  // Strictly greater than 0.99 is required; the tiny offset turns ">=" into ">".
  c.metric("corr_f", metric_aligned_correlation(f.col(0), fo.col(0)), 0.99 + 1e-12, false);
  c.metric("corr_g", metric_aligned_correlation(g.col(0), go.col(0)), 0.99 + 1e-12, false);
  Eigen::MatrixXd phi(tx.rows(), 2);
  for (Eigen::Index i = 0; i < tx.rows(); ++i) phi.row(i) << bms_statistic(tx.row(i)), bms_statistic(ty.row(i));
  c.artifact("test_features", {"phi_x", "phi_y", "u", "v", "f", "g", "f_oracle", "g_oracle"},
             hcat({phi, test.u.cast<double>(), test.v.cast<double>(), f, g, fo, go}));
  c.out->notes["sigma"] = m.sigmas[0];
  c.history(m.log);
}

void orthogonal(Context& c) {
  const ContinuousPairs data = gen_raised_cosine(c.n(50000), c.seed);
  const Eigen::VectorXd xg = grid_1d(c.grid);
  struct Case {
    const char* name;
    FrozenFeature::Fn phi;
    Eigen::VectorXd optimum;
  };
  const std::vector<Case> cases{
      {"phi_x", [](const Eigen::MatrixXd& x) { return Eigen::MatrixXd(x.col(0)); },
       (std::sqrt(2.0) * (kPi * xg.array()).cos()).matrix()},
      {"phi_x2", [](const Eigen::MatrixXd& x) { return Eigen::MatrixXd(x.col(0).array().square().matrix()); },
       (std::sqrt(2.0) * (kPi * xg.array()).sin()).matrix()}};
  std::uint32_t offset = 2;
  Eigen::MatrixXd curves(xg.size(), 1 + 2 * static_cast<Eigen::Index>(cases.size()));
  curves.col(0) = xg;
  std::vector<std::string> header{"x"};
  Eigen::Index col = 1;
  for (const auto& cs : cases) {
    auto phi = std::make_shared<FrozenFeature>(cs.phi, 1, cs.name);
    LearnedModes m = train_orthogonal(PairData{data.x, data.y}, phi, 1, 1, c.cfg,
                                      make_mlp(1, 1, c.seed + offset, 32, "gbar"),
                                      make_mlp(1, 1, c.seed + offset + 1, 32, "f"),
                                      make_mlp(1, 1, c.seed + offset + 2, 32, "g"));
    offset += 3;
    m.align_signs(xg, cs.optimum);
    const Eigen::MatrixXd fl = m.left(xg);
    c.metric(std::string("corr_") + cs.name, metric_aligned_correlation(fl.col(0), cs.optimum), 0.98, false);
    const Eigen::MatrixXd ftrain = m.left(data.x);
    c.metric(std::string("cross_moment_") + cs.name, std::abs(ftrain.col(0).dot(cs.phi(data.x).col(0)) / static_cast<double>(data.x.rows())), 0.05, true);
    curves.col(col++) = fl.col(0);
    curves.col(col++) = cs.optimum;
    header.push_back(std::string("f_") + cs.name);
    header.push_back(std::string("optimum_") + cs.name);
    c.history(m.log, std::string("history_") + cs.name);
  }
  c.artifact("features", header, curves);
}

void side_info(Context& c) {
  const std::size_t nx = 8, ns = 3, ny = 3;
  const ProbTable p = gen_discrete_joint({nx, ns, ny}, c.seed);
  const std::vector<Index> samples = sample_table(p, c.n(50000), c.seed + 1);
  TripleData data;
  const auto n = static_cast<Eigen::Index>(samples.size());
  data.x.resize(n, 1);
  data.s.resize(n, 1);
  data.y.resize(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    data.x(i, 0) = static_cast<double>(samples[static_cast<std::size_t>(i)][0]);
    data.s(i, 0) = static_cast<double>(samples[static_cast<std::size_t>(i)][1]);
    data.y(i, 0) = static_cast<double>(samples[static_cast<std::size_t>(i)][2]);
  }
  const auto [markov, cond] = train_side_info(data, nx, ns, ny, 2, 1, c.cfg);
  TrainConfig mh_cfg = c.cfg;
  mh_cfg.seed = c.cfg.seed + 1;
  const MultiheadModel mh = train_multihead(data, nx, ns, ny, 1, mh_cfg);

  // Compare after centering and scaling under uniform X, and per s under uniform Y.
  const Eigen::MatrixXd xs = index_column(nx);
  const Eigen::MatrixXd f_nested = standardize(evaluate_batched(*cond.f_raw, xs));
  const Eigen::MatrixXd f_head = standardize(evaluate_batched(*mh.f, xs));
  const Eigen::MatrixXd g_raw = evaluate_batched(*cond.g_raw, index_column(ns * ny));
  Eigen::VectorXd g_nested(static_cast<Eigen::Index>(ns * ny)), g_head(static_cast<Eigen::Index>(ns * ny));
  for (std::size_t s = 0; s < ns; ++s) {
    const auto at = static_cast<Eigen::Index>(s * ny), len = static_cast<Eigen::Index>(ny);
    g_nested.segment(at, len) = standardize(g_raw.block(at, 0, len, 1)).col(0);
    g_head.segment(at, len) = standardize(mh.weights.value.block(at, 0, len, 1)).col(0);
  }
  c.metric("corr_f", metric_aligned_correlation(f_nested.col(0), f_head.col(0)), 0.95, false);
  c.metric("corr_g", metric_aligned_correlation(g_nested, g_head), 0.95, false);
  c.artifact("features_x", {"x", "f_nested", "f_multihead"}, hcat({xs, f_nested, f_head}));
  Eigen::MatrixXd sy(static_cast<Eigen::Index>(ns * ny), 2);
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t y = 0; y < ny; ++y) sy.row(static_cast<Eigen::Index>(s * ny + y)) << static_cast<double>(s), static_cast<double>(y);
  c.artifact("features_sy", {"s", "y", "g_nested", "g_multihead"}, hcat({sy, g_nested, g_head}));

  // Learned component strengths next to the exact split of the empirical table.
  const ProbTable phat = empirical_distribution(samples, {nx, ns, ny});
  const DependenceSplit exact = markov_conditional_split(phat);
  const MetricDistribution r(exact.metric);
  const Eigen::MatrixXd sy_idx = data.s * static_cast<double>(ny) + data.y;
  const SpectrumReport rep = dependence_report(
      {{"markov", evaluate_batched(*markov.f_raw, data.x), evaluate_batched(*markov.g_raw, data.s)},
       {"conditional", evaluate_batched(*cond.f_raw, data.x), evaluate_batched(*cond.g_raw, sy_idx)}});
  c.out->notes["learned_norms"] = rep.norms;
  c.out->notes["exact_norms"] = {{"markov", squared_norm(exact.components.at("markov"), r)},
                                 {"conditional", squared_norm(exact.components.at("conditional"), r)},
                                 {"total", squared_norm(exact.total, r)}};
  c.history(cond.log);
}

double rmse_outside(const Eigen::VectorXd& x, const Eigen::VectorXd& a, const Eigen::VectorXd& b, double excl) {
  double acc = 0.0;
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::abs(x[i]) < excl) continue;
    acc += (a[i] - b[i]) * (a[i] - b[i]);
    ++n;
  }
  return std::sqrt(acc / static_cast<double>(n));
}

Eigen::VectorXd pair_density(const Eigen::MatrixXd& pts) {
  return (1.0 + (2.0 * kPi * (pts.col(0) - pts.col(1)).array()).cos()).matrix() / 4.0;
}

Eigen::VectorXd label_prior(const Eigen::MatrixXd& y_index) {
  Eigen::VectorXd prior(2);
  prior[1] = y_index.col(0).mean();
  prior[0] = 1.0 - prior[1];
  return prior;
}

void multimodal_complete(Context& c) {
  const MultimodalSamples s = gen_multimodal(c.n(50000), MultimodalVariant::Interaction, c.seed);
  MultimodalExtractors ext{make_mlp(1, 1, c.seed + 2, 32, "fbar1"), make_mlp(1, 1, c.seed + 3, 32, "fbar2"),
                           make_mlp(2, 1, c.seed + 4, 32, "f"), std::make_shared<OneHotLinear>(2, 1, c.seed + 5, "gbar"),
                           std::make_shared<OneHotLinear>(2, 1, c.seed + 6, "g")};
  const Eigen::MatrixXd yi = s.y_index();
  const MultimodalModes mm = train_multimodal_complete(PairData{s.x, yi}, 1, 1, c.cfg, ext);

  const std::size_t side = std::max<std::size_t>(c.grid / 2, 11);
  const Eigen::MatrixXd g2 = grid_2d(side);
  const Eigen::VectorXd w = pair_density(g2);
  Eigen::MatrixXd fbar_o(g2.rows(), 1), f_o(g2.rows(), 1);
  fbar_o.col(0) = ((kPi * g2.col(0).array()).cos() + (kPi * g2.col(1).array()).cos()).matrix();
  f_o.col(0) = (std::sqrt(2.0) * (kPi * (g2.col(0) + g2.col(1)).array()).cos()).matrix();
  const Eigen::MatrixXd fbar_l = mm.bivariate.left(g2), f_l = mm.interaction.left(g2);
  c.metric("residual_fbar", metric_subspace_residual(fbar_l, fbar_o, w), 0.05, true);
  c.metric("residual_f", metric_subspace_residual(f_l, f_o, w), 0.05, true);

  // Conditional expectations of each unimodal part given the other modality.
  TrainConfig tcfg = c.cfg;
  const Eigen::MatrixXd x1 = s.x.col(0), x2 = s.x.col(1);
  ExtractorPtr tau1 = make_mlp(1, 1, c.seed + 7, 32, "tau1"), tau2 = make_mlp(1, 1, c.seed + 8, 32, "tau2");
  tcfg.seed = c.cfg.seed + 1;
  train_conditional_expectation(x1, evaluate_batched(*mm.fbar2, x2), tcfg, tau1);
  tcfg.seed = c.cfg.seed + 2;
  train_conditional_expectation(x2, evaluate_batched(*mm.fbar1, x1), tcfg, tau2);

  const Eigen::VectorXd xg = grid_1d(c.grid);
  const Eigen::VectorXd prior = label_prior(yi);
  const Eigen::MatrixXd gbar = evaluate_batched(*mm.bivariate.g_raw, index_column(2));
  MultimodalQuery q{evaluate_batched(*mm.fbar1, xg), evaluate_batched(*mm.fbar2, xg), evaluate_batched(*tau1, xg),
                    evaluate_batched(*tau2, xg), std::nullopt, gbar, std::nullopt};
  const Posterior p1 = posterior_multimodal(q, Modality::OnlyX1, prior);
  const Posterior p2 = posterior_multimodal(q, Modality::OnlyX2, prior);
  const Eigen::MatrixXd truth = closed_form_oracle("unimodal_posteriors", xg);
  c.metric("rmse_posterior_x1", rmse_outside(xg, p1.probs.col(1), truth.col(1), 0.15), 0.07, true);
  c.metric("rmse_posterior_x2", rmse_outside(xg, p2.probs.col(1), truth.col(1), 0.15), 0.07, true);
  c.artifact("unimodal_posteriors", {"x", "p1_given_x1", "p1_given_x2", "p1_oracle", "correction_x1", "correction_x2"},
             hcat({xg, p1.probs.col(1), p2.probs.col(1), truth.col(1), p1.correction, p2.correction}));

  MultimodalQuery both{evaluate_batched(*mm.fbar1, g2.col(0)), evaluate_batched(*mm.fbar2, g2.col(1)), std::nullopt,
                       std::nullopt, evaluate_batched(*mm.interaction.f_raw, g2), gbar,
                       evaluate_batched(*mm.interaction.g_raw, index_column(2))};
  const Posterior pj = posterior_multimodal(both, Modality::Both, prior);
  Eigen::VectorXd pj_true(g2.rows());
  for (Eigen::Index i = 0; i < g2.rows(); ++i)
    pj_true[i] = std::clamp(multimodal_conditional(MultimodalVariant::Interaction, g2(i, 0), g2(i, 1)), 0.0, 1.0);
  c.artifact("joint_posterior", {"x1", "x2", "weight", "p1", "p1_oracle", "correction"},
             hcat({g2, w, pj.probs.col(1), pj_true, pj.correction}));
  c.artifact("features", {"x1", "x2", "weight", "fbar", "fbar_oracle", "f", "f_oracle"},
             hcat({g2, w, fbar_l, fbar_o, f_l, f_o}));
  c.out->notes["clamp_frequency"] = s.clamp_frequency;
  c.out->notes["excluded_region"] = "|x_i| < 0.15";
  c.history(mm.bivariate.log);
}

void multimodal_pairwise(Context& c) {
  const MultimodalSamples s = gen_multimodal(c.n(50000), MultimodalVariant::Pairwise, c.seed);
  const PairwiseDatasets d = decompose_triples(s.x, s.y);
  const Eigen::MatrixXd lab1 = ((d.x1y.col(1).array() + 1.0) / 2.0).matrix();
  const Eigen::MatrixXd lab2 = ((d.x2y.col(1).array() + 1.0) / 2.0).matrix();
  MultimodalExtractors ext{make_mlp(1, 1, c.seed + 2, 32, "fbar1"), make_mlp(1, 1, c.seed + 3, 32, "fbar2"), nullptr,
                           std::make_shared<OneHotLinear>(2, 1, c.seed + 4, "gbar"), nullptr};
  const MultimodalModes mm = train_multimodal_pairwise(d.x1x2, PairData{d.x1y.col(0), lab1},
                                                       PairData{d.x2y.col(0), lab2}, 1, c.cfg, ext);
  const std::size_t side = std::max<std::size_t>(c.grid / 2, 11);
  const Eigen::MatrixXd g2 = grid_2d(side);
  Eigen::MatrixXd y2(lab1.rows() + lab2.rows(), 1);
  y2 << lab1, lab2;
  const Eigen::VectorXd prior = label_prior(y2);
  MultimodalQuery q{evaluate_batched(*mm.fbar1, g2.col(0)), evaluate_batched(*mm.fbar2, g2.col(1)), std::nullopt,
                    std::nullopt, std::nullopt, evaluate_batched(*mm.bivariate.g_raw, index_column(2)), std::nullopt};
  const Posterior pj = posterior_multimodal(q, Modality::Both, prior);
  Eigen::VectorXd truth(g2.rows());
  for (Eigen::Index i = 0; i < g2.rows(); ++i) truth[i] = multimodal_conditional(MultimodalVariant::Pairwise, g2(i, 0), g2(i, 1));
  c.metric("rmse_joint_posterior", rmse(pj.probs.col(1), truth), 0.05, true);
  c.artifact("joint_posterior", {"x1", "x2", "p1", "p1_oracle", "correction"}, hcat({g2, pj.probs.col(1), truth, pj.correction}));
  c.out->notes["clamp_frequency"] = s.clamp_frequency;
  c.history(mm.bivariate.log);
}

// Euclidean projection onto the probability simplex.
Eigen::VectorXd simplex_projection(const Eigen::VectorXd& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double acc = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    acc += u[i];
    const double t = (acc - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) theta = t;
  }
  return (v.array() - theta).max(0.0).matrix();
}

// Projected gradient descent on the heterogeneous discrepancy over the simplex.
ProbTable brute_force_p_est(const ProbTable& p0, const ProbTable& p1, const ProbTable& p2,
                            const std::array<double, 3>& eta, const MetricDistribution& r) {
  const Shape& sh = p0.shape();
  const Eigen::VectorXd rw = r.weights();
  const Eigen::VectorXd r1 = r.table().marginal({0, 2}).mass(), r2 = r.table().marginal({1, 2}).mass();
  const double lip = 2.0 * (eta[0] / rw.minCoeff() + eta[1] * static_cast<double>(sh[1]) / r1.minCoeff() +
                            eta[2] * static_cast<double>(sh[0]) / r2.minCoeff());
  const double step = 1.0 / lip;
  Eigen::VectorXd q = rw;
  for (int it = 0; it < 500000; ++it) {
    const ProbTable qt(sh, q);
    const Eigen::VectorXd d1 = (qt.marginal({0, 2}).mass() - p1.mass()).cwiseQuotient(r1);
    const Eigen::VectorXd d2 = (qt.marginal({1, 2}).mass() - p2.mass()).cwiseQuotient(r2);
    Eigen::VectorXd grad = 2.0 * eta[0] * (q - p0.mass()).cwiseQuotient(rw);
    for (std::size_t cell = 0; cell < cell_count(sh); ++cell) {
      const Index id = unravel(cell, sh);
      grad[static_cast<Eigen::Index>(cell)] += 2.0 * eta[1] * d1[static_cast<Eigen::Index>(id[0] * sh[2] + id[2])] +
                                               2.0 * eta[2] * d2[static_cast<Eigen::Index>(id[1] * sh[2] + id[2])];
    }
    const Eigen::VectorXd next = simplex_projection(q - step * grad);
    const double moved = (next - q).cwiseAbs().maxCoeff();
    q = next;
    if (moved < 1e-15) break;
  }
  return ProbTable::normalized(sh, q);
}

ProbTable near_uniform(Rng& rng, const Shape& shape) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(cell_count(shape)));
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(0.8, 1.2);
  return ProbTable::normalized(shape, w);
}

void multimodal_heterogeneous(Context& c) {
  Rng rng(c.seed);
  const std::size_t instances = 20;
  double worst_energy = 0.0, worst_loss = 0.0;
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(instances), 5);
  for (std::size_t inst = 0; inst < instances; ++inst) {
    const ProbTable p0 = near_uniform(rng, {2, 2, 2}), p1 = near_uniform(rng, {2, 2}), p2 = near_uniform(rng, {2, 2});
    std::array<double, 3> eta{rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0)};
    const double tot = eta[0] + eta[1] + eta[2];
    for (auto& e : eta) e /= tot;
    const ProbTable rx = p0.marginal({0, 1});
    Eigen::VectorXd ry = eta[0] * p0.marginal({2}).mass() + eta[1] * p1.marginal({1}).mass() + eta[2] * p2.marginal({1}).mass();
    const ProbTable ryt = ProbTable::normalized({2}, ry);
    const MetricDistribution r(rx.product(ryt));

    const PEstimate est = p_est_oracle(p0, p1, p2, eta, r);
    const ProbTable brute = brute_force_p_est(p0, p1, p2, eta, r);
    const double loss_gap = std::abs(est.loss - heterogeneous_loss(brute, p0, p1, p2, eta, r));

    HeterogeneousTables t{p0.as_matrix(2), p1.as_matrix(1), p2.as_matrix(1), rx.mass(), ryt.mass(), eta};
    TrainConfig cfg = c.cfg;
    cfg.seed = c.cfg.seed + inst;
    const MultimodalModes mm = train_multimodal_heterogeneous(t, 2, 2, 2, 1, conditional_expectation_matrix(rx, 0),
                                                              conditional_expectation_matrix(rx, 1), cfg);
    const Eigen::MatrixXd cells = tabular_cell_inputs(2, 2);
    const Eigen::MatrixXd learned = evaluate_batched(*mm.bivariate.f_raw, cells) *
                                    evaluate_batched(*mm.bivariate.g_raw, index_column(2)).transpose();
    const JointFunction target = split_bivariate(density_ratio(est.table, r), r).components.at("bivariate");
    const Eigen::MatrixXd diff = learned - target.as_matrix(2);
    const double energy = (diff.array().square() * r.table().as_matrix(2).array()).sum();
    worst_energy = std::max(worst_energy, energy);
    worst_loss = std::max(worst_loss, loss_gap);
    rows.row(static_cast<Eigen::Index>(inst)) << static_cast<double>(inst), energy, loss_gap, est.loss,
        est.projected_fallback ? 1.0 : 0.0;
  }
  c.metric("max_energy_error", worst_energy, 1e-4, true);
  c.metric("max_loss_gap", worst_loss, 1e-6, true);
  c.artifact("instances", {"instance", "energy_error", "loss_gap", "loss", "projected_fallback"}, rows);
}

struct PresetInfo {
  void (*run)(Context&);
  std::uint32_t seed;
  std::size_t epochs;
  std::size_t batch;
  double lr;
};

const std::map<std::string, PresetInfo>& presets() {
  static const std::map<std::string, PresetInfo> p{
      {"discrete_modal", {discrete_modal, 4, 100, 128, 1e-3}},
      {"cosine_modal", {cosine_modal, 1, 100, 256, 1e-3}},
      {"cosine_estimators", {cosine_estimators, 1, 100, 256, 1e-3}},
      {"sequence", {sequence, 2, 100, 128, 1e-3}},
      {"orthogonal", {orthogonal, 1, 100, 256, 1e-3}},
      {"side_info", {side_info, 4, 100, 256, 1e-3}},
      {"multimodal_complete", {multimodal_complete, 3, 100, 256, 1e-3}},
      {"multimodal_pairwise", {multimodal_pairwise, 4, 100, 256, 1e-3}},
      // Tabular full-batch ascent: one step per epoch.
      {"multimodal_heterogeneous", {multimodal_heterogeneous, 5, 20000, 2, 1e-3}},
  };
  return p;
}

std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

}  // namespace

Eigen::VectorXd Artifact::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ConfigError("artifact has no column " + name);
  return data.col(it - header.begin());
}

bool ExperimentResult::passed() const {
  return std::all_of(metrics.begin(), metrics.end(), [](const MetricResult& m) { return m.pass(); });
}

nlohmann::json ExperimentResult::manifest() const {
  nlohmann::json j;
  j["preset"] = preset;
  j["seed"] = seed;
  j["passed"] = passed();
  j["seconds"] = seconds;
  j["metrics"] = nlohmann::json::array();
  for (const auto& m : metrics)
    j["metrics"].push_back({{"name", m.name}, {"value", m.value}, {"threshold", m.threshold},
                            {"direction", m.upper ? "<=" : ">="}, {"pass", m.pass()}});
  j["artifacts"] = nlohmann::json::array();
  for (const auto& [name, a] : artifacts) j["artifacts"].push_back(name + ".csv");
  j["notes"] = notes;
  return j;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [k, _] : presets()) v.push_back(k);
    return v;
  }();
  return names;
}

bool is_preset(const std::string& name) { return presets().count(name) > 0; }

std::uint32_t default_seed(const std::string& preset) {
  if (!is_preset(preset)) throw ConfigError("unknown preset: " + preset);
  return presets().at(preset).seed;
}

ExperimentResult run_experiment(const std::string& preset, const ExperimentOptions& opt) {
  if (!is_preset(preset)) throw ConfigError("unknown preset: " + preset);
  const PresetInfo& info = presets().at(preset);
  ExperimentResult result;
  result.preset = preset;
  result.seed = opt.seed.value_or(info.seed);
  Context c{result.seed, TrainConfig{}, opt.grid.value_or(201), opt.samples, &result};
  c.cfg.epochs = opt.epochs.value_or(info.epochs);
  c.cfg.batch_size = opt.batch_size.value_or(info.batch);
  c.cfg.adam.lr = opt.lr.value_or(info.lr);
  c.cfg.seed = static_cast<std::uint64_t>(result.seed) + 1000;
  if (c.grid < 3) throw ConfigError("grid needs at least three points");
  result.notes["config"] = {{"epochs", c.cfg.epochs}, {"batch_size", c.cfg.batch_size}, {"lr", c.cfg.adam.lr}, {"grid", c.grid}};
  const auto start = std::chrono::steady_clock::now();
  info.run(c);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

void write_csv(const std::string& path, const Artifact& a) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  for (std::size_t i = 0; i < a.header.size(); ++i) out << (i ? "," : "") << a.header[i];
  out << "\n";
  for (Eigen::Index r = 0; r < a.data.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.data.cols(); ++c) out << (c ? "," : "") << format_number(a.data(r, c));
    out << "\n";
  }
}

Artifact read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  Artifact a;
  std::string line, cell;
  if (!std::getline(in, line)) throw EmptyData(path + " is empty");
  std::stringstream hs(line);
  while (std::getline(hs, cell, ',')) a.header.push_back(cell);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != a.header.size()) throw ShapeError(path + ": ragged row");
    rows.push_back(std::move(row));
  }
  a.data.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(a.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) a.data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return a;
}

void write_experiment(const ExperimentResult& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, a] : r.artifacts) write_csv((std::filesystem::path(dir) / (name + ".csv")).string(), a);
  std::ofstream out((std::filesystem::path(dir) / "metrics.csv").string());
  out << "name,value,threshold,direction,pass\n";
  for (const auto& x : r.metrics)
    out << x.name << "," << format_number(x.value) << "," << format_number(x.threshold) << ","
        << (x.upper ? "<=" : ">=") << "," << (x.pass() ? 1 : 0) << "\n";
  write_json_file((std::filesystem::path(dir) / "manifest.json").string(), r.manifest());
}

Eigen::VectorXd grid_1d(std::size_t n) {
  if (n < 2) throw ConfigError("grid needs at least two points");
  return Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(n), -1.0, 1.0);
}

Eigen::MatrixXd grid_2d(std::size_t n) {
  const Eigen::VectorXd g = grid_1d(n);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n * n), 2);
  for (Eigen::Index i = 0; i < g.size(); ++i)
    for (Eigen::Index j = 0; j < g.size(); ++j) out.row(i * g.size() + j) << g[i], g[j];
  return out;
}

}  // namespace featgeo
