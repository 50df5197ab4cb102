#include "featgeo/verify.hpp"

#include <algorithm>
#include <cmath>

#include "featgeo/generators.hpp"
#include "featgeo/layers.hpp"
#include "featgeo/objectives.hpp"
#include "featgeo/oracle.hpp"

namespace featgeo {

namespace {

double eval(const std::function<ad::Var(ad::Tape&)>& fn) {
  ad::Tape t;
  return fn(t).scalar();
}

Shape random_shape(Rng& rng, std::size_t rank, std::size_t lo, std::size_t hi) {
  Shape s(rank);
  for (auto& v : s) v = lo + static_cast<std::size_t>(rng.uniform() * static_cast<double>(hi - lo + 1));
  return s;
}

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

JointFunction random_function(Rng& rng, const Shape& shape) {
  return JointFunction(shape, random_matrix(rng, static_cast<Eigen::Index>(cell_count(shape)), 1).col(0));
}

double max_abs(const JointFunction& a) { return a.values().cwiseAbs().maxCoeff(); }

struct Tally {
  MetricResult result;
  void see(double v) { result.value = std::max(result.value, v); }
};

// The H-score moment form against 1/2 (|Xi|^2 - |Xi - f (x) g|^2) on tabular features.
double hscore_forms_gap(Rng& rng) {
  const Shape shape = random_shape(rng, 2, 2, 6);
  const ProbTable p = gen_discrete_joint(shape, static_cast<std::uint32_t>(rng.uniform() * 4e9));
  const Eigen::Index nx = static_cast<Eigen::Index>(shape[0]), ny = static_cast<Eigen::Index>(shape[1]);
  const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng.uniform() * 3.0);
  const Eigen::MatrixXd f = random_matrix(rng, nx, k), g = random_matrix(rng, ny, k);
  const Eigen::VectorXd px = p.marginal({0}).mass(), py = p.marginal({1}).mass();
  ad::Tape t;
  const double moments = h_score_under(t.constant(f), t.constant(g), p.as_matrix(1), px, py).scalar();
  const Eigen::MatrixXd xi = cdk(p).as_matrix(1);
  const Eigen::MatrixXd w = px * py.transpose();
  const double direct = 0.5 * ((xi.array().square() * w.array()).sum() -
                               ((xi - f * g.transpose()).array().square() * w.array()).sum());
  return std::abs(moments - direct);
}

}  // namespace

double gradient_check(const std::vector<ad::Parameter*>& params, const std::function<ad::Var(ad::Tape&)>& fn,
                      double step) {
  for (auto* p : params) p->zero_grad();
  {
    ad::Tape t;
    t.backward(fn(t));
  }
  double worst = 0.0;
  for (auto* p : params) {
    Eigen::MatrixXd numeric(p->value.rows(), p->value.cols());
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double keep = p->value.data()[i];
      p->value.data()[i] = keep + step;
      const double up = eval(fn);
      p->value.data()[i] = keep - step;
      const double down = eval(fn);
      p->value.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2.0 * step);
    }
    const double scale = std::max({p->grad.norm(), numeric.norm(), 1e-8});
    worst = std::max(worst, (p->grad - numeric).norm() / scale);
    p->zero_grad();
  }
  return worst;
}

std::vector<MetricResult> run_property_suite(std::uint32_t seed, std::size_t instances) {
  Rng rng(seed);
  Tally hforms{{"hscore_forms_gap", 0.0, 1e-10, true}};
  Tally pyth_mc{{"pythagoras_markov_conditional", 0.0, 1e-10, true}};
  Tally pyth_bi{{"pythagoras_bivariate_interaction", 0.0, 1e-10, true}};
  Tally sum_gap{{"components_sum_to_total", 0.0, 1e-10, true}};
  Tally marg{{"pb_marginal_matching", 0.0, 1e-10, true}};
  Tally idem{{"projection_idempotence", 0.0, 1e-10, true}};
  Tally modal{{"modal_reconstruction", 0.0, 1e-10, true}};

  for (std::size_t it = 0; it < instances; ++it) {
    hforms.see(hscore_forms_gap(rng));

    const Shape s3 = random_shape(rng, 3, 2, 4);
    const ProbTable p = gen_discrete_joint(s3, static_cast<std::uint32_t>(rng.uniform() * 4e9));

    const DependenceSplit mc = markov_conditional_split(p);
    const MetricDistribution rmc(mc.metric);
    const double tot = squared_norm(mc.total, rmc);
    pyth_mc.see(std::abs(tot - squared_norm(mc.components.at("markov"), rmc) -
                         squared_norm(mc.components.at("conditional"), rmc)));
    sum_gap.see(max_abs(mc.total - mc.components.at("markov") - mc.components.at("conditional")));

    const DependenceSplit bi = bivariate_interaction_split(p);
    const MetricDistribution rbi(bi.metric);
    pyth_bi.see(std::abs(squared_norm(bi.total, rbi) - squared_norm(bi.components.at("bivariate"), rbi) -
                         squared_norm(bi.components.at("interaction"), rbi)));
    sum_gap.see(max_abs(bi.total - bi.components.at("bivariate") - bi.components.at("interaction")));

    try {
      const ProbTable pb = reconstruct_pb_pi(p).first;
      for (const AxisSet& axes : {AxisSet{0, 1}, AxisSet{0, 2}, AxisSet{1, 2}})
        marg.see((pb.marginal(axes).mass() - p.marginal(axes).mass()).cwiseAbs().maxCoeff());
    } catch (const NotReconstructible&) {
      // Marginal matching only applies when P^B is a valid table.
    }

    const MetricDistribution r(gen_discrete_joint(s3, static_cast<std::uint32_t>(rng.uniform() * 4e9)));
    const JointFunction g = random_function(rng, s3);
    const std::vector<SubspaceSpec> specs{
        Constants{}, FactorFunctions{{0}}, FactorFunctions{{0, 2}}, ZeroMeanGiven{{1}},
        SumOfFactors{{{0, 2}, {1, 2}}},
        SpanOfFeatures{{0}, {random_function(rng, {s3[0]}), random_function(rng, {s3[0]})}}};
    for (const auto& spec : specs) {
      const JointFunction once = project(g, spec, r);
      idem.see(max_abs(project(once, spec, r) - once));
    }

    const ProbTable p2 = gen_discrete_joint(random_shape(rng, 2, 2, 6), static_cast<std::uint32_t>(rng.uniform() * 4e9));
    const std::size_t rank = std::min(p2.shape()[0], p2.shape()[1]) - 1;
    const ModalDecomposition md = modal_decompose(p2, rank);
    modal.see(max_abs(md.reconstruct(rank) - cdk(p2)));
  }

  // Reverse-mode gradients against central differences on every layer and objective.
  Tally grads{{"gradient_relative_error", 0.0, 1e-5, true}};
  {
    const Eigen::MatrixXd x = random_matrix(rng, 7, 2), y = random_matrix(rng, 7, 1);
    auto f = std::make_shared<Mlp>(std::vector<std::size_t>{2, 5, 5, 3}, seed + 1);
    auto g = std::make_shared<Mlp>(std::vector<std::size_t>{1, 4, 3}, seed + 2);
    std::vector<ad::Parameter*> ps = collect_parameters({f, g});
    grads.see(gradient_check(ps, [&](ad::Tape& t) { return h_score(f->forward(t, x), g->forward(t, y)); }));
    grads.see(gradient_check(ps, [&](ad::Tape& t) {
      return nested_h_score(f->forward(t, x), g->forward(t, y), NestingConfig::modes(3));
    }));
    grads.see(gradient_check(ps, [&](ad::Tape& t) {
      return nested_h_score(f->forward(t, x), g->forward(t, y), NestingConfig::two_level(1, 2));
    }));

    Eigen::MatrixXd sym(6, 1), lab(6, 1);
    sym << 0, 1, 2, 3, 1, 2;
    lab << 0, 1, 1, 0, 2, 1;
    auto oh = std::make_shared<OneHotLinear>(4, 2, seed + 3);
    auto oy = std::make_shared<OneHotLinear>(3, 2, seed + 4);
    std::vector<ad::Parameter*> po = collect_parameters({oh, oy});
    grads.see(gradient_check(po, [&](ad::Tape& t) { return h_score(oh->forward(t, sym), oy->forward(t, lab)); }));

    ad::Parameter heads("heads", random_matrix(rng, 6, 2)), bias("bias", random_matrix(rng, 1, 6));
    std::vector<ad::Parameter*> pm = collect_parameters({oh});
    pm.push_back(&heads);
    pm.push_back(&bias);
    const std::vector<Eigen::Index> labels{0, 2, 1, 0, 2, 1}, hs{0, 1, 1, 0, 0, 1};
    grads.see(gradient_check(pm, [&](ad::Tape& t) {
      return softmax_log_likelihood(oh->forward(t, sym), t.parameter(heads), t.parameter(bias), labels, hs, 2);
    }));

    Conv1dEncoder::Shape cs;
    cs.kernels = 3;
    cs.k = 2;
    auto conv = std::make_shared<Conv1dEncoder>(cs, seed + 5);
    Eigen::MatrixXd seqs(3, 7);
    seqs << 0, 1, 1, 0, 1, 0, 0, 1, 1, 1, 0, 0, 1, 0, 0, 0, 1, 1, 1, 1, 0;
    const Eigen::MatrixXd yy = random_matrix(rng, 3, 1);
    auto gy = std::make_shared<Mlp>(std::vector<std::size_t>{1, 3, 2}, seed + 6);
    std::vector<ad::Parameter*> pc = collect_parameters({conv, gy});
    grads.see(gradient_check(pc, [&](ad::Tape& t) { return h_score(conv->forward(t, seqs), gy->forward(t, yy)); }));

    // Pairwise assembly and heterogeneous objective on tabular features.
    auto f1 = std::make_shared<OneHotLinear>(2, 1, seed + 7), f2 = std::make_shared<OneHotLinear>(2, 1, seed + 8);
    auto gl = std::make_shared<OneHotLinear>(2, 1, seed + 9);
    Eigen::MatrixXd a(5, 1), b(5, 1), c(5, 1);
    a << 0, 1, 1, 0, 1;
    b << 1, 1, 0, 0, 1;
    c << 0, 0, 1, 1, 1;
    std::vector<ad::Parameter*> pp = collect_parameters({f1, f2, gl});
    grads.see(gradient_check(pp, [&](ad::Tape& t) {
      return pairwise_h_score(f1->forward(t, a), gl->forward(t, b), f2->forward(t, c), gl->forward(t, a),
                              f1->forward(t, b), f2->forward(t, c));
    }));

    const ProbTable pt = gen_discrete_joint({2, 2, 2}, seed + 10);
    HeterogeneousTables ht{pt.as_matrix(2), pt.marginal({0, 2}).as_matrix(1), pt.marginal({1, 2}).as_matrix(1),
                           pt.marginal({0, 1}).mass(), pt.marginal({2}).mass(), {0.5, 0.3, 0.2}};
    const ProbTable rx = pt.marginal({0, 1});
    const std::optional<Eigen::MatrixXd> t1 = conditional_expectation_matrix(rx, 0), t2 = conditional_expectation_matrix(rx, 1);
    ad::Parameter ft("f", random_matrix(rng, 4, 2)), gt("g", random_matrix(rng, 2, 2));
    grads.see(gradient_check({&ft, &gt}, [&](ad::Tape& t) {
      return hm_score(t.parameter(ft), t.parameter(gt), ht, t1, t2, NestingConfig::two_level(1, 1));
    }));
  }

  return {hforms.result, pyth_mc.result, pyth_bi.result, sum_gap.result, marg.result,
          idem.result, modal.result, grads.result};
}

}  // namespace featgeo
