#include "featgeo/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace featgeo {

namespace {

struct Groups {
  AxisSet left;
  AxisSet right;
};

Groups split_axes(std::size_t rank, std::size_t split) {
  if (split == 0 || split >= rank) throw ShapeError("split must separate two non-empty axis groups");
  Groups g{AxisSet(split), AxisSet(rank - split)};
  std::iota(g.left.begin(), g.left.end(), 0);
  std::iota(g.right.begin(), g.right.end(), split);
  return g;
}

void require_positive(const ProbTable& m, const char* what) {
  if (!m.strictly_positive()) throw DegenerateMarginal(std::string(what) + " marginal has a zero entry");
}

void fix_signs(Eigen::MatrixXd& left, Eigen::MatrixXd& right) {
  for (Eigen::Index i = 0; i < left.cols(); ++i) {
    Eigen::Index at = 0;
    left.col(i).cwiseAbs().maxCoeff(&at);
    if (left(at, i) < 0.0) {
      left.col(i) *= -1.0;
      right.col(i) *= -1.0;
    }
  }
}

ModalDecomposition decompose_matrix(const Eigen::MatrixXd& b, const ProbTable& mx, const ProbTable& my,
                                    std::size_t k) {
  const auto kk = static_cast<Eigen::Index>(k);
  if (k == 0 || kk > std::min(b.rows(), b.cols())) throw RankError("k exceeds the smaller alphabet size");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd sx = mx.mass().array().sqrt();
  const Eigen::VectorXd sy = my.mass().array().sqrt();
  ModalDecomposition d;
  d.sigmas = svd.singularValues().head(kk);
  d.left = sx.cwiseInverse().asDiagonal() * svd.matrixU().leftCols(kk);
  d.right = sy.cwiseInverse().asDiagonal() * svd.matrixV().leftCols(kk);
  fix_signs(d.left, d.right);
  d.metric_x = mx.mass();
  d.metric_y = my.mass();
  d.x_shape = mx.shape();
  d.y_shape = my.shape();
  return d;
}

// Matrix of a subspace projection acting on functions over `shape` under metric m.
Eigen::MatrixXd projection_matrix(const SubspaceSpec& s, const ProbTable& m) {
  const MetricDistribution r(m);
  const auto n = static_cast<Eigen::Index>(cell_count(m.shape()));
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e[j] = 1.0;
    out.col(j) = project(JointFunction(m.shape(), e), s, r).values();
  }
  return out;
}

void check_product_metric(const MetricDistribution& r, std::size_t split) {
  const Groups g = split_axes(r.shape().size(), split);
  const ProbTable prod = r.table().marginal(g.left).product(r.table().marginal(g.right));
  if ((prod.mass() - r.weights()).cwiseAbs().maxCoeff() > 1e-10)
    throw BadDistribution("metric distribution must have product form");
}

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double t = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  return (v.array() - theta).max(0.0);
}

// Pairwise-marginal summation operator from X1 x X2 x Y cells onto the (X_keep, Y) cells.
Eigen::MatrixXd marginal_operator(const Shape& shape, const AxisSet& keep) {
  const std::vector<std::size_t> pos = sub_positions(shape, keep);
  const auto m = static_cast<Eigen::Index>(cell_count(sub_shape(shape, keep)));
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(m, static_cast<Eigen::Index>(pos.size()));
  for (std::size_t c = 0; c < pos.size(); ++c) s(static_cast<Eigen::Index>(pos[c]), static_cast<Eigen::Index>(c)) = 1.0;
  return s;
}

void check_heterogeneous_inputs(const ProbTable& p0, const ProbTable& p1, const ProbTable& p2,
                                const std::array<double, 3>& eta, const MetricDistribution& r) {
  double total = 0.0;
  for (double e : eta) {
    if (!(e >= 0.0) || !std::isfinite(e)) throw BadWeights("weights must be nonnegative");
    total += e;
  }
  if (std::abs(total - 1.0) > 1e-9) throw BadWeights("weights must sum to one");
  if (p0.rank() != 3) throw ShapeError("complete table must have axes (X1, X2, Y)");
  const Shape& s = p0.shape();
  if (p1.shape() != Shape{s[0], s[2]} || p2.shape() != Shape{s[1], s[2]} || r.shape() != s)
    throw ShapeError("pairwise tables or metric do not match the complete table");
  check_product_metric(r, 2);
}

}  // namespace

JointFunction ModalDecomposition::reconstruct(std::size_t d) const {
  d = std::min(d, size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(left.rows(), right.rows());
  for (std::size_t i = 0; i < d; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    m += sigmas[ii] * left.col(ii) * right.col(ii).transpose();
  }
  Shape full = x_shape;
  full.insert(full.end(), y_shape.begin(), y_shape.end());
  Eigen::MatrixXd rowmajor = m.transpose();
  return JointFunction(full, Eigen::Map<Eigen::VectorXd>(rowmajor.data(), rowmajor.size()));
}

Eigen::MatrixXd cdm_matrix(const ProbTable& p, std::size_t split) {
  const Groups g = split_axes(p.rank(), split);
  const ProbTable px = p.marginal(g.left), py = p.marginal(g.right);
  require_positive(px, "left");
  require_positive(py, "right");
  const Eigen::MatrixXd joint = p.as_matrix(split);
  const Eigen::VectorXd sx = px.mass().array().sqrt(), sy = py.mass().array().sqrt();
  Eigen::MatrixXd b = joint - px.mass() * py.mass().transpose();
  return sx.cwiseInverse().asDiagonal() * b * sy.cwiseInverse().asDiagonal();
}

ModalDecomposition modal_decompose(const ProbTable& p, std::size_t k, std::size_t split) {
  const Groups g = split_axes(p.rank(), split);
  const Eigen::MatrixXd b = cdm_matrix(p, split);
  return decompose_matrix(b, p.marginal(g.left), p.marginal(g.right), k);
}

ModalDecomposition decompose_function(const JointFunction& gamma, const ProbTable& metric_x,
                                      const ProbTable& metric_y, std::size_t k) {
  require_positive(metric_x, "left");
  require_positive(metric_y, "right");
  const std::size_t split = metric_x.rank();
  Shape full = metric_x.shape();
  full.insert(full.end(), metric_y.shape().begin(), metric_y.shape().end());
  if (gamma.shape() != full) throw ShapeError("function shape does not match the metric");
  const Eigen::VectorXd sx = metric_x.mass().array().sqrt(), sy = metric_y.mass().array().sqrt();
  const Eigen::MatrixXd b = sx.asDiagonal() * gamma.as_matrix(split) * sy.asDiagonal();
  return decompose_matrix(b, metric_x, metric_y, k);
}

ModalDecomposition constrained_modal_decompose(const ProbTable& p, std::size_t k, const SubspaceSpec& sx,
                                               const SubspaceSpec& sy, std::size_t split) {
  const Groups g = split_axes(p.rank(), split);
  const ProbTable px = p.marginal(g.left), py = p.marginal(g.right);
  const JointFunction xi = cdk(p, split);
  const Eigen::MatrixXd projected = projection_matrix(sx, px) * xi.as_matrix(split) *
                                    projection_matrix(sy, py).transpose();
  Eigen::MatrixXd rowmajor = projected.transpose();
  const JointFunction gamma(p.shape(), Eigen::Map<Eigen::VectorXd>(rowmajor.data(), rowmajor.size()));
  return decompose_function(gamma, px, py, k);
}

DependenceSplit split_markov(const JointFunction& gamma, const MetricDistribution& r) {
  if (gamma.rank() != 3) throw ShapeError("split expects axes (X, S, Y)");
  DependenceSplit out{{}, gamma, r.table()};
  JointFunction markov = project(gamma, FactorFunctions{{0, 1}}, r);
  out.components.emplace("conditional", gamma - markov);
  out.components.emplace("markov", std::move(markov));
  return out;
}

DependenceSplit split_bivariate(const JointFunction& gamma, const MetricDistribution& r) {
  if (gamma.rank() != 3) throw ShapeError("split expects axes (X1, X2, Y)");
  DependenceSplit out{{}, gamma, r.table()};
  JointFunction bivariate = project(gamma, SumOfFactors{{{0, 2}, {1, 2}}}, r);
  out.components.emplace("interaction", gamma - bivariate);
  out.components.emplace("bivariate", std::move(bivariate));
  return out;
}

DependenceSplit markov_conditional_split(const ProbTable& p_xsy) {
  if (p_xsy.rank() != 3) throw ShapeError("expected a table over (X, S, Y)");
  const ProbTable px = p_xsy.marginal({0}), psy = p_xsy.marginal({1, 2});
  require_positive(px, "X");
  require_positive(psy, "(S,Y)");
  const JointFunction total = cdk(p_xsy, 1);
  const JointFunction markov = lift(cdk(p_xsy.marginal({0, 1}), 1), {0, 1}, p_xsy.shape());
  DependenceSplit out{{}, total, px.product(psy)};
  out.components.emplace("markov", markov);
  out.components.emplace("conditional", total - markov);
  return out;
}

DependenceSplit bivariate_interaction_split(const ProbTable& p_x1x2y) {
  if (p_x1x2y.rank() != 3) throw ShapeError("expected a table over (X1, X2, Y)");
  const ProbTable px = p_x1x2y.marginal({0, 1}), py = p_x1x2y.marginal({2});
  require_positive(px, "(X1,X2)");
  require_positive(py, "Y");
  return split_bivariate(cdk(p_x1x2y, 2), MetricDistribution(px.product(py)));
}

std::pair<ProbTable, ProbTable> reconstruct_pb_pi(const ProbTable& p_x1x2y) {
  const DependenceSplit s = bivariate_interaction_split(p_x1x2y);
  const Eigen::VectorXd& w = s.metric.mass();
  auto build = [&](const char* name) {
    const JointFunction& c = s.components.at(name);
    Eigen::Index at = 0;
    const double lowest = c.values().minCoeff(&at);
    if (lowest < -1.0 - 1e-12) {
      std::ostringstream os;
      os << name << " component is " << lowest << " at cell (";
      const Index idx = unravel(static_cast<std::size_t>(at), c.shape());
      for (std::size_t i = 0; i < idx.size(); ++i) os << (i ? "," : "") << idx[i];
      os << ")";
      throw NotReconstructible(os.str());
    }
    Eigen::VectorXd m = (w.array() * (1.0 + c.values().array())).max(0.0);
    return ProbTable::normalized(c.shape(), m);
  };
  return {build("bivariate"), build("interaction")};
}

Eigen::MatrixXd conditional_expectation_matrix(const ProbTable& r_x1x2, std::size_t keep_axis) {
  if (r_x1x2.rank() != 2 || keep_axis > 1) throw ShapeError("expected a table over (X1, X2)");
  const ProbTable keep = r_x1x2.marginal({keep_axis});
  require_positive(keep, "kept");
  const std::vector<std::size_t> pos = sub_positions(r_x1x2.shape(), {keep_axis});
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(keep.mass().size(), static_cast<Eigen::Index>(pos.size()));
  for (std::size_t c = 0; c < pos.size(); ++c) {
    const auto row = static_cast<Eigen::Index>(pos[c]);
    t(row, static_cast<Eigen::Index>(c)) = r_x1x2.mass()[static_cast<Eigen::Index>(c)] / keep.mass()[row];
  }
  return t;
}

double heterogeneous_loss(const ProbTable& q, const ProbTable& p0, const ProbTable& p1, const ProbTable& p2,
                          const std::array<double, 3>& eta, const MetricDistribution& r) {
  check_heterogeneous_inputs(p0, p1, p2, eta, r);
  if (q.shape() != p0.shape()) throw ShapeError("candidate table shape");
  const Eigen::ArrayXd w = r.weights().array();
  const Eigen::ArrayXd w1 = r.table().marginal({0, 2}).mass().array();
  const Eigen::ArrayXd w2 = r.table().marginal({1, 2}).mass().array();
  const Eigen::ArrayXd q1 = q.marginal({0, 2}).mass().array();
  const Eigen::ArrayXd q2 = q.marginal({1, 2}).mass().array();
  return eta[0] * ((p0.mass().array() - q.mass().array()).square() / w).sum() +
         eta[1] * ((p1.mass().array() - q1).square() / w1).sum() +
         eta[2] * ((p2.mass().array() - q2).square() / w2).sum();
}

PEstimate p_est_oracle(const ProbTable& p0, const ProbTable& p1, const ProbTable& p2,
                       const std::array<double, 3>& eta, const MetricDistribution& r) {
  check_heterogeneous_inputs(p0, p1, p2, eta, r);
  const Shape& shape = p0.shape();
  const auto n = static_cast<Eigen::Index>(cell_count(shape));
  const Eigen::VectorXd w = r.weights();
  const Eigen::VectorXd sw = w.array().sqrt();

  // Whitened density-ratio coordinates u = sqrt(r) * (q / r - 1); L is a quadratic in u.
  Eigen::MatrixXd system = eta[0] * Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd rhs = eta[0] * sw.cwiseProduct(density_ratio(p0, r).values());
  const std::array<AxisSet, 2> pairs{AxisSet{0, 2}, AxisSet{1, 2}};
  const std::array<const ProbTable*, 2> data{&p1, &p2};
  for (std::size_t i = 0; i < 2; ++i) {
    const ProbTable rm = r.table().marginal(pairs[i]);
    const std::vector<std::size_t> pos = sub_positions(shape, pairs[i]);
    const JointFunction target = lift(density_ratio(*data[i], MetricDistribution(rm)), pairs[i], shape);
    Eigen::MatrixXd proj = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b)
        if (pos[static_cast<std::size_t>(a)] == pos[static_cast<std::size_t>(b)])
          proj(a, b) = sw[a] * sw[b] / rm.mass()[static_cast<Eigen::Index>(pos[static_cast<std::size_t>(a)])];
    system += eta[i + 1] * proj;
    rhs += eta[i + 1] * sw.cwiseProduct(target.values());
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(system);
  const double cutoff = 1e-10 * eig.eigenvalues().cwiseAbs().maxCoeff();
  Eigen::VectorXd inv = eig.eigenvalues();
  for (Eigen::Index i = 0; i < inv.size(); ++i) inv[i] = std::abs(inv[i]) > cutoff ? 1.0 / inv[i] : 0.0;
  const Eigen::VectorXd u = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose() * rhs;
  Eigen::VectorXd q = w.array() * (1.0 + u.array() / sw.array());

  PEstimate out;
  if (q.minCoeff() >= -1e-14) {
    out.table = ProbTable::normalized(shape, q.cwiseMax(0.0));
    out.loss = heterogeneous_loss(out.table, p0, p1, p2, eta, r);
    return out;
  }

  // Projected gradient on the simplex, L(q) = sum_i eta_i ||A_i q - c_i||^2.
  std::array<Eigen::MatrixXd, 3> a;
  std::array<Eigen::VectorXd, 3> c;
  a[0] = sw.cwiseInverse().asDiagonal();
  c[0] = p0.mass().cwiseQuotient(sw);
  for (std::size_t i = 0; i < 2; ++i) {
    const Eigen::VectorXd rm_sqrt = r.table().marginal(pairs[i]).mass().array().sqrt();
    a[i + 1] = rm_sqrt.cwiseInverse().asDiagonal() * marginal_operator(shape, pairs[i]);
    c[i + 1] = data[i]->mass().cwiseQuotient(rm_sqrt);
  }
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd lin = Eigen::VectorXd::Zero(n);
  for (std::size_t i = 0; i < 3; ++i) {
    hess += eta[i] * a[i].transpose() * a[i];
    lin += eta[i] * a[i].transpose() * c[i];
  }
  const double norm_sq = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(hess).eigenvalues().maxCoeff();
  const double step = 0.1 / norm_sq;
  q = project_to_simplex(q);
  for (int it = 0; it < 100000; ++it) {
    const Eigen::VectorXd grad = 2.0 * (hess * q - lin);
    const Eigen::VectorXd next = project_to_simplex(q - step * grad);
    const double moved = (next - q).norm() / step;
    q = next;
    if (moved < 1e-10) break;
  }
  out.table = ProbTable::normalized(shape, q);
  out.loss = heterogeneous_loss(out.table, p0, p1, p2, eta, r);
  out.projected_fallback = true;
  return out;
}

}  // namespace featgeo
