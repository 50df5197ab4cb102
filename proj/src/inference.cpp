#include "featgeo/inference.hpp"

#include <cmath>
#include <sstream>

namespace featgeo {

namespace {

// Clamp negatives at zero and renormalise each row; record how much mass was removed.
Posterior clamp_rows(Eigen::MatrixXd raw) {
  Posterior p{std::move(raw), Eigen::VectorXd::Zero(0)};
  p.correction = Eigen::VectorXd::Zero(p.probs.rows());
  for (Eigen::Index i = 0; i < p.probs.rows(); ++i) {
    double removed = 0.0;
    for (Eigen::Index y = 0; y < p.probs.cols(); ++y)
      if (p.probs(i, y) < 0.0) {
        removed -= p.probs(i, y);
        p.probs(i, y) = 0.0;
      }
    const double s = p.probs.row(i).sum();
    if (s > 0.0)
      p.probs.row(i) /= s;
    else
      p.probs.row(i).setConstant(1.0 / static_cast<double>(p.probs.cols()));
    p.correction[i] = removed;
  }
  return p;
}

void check_prior(const Eigen::VectorXd& prior) {
  if (prior.size() == 0) throw ShapeError("empty prior");
  for (Eigen::Index i = 0; i < prior.size(); ++i)
    if (!(prior[i] > 0.0)) throw BadDistribution("prior must be strictly positive");
}

double denominator(const Eigen::MatrixXd& fbar_x, Eigen::Index i, const Eigen::MatrixXd& gbar, Eigen::Index s,
                   double delta) {
  const double d = 1.0 + fbar_x.row(i).dot(gbar.row(s));
  if (!(d > delta)) {
    std::ostringstream msg;
    msg << "denominator " << d << " at query " << i << ", s = " << s;
    throw NearSingularDenominator(msg.str());
  }
  return d;
}

}  // namespace

Posterior posterior_bivariate(const Eigen::MatrixXd& fx, const Eigen::MatrixXd& gy, const Eigen::VectorXd& prior) {
  check_prior(prior);
  if (gy.rows() != prior.size() || fx.cols() != gy.cols()) throw ShapeError("feature and prior shapes disagree");
  Eigen::MatrixXd raw = (Eigen::MatrixXd::Ones(fx.rows(), gy.rows()) + fx * gy.transpose()) * prior.asDiagonal();
  return clamp_rows(std::move(raw));
}

std::vector<Eigen::Index> map_predict(const Eigen::MatrixXd& probs) {
  std::vector<Eigen::Index> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index y = 1; y < probs.cols(); ++y)
      if (probs(i, y) > probs(i, best)) best = y;
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

Eigen::MatrixXd cross_moment(const Eigen::MatrixXd& psi, const Eigen::MatrixXd& g) {
  if (psi.rows() != g.rows() || psi.rows() == 0) throw ShapeError("paired samples required");
  return psi.transpose() * g / static_cast<double>(psi.rows());
}

Eigen::MatrixXd mmse_estimate(const Eigen::MatrixXd& fx, const Eigen::MatrixXd& lambda_psi_g,
                              const Eigen::VectorXd& mean_psi) {
  if (lambda_psi_g.cols() != fx.cols() || lambda_psi_g.rows() != mean_psi.size())
    throw ShapeError("readout dimensions do not match the features");
  Eigen::MatrixXd out = fx * lambda_psi_g.transpose();
  out.rowwise() += mean_psi.transpose();
  return out;
}

SpanCheck psi_span_check(const Eigen::MatrixXd& psi, const Eigen::MatrixXd& g) {
  if (psi.rows() != g.rows()) throw ShapeError("paired samples required");
  Eigen::MatrixXd basis(g.rows(), g.cols() + 1);
  basis << Eigen::VectorXd::Ones(g.rows()), g;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(basis, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-10);
  SpanCheck out{Eigen::VectorXd::Zero(psi.cols()), {}};
  for (Eigen::Index j = 0; j < psi.cols(); ++j) {
    const Eigen::VectorXd fit = basis * svd.solve(psi.col(j));
    const double energy = psi.col(j).squaredNorm();
    out.residual[j] = energy > 0.0 ? (psi.col(j) - fit).squaredNorm() / energy : 0.0;
    if (out.residual[j] > 0.1)
      out.warnings.push_back("psi column " + std::to_string(j) + " has " +
                             std::to_string(100.0 * out.residual[j]) + "% of its energy outside the learned span");
  }
  return out;
}

Posterior posterior_conditioned(const Eigen::MatrixXd& fbar_x, const Eigen::MatrixXd& f_x,
                                const std::vector<Eigen::Index>& s, const SideInfoTables& t, double delta) {
  const Eigen::Index ns = t.prior_given_s.rows(), ny = t.prior_given_s.cols();
  if (fbar_x.rows() != f_x.rows() || static_cast<Eigen::Index>(s.size()) != f_x.rows())
    throw ShapeError("one side value per query");
  if (t.gbar.rows() != ns || t.g.rows() != ns * ny || t.gbar.cols() != fbar_x.cols() || t.g.cols() != f_x.cols())
    throw ShapeError("side-information tables disagree with the features");
  Eigen::MatrixXd raw(f_x.rows(), ny);
  for (Eigen::Index i = 0; i < f_x.rows(); ++i) {
    const Eigen::Index si = s[static_cast<std::size_t>(i)];
    if (si < 0 || si >= ns) throw BadSample("side value out of range");
    const double d = denominator(fbar_x, i, t.gbar, si, delta);
    for (Eigen::Index y = 0; y < ny; ++y)
      raw(i, y) = t.prior_given_s(si, y) * (1.0 + f_x.row(i).dot(t.g.row(si * ny + y)) / d);
  }
  return clamp_rows(std::move(raw));
}

ConditionedReadout fit_conditioned_readout(const std::vector<Eigen::Index>& s, const Eigen::MatrixXd& psi,
                                           const Eigen::MatrixXd& g_sy, std::size_t n_s) {
  if (static_cast<Eigen::Index>(s.size()) != psi.rows() || psi.rows() != g_sy.rows())
    throw ShapeError("paired samples required");
  const auto ns = static_cast<Eigen::Index>(n_s);
  ConditionedReadout r;
  r.lambda.assign(n_s, Eigen::MatrixXd::Zero(psi.cols(), g_sy.cols()));
  r.mean_psi = Eigen::MatrixXd::Zero(ns, psi.cols());
  std::vector<double> count(n_s, 0.0);
  for (Eigen::Index i = 0; i < psi.rows(); ++i) {
    const Eigen::Index si = s[static_cast<std::size_t>(i)];
    if (si < 0 || si >= ns) throw BadSample("side value out of range");
    r.lambda[static_cast<std::size_t>(si)] += psi.row(i).transpose() * g_sy.row(i);
    r.mean_psi.row(si) += psi.row(i);
    count[static_cast<std::size_t>(si)] += 1.0;
  }
  for (Eigen::Index si = 0; si < ns; ++si) {
    const double c = count[static_cast<std::size_t>(si)];
    if (c < 10.0) r.warnings.push_back("s = " + std::to_string(si) + " has only " + std::to_string(static_cast<long>(c)) + " samples");
    if (c > 0.0) {
      r.lambda[static_cast<std::size_t>(si)] /= c;
      r.mean_psi.row(si) /= c;
    }
  }
  return r;
}

Eigen::MatrixXd mmse_conditioned(const Eigen::MatrixXd& fbar_x, const Eigen::MatrixXd& f_x,
                                 const std::vector<Eigen::Index>& s, const Eigen::MatrixXd& gbar,
                                 const ConditionedReadout& r, double delta) {
  if (static_cast<Eigen::Index>(s.size()) != f_x.rows() || fbar_x.rows() != f_x.rows())
    throw ShapeError("one side value per query");
  Eigen::MatrixXd out(f_x.rows(), r.mean_psi.cols());
  for (Eigen::Index i = 0; i < f_x.rows(); ++i) {
    const Eigen::Index si = s[static_cast<std::size_t>(i)];
    if (si < 0 || si >= r.mean_psi.rows()) throw BadSample("side value out of range");
    const double d = denominator(fbar_x, i, gbar, si, delta);
    out.row(i) = r.mean_psi.row(si) + (r.lambda[static_cast<std::size_t>(si)] * f_x.row(i).transpose()).transpose() / d;
  }
  return out;
}

Posterior posterior_multimodal(const MultimodalQuery& q, Modality mode, const Eigen::VectorXd& prior) {
  check_prior(prior);
  Eigen::MatrixXd fbar;
  switch (mode) {
    case Modality::Both:
      fbar = q.fbar1 + q.fbar2;
      break;
    case Modality::OnlyX1:
      if (!q.tau1) throw MissingOperator("conditional expectation given X1 is required");
      fbar = q.fbar1 + *q.tau1;
      break;
    case Modality::OnlyX2:
      if (!q.tau2) throw MissingOperator("conditional expectation given X2 is required");
      fbar = q.fbar2 + *q.tau2;
      break;
  }
  if (q.gbar.rows() != prior.size() || q.gbar.cols() != fbar.cols()) throw ShapeError("label features shape");
  Eigen::MatrixXd score = fbar * q.gbar.transpose();
  if (mode == Modality::Both && q.f && q.g) {
    if (q.g->rows() != prior.size() || q.g->cols() != q.f->cols() || q.f->rows() != fbar.rows())
      throw ShapeError("interaction features shape");
    score += *q.f * q.g->transpose();
  }
  score.array() += 1.0;
  return clamp_rows(score * prior.asDiagonal());
}

SpectrumReport dependence_report(const std::vector<ComponentFeatures>& components, std::optional<double> total) {
  SpectrumReport r;
  double parts = 0.0;
  for (const auto& c : components) {
    if (c.f.rows() != c.g.rows() || c.f.cols() != c.g.cols()) throw ShapeError("component " + c.name + " shape");
    if (c.f.rows() == 0) throw EmptyData("component " + c.name + " has no samples");
    const double n = static_cast<double>(c.f.rows());
    const Eigen::MatrixXd lf = c.f.transpose() * c.f / n;
    const Eigen::MatrixXd lg = c.g.transpose() * c.g / n;
    r.energies[c.name] = (lf.diagonal().array() * lg.diagonal().array()).matrix();
    const double norm = (lf * lg).trace();
    r.norms[c.name] = norm;
    parts += norm;
    if (c.name == "conditional") r.ci_statistic = norm;
  }
  if (total) r.pythagoras_gap = std::abs(*total - parts);
  return r;
}

bool is_symmetric_psd(const Eigen::MatrixXd& m, double tol) {
  if (m.rows() != m.cols()) return false;
  if (m.size() == 0) return true;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol;
}

}  // namespace featgeo
