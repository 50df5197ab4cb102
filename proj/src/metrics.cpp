#include "featgeo/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace featgeo {

namespace {

Eigen::VectorXd weights_or_uniform(const Eigen::VectorXd& w, Eigen::Index n) {
  if (w.size() == 0) return Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  if (w.size() != n) throw ShapeError("one weight per sample");
  return w / w.sum();
}

}  // namespace

double metric_aligned_correlation(const Eigen::VectorXd& learned, const Eigen::VectorXd& oracle) {
  if (learned.size() != oracle.size()) throw ShapeError("correlated vectors must have equal length");
  if (learned.size() < 2) throw TooFewSamples("correlation needs two samples");
  const Eigen::VectorXd a = learned.array() - learned.mean();
  const Eigen::VectorXd b = oracle.array() - oracle.mean();
  const double na = a.norm(), nb = b.norm();
  if (na <= 1e-12 * std::sqrt(static_cast<double>(a.size())) || nb <= 1e-12 * std::sqrt(static_cast<double>(b.size())))
    throw DegenerateFeature("zero-variance input to correlation");
  return std::min(1.0, std::abs(a.dot(b)) / (na * nb));
}

double metric_subspace_residual(const Eigen::MatrixXd& learned, const Eigen::MatrixXd& oracle,
                                const Eigen::VectorXd& weights) {
  if (learned.rows() != oracle.rows()) throw ShapeError("learned and oracle features need the same samples");
  const Eigen::VectorXd w = weights_or_uniform(weights, learned.rows()).cwiseSqrt();
  const Eigen::MatrixXd l = w.asDiagonal() * learned;
  const Eigen::MatrixXd o = w.asDiagonal() * oracle;
  const double energy = l.squaredNorm();
  if (!(energy > 1e-300)) throw DegenerateFeature("learned features carry no energy");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(o, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-10);
  const Eigen::MatrixXd fit = o * svd.solve(l);
  return std::clamp((l - fit).squaredNorm() / energy, 0.0, 1.0);
}

double rmse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("rmse arguments differ in shape");
  if (a.size() == 0) throw EmptyData("rmse of nothing");
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

double ks_uniform(Eigen::VectorXd samples, double lo, double hi) {
  if (samples.size() == 0) throw EmptyData("no samples");
  std::sort(samples.data(), samples.data() + samples.size());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (Eigen::Index i = 0; i < samples.size(); ++i) {
    const double cdf = std::clamp((samples[i] - lo) / (hi - lo), 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - cdf, cdf - static_cast<double>(i) / n});
  }
  return d;
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& v, const Eigen::VectorXd& weights) {
  const Eigen::VectorXd w = weights_or_uniform(weights, v.rows());
  Eigen::MatrixXd out = v;
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    const double mu = w.dot(v.col(j));
    out.col(j).array() -= mu;
    const double var = w.dot(out.col(j).cwiseAbs2());
    if (!(var > 1e-300)) throw DegenerateFeature("constant column cannot be standardized");
    out.col(j) /= std::sqrt(var);
  }
  return out;
}

}  // namespace featgeo
