#pragma once

#include <string>

#include <Eigen/Dense>

#include "featgeo/errors.hpp"

namespace featgeo {

// |Pearson correlation|; throws DegenerateFeature if either side is constant.
double metric_aligned_correlation(const Eigen::VectorXd& learned, const Eigen::VectorXd& oracle);

// Fraction of the learned features' energy outside span(oracle columns), inner product weighted by
// `weights` (uniform when empty).
double metric_subspace_residual(const Eigen::MatrixXd& learned, const Eigen::MatrixXd& oracle,
                                const Eigen::VectorXd& weights = Eigen::VectorXd());

double rmse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Kolmogorov-Smirnov distance between samples and Unif[lo, hi].
double ks_uniform(Eigen::VectorXd samples, double lo, double hi);

// Center and scale each column to zero mean, unit variance under weights (uniform when empty).
Eigen::MatrixXd standardize(const Eigen::MatrixXd& v, const Eigen::VectorXd& weights = Eigen::VectorXd());

struct MetricResult {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool upper = true;  // true: pass when value <= threshold
  bool pass() const { return upper ? value <= threshold : value >= threshold; }
};

}  // namespace featgeo
