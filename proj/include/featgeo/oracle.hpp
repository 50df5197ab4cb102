#pragma once

#include <array>
#include <map>
#include <string>
#include <utility>

#include "featgeo/geometry.hpp"

namespace featgeo {

struct ModalDecomposition {
  Eigen::VectorXd sigmas;
  Eigen::MatrixXd left;   // column i holds f_i* over the left-group cells
  Eigen::MatrixXd right;  // column i holds g_i* over the right-group cells
  Eigen::VectorXd metric_x;
  Eigen::VectorXd metric_y;
  Shape x_shape;
  Shape y_shape;

  std::size_t size() const { return static_cast<std::size_t>(sigmas.size()); }
  // Sum of the first d rank-one modes sigma_i f_i (x) g_i.
  JointFunction reconstruct(std::size_t d) const;
};

struct DependenceSplit {
  std::map<std::string, JointFunction> components;
  JointFunction total;
  ProbTable metric;
};

struct PEstimate {
  ProbTable table;
  double loss = 0.0;
  bool projected_fallback = false;
};

Eigen::MatrixXd cdm_matrix(const ProbTable& p, std::size_t split = 1);

ModalDecomposition modal_decompose(const ProbTable& p, std::size_t k, std::size_t split = 1);

// Modes of an arbitrary joint function under the product metric metric_x * metric_y.
ModalDecomposition decompose_function(const JointFunction& gamma, const ProbTable& metric_x,
                                      const ProbTable& metric_y, std::size_t k);

ModalDecomposition constrained_modal_decompose(const ProbTable& p, std::size_t k, const SubspaceSpec& sx,
                                               const SubspaceSpec& sy, std::size_t split = 1);

// Components "markov" and "conditional" of the X ; (S,Y) dependence, axes ordered (X, S, Y).
DependenceSplit markov_conditional_split(const ProbTable& p_xsy);
// Components "bivariate" and "interaction" of the (X1,X2) ; Y dependence, axes ordered (X1, X2, Y).
DependenceSplit bivariate_interaction_split(const ProbTable& p_x1x2y);

// The same splits applied to an arbitrary function under a given metric.
DependenceSplit split_markov(const JointFunction& gamma, const MetricDistribution& r);
DependenceSplit split_bivariate(const JointFunction& gamma, const MetricDistribution& r);

// (P^B, P^I) built from the bivariate and interaction components.
std::pair<ProbTable, ProbTable> reconstruct_pb_pi(const ProbTable& p_x1x2y);

// Weighted discrepancy between a candidate Q and the three datasets' empirical tables.
double heterogeneous_loss(const ProbTable& q, const ProbTable& p0, const ProbTable& p1, const ProbTable& p2,
                          const std::array<double, 3>& eta, const MetricDistribution& r);

PEstimate p_est_oracle(const ProbTable& p0, const ProbTable& p1, const ProbTable& p2,
                       const std::array<double, 3>& eta, const MetricDistribution& r);

// Conditional expectation matrix on X1 x X2: row x_i averages over the other axis under r_x1x2.
Eigen::MatrixXd conditional_expectation_matrix(const ProbTable& r_x1x2, std::size_t keep_axis);

}  // namespace featgeo
