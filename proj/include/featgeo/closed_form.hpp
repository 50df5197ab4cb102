#pragma once

#include <string>

#include <Eigen/Dense>

#include "json.hpp"

namespace featgeo {

// Closed-form reference solutions evaluated at a set of points (one point per row).
//   cosine_modes        x in [-1,1]        -> [sqrt2 cos(pi x + theta0), sqrt2 sin(pi x + theta0)]
//   cosine_estimators   x in [-1,1]        -> [E[Y|x], E[Y^2|x], E[e^Y|x]]
//   bms_features        binary sequences   -> [tanh(2 w phi + b) - tanh(b)]
//   multimodal_modes    (x1, x2)           -> [cos pi x1 + cos pi x2, sqrt2 cos pi (x1 + x2)]
//   unimodal_posteriors x_i                -> [P(Y=-1|x_i), P(Y=1|x_i)]
Eigen::MatrixXd closed_form_oracle(const std::string& name, const Eigen::MatrixXd& points,
                                   const nlohmann::json& params = nlohmann::json::object());

// Sequence statistic (l-1)/2 minus the number of equal neighbours.
double bms_statistic(const Eigen::Ref<const Eigen::RowVectorXd>& seq);

}  // namespace featgeo
