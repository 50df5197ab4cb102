#include "featgeo/closed_form.hpp"

#include <cmath>
#include <numbers>

#include "featgeo/errors.hpp"

namespace featgeo {

namespace {

constexpr double kPi = std::numbers::pi;

void require_cols(const Eigen::MatrixXd& points, Eigen::Index cols, const std::string& name) {
  if (points.cols() != cols) throw ShapeError(name + ": wrong point dimension");
}

}  // namespace

double bms_statistic(const Eigen::Ref<const Eigen::RowVectorXd>& seq) {
  double same = 0.0;
  for (Eigen::Index i = 0; i + 1 < seq.size(); ++i) same += (seq[i] == seq[i + 1]) ? 1.0 : 0.0;
  return 0.5 * static_cast<double>(seq.size() - 1) - same;
}

Eigen::MatrixXd closed_form_oracle(const std::string& name, const Eigen::MatrixXd& points,
                                   const nlohmann::json& params) {
  const Eigen::Index n = points.rows();
  if (name == "cosine_modes") {
    require_cols(points, 1, name);
    const double theta = params.value("theta0", 0.0);
    Eigen::MatrixXd out(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      out(i, 0) = std::sqrt(2.0) * std::cos(kPi * points(i, 0) + theta);
      out(i, 1) = std::sqrt(2.0) * std::sin(kPi * points(i, 0) + theta);
    }
    return out;
  }
  if (name == "cosine_estimators") {
    require_cols(points, 1, name);
    const double e = std::exp(1.0);
    const double scale = (e * e - 1.0) / (2.0 * e * (1.0 + kPi * kPi));
    Eigen::MatrixXd out(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = points(i, 0);
      out(i, 0) = std::sin(kPi * x) / kPi;
      out(i, 1) = 1.0 / 3.0 - 2.0 / (kPi * kPi) * std::cos(kPi * x);
      out(i, 2) = scale * (kPi * std::sin(kPi * x) - std::cos(kPi * x) + kPi * kPi + 1.0);
    }
    return out;
  }
  if (name == "bms_features") {
    const double q0 = params.value("q0", 0.1), q1 = params.value("q1", 0.9);
    if (!(q0 > 0.0 && q0 < 1.0 && q1 > 0.0 && q1 < 1.0)) throw BadOracle("flip probabilities must lie in (0,1)");
    // Probability that the hidden factor driving this side equals 1.
    const double p1 = params.value("p_one", 0.5);
    if (!(p1 > 0.0 && p1 < 1.0)) throw BadOracle("hidden factor probability must lie in (0,1)");
    const double w = 0.5 * std::log(q1 / q0);
    const double b = 0.5 * std::log(p1 / (1.0 - p1));
    Eigen::MatrixXd out(n, 1);
    for (Eigen::Index i = 0; i < n; ++i)
      out(i, 0) = std::tanh(2.0 * w * bms_statistic(points.row(i)) + b) - std::tanh(b);
    return out;
  }
  if (name == "multimodal_modes") {
    require_cols(points, 2, name);
    Eigen::MatrixXd out(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double a = points(i, 0), b = points(i, 1);
      out(i, 0) = std::cos(kPi * a) + std::cos(kPi * b);
      out(i, 1) = std::sqrt(2.0) * std::cos(kPi * (a + b));
    }
    return out;
  }
  if (name == "unimodal_posteriors") {
    require_cols(points, 1, name);
    Eigen::MatrixXd out(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double c = 0.25 * std::cos(kPi * points(i, 0));
      out(i, 0) = 0.5 - c;
      out(i, 1) = 0.5 + c;
    }
    return out;
  }
  throw BadOracle("unknown closed-form oracle: " + name);
}

}  // namespace featgeo
