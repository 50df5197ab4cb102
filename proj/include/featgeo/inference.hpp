#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "featgeo/errors.hpp"

namespace featgeo {

// Query rows x labels, plus the total mass moved by clamping negative entries (before renormalising).
struct Posterior {
  Eigen::MatrixXd probs;
  Eigen::VectorXd correction;
};

// P_Y(y) (1 + f(x)^T g(y)). fx: queries x k, gy: |Y| x k, prior: |Y|.
Posterior posterior_bivariate(const Eigen::MatrixXd& fx, const Eigen::MatrixXd& gy, const Eigen::VectorXd& prior);

// Row-wise argmax; ties go to the smallest label index.
std::vector<Eigen::Index> map_predict(const Eigen::MatrixXd& probs);

// Cross moment E[psi g^T] (d x k) from paired samples.
Eigen::MatrixXd cross_moment(const Eigen::MatrixXd& psi, const Eigen::MatrixXd& g);

// E[psi] + Lambda_{psi,g} f(x), one row per query.
Eigen::MatrixXd mmse_estimate(const Eigen::MatrixXd& fx, const Eigen::MatrixXd& lambda_psi_g,
                              const Eigen::VectorXd& mean_psi);

// Fraction of psi's energy (per column) outside span{1, g}, from paired samples. A column above
// 10% gets a warning in the returned list.
struct SpanCheck {
  Eigen::VectorXd residual;
  std::vector<std::string> warnings;
};
SpanCheck psi_span_check(const Eigen::MatrixXd& psi, const Eigen::MatrixXd& g);

struct SideInfoTables {
  Eigen::MatrixXd gbar;          // |S| x kbar
  Eigen::MatrixXd g;             // (|S||Y|) x k, row s * |Y| + y
  Eigen::MatrixXd prior_given_s;  // |S| x |Y|
};

// P_{Y|S}(y|s) (1 + f(x)^T g(s,y) / (1 + fbar(x)^T gbar(s))). Throws NearSingularDenominator when
// the denominator does not exceed delta.
Posterior posterior_conditioned(const Eigen::MatrixXd& fbar_x, const Eigen::MatrixXd& f_x,
                                const std::vector<Eigen::Index>& s, const SideInfoTables& t, double delta = 1e-3);

// Per-s readout: E[psi|S=s] + Lambda^(s) f(x) / (1 + fbar^T gbar(s)).
struct ConditionedReadout {
  std::vector<Eigen::MatrixXd> lambda;  // per s: d x k, E[psi(Y) g(s,Y)^T | S = s]
  Eigen::MatrixXd mean_psi;             // |S| x d
  std::vector<std::string> warnings;    // s-cells with fewer than 10 samples
};
ConditionedReadout fit_conditioned_readout(const std::vector<Eigen::Index>& s, const Eigen::MatrixXd& psi,
                                           const Eigen::MatrixXd& g_sy, std::size_t n_s);
Eigen::MatrixXd mmse_conditioned(const Eigen::MatrixXd& fbar_x, const Eigen::MatrixXd& f_x,
                                 const std::vector<Eigen::Index>& s, const Eigen::MatrixXd& gbar,
                                 const ConditionedReadout& r, double delta = 1e-3);

enum class Modality { Both, OnlyX1, OnlyX2 };

// Feature values at the query points. tau1 holds E[fbar2(X2) | X1 = x1] at each query, tau2 the
// mirror; interaction features are ignored by the unimodal modes.
struct MultimodalQuery {
  Eigen::MatrixXd fbar1;  // queries x kbar
  Eigen::MatrixXd fbar2;
  std::optional<Eigen::MatrixXd> tau1;
  std::optional<Eigen::MatrixXd> tau2;
  std::optional<Eigen::MatrixXd> f;  // queries x k
  Eigen::MatrixXd gbar;              // |Y| x kbar
  std::optional<Eigen::MatrixXd> g;  // |Y| x k
};
Posterior posterior_multimodal(const MultimodalQuery& q, Modality mode, const Eigen::VectorXd& prior);

struct SpectrumReport {
  std::map<std::string, Eigen::VectorXd> energies;  // per component, E[f_i^2] E[g_i^2]
  std::map<std::string, double> norms;               // per component, tr(Lambda_f Lambda_g)
  std::optional<double> ci_statistic;                // squared norm of the conditional component
  std::optional<double> pythagoras_gap;              // |total - sum of parts| when a total is given
};

struct ComponentFeatures {
  std::string name;
  Eigen::MatrixXd f;  // samples x k
  Eigen::MatrixXd g;  // samples x k, same rows as f
};

// Energies and norms from sample features. If `total` is supplied, the gap against the sum of the
// component norms is reported; the component named "conditional" feeds the CI statistic.
SpectrumReport dependence_report(const std::vector<ComponentFeatures>& components,
                                 std::optional<double> total = std::nullopt);

// Symmetric PSD check within tol, used when assembling models.
bool is_symmetric_psd(const Eigen::MatrixXd& m, double tol = 1e-8);

}  // namespace featgeo
