#pragma once

#include <array>
#include <optional>
#include <vector>

#include "featgeo/autodiff.hpp"
#include "featgeo/geometry.hpp"

namespace featgeo {

struct NestingConfig {
  std::vector<std::size_t> dims;
  std::vector<SubspaceSpec> x_chain;  // one spec per level; empty means unrestricted throughout
  SubspaceSpec y_space = Unrestricted{};
  bool refined = false;

  std::size_t total() const;
  // Feature prefix lengths whose H-scores are summed.
  std::vector<std::size_t> prefixes() const;
  void validate() const;

  static NestingConfig single(std::size_t k);
  static NestingConfig modes(std::size_t k);  // refined chain: one level per dimension
  static NestingConfig two_level(std::size_t kbar, std::size_t k, SubspaceSpec inner = Unrestricted{},
                                 SubspaceSpec outer = Unrestricted{}, SubspaceSpec y = Unrestricted{});
};

// Empirical H-score of paired feature batches f, g (n x k each).
ad::Var h_score(const ad::Var& f, const ad::Var& g);

ad::Var nested_h_score(const ad::Var& f, const ad::Var& g, const NestingConfig& config);

// H-score under a pairing distribution Q between the rows of f and the rows of g, with the
// mean and second-moment terms taken under the marginal weights rx (rows of f) and ry (rows of g).
ad::Var h_score_under(const ad::Var& f, const ad::Var& g, const Eigen::MatrixXd& q, const Eigen::VectorXd& rx,
                      const Eigen::VectorXd& ry);
ad::Var nested_h_score_under(const ad::Var& f, const ad::Var& g, const Eigen::MatrixXd& q,
                             const Eigen::VectorXd& rx, const Eigen::VectorXd& ry, const NestingConfig& config);

// Tabulated empirical tables of the three heterogeneous datasets, in matrix form.
struct HeterogeneousTables {
  Eigen::MatrixXd p0;  // (|X1||X2|) x |Y|
  Eigen::MatrixXd p1;  // |X1| x |Y|
  Eigen::MatrixXd p2;  // |X2| x |Y|
  Eigen::VectorXd rx;  // metric on X1 x X2 (row-major flat)
  Eigen::VectorXd ry;  // metric on Y
  std::array<double, 3> eta{1.0, 0.0, 0.0};
};

// Weighted H-score over heterogeneous data; f rows index X1 x X2 cells, g rows index Y.
// tau_i maps a function on X1 x X2 to its conditional expectation given X_i.
ad::Var hm_score(const ad::Var& f, const ad::Var& g, const HeterogeneousTables& t,
                 const std::optional<Eigen::MatrixXd>& tau1, const std::optional<Eigen::MatrixXd>& tau2,
                 const NestingConfig& config = NestingConfig{});

// H(f1 + f2, g) assembled from three pairwise batches: (x1, y), (x2, y), (x1, x2).
ad::Var pairwise_h_score(const ad::Var& f1_on_d1, const ad::Var& g_on_d1, const ad::Var& f2_on_d2,
                         const ad::Var& g_on_d2, const ad::Var& f1_on_d12, const ad::Var& f2_on_d12);

// Mean log softmax probability of the labels with logits f g^T + b. With heads, g and b stack
// one block of |Y| rows per head and row i uses the block of head[i].
ad::Var softmax_log_likelihood(const ad::Var& f, const ad::Var& g, const ad::Var& b,
                               const std::vector<Eigen::Index>& labels,
                               const std::vector<Eigen::Index>& heads = {}, std::size_t n_heads = 1);

}  // namespace featgeo
