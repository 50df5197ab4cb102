#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "featgeo/geometry.hpp"

namespace featgeo {

// 32-bit Mersenne Twister with 53-bit doubles built the same way as numpy's legacy RandomState,
// so integer seeds reproduce numpy's random_sample stream.
class Rng {
 public:
  explicit Rng(std::uint32_t seed) : mt_(seed) {}
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::mt19937& engine() { return mt_; }

 private:
  std::mt19937 mt_;
};

// i.i.d. uniform(0,1) entries normalised to sum 1, drawn in row-major order.
ProbTable gen_discrete_joint(const Shape& sizes, std::uint32_t seed);

// n i.i.d. index tuples from a table (inverse CDF on the flattened cells).
std::vector<Index> sample_table(const ProbTable& p, std::size_t n, std::uint32_t seed);

struct ContinuousPairs {
  Eigen::MatrixXd x;  // n x 1
  Eigen::MatrixXd y;  // n x 1
  double acceptance = 0.0;
};

// X ~ Unif[-1, 1], Y | X from the density 1/2 (1 + cos(pi (y - x))) by rejection.
ContinuousPairs gen_raised_cosine(std::size_t n, std::uint32_t seed);

struct SequencePairs {
  Eigen::MatrixXi x;  // n x l
  Eigen::MatrixXi y;  // n x m
  Eigen::VectorXi u;
  Eigen::VectorXi v;
};

// (U, V) ~ p_uv (axes U, V); each sequence is a binary Markov chain with a uniform start and flip
// probability q0 or q1 chosen by its hidden factor.
SequencePairs gen_bms_pairs(std::size_t n, std::size_t l, std::size_t m, double q0, double q1, const ProbTable& p_uv,
                            std::uint32_t seed);

enum class MultimodalVariant { Interaction, Pairwise };

struct MultimodalSamples {
  Eigen::MatrixXd x;  // n x 2, columns x1, x2
  Eigen::VectorXi y;  // labels in {-1, +1}
  double clamp_frequency = 0.0;  // fraction of samples whose conditional left [0, 1]
  double acceptance = 0.0;

  // Label index column: 0 for y = -1, 1 for y = +1.
  Eigen::MatrixXd y_index() const;
};

// P(y = +1 | x1, x2) for a variant, before clamping.
double multimodal_conditional(MultimodalVariant v, double x1, double x2);

MultimodalSamples gen_multimodal(std::size_t n, MultimodalVariant variant, std::uint32_t seed);

struct PairwiseDatasets {
  Eigen::MatrixXd x1x2;  // n x 2
  Eigen::MatrixXd x1y;   // n x 2, label column holds +-1
  Eigen::MatrixXd x2y;   // n x 2
};

PairwiseDatasets decompose_triples(const Eigen::MatrixXd& x, const Eigen::VectorXi& y);

MultimodalVariant parse_multimodal_variant(const std::string& name);

}  // namespace featgeo
