#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "featgeo/errors.hpp"

namespace featgeo {

using Shape = std::vector<std::size_t>;
using AxisSet = std::vector<std::size_t>;
using Index = std::vector<std::size_t>;

inline constexpr std::size_t kMaxAlphabet = 4096;

struct Alphabet {
  std::size_t size = 1;
  std::vector<std::string> labels;

  explicit Alphabet(std::size_t n, std::vector<std::string> names = {});
};

std::size_t cell_count(const Shape& shape);
std::vector<std::size_t> strides(const Shape& shape);
Index unravel(std::size_t flat, const Shape& shape);
std::size_t ravel(const Index& idx, const Shape& shape);
Shape sub_shape(const Shape& shape, const AxisSet& axes);
void check_axes(const AxisSet& axes, std::size_t rank);

// Flat position of every cell of `shape` inside the sub-table over `axes`.
std::vector<std::size_t> sub_positions(const Shape& shape, const AxisSet& axes);

class JointFunction {
 public:
  JointFunction() = default;
  JointFunction(Shape shape, Eigen::VectorXd values);

  static JointFunction constant(const Shape& shape, double c);
  static JointFunction zeros(const Shape& shape) { return constant(shape, 0.0); }
  static JointFunction outer(const Eigen::VectorXd& f, const Eigen::VectorXd& g,
                             const Shape& x_shape, const Shape& y_shape);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }
  double at(const Index& idx) const { return values_[ravel(idx, shape_)]; }

  // Values reshaped as |left group| x |right group|, left group = axes [0, split).
  Eigen::MatrixXd as_matrix(std::size_t split) const;

  JointFunction operator+(const JointFunction& o) const;
  JointFunction operator-(const JointFunction& o) const;
  JointFunction operator*(double c) const;

 private:
  Shape shape_;
  Eigen::VectorXd values_;
};

class ProbTable {
 public:
  ProbTable() = default;
  ProbTable(Shape shape, Eigen::VectorXd mass);

  static ProbTable normalized(Shape shape, Eigen::VectorXd weights);
  static ProbTable uniform(const Shape& shape);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  const Eigen::VectorXd& mass() const { return mass_; }
  double at(const Index& idx) const { return mass_[ravel(idx, shape_)]; }

  ProbTable marginal(const AxisSet& keep) const;
  // Outer product; axes of `other` are appended after this table's axes.
  ProbTable product(const ProbTable& other) const;
  Eigen::MatrixXd as_matrix(std::size_t split) const;
  bool strictly_positive() const;

 private:
  Shape shape_;
  Eigen::VectorXd mass_;
};

class MetricDistribution {
 public:
  explicit MetricDistribution(ProbTable table);

  const ProbTable& table() const { return table_; }
  const Shape& shape() const { return table_.shape(); }
  const Eigen::VectorXd& weights() const { return table_.mass(); }

 private:
  ProbTable table_;
};

struct Unrestricted {};
struct Constants {};
struct FactorFunctions { AxisSet axes; };
struct ZeroMeanGiven { AxisSet axes; };
struct SpanOfFeatures {
  AxisSet axes;
  std::vector<JointFunction> features;
};
struct SumOfFactors { std::vector<AxisSet> factors; };

using SubspaceSpec =
    std::variant<Unrestricted, Constants, FactorFunctions, ZeroMeanGiven, SpanOfFeatures, SumOfFactors>;

ProbTable empirical_distribution(const std::vector<Index>& samples, const Shape& shape);

struct SupportRestriction {
  ProbTable table;
  std::vector<std::vector<std::size_t>> kept;  // original labels per axis
};

SupportRestriction restrict_to_support(const ProbTable& p);
ProbTable smooth(const ProbTable& p, double eps = 1e-6);

JointFunction cdk(const ProbTable& p, std::size_t split = 1);
// Density ratio (P - R) / R for a product-form metric.
JointFunction density_ratio(const ProbTable& p, const MetricDistribution& r);

double inner_product(const JointFunction& a, const JointFunction& b, const MetricDistribution& r);
double squared_norm(const JointFunction& a, const MetricDistribution& r);

JointFunction lift(const JointFunction& g, const AxisSet& axes, const Shape& full);
// E_r[g | x_A], returned on the sub-shape of A.
JointFunction conditional_mean(const JointFunction& g, const AxisSet& given, const MetricDistribution& r);

JointFunction project(const JointFunction& g, const SubspaceSpec& s, const MetricDistribution& r);

// Whether every function in `inner` also lies in `outer`, for the spec kinds where
// this can be decided structurally. Returns nullopt when undecidable.
std::optional<bool> spec_contains(const SubspaceSpec& outer, const SubspaceSpec& inner);

}  // namespace featgeo
