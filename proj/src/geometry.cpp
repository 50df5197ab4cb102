#include "featgeo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace featgeo {

namespace {

constexpr double kSumTolerance = 1e-12;

void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 3) throw ShapeError("tables have 1 to 3 axes");
  for (std::size_t n : shape) {
    if (n == 0) throw ShapeError("alphabet size must be positive");
    if (n > kMaxAlphabet) throw ShapeError("alphabet size exceeds 4096");
  }
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": shape mismatch");
}

bool is_subset(const AxisSet& small, const AxisSet& big) {
  return std::all_of(small.begin(), small.end(), [&](std::size_t a) {
    return std::find(big.begin(), big.end(), a) != big.end();
  });
}

AxisSet sorted_unique(AxisSet axes) {
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  return axes;
}

// Least-squares projection of g onto the columns of `basis` under weights w.
Eigen::VectorXd weighted_least_squares(const Eigen::MatrixXd& basis, const Eigen::VectorXd& g,
                                       const Eigen::VectorXd& w) {
  const Eigen::VectorXd sw = w.array().sqrt();
  const Eigen::MatrixXd a = sw.asDiagonal() * basis;
  const Eigen::VectorXd b = sw.cwiseProduct(g);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-10);
  const Eigen::VectorXd coef = svd.solve(b);
  return basis * coef;
}

Eigen::MatrixXd indicator_basis(const Shape& shape, const AxisSet& axes) {
  const std::vector<std::size_t> pos = sub_positions(shape, axes);
  const std::size_t m = cell_count(sub_shape(shape, axes));
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pos.size()),
                                                static_cast<Eigen::Index>(m));
  for (std::size_t c = 0; c < pos.size(); ++c) basis(c, pos[c]) = 1.0;
  return basis;
}

}  // namespace

Alphabet::Alphabet(std::size_t n, std::vector<std::string> names) : size(n), labels(std::move(names)) {
  if (n == 0) throw ShapeError("alphabet size must be positive");
  if (!labels.empty() && labels.size() != n) throw ShapeError("label count differs from alphabet size");
}

std::size_t cell_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::vector<std::size_t> strides(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

Index unravel(std::size_t flat, const Shape& shape) {
  Index idx(shape.size(), 0);
  for (std::size_t i = shape.size(); i-- > 0;) {
    idx[i] = flat % shape[i];
    flat /= shape[i];
  }
  return idx;
}

std::size_t ravel(const Index& idx, const Shape& shape) {
  if (idx.size() != shape.size()) throw ShapeError("index rank mismatch");
  std::size_t flat = 0;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (idx[i] >= shape[i]) throw BadSample("index out of range");
    flat = flat * shape[i] + idx[i];
  }
  return flat;
}

void check_axes(const AxisSet& axes, std::size_t rank) {
  for (std::size_t a : axes)
    if (a >= rank) throw ShapeError("axis outside the joint shape");
  if (sorted_unique(axes).size() != axes.size()) throw ShapeError("repeated axis");
}

Shape sub_shape(const Shape& shape, const AxisSet& axes) {
  check_axes(axes, shape.size());
  Shape out;
  for (std::size_t a : axes) out.push_back(shape[a]);
  return out;
}

std::vector<std::size_t> sub_positions(const Shape& shape, const AxisSet& axes) {
  const Shape sub = sub_shape(shape, axes);
  const std::size_t n = cell_count(shape);
  std::vector<std::size_t> pos(n);
  for (std::size_t c = 0; c < n; ++c) {
    const Index full = unravel(c, shape);
    std::size_t flat = 0;
    for (std::size_t j = 0; j < axes.size(); ++j) flat = flat * sub[j] + full[axes[j]];
    pos[c] = flat;
  }
  return pos;
}

// ---------------------------------------------------------------------------

JointFunction::JointFunction(Shape shape, Eigen::VectorXd values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  check_shape(shape_);
  if (static_cast<std::size_t>(values_.size()) != cell_count(shape_))
    throw ShapeError("value count does not match shape");
}

JointFunction JointFunction::constant(const Shape& shape, double c) {
  return JointFunction(shape, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(cell_count(shape)), c));
}

JointFunction JointFunction::outer(const Eigen::VectorXd& f, const Eigen::VectorXd& g,
                                   const Shape& x_shape, const Shape& y_shape) {
  if (static_cast<std::size_t>(f.size()) != cell_count(x_shape) ||
      static_cast<std::size_t>(g.size()) != cell_count(y_shape))
    throw ShapeError("outer product operand sizes");
  Shape full = x_shape;
  full.insert(full.end(), y_shape.begin(), y_shape.end());
  Eigen::MatrixXd m = f * g.transpose();
  Eigen::MatrixXd rowmajor = m.transpose();
  return JointFunction(full, Eigen::Map<Eigen::VectorXd>(rowmajor.data(), rowmajor.size()));
}

Eigen::MatrixXd JointFunction::as_matrix(std::size_t split) const {
  if (split > shape_.size()) throw ShapeError("split beyond rank");
  std::size_t rows = 1;
  for (std::size_t i = 0; i < split; ++i) rows *= shape_[i];
  const std::size_t cols = cell_count(shape_) / rows;
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = values_[r * cols + c];
  return m;
}

JointFunction JointFunction::operator+(const JointFunction& o) const {
  require_same_shape(shape_, o.shape_, "sum");
  return JointFunction(shape_, values_ + o.values_);
}

JointFunction JointFunction::operator-(const JointFunction& o) const {
  require_same_shape(shape_, o.shape_, "difference");
  return JointFunction(shape_, values_ - o.values_);
}

JointFunction JointFunction::operator*(double c) const { return JointFunction(shape_, values_ * c); }

// ---------------------------------------------------------------------------

ProbTable::ProbTable(Shape shape, Eigen::VectorXd mass) : shape_(std::move(shape)), mass_(std::move(mass)) {
  check_shape(shape_);
  if (static_cast<std::size_t>(mass_.size()) != cell_count(shape_))
    throw ShapeError("mass count does not match shape");
  if (!mass_.allFinite() || mass_.minCoeff() < 0.0) throw BadDistribution("negative or non-finite mass");
  if (std::abs(mass_.sum() - 1.0) > kSumTolerance) {
    std::ostringstream os;
    os << "mass sums to " << mass_.sum();
    throw BadDistribution(os.str());
  }
}

ProbTable ProbTable::normalized(Shape shape, Eigen::VectorXd weights) {
  const double total = weights.sum();
  if (!(total > 0.0)) throw BadDistribution("weights must have positive total");
  weights /= total;
  // Absorb rounding so the stored mass sums to one as tightly as possible.
  Eigen::Index big;
  weights.maxCoeff(&big);
  weights[big] += 1.0 - weights.sum();
  return ProbTable(std::move(shape), std::move(weights));
}

ProbTable ProbTable::uniform(const Shape& shape) {
  const auto n = static_cast<Eigen::Index>(cell_count(shape));
  return normalized(shape, Eigen::VectorXd::Ones(n));
}

ProbTable ProbTable::marginal(const AxisSet& keep) const {
  const Shape sub = sub_shape(shape_, keep);
  if (sub.empty()) throw ShapeError("marginal needs at least one axis");
  const std::vector<std::size_t> pos = sub_positions(shape_, keep);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cell_count(sub)));
  for (std::size_t c = 0; c < pos.size(); ++c) m[pos[c]] += mass_[c];
  return normalized(sub, m);
}

ProbTable ProbTable::product(const ProbTable& other) const {
  Shape full = shape_;
  full.insert(full.end(), other.shape_.begin(), other.shape_.end());
  Eigen::VectorXd m(static_cast<Eigen::Index>(cell_count(full)));
  const Eigen::Index n2 = other.mass_.size();
  for (Eigen::Index i = 0; i < mass_.size(); ++i) m.segment(i * n2, n2) = mass_[i] * other.mass_;
  return normalized(full, m);
}

Eigen::MatrixXd ProbTable::as_matrix(std::size_t split) const {
  return JointFunction(shape_, mass_).as_matrix(split);
}

bool ProbTable::strictly_positive() const { return mass_.minCoeff() > 0.0; }

MetricDistribution::MetricDistribution(ProbTable table) : table_(std::move(table)) {
  if (!table_.strictly_positive())
    throw DegenerateMarginal("metric distribution must be strictly positive");
}

// ---------------------------------------------------------------------------

ProbTable empirical_distribution(const std::vector<Index>& samples, const Shape& shape) {
  if (samples.empty()) throw EmptyData("no samples");
  check_shape(shape);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cell_count(shape)));
  for (const Index& z : samples) {
    if (z.size() != shape.size()) throw BadSample("sample rank differs from shape");
    counts[ravel(z, shape)] += 1.0;
  }
  return ProbTable(shape, counts / static_cast<double>(samples.size()));
}

SupportRestriction restrict_to_support(const ProbTable& p) {
  SupportRestriction out;
  const Shape& shape = p.shape();
  Shape kept_shape;
  for (std::size_t a = 0; a < shape.size(); ++a) {
    const ProbTable m = p.marginal({a});
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < shape[a]; ++i)
      if (m.mass()[i] > 0.0) keep.push_back(i);
    kept_shape.push_back(keep.size());
    out.kept.push_back(std::move(keep));
  }
  Eigen::VectorXd mass(static_cast<Eigen::Index>(cell_count(kept_shape)));
  for (std::size_t c = 0; c < cell_count(kept_shape); ++c) {
    Index sub = unravel(c, kept_shape);
    for (std::size_t a = 0; a < sub.size(); ++a) sub[a] = out.kept[a][sub[a]];
    mass[c] = p.at(sub);
  }
  out.table = ProbTable::normalized(kept_shape, mass);
  return out;
}

ProbTable smooth(const ProbTable& p, double eps) {
  return ProbTable::normalized(p.shape(), p.mass().array() + eps);
}

JointFunction cdk(const ProbTable& p, std::size_t split) {
  if (split == 0 || split >= p.rank()) throw ShapeError("cdk needs a split between two axis groups");
  AxisSet left(split), right(p.rank() - split);
  std::iota(left.begin(), left.end(), 0);
  std::iota(right.begin(), right.end(), split);
  const ProbTable px = p.marginal(left);
  const ProbTable py = p.marginal(right);
  if (!px.strictly_positive() || !py.strictly_positive())
    throw DegenerateMarginal("zero marginal entry; restrict to observed support first");
  const Eigen::Index nx = px.mass().size(), ny = py.mass().size();
  Eigen::VectorXd v(nx * ny);
  for (Eigen::Index i = 0; i < nx; ++i)
    for (Eigen::Index j = 0; j < ny; ++j) {
      const double q = px.mass()[i] * py.mass()[j];
      v[i * ny + j] = (p.mass()[i * ny + j] - q) / q;
    }
  return JointFunction(p.shape(), v);
}

JointFunction density_ratio(const ProbTable& p, const MetricDistribution& r) {
  require_same_shape(p.shape(), r.shape(), "density ratio");
  return JointFunction(p.shape(), (p.mass().array() - r.weights().array()) / r.weights().array());
}

double inner_product(const JointFunction& a, const JointFunction& b, const MetricDistribution& r) {
  require_same_shape(a.shape(), b.shape(), "inner product");
  require_same_shape(a.shape(), r.shape(), "inner product metric");
  return (r.weights().array() * a.values().array() * b.values().array()).sum();
}

double squared_norm(const JointFunction& a, const MetricDistribution& r) { return inner_product(a, a, r); }

JointFunction lift(const JointFunction& g, const AxisSet& axes, const Shape& full) {
  if (g.shape() != sub_shape(full, axes)) throw ShapeError("lift: function shape does not match axes");
  const std::vector<std::size_t> pos = sub_positions(full, axes);
  Eigen::VectorXd v(static_cast<Eigen::Index>(pos.size()));
  for (std::size_t c = 0; c < pos.size(); ++c) v[c] = g.values()[pos[c]];
  return JointFunction(full, v);
}

JointFunction conditional_mean(const JointFunction& g, const AxisSet& given, const MetricDistribution& r) {
  require_same_shape(g.shape(), r.shape(), "conditional mean");
  const Shape sub = sub_shape(g.shape(), given);
  const std::vector<std::size_t> pos = sub_positions(g.shape(), given);
  Eigen::VectorXd num = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cell_count(sub)));
  Eigen::VectorXd den = num;
  for (std::size_t c = 0; c < pos.size(); ++c) {
    num[pos[c]] += r.weights()[c] * g.values()[c];
    den[pos[c]] += r.weights()[c];
  }
  return JointFunction(sub, num.cwiseQuotient(den));
}

JointFunction project(const JointFunction& g, const SubspaceSpec& s, const MetricDistribution& r) {
  require_same_shape(g.shape(), r.shape(), "project");
  const Shape& shape = g.shape();
  return std::visit(
      [&](const auto& spec) -> JointFunction {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, Unrestricted>) {
          return g;
        } else if constexpr (std::is_same_v<T, Constants>) {
          return JointFunction::constant(shape, (r.weights().array() * g.values().array()).sum());
        } else if constexpr (std::is_same_v<T, FactorFunctions> || std::is_same_v<T, ZeroMeanGiven>) {
          const AxisSet axes = sorted_unique(spec.axes);
          check_axes(axes, shape.size());
          JointFunction mean = axes.empty()
                                   ? JointFunction::constant(shape, (r.weights().array() * g.values().array()).sum())
                                   : lift(conditional_mean(g, axes, r), axes, shape);
          if constexpr (std::is_same_v<T, FactorFunctions>) return mean;
          else return g - mean;
        } else if constexpr (std::is_same_v<T, SpanOfFeatures>) {
          check_axes(spec.axes, shape.size());
          if (spec.features.empty()) return JointFunction::zeros(shape);
          Eigen::MatrixXd basis(static_cast<Eigen::Index>(cell_count(shape)),
                                static_cast<Eigen::Index>(spec.features.size()));
          for (std::size_t j = 0; j < spec.features.size(); ++j)
            basis.col(static_cast<Eigen::Index>(j)) = lift(spec.features[j], spec.axes, shape).values();
          return JointFunction(shape, weighted_least_squares(basis, g.values(), r.weights()));
        } else {
          if (spec.factors.empty()) throw UnsupportedProjection("empty sum of factor spaces");
          std::vector<Eigen::MatrixXd> blocks;
          Eigen::Index cols = 0;
          for (const AxisSet& f : spec.factors) {
            check_axes(f, shape.size());
            if (f.empty()) {
              blocks.push_back(Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(cell_count(shape)), 1));
            } else {
              blocks.push_back(indicator_basis(shape, f));
            }
            cols += blocks.back().cols();
          }
          Eigen::MatrixXd basis(static_cast<Eigen::Index>(cell_count(shape)), cols);
          Eigen::Index at = 0;
          for (const auto& b : blocks) {
            basis.middleCols(at, b.cols()) = b;
            at += b.cols();
          }
          return JointFunction(shape, weighted_least_squares(basis, g.values(), r.weights()));
        }
      },
      s);
}

std::optional<bool> spec_contains(const SubspaceSpec& outer, const SubspaceSpec& inner) {
  auto axes_of_inner = [&]() -> std::optional<std::vector<AxisSet>> {
    if (std::holds_alternative<Constants>(inner)) return std::vector<AxisSet>{AxisSet{}};
    if (auto* f = std::get_if<FactorFunctions>(&inner)) return std::vector<AxisSet>{f->axes};
    if (auto* f = std::get_if<SpanOfFeatures>(&inner)) return std::vector<AxisSet>{f->axes};
    if (auto* f = std::get_if<SumOfFactors>(&inner)) return f->factors;
    return std::nullopt;
  };
  if (std::holds_alternative<Unrestricted>(outer)) return true;
  if (std::holds_alternative<Unrestricted>(inner)) return false;
  if (auto* a = std::get_if<ZeroMeanGiven>(&outer)) {
    if (auto* b = std::get_if<ZeroMeanGiven>(&inner)) return is_subset(a->axes, b->axes);
    return std::nullopt;
  }
  if (std::holds_alternative<SpanOfFeatures>(outer)) return std::nullopt;
  const auto inner_sets = axes_of_inner();
  if (!inner_sets) return std::nullopt;
  std::vector<AxisSet> outer_sets;
  if (std::holds_alternative<Constants>(outer)) outer_sets = {AxisSet{}};
  else if (auto* f = std::get_if<FactorFunctions>(&outer)) outer_sets = {f->axes};
  else outer_sets = std::get<SumOfFactors>(outer).factors;
  for (const AxisSet& s : *inner_sets) {
    const bool covered = std::any_of(outer_sets.begin(), outer_sets.end(),
                                     [&](const AxisSet& o) { return is_subset(s, o); });
    if (!covered) return false;
  }
  return true;
}

}  // namespace featgeo
