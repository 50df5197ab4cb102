#include "featgeo/generators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace featgeo {

namespace {

constexpr double kPi = std::numbers::pi;

void need_samples(std::size_t n) {
  if (n == 0) throw EmptyData("sample count must be at least 1");
}

int markov_bit(Rng& rng, int prev, double flip) { return rng.uniform() < flip ? 1 - prev : prev; }

}  // namespace

double Rng::uniform() {
  const std::uint32_t a = mt_() >> 5, b = mt_() >> 6;
  return (a * 67108864.0 + b) / 9007199254740992.0;
}

ProbTable gen_discrete_joint(const Shape& sizes, std::uint32_t seed) {
  for (std::size_t s : sizes)
    if (s < 2) throw ShapeError("every alphabet needs at least two symbols");
  Rng rng(seed);
  Eigen::VectorXd w(static_cast<Eigen::Index>(cell_count(sizes)));
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.uniform();
  return ProbTable::normalized(sizes, w);
}

std::vector<Index> sample_table(const ProbTable& p, std::size_t n, std::uint32_t seed) {
  need_samples(n);
  const Eigen::VectorXd& mass = p.mass();
  std::vector<double> cdf(static_cast<std::size_t>(mass.size()));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < mass.size(); ++i) cdf[static_cast<std::size_t>(i)] = (acc += mass[i]);
  Rng rng(seed);
  std::vector<Index> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    // Never land on a zero-mass tail cell.
    std::size_t cell = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
    while (cell > 0 && mass[static_cast<Eigen::Index>(cell)] == 0.0) --cell;
    out.push_back(unravel(cell, p.shape()));
  }
  return out;
}

ContinuousPairs gen_raised_cosine(std::size_t n, std::uint32_t seed) {
  need_samples(n);
  Rng rng(seed);
  ContinuousPairs out{Eigen::MatrixXd(static_cast<Eigen::Index>(n), 1), Eigen::MatrixXd(static_cast<Eigen::Index>(n), 1), 0.0};
  std::size_t proposals = 0;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    const double x = rng.uniform(-1.0, 1.0);
    double y;
    do {
      y = rng.uniform(-1.0, 1.0);
      ++proposals;
    } while (rng.uniform() >= 0.5 * (1.0 + std::cos(kPi * (y - x))));
    out.x(i, 0) = x;
    out.y(i, 0) = y;
  }
  out.acceptance = static_cast<double>(n) / static_cast<double>(proposals);
  return out;
}

SequencePairs gen_bms_pairs(std::size_t n, std::size_t l, std::size_t m, double q0, double q1, const ProbTable& p_uv,
                            std::uint32_t seed) {
  need_samples(n);
  if (p_uv.shape() != Shape{2, 2}) throw BadDistribution("the hidden-factor table must be 2 x 2");
  if (!(q0 >= 0.0 && q0 <= 1.0 && q1 >= 0.0 && q1 <= 1.0)) throw ConfigError("flip probabilities must lie in [0, 1]");
  if (l == 0 || m == 0) throw ConfigError("sequence lengths must be positive");
  const std::vector<Index> uv = sample_table(p_uv, n, seed);
  Rng rng(seed ^ 0x5bd1e995u);
  SequencePairs out{Eigen::MatrixXi(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(l)),
                    Eigen::MatrixXi(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)),
                    Eigen::VectorXi(static_cast<Eigen::Index>(n)), Eigen::VectorXi(static_cast<Eigen::Index>(n))};
  const double q[2] = {q0, q1};
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    const int u = static_cast<int>(uv[static_cast<std::size_t>(i)][0]);
    const int v = static_cast<int>(uv[static_cast<std::size_t>(i)][1]);
    out.u[i] = u;
    out.v[i] = v;
    out.x(i, 0) = rng.uniform() < 0.5 ? 1 : 0;
    for (Eigen::Index t = 1; t < out.x.cols(); ++t) out.x(i, t) = markov_bit(rng, out.x(i, t - 1), q[u]);
    out.y(i, 0) = rng.uniform() < 0.5 ? 1 : 0;
    for (Eigen::Index t = 1; t < out.y.cols(); ++t) out.y(i, t) = markov_bit(rng, out.y(i, t - 1), q[v]);
  }
  return out;
}

Eigen::MatrixXd MultimodalSamples::y_index() const {
  return ((y.cast<double>().array() + 1.0) / 2.0).matrix();
}

double multimodal_conditional(MultimodalVariant v, double x1, double x2) {
  double s = std::cos(kPi * x1) + std::cos(kPi * x2);
  if (v == MultimodalVariant::Interaction) s += std::cos(kPi * (x1 + x2));
  return 0.5 + 0.25 * s;
}

MultimodalSamples gen_multimodal(std::size_t n, MultimodalVariant variant, std::uint32_t seed) {
  need_samples(n);
  Rng rng(seed);
  MultimodalSamples out;
  out.x.resize(static_cast<Eigen::Index>(n), 2);
  out.y.resize(static_cast<Eigen::Index>(n));
  std::size_t proposals = 0, clamped = 0;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    double x1, x2;
    // Density 1/4 (1 + cos 2 pi (x1 - x2)) against the uniform 1/4 proposal: bound 2.
    do {
      x1 = rng.uniform(-1.0, 1.0);
      x2 = rng.uniform(-1.0, 1.0);
      ++proposals;
    } while (rng.uniform() >= 0.5 * (1.0 + std::cos(2.0 * kPi * (x1 - x2))));
    double p1 = multimodal_conditional(variant, x1, x2);
    if (p1 < 0.0 || p1 > 1.0) {
      ++clamped;
      p1 = std::clamp(p1, 0.0, 1.0);
    }
    out.x(i, 0) = x1;
    out.x(i, 1) = x2;
    out.y[i] = rng.uniform() < p1 ? 1 : -1;
  }
  out.clamp_frequency = static_cast<double>(clamped) / static_cast<double>(n);
  out.acceptance = static_cast<double>(n) / static_cast<double>(proposals);
  return out;
}

PairwiseDatasets decompose_triples(const Eigen::MatrixXd& x, const Eigen::VectorXi& y) {
  if (x.rows() == 0) throw EmptyData("no triples");
  if (x.cols() != 2 || y.size() != x.rows()) throw ShapeError("triples need (x1, x2) columns and one label each");
  PairwiseDatasets d{x, Eigen::MatrixXd(x.rows(), 2), Eigen::MatrixXd(x.rows(), 2)};
  d.x1y << x.col(0), y.cast<double>();
  d.x2y << x.col(1), y.cast<double>();
  return d;
}

MultimodalVariant parse_multimodal_variant(const std::string& name) {
  if (name == "interaction") return MultimodalVariant::Interaction;
  if (name == "pairwise") return MultimodalVariant::Pairwise;
  throw ConfigError("unknown multimodal variant: " + name);
}

}  // namespace featgeo
