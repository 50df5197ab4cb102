#include "featgeo/objectives.hpp"

#include <algorithm>
#include <numeric>

namespace featgeo {

namespace {

using ad::Var;

struct Moments {
  Var cross;  // 1 x k, E[f_i g_i]
  Var mean_f;  // 1 x k
  Var mean_g;  // 1 x k
  Var lambda_f;  // k x k
  Var lambda_g;  // k x k
};

// Sum over prefixes d of [sum_{i<d} (cross_i - mf_i mg_i) - 1/2 sum_{i,j<d} Lf_ij Lg_ij].
Var combine(const Moments& m, const std::vector<std::size_t>& prefixes) {
  const Eigen::Index k = m.cross.cols();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(1, k);
  Eigen::MatrixXd ww = Eigen::MatrixXd::Zero(k, k);
  for (std::size_t d : prefixes)
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(d); ++i) {
      w(0, i) += 1.0;
      for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(d); ++j) ww(i, j) += 1.0;
    }
  ad::Tape& t = *m.cross.tape();
  const Var linear = ad::sum(ad::mul(t.constant(w), ad::sub(m.cross, ad::mul(m.mean_f, m.mean_g))));
  const Var quad = ad::sum(ad::mul(t.constant(ww), ad::mul(m.lambda_f, m.lambda_g)));
  return ad::sub(linear, ad::scale(quad, 0.5));
}

Moments sample_moments(const Var& f, const Var& g) {
  if (f.rows() != g.rows() || f.cols() != g.cols()) throw ShapeError("paired features must share n and k");
  if (f.rows() < 2) throw TooFewSamples("H-score needs at least two samples");
  const double n = static_cast<double>(f.rows());
  return {ad::col_mean(ad::mul(f, g)), ad::col_mean(f), ad::col_mean(g),
          ad::scale(ad::matmul(ad::transpose(f), f), 1.0 / n), ad::scale(ad::matmul(ad::transpose(g), g), 1.0 / n)};
}

Moments tabular_moments(const Var& f, const Var& g, const Eigen::MatrixXd& q, const Eigen::VectorXd& rx,
                        const Eigen::VectorXd& ry) {
  if (f.cols() != g.cols()) throw ShapeError("feature dimensions differ");
  if (q.rows() != f.rows() || q.cols() != g.rows() || rx.size() != f.rows() || ry.size() != g.rows())
    throw ShapeError("weights do not match the feature rows");
  ad::Tape& t = *f.tape();
  const Var ones = t.constant(Eigen::MatrixXd::Ones(1, f.rows()));
  return {ad::matmul(ones, ad::mul(f, ad::matmul(t.constant(q), g))),
          ad::matmul(t.constant(rx.transpose()), f),
          ad::matmul(t.constant(ry.transpose()), g),
          ad::matmul(ad::transpose(f), ad::scale_rows(f, rx)),
          ad::matmul(ad::transpose(g), ad::scale_rows(g, ry))};
}

std::vector<std::size_t> prefixes_for(const NestingConfig& config, Eigen::Index k) {
  if (config.dims.empty()) return {static_cast<std::size_t>(k)};
  config.validate();
  if (config.total() != static_cast<std::size_t>(k)) throw ConfigError("feature dimension differs from the configuration");
  return config.prefixes();
}

Eigen::VectorXd marginal_of_flat(const Eigen::VectorXd& rx, Eigen::Index n1, Eigen::Index n2, int axis) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(axis == 0 ? n1 : n2);
  for (Eigen::Index a = 0; a < n1; ++a)
    for (Eigen::Index b = 0; b < n2; ++b) out[axis == 0 ? a : b] += rx[a * n2 + b];
  return out;
}

}  // namespace

std::size_t NestingConfig::total() const { return std::accumulate(dims.begin(), dims.end(), std::size_t{0}); }

std::vector<std::size_t> NestingConfig::prefixes() const {
  std::vector<std::size_t> out;
  if (refined) {
    for (std::size_t d = 1; d <= total(); ++d) out.push_back(d);
    return out;
  }
  std::size_t acc = 0;
  for (std::size_t d : dims) out.push_back(acc += d);
  return out;
}

void NestingConfig::validate() const {
  if (dims.empty()) throw ConfigError("nesting configuration has no levels");
  for (std::size_t d : dims)
    if (d == 0) throw ConfigError("level dimensions must be positive");
  if (!x_chain.empty()) {
    if (x_chain.size() != dims.size()) throw ConfigError("one subspace per level required");
    for (std::size_t i = 0; i + 1 < x_chain.size(); ++i)
      if (spec_contains(x_chain[i + 1], x_chain[i]) == std::optional<bool>(false))
        throw ConfigError("subspace chain is not increasing");
  }
}

NestingConfig NestingConfig::single(std::size_t k) { return NestingConfig{{k}, {}, Unrestricted{}, false}; }

NestingConfig NestingConfig::modes(std::size_t k) {
  return NestingConfig{std::vector<std::size_t>(k, 1), {}, Unrestricted{}, true};
}

NestingConfig NestingConfig::two_level(std::size_t kbar, std::size_t k, SubspaceSpec inner, SubspaceSpec outer,
                                       SubspaceSpec y) {
  NestingConfig c{{kbar, k}, {std::move(inner), std::move(outer)}, std::move(y), false};
  c.validate();
  return c;
}

Var h_score(const Var& f, const Var& g) {
  return combine(sample_moments(f, g), {static_cast<std::size_t>(f.cols())});
}

Var nested_h_score(const Var& f, const Var& g, const NestingConfig& config) {
  const Moments m = sample_moments(f, g);
  return combine(m, prefixes_for(config, f.cols()));
}

Var h_score_under(const Var& f, const Var& g, const Eigen::MatrixXd& q, const Eigen::VectorXd& rx,
                  const Eigen::VectorXd& ry) {
  return combine(tabular_moments(f, g, q, rx, ry), {static_cast<std::size_t>(f.cols())});
}

Var nested_h_score_under(const Var& f, const Var& g, const Eigen::MatrixXd& q, const Eigen::VectorXd& rx,
                         const Eigen::VectorXd& ry, const NestingConfig& config) {
  return combine(tabular_moments(f, g, q, rx, ry), prefixes_for(config, f.cols()));
}

Var hm_score(const Var& f, const Var& g, const HeterogeneousTables& t, const std::optional<Eigen::MatrixXd>& tau1,
             const std::optional<Eigen::MatrixXd>& tau2, const NestingConfig& config) {
  if (t.eta[1] > 0.0 && !tau1) throw MissingOperator("conditional expectation given X1 is required");
  if (t.eta[2] > 0.0 && !tau2) throw MissingOperator("conditional expectation given X2 is required");
  const Eigen::Index n1 = t.p1.rows(), n2 = t.p2.rows();
  if (t.p0.rows() != n1 * n2 || t.p0.cols() != t.p1.cols() || t.p2.cols() != t.p1.cols())
    throw ShapeError("heterogeneous tables disagree on alphabet sizes");
  Var total = ad::scale(nested_h_score_under(f, g, t.p0, t.rx, t.ry, config), t.eta[0]);
  const std::array<const std::optional<Eigen::MatrixXd>*, 2> taus{&tau1, &tau2};
  const std::array<const Eigen::MatrixXd*, 2> tables{&t.p1, &t.p2};
  for (int i = 0; i < 2; ++i) {
    if (t.eta[static_cast<std::size_t>(i) + 1] == 0.0) continue;
    const Eigen::MatrixXd& tau = **taus[static_cast<std::size_t>(i)];
    if (tau.cols() != f.rows() || tau.rows() != tables[static_cast<std::size_t>(i)]->rows())
      throw ShapeError("conditional expectation operator shape");
    const Var projected = ad::matmul(f.tape()->constant(tau), f);
    const Eigen::VectorXd ri = marginal_of_flat(t.rx, n1, n2, i);
    total = ad::add(total, ad::scale(nested_h_score_under(projected, g, *tables[static_cast<std::size_t>(i)], ri, t.ry, config),
                                     t.eta[static_cast<std::size_t>(i) + 1]));
  }
  return total;
}

Var pairwise_h_score(const Var& f1_on_d1, const Var& g_on_d1, const Var& f2_on_d2, const Var& g_on_d2,
                     const Var& f1_on_d12, const Var& f2_on_d12) {
  if (f1_on_d12.rows() != f2_on_d12.rows() || f1_on_d12.cols() != f2_on_d12.cols())
    throw ShapeError("(x1, x2) batch features must match");
  if (f1_on_d12.rows() < 1) throw TooFewSamples("empty (x1, x2) batch");
  const Var h1 = h_score(f1_on_d1, g_on_d1);
  const Var h2 = h_score(f2_on_d2, g_on_d2);
  const Var cross = ad::scale(ad::matmul(ad::transpose(f1_on_d12), f2_on_d12), 1.0 / static_cast<double>(f1_on_d12.rows()));
  const Var lg1 = ad::scale(ad::matmul(ad::transpose(g_on_d1), g_on_d1), 1.0 / static_cast<double>(g_on_d1.rows()));
  const Var lg2 = ad::scale(ad::matmul(ad::transpose(g_on_d2), g_on_d2), 1.0 / static_cast<double>(g_on_d2.rows()));
  const Var lg = ad::scale(ad::add(lg1, lg2), 0.5);
  // tr(C G) with G symmetric equals the entrywise sum of C o G.
  return ad::sub(ad::add(h1, h2), ad::sum(ad::mul(cross, lg)));
}

Var softmax_log_likelihood(const Var& f, const Var& g, const Var& b, const std::vector<Eigen::Index>& labels,
                           const std::vector<Eigen::Index>& heads, std::size_t n_heads) {
  if (n_heads == 0) throw ShapeError("at least one head");
  if (g.cols() != f.cols()) throw ShapeError("weight width differs from feature dimension");
  if (g.rows() % static_cast<Eigen::Index>(n_heads) != 0 || b.rows() != 1 || b.cols() != g.rows())
    throw ShapeError("weights and biases must stack |Y| entries per head");
  const Eigen::Index ny = g.rows() / static_cast<Eigen::Index>(n_heads);
  if (static_cast<Eigen::Index>(labels.size()) != f.rows()) throw ShapeError("one label per sample");
  if (n_heads > 1 && heads.size() != labels.size()) throw ShapeError("one head index per sample");
  ad::Tape& t = *f.tape();
  Var logits = ad::add_row(ad::matmul(f, ad::transpose(g)), b);
  std::vector<Eigen::Index> picks(labels.size());
  Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(f.rows(), g.rows());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= ny) throw BadSample("label outside the alphabet");
    const Eigen::Index h = n_heads > 1 ? heads[i] : 0;
    if (h < 0 || h >= static_cast<Eigen::Index>(n_heads)) throw BadSample("head index out of range");
    picks[i] = h * ny + labels[i];
    if (n_heads > 1) {
      mask.row(static_cast<Eigen::Index>(i)).setConstant(-1e30);
      mask.block(static_cast<Eigen::Index>(i), h * ny, 1, ny).setZero();
    }
  }
  if (n_heads > 1) logits = ad::add(logits, t.constant(mask));
  return ad::mean(ad::log_softmax_pick(logits, picks));
}

}  // namespace featgeo
