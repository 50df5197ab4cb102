#include "featgeo/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace featgeo {

namespace {

using ad::Var;

std::vector<Eigen::Index> index_column(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
  std::vector<Eigen::Index> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out[i] = static_cast<Eigen::Index>(std::llround(m(static_cast<Eigen::Index>(idx[i]), 0)));
  return out;
}

std::vector<std::size_t> iota_vec(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

// Second moments under weights (uniform when w is empty).
Eigen::VectorXd second_moments(const Eigen::MatrixXd& v, const Eigen::VectorXd& w) {
  if (w.size() == 0) return v.array().square().colwise().mean().transpose();
  return (v.array().square().colwise() * w.array()).colwise().sum().transpose();
}

LearnedModes modes_from(const ExtractorPtr& f, const ExtractorPtr& g, const Eigen::MatrixXd& x_inputs,
                        const Eigen::VectorXd& wx, const Eigen::MatrixXd& y_inputs, const Eigen::VectorXd& wy) {
  const Eigen::VectorXd ef = second_moments(evaluate_batched(*f, x_inputs), wx);
  const Eigen::VectorXd eg = second_moments(evaluate_batched(*g, y_inputs), wy);
  if (ef.size() != eg.size()) throw ShapeError("paired extractors differ in output dimension");
  LearnedModes m;
  m.f_raw = f;
  m.g_raw = g;
  m.sigmas.resize(ef.size());
  m.f_scale.resize(ef.size());
  m.g_scale.resize(ef.size());
  for (Eigen::Index i = 0; i < ef.size(); ++i) {
    if (!(ef[i] > 1e-12) || !(eg[i] > 1e-12))
      throw DegenerateFeature("learned feature " + std::to_string(i) + " has zero variance");
    m.sigmas[i] = std::sqrt(ef[i] * eg[i]);
    m.f_scale[i] = 1.0 / std::sqrt(ef[i]);
    m.g_scale[i] = 1.0 / std::sqrt(eg[i]);
  }
  return m;
}

LearnedModes empty_modes() {
  LearnedModes m;
  m.sigmas.resize(0);
  m.f_scale.resize(0);
  m.g_scale.resize(0);
  return m;
}

NestingConfig levels(std::size_t kbar, std::size_t k) {
  return k == 0 ? NestingConfig::single(kbar) : NestingConfig::two_level(kbar, k);
}

}  // namespace

Eigen::MatrixXd LearnedModes::left(const Eigen::MatrixXd& x_inputs) const {
  return evaluate_batched(*f_raw, x_inputs) * f_scale.asDiagonal();
}

Eigen::MatrixXd LearnedModes::right(const Eigen::MatrixXd& y_inputs) const {
  return evaluate_batched(*g_raw, y_inputs) * g_scale.asDiagonal();
}

void LearnedModes::align_signs(const Eigen::MatrixXd& x_inputs, const Eigen::MatrixXd& reference_left) {
  const Eigen::MatrixXd f = left(x_inputs);
  if (reference_left.rows() != f.rows() || reference_left.cols() < f.cols())
    throw ShapeError("reference features do not cover the learned ones");
  for (Eigen::Index i = 0; i < f.cols(); ++i) {
    if (f.col(i).dot(reference_left.col(i)) < 0.0) {
      f_scale[i] = -f_scale[i];
      g_scale[i] = -g_scale[i];
    }
  }
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

Eigen::MatrixXd evaluate_batched(FeatureExtractor& e, const Eigen::MatrixXd& inputs, Eigen::Index chunk) {
  Eigen::MatrixXd out(inputs.rows(), static_cast<Eigen::Index>(e.output_dim()));
  for (Eigen::Index start = 0; start < inputs.rows(); start += chunk) {
    const Eigen::Index len = std::min(chunk, inputs.rows() - start);
    out.middleRows(start, len) = e.evaluate(inputs.middleRows(start, len));
  }
  return out;
}

TrainLog run_training(const std::vector<ExtractorPtr>& extractors, const std::vector<ad::Parameter*>& extra,
                      const std::vector<std::size_t>& stream_sizes, const TrainConfig& cfg,
                      const BatchObjective& objective) {
  if (stream_sizes.empty()) throw EmptyData("no training data streams");
  for (std::size_t n : stream_sizes)
    if (n == 0) throw EmptyData("empty training stream");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");

  std::vector<ad::Parameter*> params = collect_parameters(extractors);
  params.insert(params.end(), extra.begin(), extra.end());
  Adam opt(params, cfg.adam);

  std::vector<std::mt19937_64> rngs;
  std::vector<std::vector<std::size_t>> perms;
  for (std::size_t s = 0; s < stream_sizes.size(); ++s) {
    rngs.emplace_back(cfg.seed * 0x9E3779B97F4A7C15ULL + s + 1);
    perms.push_back(iota_vec(stream_sizes[s]));
  }
  const std::size_t n0 = stream_sizes[0];
  const std::size_t steps_per_epoch = (n0 + cfg.batch_size - 1) / cfg.batch_size;

  TrainLog log;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t s = 0; s < perms.size(); ++s) std::shuffle(perms[s].begin(), perms[s].end(), rngs[s]);
    double acc = 0.0;
    std::size_t counted = 0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      std::vector<std::vector<std::size_t>> batches(perms.size());
      bool too_small = false;
      for (std::size_t s = 0; s < perms.size(); ++s) {
        const std::size_t n = perms[s].size();
        // Streams shorter than the first wrap around.
        const std::size_t begin = (step * cfg.batch_size) % n;
        const std::size_t len = std::min(cfg.batch_size, s == 0 ? n - begin : n);
        batches[s].reserve(len);
        for (std::size_t i = 0; i < len; ++i) batches[s].push_back(perms[s][(begin + i) % n]);
        if (len < 2) too_small = true;
      }
      if (too_small) continue;
      ad::Tape tape;
      const Var obj = objective(tape, batches);
      const double value = obj.scalar();
      if (!std::isfinite(value))
        throw TrainingDiverged("non-finite objective at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      tape.backward(ad::scale(obj, -1.0));
      opt.step();
      opt.zero_grad();
      acc += value;
      ++counted;
    }
    log.epoch_objective.push_back(counted ? acc / static_cast<double>(counted) : 0.0);
  }
  log.steps = opt.steps();
  return log;
}

LearnedModes extract_modes(const ExtractorPtr& f, const ExtractorPtr& g, const Eigen::MatrixXd& x_inputs,
                           const Eigen::MatrixXd& y_inputs) {
  if (x_inputs.rows() == 0 || y_inputs.rows() == 0) throw EmptyData("no samples to normalise features");
  return modes_from(f, g, x_inputs, Eigen::VectorXd(), y_inputs, Eigen::VectorXd());
}

LearnedModes train_modal(const PairData& data, std::size_t k, const TrainConfig& cfg, const ExtractorPtr& f,
                         const ExtractorPtr& g) {
  if (f->output_dim() != k || g->output_dim() != k) throw ConfigError("extractors must output k features");
  const NestingConfig config = NestingConfig::modes(k);
  TrainLog log = run_training({f, g}, {}, {data.size()}, cfg, [&](ad::Tape& t, const auto& b) {
    return nested_h_score(f->forward(t, take_rows(data.x, b[0])), g->forward(t, take_rows(data.y, b[0])), config);
  });
  LearnedModes m = extract_modes(f, g, data.x, data.y);
  m.log = std::move(log);
  return m;
}

LearnedModes train_orthogonal(const PairData& data, const ExtractorPtr& phi, std::size_t kbar, std::size_t k,
                              const TrainConfig& cfg, const ExtractorPtr& gbar, const ExtractorPtr& f,
                              const ExtractorPtr& g) {
  if (phi->output_dim() != kbar || gbar->output_dim() != kbar) throw ConfigError("fixed feature dimension mismatch");
  if (f->output_dim() != k || g->output_dim() != k) throw ConfigError("residual extractors must output k features");
  // Residual dimensions are ordered by adding one prefix per extra feature.
  NestingConfig config;
  config.dims.push_back(kbar);
  for (std::size_t i = 0; i < k; ++i) config.dims.push_back(1);
  TrainLog log = run_training({phi, gbar, f, g}, {}, {data.size()}, cfg, [&](ad::Tape& t, const auto& b) {
    const Eigen::MatrixXd xb = take_rows(data.x, b[0]);
    const Eigen::MatrixXd yb = take_rows(data.y, b[0]);
    return nested_h_score(ad::concat_cols({phi->forward(t, xb), f->forward(t, xb)}),
                          ad::concat_cols({gbar->forward(t, yb), g->forward(t, yb)}), config);
  });
  LearnedModes m = extract_modes(f, g, data.x, data.y);
  m.log = std::move(log);
  return m;
}

std::pair<LearnedModes, LearnedModes> train_side_info(const TripleData& data, std::size_t nx, std::size_t ns,
                                                      std::size_t ny, std::size_t kbar, std::size_t k,
                                                      const TrainConfig& cfg) {
  if (data.size() == 0) throw EmptyData("no triples");
  const std::uint64_t s = cfg.seed;
  ExtractorPtr fbar = std::make_shared<OneHotLinear>(nx, kbar, s + 11, "fbar");
  ExtractorPtr gbar = std::make_shared<OneHotLinear>(ns, kbar, s + 12, "gbar");
  ExtractorPtr f = std::make_shared<OneHotLinear>(nx, k, s + 13, "f");
  ExtractorPtr g = std::make_shared<OneHotLinear>(ns * ny, k, s + 14, "g");
  Eigen::MatrixXd sy = data.s * static_cast<double>(ny) + data.y;
  const NestingConfig config = levels(kbar, k);
  TrainLog log = run_training({fbar, gbar, f, g}, {}, {data.size()}, cfg, [&](ad::Tape& t, const auto& b) {
    const Eigen::MatrixXd xb = take_rows(data.x, b[0]);
    return nested_h_score(ad::concat_cols({fbar->forward(t, xb), f->forward(t, xb)}),
                          ad::concat_cols({gbar->forward(t, take_rows(data.s, b[0])), g->forward(t, take_rows(sy, b[0]))}),
                          config);
  });
  LearnedModes markov = extract_modes(fbar, gbar, data.x, data.s);
  LearnedModes cond = extract_modes(f, g, data.x, sy);
  markov.log = log;
  cond.log = std::move(log);
  return {std::move(markov), std::move(cond)};
}

MultiheadModel train_multihead(const TripleData& data, std::size_t nx, std::size_t ns, std::size_t ny,
                               std::size_t k, const TrainConfig& cfg) {
  if (data.size() == 0) throw EmptyData("no triples");
  std::mt19937_64 rng(cfg.seed + 21);
  const double bound = 1.0 / std::sqrt(static_cast<double>(k));
  std::uniform_real_distribution<double> u(-bound, bound);
  Eigen::MatrixXd w(static_cast<Eigen::Index>(ns * ny), static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  Eigen::MatrixXd b(1, static_cast<Eigen::Index>(ns * ny));
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = u(rng);
  MultiheadModel model{std::make_shared<OneHotLinear>(nx, k, cfg.seed + 22, "f"), ad::Parameter("heads", w),
                       ad::Parameter("head_bias", b), {}};
  model.log = run_training({model.f}, {&model.weights, &model.bias}, {data.size()}, cfg,
                           [&](ad::Tape& t, const auto& bt) {
                             return softmax_log_likelihood(model.f->forward(t, take_rows(data.x, bt[0])),
                                                           t.parameter(model.weights), t.parameter(model.bias),
                                                           index_column(data.y, bt[0]), index_column(data.s, bt[0]), ns);
                           });
  return model;
}

MultimodalModes train_multimodal_complete(const PairData& data, std::size_t kbar, std::size_t k,
                                          const TrainConfig& cfg, const MultimodalExtractors& ext) {
  ExtractorPtr fbar = std::make_shared<SumExtractor>(std::vector<ExtractorPtr>{
      std::make_shared<ColumnSelect>(ext.fbar1, std::vector<Eigen::Index>{0}),
      std::make_shared<ColumnSelect>(ext.fbar2, std::vector<Eigen::Index>{1})});
  const NestingConfig config = levels(kbar, k);
  std::vector<ExtractorPtr> trained{fbar, ext.gbar};
  if (k > 0) {
    trained.push_back(ext.f);
    trained.push_back(ext.g);
  }
  TrainLog log = run_training(trained, {}, {data.size()}, cfg, [&](ad::Tape& t, const auto& b) {
    const Eigen::MatrixXd xb = take_rows(data.x, b[0]);
    const Eigen::MatrixXd yb = take_rows(data.y, b[0]);
    if (k == 0) return nested_h_score(fbar->forward(t, xb), ext.gbar->forward(t, yb), config);
    return nested_h_score(ad::concat_cols({fbar->forward(t, xb), ext.f->forward(t, xb)}),
                          ad::concat_cols({ext.gbar->forward(t, yb), ext.g->forward(t, yb)}), config);
  });
  MultimodalModes out{extract_modes(fbar, ext.gbar, data.x, data.y), empty_modes(), ext.fbar1, ext.fbar2};
  if (k > 0) out.interaction = extract_modes(ext.f, ext.g, data.x, data.y);
  out.bivariate.log = log;
  out.interaction.log = std::move(log);
  return out;
}

MultimodalModes train_multimodal_pairwise(const Eigen::MatrixXd& d12, const PairData& d1, const PairData& d2,
                                          std::size_t kbar, const TrainConfig& cfg, const MultimodalExtractors& ext) {
  if (d12.cols() != 2) throw ShapeError("(x1, x2) data needs two columns");
  if (ext.fbar1->output_dim() != kbar || ext.fbar2->output_dim() != kbar || ext.gbar->output_dim() != kbar)
    throw ConfigError("pairwise extractors must output kbar features");
  const Eigen::MatrixXd x1_12 = d12.col(0), x2_12 = d12.col(1);
  TrainLog log = run_training({ext.fbar1, ext.fbar2, ext.gbar}, {}, {d1.size(), d2.size(), static_cast<std::size_t>(d12.rows())},
                              cfg, [&](ad::Tape& t, const auto& b) {
                                return pairwise_h_score(ext.fbar1->forward(t, take_rows(d1.x, b[0])),
                                                        ext.gbar->forward(t, take_rows(d1.y, b[0])),
                                                        ext.fbar2->forward(t, take_rows(d2.x, b[1])),
                                                        ext.gbar->forward(t, take_rows(d2.y, b[1])),
                                                        ext.fbar1->forward(t, take_rows(x1_12, b[2])),
                                                        ext.fbar2->forward(t, take_rows(x2_12, b[2])));
                              });
  ExtractorPtr fbar = std::make_shared<SumExtractor>(std::vector<ExtractorPtr>{
      std::make_shared<ColumnSelect>(ext.fbar1, std::vector<Eigen::Index>{0}),
      std::make_shared<ColumnSelect>(ext.fbar2, std::vector<Eigen::Index>{1})});
  Eigen::MatrixXd ys(d1.y.rows() + d2.y.rows(), d1.y.cols());
  ys << d1.y, d2.y;
  MultimodalModes out{extract_modes(fbar, ext.gbar, d12, ys), empty_modes(), ext.fbar1, ext.fbar2};
  out.bivariate.log = std::move(log);
  return out;
}

Eigen::MatrixXd tabular_cell_inputs(std::size_t n1, std::size_t n2) {
  Eigen::MatrixXd in(static_cast<Eigen::Index>(n1 * n2), 3);
  for (std::size_t a = 0; a < n1; ++a)
    for (std::size_t b = 0; b < n2; ++b) {
      const auto r = static_cast<Eigen::Index>(a * n2 + b);
      in(r, 0) = static_cast<double>(a);
      in(r, 1) = static_cast<double>(b);
      in(r, 2) = static_cast<double>(r);
    }
  return in;
}

MultimodalModes train_multimodal_heterogeneous(const HeterogeneousTables& tables, std::size_t n1, std::size_t n2,
                                               std::size_t kbar, std::size_t k,
                                               const std::optional<Eigen::MatrixXd>& tau1,
                                               const std::optional<Eigen::MatrixXd>& tau2, const TrainConfig& cfg) {
  const auto ny = static_cast<std::size_t>(tables.ry.size());
  if (tables.p0.rows() != static_cast<Eigen::Index>(n1 * n2)) throw ShapeError("joint table rows must be |X1||X2|");
  const std::uint64_t s = cfg.seed;
  ExtractorPtr fbar1 = std::make_shared<OneHotLinear>(n1, kbar, s + 31, "fbar1");
  ExtractorPtr fbar2 = std::make_shared<OneHotLinear>(n2, kbar, s + 32, "fbar2");
  ExtractorPtr fbar = std::make_shared<SumExtractor>(std::vector<ExtractorPtr>{
      std::make_shared<ColumnSelect>(fbar1, std::vector<Eigen::Index>{0}),
      std::make_shared<ColumnSelect>(fbar2, std::vector<Eigen::Index>{1})});
  ExtractorPtr gbar = std::make_shared<OneHotLinear>(ny, kbar, s + 33, "gbar");
  std::vector<ExtractorPtr> trained{fbar, gbar};
  ExtractorPtr f, g;
  if (k > 0) {
    f = std::make_shared<ColumnSelect>(std::make_shared<OneHotLinear>(n1 * n2, k, s + 34, "f"), std::vector<Eigen::Index>{2});
    g = std::make_shared<OneHotLinear>(ny, k, s + 35, "g");
    trained.push_back(f);
    trained.push_back(g);
  }
  const Eigen::MatrixXd cells = tabular_cell_inputs(n1, n2);
  Eigen::MatrixXd ycells(static_cast<Eigen::Index>(ny), 1);
  for (std::size_t y = 0; y < ny; ++y) ycells(static_cast<Eigen::Index>(y), 0) = static_cast<double>(y);
  const NestingConfig config = levels(kbar, k);
  TrainConfig full = cfg;
  full.batch_size = 2;  // a single dummy stream of two items gives one step per epoch
  TrainLog log = run_training(trained, {}, {2}, full, [&](ad::Tape& t, const auto&) {
    Var fv = fbar->forward(t, cells), gv = gbar->forward(t, ycells);
    if (k > 0) {
      fv = ad::concat_cols({fv, f->forward(t, cells)});
      gv = ad::concat_cols({gv, g->forward(t, ycells)});
    }
    return hm_score(fv, gv, tables, tau1, tau2, config);
  });
  MultimodalModes out{modes_from(fbar, gbar, cells, tables.rx, ycells, tables.ry), empty_modes(), fbar1, fbar2};
  if (k > 0) out.interaction = modes_from(f, g, cells, tables.rx, ycells, tables.ry);
  out.bivariate.log = log;
  out.interaction.log = std::move(log);
  return out;
}

TrainLog train_conditional_expectation(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                                       const TrainConfig& cfg, const ExtractorPtr& regressor) {
  if (inputs.rows() != targets.rows()) throw ShapeError("one target row per input row");
  if (regressor->output_dim() != static_cast<std::size_t>(targets.cols())) throw ShapeError("regressor width");
  // Ascent on the negative mean squared error.
  return run_training({regressor}, {}, {static_cast<std::size_t>(inputs.rows())}, cfg, [&](ad::Tape& t, const auto& b) {
    const Var err = ad::sub(regressor->forward(t, take_rows(inputs, b[0])), t.constant(take_rows(targets, b[0])));
    return ad::scale(ad::mean(ad::square(err)), -static_cast<double>(targets.cols()));
  });
}

}  // namespace featgeo
