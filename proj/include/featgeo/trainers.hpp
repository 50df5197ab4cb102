#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "featgeo/layers.hpp"
#include "featgeo/objectives.hpp"

namespace featgeo {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  AdamOptions adam;
};

struct TrainLog {
  std::vector<double> epoch_objective;
  long steps = 0;
  double final_objective() const { return epoch_objective.empty() ? 0.0 : epoch_objective.back(); }
};

struct LearnedModes {
  Eigen::VectorXd sigmas;
  Eigen::VectorXd f_scale;  // per-dimension factor turning raw f into unit second moment
  Eigen::VectorXd g_scale;
  ExtractorPtr f_raw;
  ExtractorPtr g_raw;
  TrainLog log;

  std::size_t size() const { return static_cast<std::size_t>(sigmas.size()); }
  Eigen::MatrixXd left(const Eigen::MatrixXd& x_inputs) const;
  Eigen::MatrixXd right(const Eigen::MatrixXd& y_inputs) const;
  // Flip (f_i, g_i) pairs so each left feature correlates positively with the reference column.
  void align_signs(const Eigen::MatrixXd& x_inputs, const Eigen::MatrixXd& reference_left);
};

struct PairData {
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
};

// Symbol-valued triples, one index column each.
struct TripleData {
  Eigen::MatrixXd x;
  Eigen::MatrixXd s;
  Eigen::MatrixXd y;
  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
};

struct MultimodalModes {
  LearnedModes bivariate;    // f-bar = f-bar1(x1) + f-bar2(x2) against g-bar(y)
  LearnedModes interaction;  // empty when trained without the interaction level
  ExtractorPtr fbar1;        // acts on an x1 column
  ExtractorPtr fbar2;        // acts on an x2 column
};

struct MultiheadModel {
  ExtractorPtr f;
  ad::Parameter weights;  // (|S||Y|) x k, block s holds head s
  ad::Parameter bias;     // 1 x (|S||Y|)
  TrainLog log;
};

using BatchObjective = std::function<ad::Var(ad::Tape&, const std::vector<std::vector<std::size_t>>&)>;

// Seeded minibatch ascent on `objective`. Each stream s has its own size and shuffle; every step
// draws one batch per stream. Throws TrainingDiverged on a non-finite objective.
TrainLog run_training(const std::vector<ExtractorPtr>& extractors, const std::vector<ad::Parameter*>& extra,
                      const std::vector<std::size_t>& stream_sizes, const TrainConfig& cfg,
                      const BatchObjective& objective);

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx);
Eigen::MatrixXd evaluate_batched(FeatureExtractor& e, const Eigen::MatrixXd& inputs, Eigen::Index chunk = 2048);

LearnedModes extract_modes(const ExtractorPtr& f, const ExtractorPtr& g, const Eigen::MatrixXd& x_inputs,
                           const Eigen::MatrixXd& y_inputs);

LearnedModes train_modal(const PairData& data, std::size_t k, const TrainConfig& cfg, const ExtractorPtr& f,
                         const ExtractorPtr& g);

LearnedModes train_orthogonal(const PairData& data, const ExtractorPtr& phi, std::size_t kbar, std::size_t k,
                              const TrainConfig& cfg, const ExtractorPtr& gbar, const ExtractorPtr& f,
                              const ExtractorPtr& g);

// Returns (Markov modes: f-bar(x) vs g-bar(s); conditional modes: f(x) vs g(s,y)). The right-hand
// inputs of the conditional modes are joint indices s * |Y| + y.
std::pair<LearnedModes, LearnedModes> train_side_info(const TripleData& data, std::size_t nx, std::size_t ns,
                                                      std::size_t ny, std::size_t kbar, std::size_t k,
                                                      const TrainConfig& cfg);

MultiheadModel train_multihead(const TripleData& data, std::size_t nx, std::size_t ns, std::size_t ny,
                               std::size_t k, const TrainConfig& cfg);

struct MultimodalExtractors {
  ExtractorPtr fbar1;  // input: x1 column
  ExtractorPtr fbar2;  // input: x2 column
  ExtractorPtr f;      // input: (x1, x2)
  ExtractorPtr gbar;   // input: y
  ExtractorPtr g;      // input: y
};

// Complete triples; inputs x = (x1, x2), y = label index.
MultimodalModes train_multimodal_complete(const PairData& data, std::size_t kbar, std::size_t k,
                                          const TrainConfig& cfg, const MultimodalExtractors& ext);

// Pairwise datasets only: d12 = ((x1, x2), -), d1 = (x1, y), d2 = (x2, y).
MultimodalModes train_multimodal_pairwise(const Eigen::MatrixXd& d12, const PairData& d1, const PairData& d2,
                                          std::size_t kbar, const TrainConfig& cfg, const MultimodalExtractors& ext);

// Heterogeneous tables with tabular features; each epoch is one full-batch step.
MultimodalModes train_multimodal_heterogeneous(const HeterogeneousTables& tables, std::size_t n1, std::size_t n2,
                                               std::size_t kbar, std::size_t k,
                                               const std::optional<Eigen::MatrixXd>& tau1,
                                               const std::optional<Eigen::MatrixXd>& tau2, const TrainConfig& cfg);

// Inputs of the tabular heterogeneous extractors for every (x1, x2) cell: columns (x1, x2, joint).
Eigen::MatrixXd tabular_cell_inputs(std::size_t n1, std::size_t n2);

TrainLog train_conditional_expectation(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                                       const TrainConfig& cfg, const ExtractorPtr& regressor);

}  // namespace featgeo
