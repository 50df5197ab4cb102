#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "featgeo/autodiff.hpp"

namespace featgeo {

// Differentiable map from a batch of raw inputs (one sample per row) to n x k features.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;

  virtual ad::Var forward(ad::Tape& tape, const Eigen::MatrixXd& input) = 0;
  virtual std::size_t output_dim() const = 0;
  virtual std::vector<ad::Parameter*> parameters() = 0;
  virtual std::unique_ptr<FeatureExtractor> clone() const = 0;
  virtual nlohmann::json architecture() const = 0;

  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& input);
};

using ExtractorPtr = std::shared_ptr<FeatureExtractor>;

// Linear map on one-hot encoded symbols; input column 0 holds the symbol index.
class OneHotLinear : public FeatureExtractor {
 public:
  OneHotLinear(std::size_t in_size, std::size_t k, std::uint64_t seed, std::string name = "onehot");

  ad::Var forward(ad::Tape& tape, const Eigen::MatrixXd& input) override;
  std::size_t output_dim() const override { return k_; }
  std::vector<ad::Parameter*> parameters() override { return {&weight_}; }
  std::unique_ptr<FeatureExtractor> clone() const override { return std::make_unique<OneHotLinear>(*this); }
  nlohmann::json architecture() const override;

  ad::Parameter& weight() { return weight_; }

 private:
  std::size_t in_size_, k_;
  std::uint64_t seed_;
  ad::Parameter weight_;
};

// Fully connected network with softplus on every layer except the last.
class Mlp : public FeatureExtractor {
 public:
  Mlp(std::vector<std::size_t> sizes, std::uint64_t seed, std::string name = "mlp");

  ad::Var forward(ad::Tape& tape, const Eigen::MatrixXd& input) override;
  std::size_t output_dim() const override { return sizes_.back(); }
  std::vector<ad::Parameter*> parameters() override;
  std::unique_ptr<FeatureExtractor> clone() const override { return std::make_unique<Mlp>(*this); }
  nlohmann::json architecture() const override;

  std::vector<ad::Parameter>& layers() { return params_; }

 private:
  std::vector<std::size_t> sizes_;
  std::uint64_t seed_;
  std::vector<ad::Parameter> params_;  // weight, bias per layer
};

// Embedding -> 1-D convolution -> ReLU -> average pooling -> linear head, on symbol sequences.
class Conv1dEncoder : public FeatureExtractor {
 public:
  struct Shape {
    std::size_t vocab = 2;
    std::size_t embed_dim = 4;
    std::size_t kernels = 32;
    std::size_t kernel_size = 4;
    std::size_t k = 1;
  };

  Conv1dEncoder(Shape shape, std::uint64_t seed, std::string name = "conv");

  ad::Var forward(ad::Tape& tape, const Eigen::MatrixXd& input) override;
  std::size_t output_dim() const override { return shape_.k; }
  std::vector<ad::Parameter*> parameters() override;
  std::unique_ptr<FeatureExtractor> clone() const override { return std::make_unique<Conv1dEncoder>(*this); }
  nlohmann::json architecture() const override;

 private:
  Shape shape_;
  std::uint64_t seed_;
  std::vector<ad::Parameter> params_;  // embedding, conv weight, conv bias, head weight, head bias
};

// Applies an inner extractor to a subset of input columns.
class ColumnSelect : public FeatureExtractor {
 public:
  ColumnSelect(ExtractorPtr inner, std::vector<Eigen::Index> cols);

  ad::Var forward(ad::Tape& tape, const Eigen::MatrixXd& input) override;
  std::size_t output_dim() const override { return inner_->output_dim(); }
  std::vector<ad::Parameter*> parameters() override { return inner_->parameters(); }
  std::unique_ptr<FeatureExtractor> clone() const override;
  nlohmann::json architecture() const override;

  const ExtractorPtr& inner() const { return inner_; }

 private:
  ExtractorPtr inner_;
  std::vector<Eigen::Index> cols_;
};

// Sum of several extractors with a common output dimension.
class SumExtractor : public FeatureExtractor {
 public:
  explicit SumExtractor(std::vector<ExtractorPtr> parts);

  ad::Var forward(ad::Tape& tape, const Eigen::MatrixXd& input) override;
  std::size_t output_dim() const override { return parts_.front()->output_dim(); }
  std::vector<ad::Parameter*> parameters() override;
  std::unique_ptr<FeatureExtractor> clone() const override;
  nlohmann::json architecture() const override;

  const std::vector<ExtractorPtr>& parts() const { return parts_; }

 private:
  std::vector<ExtractorPtr> parts_;
};

// Fixed, non-trainable feature map.
class FrozenFeature : public FeatureExtractor {
 public:
  using Fn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;
  FrozenFeature(Fn fn, std::size_t k, std::string description);

  ad::Var forward(ad::Tape& tape, const Eigen::MatrixXd& input) override;
  std::size_t output_dim() const override { return k_; }
  std::vector<ad::Parameter*> parameters() override { return {}; }
  std::unique_ptr<FeatureExtractor> clone() const override { return std::make_unique<FrozenFeature>(*this); }
  nlohmann::json architecture() const override { return {{"type", "frozen"}, {"description", description_}}; }

 private:
  Fn fn_;
  std::size_t k_;
  std::string description_;
};

ExtractorPtr make_mlp(std::size_t in, std::size_t k, std::uint64_t seed, std::size_t width = 32,
                      const std::string& name = "mlp");

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(std::vector<ad::Parameter*> params, AdamOptions opt = {});

  // One bias-corrected update from the accumulated gradients.
  void step();
  void zero_grad();
  long steps() const { return t_; }
  const AdamOptions& options() const { return opt_; }

 private:
  std::vector<ad::Parameter*> params_;
  AdamOptions opt_;
  std::vector<ad::Matrix> m_, v_;
  long t_ = 0;
};

std::vector<ad::Parameter*> collect_parameters(const std::vector<ExtractorPtr>& extractors);
nlohmann::json parameters_to_json(const std::vector<ad::Parameter*>& params);
void parameters_from_json(const std::vector<ad::Parameter*>& params, const nlohmann::json& j);

}  // namespace featgeo
