#include "featgeo/layers.hpp"

#include <cmath>

namespace featgeo {

namespace {

ad::Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  std::uniform_real_distribution<double> u(-bound, bound);
  ad::Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  return m;
}

std::vector<Eigen::Index> symbol_column(const Eigen::MatrixXd& input, std::size_t in_size) {
  if (input.cols() != 1) throw ShapeError("one-hot input must be a single index column");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(input.rows()));
  for (Eigen::Index i = 0; i < input.rows(); ++i) {
    const double v = input(i, 0);
    if (v < 0.0 || v >= static_cast<double>(in_size) || v != std::floor(v)) throw BadSample("symbol index out of range");
    idx[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(v);
  }
  return idx;
}

}  // namespace

Eigen::MatrixXd FeatureExtractor::evaluate(const Eigen::MatrixXd& input) {
  ad::Tape tape;
  return forward(tape, input).value();
}

// ---------------------------------------------------------------------------

OneHotLinear::OneHotLinear(std::size_t in_size, std::size_t k, std::uint64_t seed, std::string name)
    : in_size_(in_size), k_(k), seed_(seed), weight_(name + ".weight", ad::Matrix()) {
  if (in_size == 0 || k == 0) throw ShapeError("one-hot layer needs positive sizes");
  std::mt19937_64 rng(seed);
  weight_.value = uniform_init(static_cast<Eigen::Index>(in_size), static_cast<Eigen::Index>(k),
                               static_cast<double>(in_size), rng);
  weight_.zero_grad();
}

ad::Var OneHotLinear::forward(ad::Tape& tape, const Eigen::MatrixXd& input) {
  return ad::gather_rows(tape.parameter(weight_), symbol_column(input, in_size_));
}

nlohmann::json OneHotLinear::architecture() const {
  return {{"type", "onehot_linear"}, {"in_size", in_size_}, {"k", k_}, {"seed", seed_}, {"name", weight_.name}};
}

// ---------------------------------------------------------------------------

Mlp::Mlp(std::vector<std::size_t> sizes, std::uint64_t seed, std::string name) : sizes_(std::move(sizes)), seed_(seed) {
  if (sizes_.size() < 2) throw ShapeError("MLP needs input and output sizes");
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(sizes_[l]), out = static_cast<Eigen::Index>(sizes_[l + 1]);
    if (in == 0 || out == 0) throw ShapeError("MLP layer sizes must be positive");
    const std::string tag = name + "." + std::to_string(l);
    params_.emplace_back(tag + ".weight", uniform_init(in, out, static_cast<double>(in), rng));
    params_.emplace_back(tag + ".bias", uniform_init(1, out, static_cast<double>(in), rng));
  }
}

ad::Var Mlp::forward(ad::Tape& tape, const Eigen::MatrixXd& input) {
  if (input.cols() != static_cast<Eigen::Index>(sizes_.front())) throw ShapeError("MLP input width mismatch");
  ad::Var h = tape.constant(input);
  const std::size_t layers = params_.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    h = ad::add_row(ad::matmul(h, tape.parameter(params_[2 * l])), tape.parameter(params_[2 * l + 1]));
    if (l + 1 < layers) h = ad::softplus(h);
  }
  return h;
}

std::vector<ad::Parameter*> Mlp::parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

nlohmann::json Mlp::architecture() const {
  return {{"type", "mlp"}, {"sizes", sizes_}, {"activation", "softplus"}, {"seed", seed_}};
}

// ---------------------------------------------------------------------------

Conv1dEncoder::Conv1dEncoder(Shape shape, std::uint64_t seed, std::string name) : shape_(shape), seed_(seed) {
  if (shape.vocab == 0 || shape.embed_dim == 0 || shape.kernels == 0 || shape.kernel_size == 0 || shape.k == 0)
    throw ShapeError("conv encoder sizes must be positive");
  std::mt19937_64 rng(seed);
  const auto v = static_cast<Eigen::Index>(shape.vocab), c = static_cast<Eigen::Index>(shape.embed_dim);
  const auto j = static_cast<Eigen::Index>(shape.kernels), w = static_cast<Eigen::Index>(shape.kernel_size);
  const auto k = static_cast<Eigen::Index>(shape.k);
  const double conv_fan = static_cast<double>(w * c);
  params_.emplace_back(name + ".embed", uniform_init(v, c, static_cast<double>(v), rng));
  params_.emplace_back(name + ".conv.weight", uniform_init(w * c, j, conv_fan, rng));
  params_.emplace_back(name + ".conv.bias", uniform_init(1, j, conv_fan, rng));
  params_.emplace_back(name + ".head.weight", uniform_init(j, k, static_cast<double>(j), rng));
  params_.emplace_back(name + ".head.bias", uniform_init(1, k, static_cast<double>(j), rng));
}

ad::Var Conv1dEncoder::forward(ad::Tape& tape, const Eigen::MatrixXd& input) {
  const auto width = static_cast<Eigen::Index>(shape_.kernel_size);
  if (input.cols() < width) throw ShapeError("sequence shorter than the kernel");
  const Eigen::MatrixXi symbols = input.cast<int>();
  if ((symbols.cast<double>() - input).cwiseAbs().maxCoeff() > 0.0) throw BadSample("non-integer symbol");
  const Eigen::Index steps = input.cols() - width + 1;
  ad::Var windows = ad::window_embed(tape.parameter(params_[0]), symbols, width);
  ad::Var conv = ad::relu(ad::add_row(ad::matmul(windows, tape.parameter(params_[1])), tape.parameter(params_[2])));
  ad::Var pooled = ad::group_mean(conv, steps);
  return ad::add_row(ad::matmul(pooled, tape.parameter(params_[3])), tape.parameter(params_[4]));
}

std::vector<ad::Parameter*> Conv1dEncoder::parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

nlohmann::json Conv1dEncoder::architecture() const {
  return {{"type", "conv1d"},       {"vocab", shape_.vocab}, {"embed_dim", shape_.embed_dim},
          {"kernels", shape_.kernels}, {"kernel_size", shape_.kernel_size}, {"k", shape_.k},
          {"seed", seed_}};
}

// ---------------------------------------------------------------------------

ColumnSelect::ColumnSelect(ExtractorPtr inner, std::vector<Eigen::Index> cols)
    : inner_(std::move(inner)), cols_(std::move(cols)) {
  if (!inner_ || cols_.empty()) throw ShapeError("column selection needs an extractor and columns");
}

ad::Var ColumnSelect::forward(ad::Tape& tape, const Eigen::MatrixXd& input) {
  Eigen::MatrixXd sub(input.rows(), static_cast<Eigen::Index>(cols_.size()));
  for (std::size_t j = 0; j < cols_.size(); ++j) {
    if (cols_[j] < 0 || cols_[j] >= input.cols()) throw ShapeError("selected column out of range");
    sub.col(static_cast<Eigen::Index>(j)) = input.col(cols_[j]);
  }
  return inner_->forward(tape, sub);
}

std::unique_ptr<FeatureExtractor> ColumnSelect::clone() const {
  return std::make_unique<ColumnSelect>(ExtractorPtr(inner_->clone()), cols_);
}

nlohmann::json ColumnSelect::architecture() const {
  return {{"type", "columns"}, {"columns", cols_}, {"inner", inner_->architecture()}};
}

SumExtractor::SumExtractor(std::vector<ExtractorPtr> parts) : parts_(std::move(parts)) {
  if (parts_.empty()) throw ShapeError("sum of no extractors");
  for (const auto& p : parts_)
    if (p->output_dim() != parts_.front()->output_dim()) throw ShapeError("summed extractors differ in width");
}

ad::Var SumExtractor::forward(ad::Tape& tape, const Eigen::MatrixXd& input) {
  ad::Var out = parts_.front()->forward(tape, input);
  for (std::size_t i = 1; i < parts_.size(); ++i) out = ad::add(out, parts_[i]->forward(tape, input));
  return out;
}

std::vector<ad::Parameter*> SumExtractor::parameters() { return collect_parameters(parts_); }

std::unique_ptr<FeatureExtractor> SumExtractor::clone() const {
  std::vector<ExtractorPtr> copies;
  for (const auto& p : parts_) copies.emplace_back(p->clone());
  return std::make_unique<SumExtractor>(std::move(copies));
}

nlohmann::json SumExtractor::architecture() const {
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& p : parts_) parts.push_back(p->architecture());
  return {{"type", "sum"}, {"parts", parts}};
}

FrozenFeature::FrozenFeature(Fn fn, std::size_t k, std::string description)
    : fn_(std::move(fn)), k_(k), description_(std::move(description)) {}

ad::Var FrozenFeature::forward(ad::Tape& tape, const Eigen::MatrixXd& input) {
  Eigen::MatrixXd v = fn_(input);
  if (v.rows() != input.rows() || v.cols() != static_cast<Eigen::Index>(k_)) throw ShapeError("frozen feature shape");
  return tape.constant(std::move(v));
}

ExtractorPtr make_mlp(std::size_t in, std::size_t k, std::uint64_t seed, std::size_t width, const std::string& name) {
  return std::make_shared<Mlp>(std::vector<std::size_t>{in, width, width, k}, seed, name);
}

// ---------------------------------------------------------------------------

Adam::Adam(std::vector<ad::Parameter*> params, AdamOptions opt) : params_(std::move(params)), opt_(opt) {
  for (auto* p : params_) {
    m_.push_back(ad::Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(ad::Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ad::Parameter& p = *params_[i];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) throw ShapeError("gradient shape");
    m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * p.grad;
    v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= opt_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + opt_.eps);
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

std::vector<ad::Parameter*> collect_parameters(const std::vector<ExtractorPtr>& extractors) {
  std::vector<ad::Parameter*> out;
  for (const auto& e : extractors)
    for (auto* p : e->parameters()) out.push_back(p);
  return out;
}

nlohmann::json parameters_to_json(const std::vector<ad::Parameter*>& params) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto* p : params) {
    std::vector<double> flat;
    for (Eigen::Index r = 0; r < p->value.rows(); ++r)
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) flat.push_back(p->value(r, c));
    j[p->name] = {{"rows", p->value.rows()}, {"cols", p->value.cols()}, {"values", flat}};
  }
  return j;
}

void parameters_from_json(const std::vector<ad::Parameter*>& params, const nlohmann::json& j) {
  for (auto* p : params) {
    if (!j.contains(p->name)) throw ShapeError("checkpoint lacks " + p->name);
    const auto& e = j.at(p->name);
    const auto rows = e.at("rows").get<Eigen::Index>(), cols = e.at("cols").get<Eigen::Index>();
    const auto flat = e.at("values").get<std::vector<double>>();
    if (rows != p->value.rows() || cols != p->value.cols() || static_cast<Eigen::Index>(flat.size()) != rows * cols)
      throw ShapeError("checkpoint shape differs for " + p->name);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) p->value(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
  }
}

}  // namespace featgeo
