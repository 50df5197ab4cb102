#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "featgeo/errors.hpp"

namespace featgeo::ad {

using Matrix = Eigen::MatrixXd;

// A trainable tensor that outlives any single tape.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix v);
  Var parameter(Parameter& p);
  Var record(Matrix value, const std::vector<Var>& parents, Backward fn);

  // Reverse sweep from a scalar; parameter gradients are accumulated (+=).
  void backward(const Var& loss);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  void accumulate(std::size_t id, const Matrix& g);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
  };
  std::deque<Node> nodes_;
};

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var add_row(const Var& a, const Var& row);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
Var col_mean(const Var& a);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var concat_cols(const std::vector<Var>& parts);
Var softplus(const Var& a);
Var relu(const Var& a);
Var square(const Var& a);
// Multiplies row i by the constant w[i].
Var scale_rows(const Var& a, const Eigen::VectorXd& w);
// Row i of the result is row idx[i] of w.
Var gather_rows(const Var& w, const std::vector<Eigen::Index>& idx);
// Per-row log-softmax evaluated at label[i].
Var log_softmax_pick(const Var& logits, const std::vector<Eigen::Index>& label);
// Sliding windows over embedded symbol sequences: row (i, t) concatenates the embeddings of
// symbols[i, t .. t + width). Result has n * (L - width + 1) rows and width * embed_dim columns.
Var window_embed(const Var& embedding, const Eigen::MatrixXi& symbols, Eigen::Index width);
// Mean over consecutive groups of `group` rows.
Var group_mean(const Var& a, Eigen::Index group);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(double c, const Var& a);

}  // namespace featgeo::ad
