#include "featgeo/autodiff.hpp"

#include <cmath>

namespace featgeo::ad {

namespace {

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw GraphError("variable is not attached to a tape");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  Tape& t = tape_of(a);
  if (&tape_of(b) != &t) throw GraphError("operands live on different tapes");
  return t;
}

void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": operand shapes differ");
}

double softplus_value(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

const Matrix& Var::value() const {
  if (!tape_) throw GraphError("variable is not attached to a tape");
  return tape_->value(id_);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("not a scalar");
  return v(0, 0);
}

Var Tape::constant(Matrix v) {
  nodes_.push_back(Node{std::move(v), {}, nullptr, nullptr, false, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, nullptr, &p, true, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, const std::vector<Var>& parents, Backward fn) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw GraphError("operand lives on a different tape");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : nullptr, nullptr, needs, false});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw GraphError("loss was not recorded on this tape");
  if (loss.value().size() != 1) throw GraphError("backward needs a scalar loss");
  if (!nodes_[loss.id()].requires_grad) throw GraphError("loss does not depend on any parameter");
  for (Node& n : nodes_) n.has_grad = false;
  accumulate(loss.id(), Matrix::Ones(1, 1));
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad) continue;
    if (n.param) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      n.backward(*this, id);
    }
  }
}

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, tp.grad(self));
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, -tp.grad(self));
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "mul");
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self).cwiseProduct(tp.value(ib)));
    tp.accumulate(ib, tp.grad(self).cwiseProduct(tp.value(ia)));
  });
}

Var scale(const Var& a, double c) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  return t.record(c * a.value(), {a}, [ia, c](Tape& tp, std::size_t self) { tp.accumulate(ia, c * tp.grad(self)); });
}

Var add_scalar(const Var& a, double c) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  return t.record(a.value().array() + c, {a}, [ia](Tape& tp, std::size_t self) { tp.accumulate(ia, tp.grad(self)); });
}

Var add_row(const Var& a, const Var& row) {
  Tape& t = tape_of(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: row vector width differs");
  const std::size_t ia = a.id(), ir = row.id();
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return t.record(std::move(out), {a, row}, [ia, ir](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ir, tp.grad(self).colwise().sum());
  });
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(a.value() * b.value(), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, tp.grad(self) * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * tp.grad(self));
  });
}

Var transpose(const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  return t.record(a.value().transpose(), {a},
                  [ia](Tape& tp, std::size_t self) { tp.accumulate(ia, tp.grad(self).transpose()); });
}

Var sum(const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return t.record(Matrix::Constant(1, 1, a.value().sum()), {a}, [ia, r, c](Tape& tp, std::size_t self) {
    tp.accumulate(ia, Matrix::Constant(r, c, tp.grad(self)(0, 0)));
  });
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw ShapeError("mean of an empty matrix");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var col_mean(const Var& a) {
  Tape& t = tape_of(a);
  if (a.rows() == 0) throw ShapeError("col_mean of an empty matrix");
  const std::size_t ia = a.id();
  const Eigen::Index r = a.rows();
  return t.record(a.value().colwise().mean(), {a}, [ia, r](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self).replicate(r, 1) / static_cast<double>(r));
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols out of range");
  const std::size_t ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return t.record(a.value().middleCols(start, count), {a}, [ia, r, c, start, count](Tape& tp, std::size_t self) {
    Matrix g = Matrix::Zero(r, c);
    g.middleCols(start, count) = tp.grad(self);
    tp.accumulate(ia, g);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  Tape& t = tape_of(parts.front());
  const Eigen::Index r = parts.front().rows();
  Eigen::Index total = 0;
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> widths;
  for (const Var& p : parts) {
    if (&tape_of(p) != &t) throw GraphError("operands live on different tapes");
    if (p.rows() != r) throw ShapeError("concat_cols: row counts differ");
    total += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Matrix out(r, total);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return t.record(std::move(out), parts, [ids, widths](Tape& tp, std::size_t self) {
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      tp.accumulate(ids[i], tp.grad(self).middleCols(off, widths[i]));
      off += widths[i];
    }
  });
}

Var softplus(const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  return t.record(a.value().unaryExpr(&softplus_value), {a}, [ia](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self).cwiseProduct(tp.value(ia).unaryExpr(&sigmoid)));
  });
}

Var relu(const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  return t.record(a.value().cwiseMax(0.0), {a}, [ia](Tape& tp, std::size_t self) {
    tp.accumulate(ia, (tp.value(ia).array() > 0.0).select(tp.grad(self), 0.0));
  });
}

Var square(const Var& a) { return mul(a, a); }

Var scale_rows(const Var& a, const Eigen::VectorXd& w) {
  Tape& t = tape_of(a);
  if (w.size() != a.rows()) throw ShapeError("scale_rows: weight count differs from row count");
  const std::size_t ia = a.id();
  return t.record(w.asDiagonal() * a.value(), {a},
                  [ia, w](Tape& tp, std::size_t self) { tp.accumulate(ia, w.asDiagonal() * tp.grad(self)); });
}

Var gather_rows(const Var& w, const std::vector<Eigen::Index>& idx) {
  Tape& t = tape_of(w);
  const Matrix& wv = w.value();
  Matrix out(static_cast<Eigen::Index>(idx.size()), wv.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= wv.rows()) throw BadSample("gather index out of range");
    out.row(static_cast<Eigen::Index>(i)) = wv.row(idx[i]);
  }
  const std::size_t iw = w.id();
  const Eigen::Index r = wv.rows(), c = wv.cols();
  return t.record(std::move(out), {w}, [iw, idx, r, c](Tape& tp, std::size_t self) {
    Matrix g = Matrix::Zero(r, c);
    const Matrix& up = tp.grad(self);
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += up.row(static_cast<Eigen::Index>(i));
    tp.accumulate(iw, g);
  });
}

Var log_softmax_pick(const Var& logits, const std::vector<Eigen::Index>& label) {
  Tape& t = tape_of(logits);
  const Matrix& z = logits.value();
  if (static_cast<Eigen::Index>(label.size()) != z.rows()) throw ShapeError("one label per row required");
  Matrix prob(z.rows(), z.cols());
  Matrix out(z.rows(), 1);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const Eigen::Index y = label[static_cast<std::size_t>(i)];
    if (y < 0 || y >= z.cols()) throw BadSample("label outside the alphabet");
    const double m = z.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (z.row(i).array() - m).exp();
    const double s = e.sum();
    prob.row(i) = e / s;
    out(i, 0) = z(i, y) - m - std::log(s);
  }
  const std::size_t il = logits.id();
  return t.record(std::move(out), {logits}, [il, label, prob](Tape& tp, std::size_t self) {
    Matrix g = -prob;
    for (std::size_t i = 0; i < label.size(); ++i) g(static_cast<Eigen::Index>(i), label[i]) += 1.0;
    tp.accumulate(il, tp.grad(self).col(0).asDiagonal() * g);
  });
}

Var window_embed(const Var& embedding, const Eigen::MatrixXi& symbols, Eigen::Index width) {
  Tape& t = tape_of(embedding);
  const Matrix& e = embedding.value();
  const Eigen::Index n = symbols.rows(), len = symbols.cols(), dim = e.cols();
  if (width < 1 || width > len) throw ShapeError("window width exceeds sequence length");
  if (n > 0 && (symbols.minCoeff() < 0 || symbols.maxCoeff() >= e.rows())) throw BadSample("symbol outside vocabulary");
  const Eigen::Index steps = len - width + 1;
  Matrix out(n * steps, width * dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index s = 0; s < steps; ++s)
      for (Eigen::Index k = 0; k < width; ++k) out.block(i * steps + s, k * dim, 1, dim) = e.row(symbols(i, s + k));
  const std::size_t ie = embedding.id();
  const Eigen::Index vocab = e.rows();
  return t.record(std::move(out), {embedding}, [ie, symbols, width, steps, dim, vocab](Tape& tp, std::size_t self) {
    Matrix g = Matrix::Zero(vocab, dim);
    const Matrix& up = tp.grad(self);
    for (Eigen::Index i = 0; i < symbols.rows(); ++i)
      for (Eigen::Index s = 0; s < steps; ++s)
        for (Eigen::Index k = 0; k < width; ++k)
          g.row(symbols(i, s + k)) += up.block(i * steps + s, k * dim, 1, dim);
    tp.accumulate(ie, g);
  });
}

Var group_mean(const Var& a, Eigen::Index group) {
  Tape& t = tape_of(a);
  if (group < 1 || a.rows() % group != 0) throw ShapeError("group_mean: rows not divisible by group size");
  const Eigen::Index n = a.rows() / group, c = a.cols();
  Matrix out(n, c);
  const Matrix& v = a.value();
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = v.middleRows(i * group, group).colwise().mean();
  const std::size_t ia = a.id();
  return t.record(std::move(out), {a}, [ia, group, n, c](Tape& tp, std::size_t self) {
    Matrix g(n * group, c);
    const Matrix& up = tp.grad(self);
    for (Eigen::Index i = 0; i < n; ++i) g.middleRows(i * group, group) = up.row(i).replicate(group, 1) / static_cast<double>(group);
    tp.accumulate(ia, g);
  });
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(double c, const Var& a) { return scale(a, c); }

}  // namespace featgeo::ad
