#include <cmath>

#include "doctest.h"
#include "featgeo/layers.hpp"
#include "featgeo/objectives.hpp"
#include "featgeo/verify.hpp"

using namespace featgeo;
using ad::Matrix;

namespace {

Matrix filled(Eigen::Index r, Eigen::Index c, double start) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::sin(start + 0.7 * static_cast<double>(i));
  return m;
}

}  // namespace

TEST_CASE("half squared norm has the parameter as gradient") {
  ad::Parameter theta("theta", filled(3, 2, 0.1));
  ad::Tape t;
  t.backward(scale(sum(square(t.parameter(theta))), 0.5));
  CHECK((theta.grad - theta.value).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("gradients accumulate across backward passes") {
  ad::Parameter theta("theta", filled(2, 2, 0.3));
  for (int i = 0; i < 2; ++i) {
    ad::Tape t;
    t.backward(sum(t.parameter(theta)));
  }
  CHECK((theta.grad.array() - 2.0).abs().maxCoeff() < 1e-15);
}

TEST_CASE("backward rejects non-scalars and foreign tapes") {
  ad::Parameter theta("theta", filled(2, 2, 0.3));
  ad::Tape a, b;
  const ad::Var v = a.parameter(theta);
  CHECK_THROWS_AS(a.backward(v), GraphError);
  CHECK_THROWS_AS(b.backward(sum(v)), GraphError);
  CHECK_THROWS_AS(a.backward(ad::Var{}), GraphError);
  CHECK_THROWS_AS(add(v, b.constant(filled(2, 2, 0.0))), GraphError);
}

TEST_CASE("elementwise ops check shapes") {
  ad::Tape t;
  CHECK_THROWS_AS(add(t.constant(filled(2, 3, 0)), t.constant(filled(3, 2, 0))), ShapeError);
  CHECK_THROWS_AS(matmul(t.constant(filled(2, 3, 0)), t.constant(filled(2, 3, 0))), ShapeError);
}

TEST_CASE("softplus at zero is log 2") {
  ad::Tape t;
  CHECK(softplus(t.constant(Matrix::Zero(1, 1))).scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  // Large inputs stay finite and linear.
  CHECK(softplus(t.constant(Matrix::Constant(1, 1, 800.0))).scalar() == doctest::Approx(800.0));
}

TEST_CASE("one-hot linear layer selects weight rows") {
  OneHotLinear layer(3, 2, 1);
  layer.weight().value << 1, 2, 3, 4, 5, 6;
  Matrix x(4, 1);
  x << 2, 0, 1, 2;
  const Matrix out = layer.evaluate(x);
  CHECK(out.row(0) == layer.weight().value.row(2));
  CHECK(out.row(1) == layer.weight().value.row(0));
  CHECK(out.row(2) == layer.weight().value.row(1));
  Matrix bad(1, 1);
  bad << 3;
  CHECK_THROWS_AS(layer.evaluate(bad), BadSample);
}

TEST_CASE("mlp with zero weights outputs its last bias") {
  Mlp net({2, 4, 3}, 5);
  for (auto& p : net.layers()) p.value.setZero();
  net.layers().back().value << 0.5, -1.0, 2.0;
  const Matrix out = net.evaluate(filled(5, 2, 0.2));
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(out.row(i) == net.layers().back().value);
  CHECK_THROWS_AS(net.evaluate(filled(5, 3, 0.2)), ShapeError);
}

TEST_CASE("initialisation is seeded and bounded by fan-in") {
  Mlp a({3, 32, 1}, 9), b({3, 32, 1}, 9), c({3, 32, 1}, 10);
  CHECK(a.layers()[0].value == b.layers()[0].value);
  CHECK(a.layers()[0].value != c.layers()[0].value);
  CHECK(a.layers()[0].value.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(3.0));
  CHECK(a.layers()[2].value.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(32.0));
}

TEST_CASE("conv encoder output shape") {
  Conv1dEncoder enc(Conv1dEncoder::Shape{}, 3);
  Matrix seqs = Matrix::Zero(4, 8);
  seqs(1, 3) = 1;
  const Matrix out = enc.evaluate(seqs);
  CHECK(out.rows() == 4);
  CHECK(out.cols() == 1);
  CHECK_THROWS_AS(enc.evaluate(Matrix::Zero(2, 3)), ShapeError);
}

TEST_CASE("finite differences agree with reverse mode") {
  SUBCASE("h-score with respect to the feature values") {
    ad::Parameter f("f", filled(5, 2, 0.0)), g("g", filled(5, 2, 1.0));
    CHECK(gradient_check({&f, &g}, [&](ad::Tape& t) { return h_score(t.parameter(f), t.parameter(g)); }) < 1e-5);
  }
  SUBCASE("conv encoder on a length-8 binary sequence") {
    Conv1dEncoder::Shape s;
    s.kernels = 5;
    auto enc = std::make_shared<Conv1dEncoder>(s, 4);
    Matrix seq(2, 8);
    seq << 0, 1, 1, 0, 1, 0, 0, 1, 1, 1, 1, 0, 0, 0, 1, 0;
    const Matrix w = filled(2, 1, 0.4);
    CHECK(gradient_check(enc->parameters(), [&](ad::Tape& t) {
            return sum(mul(enc->forward(t, seq), t.constant(w)));
          }) < 1e-5);
  }
  SUBCASE("every primitive") {
    ad::Parameter a("a", filled(4, 3, 0.1)), b("b", filled(3, 4, 0.9)), row("row", filled(1, 3, 2.0));
    const Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(4, 0.5, 2.0);
    CHECK(gradient_check({&a, &b, &row}, [&](ad::Tape& t) {
            const ad::Var A = t.parameter(a), B = t.parameter(b), R = t.parameter(row);
            ad::Var x = add_row(A, R);
            x = mul(softplus(x), relu(add_scalar(x, 0.3)));
            x = scale_rows(x, w);
            ad::Var y = matmul(x, B);
            y = ad::concat_cols({slice_cols(y, 1, 2), transpose(matmul(A, B))});
            ad::Var z = add(col_mean(square(y)), scale(col_mean(y), -0.5));
            return add(sum(z), mean(square(sub(gather_rows(A, {3, 0}), group_mean(A, 2)))));
          }) < 1e-5);
  }
  SUBCASE("log-softmax pick and windowing") {
    ad::Parameter logits("logits", filled(3, 4, 0.2)), emb("emb", filled(2, 3, 0.5));
    Eigen::MatrixXi sym(2, 5);
    sym << 0, 1, 1, 0, 1, 1, 1, 0, 0, 0;
    CHECK(gradient_check({&logits, &emb}, [&](ad::Tape& t) {
            const ad::Var lp = log_softmax_pick(t.parameter(logits), {3, 0, 2});
            const ad::Var win = group_mean(square(window_embed(t.parameter(emb), sym, 2)), 4);
            return add(sum(lp), sum(win));
          }) < 1e-5);
  }
}

TEST_CASE("adam update") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    ad::Parameter p("p", filled(2, 2, 0.0));
    const Matrix before = p.value;
    Adam opt({&p});
    opt.step();
    CHECK(p.value == before);
  }
  SUBCASE("first step moves by the learning rate") {
    ad::Parameter p("p", Matrix::Constant(1, 1, 0.7));
    Adam opt({&p});
    p.grad.setConstant(1.0);
    opt.step();
    // Bias-corrected: m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
    CHECK(p.value(0, 0) == doctest::Approx(0.7 - 1e-3 / (1.0 + 1e-8)).epsilon(1e-14));
  }
  SUBCASE("two steps on a parabola shrink the parameter") {
    ad::Parameter p("p", Matrix::Constant(1, 1, 1.0));
    Adam opt({&p}, AdamOptions{0.1});
    for (int i = 0; i < 2; ++i) {
      opt.zero_grad();
      ad::Tape t;
      t.backward(sum(square(t.parameter(p))));
      opt.step();
    }
    CHECK(std::abs(p.value(0, 0)) < 1.0);
    CHECK(opt.steps() == 2);
  }
}

TEST_CASE("parameters round-trip through json") {
  auto a = std::make_shared<Mlp>(std::vector<std::size_t>{1, 4, 2}, 1, "f");
  auto b = std::make_shared<Mlp>(std::vector<std::size_t>{1, 4, 2}, 2, "f");
  const nlohmann::json j = parameters_to_json(collect_parameters({a}));
  parameters_from_json(collect_parameters({b}), j);
  CHECK(a->evaluate(filled(3, 1, 0.0)) == b->evaluate(filled(3, 1, 0.0)));
}
