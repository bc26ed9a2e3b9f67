#include "gradcheck.hpp"
#include "vienna/optimizer.hpp"
#include "vienna/serialize.hpp"
#include "vienna/tensor.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

using namespace vienna;
using vienna::testing::max_input_grad_error;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (auto row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

Matrix rand_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace

TEST_CASE("matmul examples") {
  Tape t(false);
  CHECK(matmul(t.constant(Matrix::Identity(2, 2)), t.constant(mat({{1, 2}, {3, 4}}))).value() == mat({{1, 2}, {3, 4}}));
  CHECK(matmul(t.constant(mat({{1, 2}})), t.constant(mat({{0}, {0}}))).value() == mat({{0}}));
  CHECK(matmul(t.constant(mat({{1, 2}, {3, 4}})), t.constant(mat({{5}, {6}}))).value() == mat({{17}, {39}}));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape t;
  try {
    matmul(t.constant(Matrix::Zero(2, 3)), t.constant(Matrix::Zero(2, 3)));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("softmax examples") {
  RowVector u = softmax(RowVector::Zero(3));
  for (int i = 0; i < 3; ++i) CHECK(u(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  RowVector big(2);
  big << 1000.0, 0.0;
  RowVector s = softmax(big);
  CHECK(std::isfinite(s(0)));
  CHECK(s(0) == doctest::Approx(1.0));
  CHECK(s(1) < 1e-300 + 1e-12);

  RowVector x(3);
  x << 1, 2, 3;
  // Direct exp-normalization oracle.
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  RowVector y = softmax(x);
  CHECK(std::abs(y(0) - std::exp(1.0) / z) < 1e-12);
  CHECK(std::abs(y(0) - 0.09003) < 1e-5);
  CHECK(std::abs(y(1) - 0.24473) < 1e-5);
  CHECK(std::abs(y(2) - 0.66524) < 1e-5);

  Tape t(false);
  Var r = softmax_rows(t.constant(mat({{1, 2, 3}, {1000, 0, -5}})));
  CHECK(std::abs(r.value().row(0).sum() - 1.0) < 1e-9);
  CHECK(std::abs(r.value().row(1).sum() - 1.0) < 1e-9);
}

TEST_CASE("softmax output is a simplex point for random inputs") {
  std::mt19937_64 rng(7);
  Tape t(false);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix x = rand_mat(4, 9, rng) * 30.0;
    Matrix y = softmax_rows(t.constant(x)).value();
    CHECK((y.array() >= 0.0).all());
    for (Eigen::Index r = 0; r < y.rows(); ++r) CHECK(std::abs(y.row(r).sum() - 1.0) < 1e-9);
  }
}

TEST_CASE("backward examples") {
  {
    Tape t;
    Var w = t.leaf(mat({{1, 2, 3}}));
    t.backward(sum_all(w));
    CHECK(w.grad() == mat({{1, 1, 1}}));
  }
  {
    Tape t;
    Var w = t.leaf(mat({{1, 2}}));
    t.backward(sum_all(mul(w, w)));
    CHECK(w.grad() == mat({{2, 4}}));
  }
}

TEST_CASE("backward errors") {
  Tape t;
  Var w = t.leaf(mat({{1, 2}}));
  CHECK_THROWS_AS(t.backward(w), DimensionError);
  Var loss = sum_all(w);
  t.backward(loss);
  CHECK_THROWS_AS(t.backward(loss), TapeError);

  Tape other;
  CHECK_THROWS_AS(other.backward(loss), TapeError);
  CHECK_THROWS_AS(Var().value(), TapeError);
}

TEST_CASE("parameters accumulate gradients across uses") {
  Parameter p(mat({{1.0, -2.0}}));
  Tape t;
  Var a = t.param(p);
  Var b = t.param(p);
  t.backward(sum_all(add(mul(a, b), a)));
  // d/dp (p^2 + p) = 2p + 1
  CHECK(p.grad == mat({{3.0, -3.0}}));
}

TEST_CASE("every op passes a randomized central-difference check") {
  std::mt19937_64 rng(11);
  using vienna::testing::LossFn;
  auto weighted = [&](Eigen::Index r, Eigen::Index c) { return rand_mat(r, c, rng); };

  struct Case {
    const char* name;
    LossFn fn;
    std::vector<Matrix> inputs;
  };
  const Matrix w23 = weighted(2, 3), w33 = weighted(3, 3), w13 = weighted(1, 3),
               w32 = weighted(3, 2), w31 = weighted(3, 1), w62 = weighted(6, 2),
               w53 = weighted(5, 3), w36 = weighted(3, 6);
  auto dot = [](Var v, const Matrix& w) { return sum_all(mul(v, v.tape()->constant(w))); };
  std::vector<Case> cases = {
      {"matmul", [&](Tape&, const std::vector<Var>& v) { return dot(matmul(v[0], v[1]), w23); },
       {weighted(2, 4), weighted(4, 3)}},
      {"matmul_nt", [&](Tape&, const std::vector<Var>& v) { return dot(matmul_nt(v[0], v[1]), w23); },
       {weighted(2, 4), weighted(3, 4)}},
      {"transpose", [&](Tape&, const std::vector<Var>& v) { return dot(transpose(v[0]), w23); }, {weighted(3, 2)}},
      {"add/sub/mul", [&](Tape&, const std::vector<Var>& v) { return dot(mul(add(v[0], v[1]), sub(v[0], v[1])), w23); },
       {weighted(2, 3), weighted(2, 3)}},
      {"add_row/mul_row",
       [&](Tape&, const std::vector<Var>& v) { return dot(mul_row(add_row(v[0], v[1]), v[1]), w33); },
       {weighted(3, 3), weighted(1, 3)}},
      {"scale/add_scalar", [&](Tape&, const std::vector<Var>& v) { return dot(add_scalar(scale(v[0], -1.7), 0.3), w23); },
       {weighted(2, 3)}},
      {"gelu", [&](Tape&, const std::vector<Var>& v) { return dot(gelu(v[0]), w33); }, {weighted(3, 3)}},
      {"tanh", [&](Tape&, const std::vector<Var>& v) { return dot(vienna::tanh(v[0]), w33); }, {weighted(3, 3)}},
      {"sigmoid", [&](Tape&, const std::vector<Var>& v) { return dot(sigmoid(v[0]), w33); }, {weighted(3, 3)}},
      {"exp", [&](Tape&, const std::vector<Var>& v) { return dot(vienna::exp(v[0]), w33); }, {weighted(3, 3)}},
      {"log", [&](Tape&, const std::vector<Var>& v) { return dot(vienna::log(add_scalar(square(v[0]), 0.5)), w33); },
       {weighted(3, 3)}},
      {"clamp", [&](Tape&, const std::vector<Var>& v) { return dot(clamp(v[0], -0.5, 0.5), w33); }, {weighted(3, 3)}},
      {"minimum", [&](Tape&, const std::vector<Var>& v) { return dot(minimum(v[0], v[1]), w33); },
       {weighted(3, 3), weighted(3, 3)}},
      {"softmax_rows", [&](Tape&, const std::vector<Var>& v) { return dot(softmax_rows(v[0]), w33); }, {weighted(3, 3)}},
      {"softmax_rows masked",
       [&](Tape&, const std::vector<Var>& v) {
         Matrix bias = Matrix::Zero(3, 3);
         bias(0, 2) = -1e9;
         return dot(softmax_rows(v[0], &bias), w33);
       },
       {weighted(3, 3)}},
      {"log_softmax_rows", [&](Tape&, const std::vector<Var>& v) { return dot(log_softmax_rows(v[0]), w33); },
       {weighted(3, 3)}},
      {"layer_norm", [&](Tape&, const std::vector<Var>& v) { return dot(layer_norm(v[0], v[1], v[2]), w33); },
       {weighted(3, 3), weighted(1, 3), weighted(1, 3)}},
      {"mean_rows", [&](Tape&, const std::vector<Var>& v) { return dot(mean_rows(v[0]), w13); }, {weighted(4, 3)}},
      {"mean_all", [&](Tape&, const std::vector<Var>& v) { return mean_all(square(v[0])); }, {weighted(4, 3)}},
      {"slices", [&](Tape&, const std::vector<Var>& v) { return dot(slice_cols(slice_rows(v[0], 1, 3), 1, 2), w32); },
       {weighted(4, 3)}},
      {"gather_rows",
       [&](Tape&, const std::vector<Var>& v) {
         const int idx[] = {0, 1, 0, 1, 0};
         return dot(gather_rows(v[0], idx), w53);
       },
       {weighted(2, 3)}},
      {"concat", [&](Tape&, const std::vector<Var>& v) {
         Var r[] = {v[0], v[1]};
         Var rows = concat_rows(r);
         Var c[] = {rows, rows};
         return dot(concat_cols(c), w36);
       },
       {weighted(1, 3), weighted(2, 3)}},
      {"reshape", [&](Tape&, const std::vector<Var>& v) { return dot(reshape(v[0], 6, 2), w62); }, {weighted(3, 4)}},
      {"pick",
       [&](Tape&, const std::vector<Var>& v) {
         const int idx[] = {2, 0, 1};
         return dot(pick(v[0], idx), w31);
       },
       {weighted(3, 3)}},
  };
  for (auto& c : cases) {
    CAPTURE(c.name);
    CHECK(max_input_grad_error(c.fn, c.inputs) < 1e-6);
  }
}

TEST_CASE("tape replay is bitwise deterministic") {
  std::mt19937_64 rng(3);
  const Matrix a = rand_mat(3, 4, rng), b = rand_mat(4, 2, rng);
  auto run = [&] {
    Tape t;
    Var x = t.leaf(a), y = t.leaf(b);
    Var loss = sum_all(gelu(softmax_rows(matmul(x, y))));
    t.backward(loss);
    return std::make_tuple(loss.scalar(), x.grad(), y.grad());
  };
  auto [l1, gx1, gy1] = run();
  auto [l2, gx2, gy2] = run();
  CHECK(l1 == l2);
  CHECK(gx1 == gx2);
  CHECK(gy1 == gy2);
}

TEST_CASE("adamw examples") {
  SUBCASE("zero gradient and zero decay leave parameters unchanged") {
    Parameter p(mat({{1.5, -2.0}}));
    OptimizerState st;
    st.config.weight_decay = 0.0;
    NamedParam np{"p", &p};
    optimizer_step(std::span(&np, 1), st);
    CHECK(p.value == mat({{1.5, -2.0}}));
    CHECK(st.step_count == 1);
  }
  SUBCASE("single step closed form") {
    Parameter p(mat({{0.0}}));
    p.grad = mat({{1.0}});
    OptimizerState st;
    st.config = {0.1, 0.0, 0.9, 0.999, 1e-8};
    NamedParam np{"p", &p};
    optimizer_step(std::span(&np, 1), st);
    // m_hat = 1, v_hat = 1  ->  delta = -lr / (1 + eps)
    CHECK(p.value(0, 0) == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-14));
  }
  SUBCASE("decay-only step") {
    Parameter p(mat({{2.0, -4.0}}));
    OptimizerState st;
    st.config.learning_rate = 0.1;
    st.config.weight_decay = 0.01;
    NamedParam np{"p", &p};
    optimizer_step(std::span(&np, 1), st);
    CHECK(p.value(0, 0) == doctest::Approx(2.0 * (1 - 0.1 * 0.01)).epsilon(1e-14));
    CHECK(p.value(0, 1) == doctest::Approx(-4.0 * (1 - 0.1 * 0.01)).epsilon(1e-14));
  }
  SUBCASE("NaN gradient aborts with the parameter path") {
    Parameter p(mat({{1.0}}));
    p.grad(0, 0) = std::nan("");
    OptimizerState st;
    NamedParam np{"planner.shared.0.attn.wq", &p};
    try {
      optimizer_step(std::span(&np, 1), st);
      FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
      CHECK(std::string(e.what()).find("planner.shared.0.attn.wq") != std::string::npos);
    }
  }
}

TEST_CASE("checkpoint encoding round-trips bit-exactly") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    ParamSnapshot snap;
    const int n = 1 + static_cast<int>(rng() % 5);
    for (int i = 0; i < n; ++i) {
      Matrix m = rand_mat(1 + static_cast<Eigen::Index>(rng() % 4), 1 + static_cast<Eigen::Index>(rng() % 4), rng);
      if (i == 0) m(0, 0) = -0.0;
      snap.emplace_back("p" + std::to_string(i), m);
    }
    const Bytes bytes = encode_checkpoint(snap);
    ParamSnapshot back = decode_checkpoint(bytes);
    REQUIRE(back.size() == snap.size());
    for (std::size_t i = 0; i < snap.size(); ++i) {
      CHECK(back[i].first == snap[i].first);
      REQUIRE(back[i].second.size() == snap[i].second.size());
      CHECK(std::memcmp(back[i].second.data(), snap[i].second.data(), sizeof(double) * snap[i].second.size()) == 0);
    }
    CHECK(encode_checkpoint(back) == bytes);
  }
}

TEST_CASE("checkpoint decoding rejects corrupt input") {
  ParamSnapshot snap{{"a", Matrix::Ones(2, 2)}};
  Bytes bytes = encode_checkpoint(snap);
  Bytes truncated(bytes.begin(), bytes.end() - 3);
  CHECK_THROWS_AS(decode_checkpoint(truncated), FormatError);
  bytes[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);

  Parameter p(Matrix::Zero(3, 2));
  NamedParam np{"a", &p};
  CHECK_THROWS_AS(restore(std::span(&np, 1), snap), FormatError);
}
