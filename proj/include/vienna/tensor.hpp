#pragma once

// Dense 2D tensors on a reverse-mode gradient tape.
//
// Every quantity in the model is a matrix (vectors are 1 x d rows), so the
// tape stores Eigen row-major matrices. A Tape records one forward pass; a
// Var is a handle into it. Parameters live outside the tape and receive
// accumulated gradients when backward() runs.

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vienna {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Thrown on shape contract violations; the message names both shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when the tape is misused (double backward, foreign handles, ...).
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::string shape_str(const Matrix& m);

/// A learnable value with a same-shape gradient buffer.
struct Parameter {
  Matrix value;
  Matrix grad;

  Parameter() = default;
  explicit Parameter(Matrix v) : value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Scalar scalar() const;
  bool requires_grad() const;
  /// Gradient after backward(); zero matrix if the node received none.
  Matrix grad() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  /// When recording is off, ops only compute values (rollout inference).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Matrix value);
  Var constant(Scalar value);
  /// Leaf that accumulates into param.grad on backward.
  Var param(Parameter& p);
  /// Leaf that owns its value and collects its own gradient (for checks).
  Var leaf(Matrix value);

  void backward(Var loss);
  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;
  Var push(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);
  void accumulate(Var v, const Matrix& g);
  template <class Expr>
  void accumulate_expr(Var v, const Expr& g);
  bool needs_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  const Matrix& value_of(int id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }
  const Matrix& grad_of(int id) const { return nodes_[id].grad; }
  bool has_grad(int id) const { return nodes_[id].grad.size() > 0; }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Parameter* param = nullptr;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  void check(Var v) const;

  std::deque<Node> nodes_;
  bool record_;
  bool consumed_ = false;
};

template <class Expr>
void Tape::accumulate_expr(Var v, const Expr& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

// ---- ops ------------------------------------------------------------------

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// n x m plus a 1 x m row broadcast over rows.
Var add_row(Var a, Var row);
/// n x m times a 1 x m row broadcast over rows.
Var mul_row(Var a, Var row);
Var scale(Var a, Scalar s);
Var add_scalar(Var a, Scalar s);
Var neg(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(Var a, Scalar s) { return scale(a, s); }
inline Var operator*(Scalar s, Var a) { return scale(a, s); }

Var gelu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var clamp(Var a, Scalar lo, Scalar hi);
Var minimum(Var a, Var b);

/// Row-wise softmax; `mask_bias`, when given, is added to the logits first.
Var softmax_rows(Var a, const Matrix* mask_bias = nullptr);
Var log_softmax_rows(Var a);
/// Row-wise layer normalization with 1 x m gain and bias.
Var layer_norm(Var x, Var gain, Var bias, Scalar eps = 1e-5);

/// Mean over rows: n x m -> 1 x m.
Var mean_rows(Var a);
Var sum_all(Var a);
Var mean_all(Var a);

Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count);
Var gather_rows(Var a, std::span<const int> rows);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
/// Row-major reshape.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
/// out(i) = a(i, index[i]) as an n x 1 column.
Var pick(Var a, std::span<const int> index);

// ---- numerics helpers -----------------------------------------------------

/// Max-subtracted softmax of a single row.
RowVector softmax(const RowVector& x);

}  // namespace vienna
