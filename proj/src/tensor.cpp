#include "vienna/tensor.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace vienna {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << "[" << m.rows() << "x" << m.cols() << "]";
  return os.str();
}

namespace {

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw TapeError("operation on a detached Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw TapeError("operands belong to different tapes");
  return t;
}

}  // namespace

// ---- Var / Tape -------------------------------------------------------------

const Matrix& Var::value() const {
  if (!valid()) throw TapeError("value() on a detached Var");
  return tape_->value_of(id_);
}

Scalar Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw DimensionError("scalar() on non-scalar " + shape_str(v));
  return v(0, 0);
}

bool Var::requires_grad() const { return valid() && tape_->needs_grad(*this); }

Matrix Var::grad() const {
  if (!valid()) throw TapeError("grad() on a detached Var");
  if (tape_->has_grad(id_)) return tape_->grad_of(id_);
  const Matrix& v = value();
  return Matrix::Zero(v.rows(), v.cols());
}

void Tape::check(Var v) const {
  if (v.tape() != this || v.id() < 0 || static_cast<std::size_t>(v.id()) >= nodes_.size()) {
    throw TapeError("Var does not belong to this tape");
  }
}

Var Tape::constant(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Scalar value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::param(Parameter& p) {
  Node& n = nodes_.emplace_back();
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = record_;
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = record_;
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
  bool rg = false;
  if (record_) {
    for (Var v : inputs) {
      check(v);
      rg = rg || nodes_[v.id()].requires_grad;
    }
  }
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = rg;
  if (rg) n.backward = std::move(fn);
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(Var v, const Matrix& g) { accumulate_expr(v, g); }

void Tape::backward(Var loss) {
  check(loss);
  if (!record_) throw TapeError("backward() on a non-recording tape");
  if (consumed_) throw TapeError("backward() called twice on the same tape; re-run the forward pass");
  const Matrix& lv = value_of(loss.id());
  if (lv.size() != 1) throw DimensionError("backward() needs a scalar loss, got " + shape_str(lv));
  consumed_ = true;
  Node& root = nodes_[loss.id()];
  if (!root.requires_grad) return;
  root.grad = Matrix::Ones(1, 1);
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param) n.param->grad += n.grad;
  }
}

// ---- linear algebra ------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (A.cols() != B.rows()) {
    throw DimensionError("matmul: inner extents differ, " + shape_str(A) + " x " + shape_str(B));
  }
  Matrix C = A * B;
  return t.push(std::move(C), {a, b}, [a, b](Tape& tp, const Matrix& G) {
    if (tp.needs_grad(a)) tp.accumulate_expr(a, G * b.value().transpose());
    if (tp.needs_grad(b)) tp.accumulate_expr(b, a.value().transpose() * G);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (A.cols() != B.cols()) {
    throw DimensionError("matmul_nt: widths differ, " + shape_str(A) + " x " + shape_str(B) + "^T");
  }
  Matrix C = A * B.transpose();
  return t.push(std::move(C), {a, b}, [a, b](Tape& tp, const Matrix& G) {
    if (tp.needs_grad(a)) tp.accumulate_expr(a, G * b.value());
    if (tp.needs_grad(b)) tp.accumulate_expr(b, G.transpose() * a.value());
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  Matrix C = a.value().transpose();
  return t.push(std::move(C), {a}, [a](Tape& tp, const Matrix& G) { tp.accumulate_expr(a, G.transpose()); });
}

// ---- elementwise -----------------------------------------------------------

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("add", a.value(), b.value());
  Matrix C = a.value() + b.value();
  return t.push(std::move(C), {a, b}, [a, b](Tape& tp, const Matrix& G) {
    tp.accumulate(a, G);
    tp.accumulate(b, G);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("sub", a.value(), b.value());
  Matrix C = a.value() - b.value();
  return t.push(std::move(C), {a, b}, [a, b](Tape& tp, const Matrix& G) {
    tp.accumulate(a, G);
    tp.accumulate_expr(b, -G);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("mul", a.value(), b.value());
  Matrix C = a.value().cwiseProduct(b.value());
  return t.push(std::move(C), {a, b}, [a, b](Tape& tp, const Matrix& G) {
    if (tp.needs_grad(a)) tp.accumulate_expr(a, G.cwiseProduct(b.value()));
    if (tp.needs_grad(b)) tp.accumulate_expr(b, G.cwiseProduct(a.value()));
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  const Matrix& A = a.value();
  const Matrix& R = row.value();
  if (R.rows() != 1 || R.cols() != A.cols()) {
    throw DimensionError("add_row: expected a 1x" + std::to_string(A.cols()) + " row, got " + shape_str(R) +
                         " for " + shape_str(A));
  }
  Matrix C = A.rowwise() + R.row(0);
  return t.push(std::move(C), {a, row}, [a, row](Tape& tp, const Matrix& G) {
    tp.accumulate(a, G);
    if (tp.needs_grad(row)) tp.accumulate_expr(row, G.colwise().sum());
  });
}

Var mul_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  const Matrix& A = a.value();
  const Matrix& R = row.value();
  if (R.rows() != 1 || R.cols() != A.cols()) {
    throw DimensionError("mul_row: expected a 1x" + std::to_string(A.cols()) + " row, got " + shape_str(R) +
                         " for " + shape_str(A));
  }
  Matrix C = A.array().rowwise() * R.row(0).array();
  return t.push(std::move(C), {a, row}, [a, row](Tape& tp, const Matrix& G) {
    if (tp.needs_grad(a)) tp.accumulate_expr(a, (G.array().rowwise() * row.value().row(0).array()).matrix());
    if (tp.needs_grad(row)) tp.accumulate_expr(row, G.cwiseProduct(a.value()).colwise().sum());
  });
}

Var scale(Var a, Scalar s) {
  Tape& t = tape_of(a);
  Matrix C = a.value() * s;
  return t.push(std::move(C), {a}, [a, s](Tape& tp, const Matrix& G) { tp.accumulate_expr(a, G * s); });
}

Var add_scalar(Var a, Scalar s) {
  Tape& t = tape_of(a);
  Matrix C = a.value().array() + s;
  return t.push(std::move(C), {a}, [a](Tape& tp, const Matrix& G) { tp.accumulate(a, G); });
}

Var neg(Var a) { return scale(a, -1.0); }

namespace {

constexpr Scalar kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr Scalar kGeluA = 0.044715;

template <class Fwd, class Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  Tape& t = tape_of(a);
  Matrix C = a.value().unaryExpr(fwd);
  return t.push(std::move(C), {a}, [a, deriv](Tape& tp, const Matrix& G) {
    tp.accumulate_expr(a, G.cwiseProduct(a.value().unaryExpr(deriv)));
  });
}

}  // namespace

Var gelu(Var a) {
  return unary(
      a,
      [](Scalar x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); },
      [](Scalar x) {
        const Scalar th = std::tanh(kGeluC * (x + kGeluA * x * x * x));
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      });
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  Matrix C = a.value().array().tanh();
  const int out = static_cast<int>(t.size());
  return t.push(std::move(C), {a}, [a, out](Tape& tp, const Matrix& G) {
    const Matrix& y = tp.value_of(out);
    tp.accumulate_expr(a, (G.array() * (1.0 - y.array().square())).matrix());
  });
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  Matrix C = a.value().unaryExpr([](Scalar x) { return 1.0 / (1.0 + std::exp(-x)); });
  const int out = static_cast<int>(t.size());
  return t.push(std::move(C), {a}, [a, out](Tape& tp, const Matrix& G) {
    const Matrix& y = tp.value_of(out);
    tp.accumulate_expr(a, (G.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

Var exp(Var a) {
  Tape& t = tape_of(a);
  Matrix C = a.value().array().exp();
  const int out = static_cast<int>(t.size());
  return t.push(std::move(C), {a}, [a, out](Tape& tp, const Matrix& G) {
    tp.accumulate_expr(a, G.cwiseProduct(tp.value_of(out)));
  });
}

Var log(Var a) {
  Tape& t = tape_of(a);
  Matrix C = a.value().array().log();
  return t.push(std::move(C), {a}, [a](Tape& tp, const Matrix& G) {
    tp.accumulate_expr(a, G.cwiseQuotient(a.value()));
  });
}

Var square(Var a) {
  Tape& t = tape_of(a);
  Matrix C = a.value().array().square();
  return t.push(std::move(C), {a}, [a](Tape& tp, const Matrix& G) {
    tp.accumulate_expr(a, 2.0 * G.cwiseProduct(a.value()));
  });
}

Var clamp(Var a, Scalar lo, Scalar hi) {
  Tape& t = tape_of(a);
  Matrix C = a.value().cwiseMax(lo).cwiseMin(hi);
  return t.push(std::move(C), {a}, [a, lo, hi](Tape& tp, const Matrix& G) {
    const Matrix& x = a.value();
    Matrix g = G;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const Scalar xi = x.data()[i];
      if (xi < lo || xi > hi) g.data()[i] = 0.0;
    }
    tp.accumulate(a, g);
  });
}

Var minimum(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("minimum", a.value(), b.value());
  Matrix C = a.value().cwiseMin(b.value());
  return t.push(std::move(C), {a, b}, [a, b](Tape& tp, const Matrix& G) {
    const Matrix& x = a.value();
    const Matrix& y = b.value();
    Matrix ga = Matrix::Zero(G.rows(), G.cols());
    Matrix gb = Matrix::Zero(G.rows(), G.cols());
    for (Eigen::Index i = 0; i < G.size(); ++i) {
      if (x.data()[i] <= y.data()[i]) {
        ga.data()[i] = G.data()[i];
      } else {
        gb.data()[i] = G.data()[i];
      }
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

// ---- normalizations ----------------------------------------------------------

RowVector softmax(const RowVector& x) {
  RowVector e = (x.array() - x.maxCoeff()).exp();
  return e / e.sum();
}

Var softmax_rows(Var a, const Matrix* mask_bias) {
  Tape& t = tape_of(a);
  Matrix z = a.value();
  if (mask_bias) {
    require_same_shape("softmax_rows mask", z, *mask_bias);
    z += *mask_bias;
  }
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    // Eigen's vectorised exp clamps its argument, so masked entries would
    // come out as ~1e-308 and drag later products into denormal arithmetic.
    const auto shifted = (row.array() - row.maxCoeff()).eval();
    row.array() = (shifted < -700.0).select(0.0, shifted.exp());
    row /= row.sum();
  }
  const int out = static_cast<int>(t.size());
  return t.push(std::move(z), {a}, [a, out](Tape& tp, const Matrix& G) {
    const Matrix& y = tp.value_of(out);
    Eigen::VectorXd dots = G.cwiseProduct(y).rowwise().sum();
    Matrix g = y.cwiseProduct(G.colwise() - dots);
    tp.accumulate(a, g);
  });
}

Var log_softmax_rows(Var a) {
  Tape& t = tape_of(a);
  Matrix z = a.value();
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    const Scalar m = row.maxCoeff();
    const Scalar lse = m + std::log((row.array() - m).exp().sum());
    row.array() -= lse;
  }
  const int out = static_cast<int>(t.size());
  return t.push(std::move(z), {a}, [a, out](Tape& tp, const Matrix& G) {
    const Matrix p = tp.value_of(out).array().exp();
    Eigen::VectorXd sums = G.rowwise().sum();
    Matrix g = G - (p.array().colwise() * sums.array()).matrix();
    tp.accumulate(a, g);
  });
}

Var layer_norm(Var x, Var gain, Var bias, Scalar eps) {
  Tape& t = tape_of(x, gain);
  if (bias.tape() != &t) throw TapeError("operands belong to different tapes");
  const Matrix& X = x.value();
  const Eigen::Index m = X.cols();
  if (gain.value().rows() != 1 || gain.value().cols() != m || bias.value().rows() != 1 || bias.value().cols() != m) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.value()) + "/" + shape_str(bias.value()) +
                         " do not match " + shape_str(X));
  }
  Matrix xhat(X.rows(), m);
  Eigen::VectorXd inv_std(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const Scalar mu = X.row(r).mean();
    const Scalar var = (X.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (X.row(r).array() - mu) * inv_std(r);
  }
  Matrix y = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  return t.push(std::move(y), {x, gain, bias},
                [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp, const Matrix& G) {
                  if (tp.needs_grad(gain)) tp.accumulate_expr(gain, G.cwiseProduct(xhat).colwise().sum());
                  if (tp.needs_grad(bias)) tp.accumulate_expr(bias, G.colwise().sum());
                  if (!tp.needs_grad(x)) return;
                  const Matrix dxhat = G.array().rowwise() * gain.value().row(0).array();
                  const Scalar inv_m = 1.0 / static_cast<Scalar>(dxhat.cols());
                  Matrix dx(dxhat.rows(), dxhat.cols());
                  for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
                    const Scalar mean_d = dxhat.row(r).sum() * inv_m;
                    const Scalar mean_dx = dxhat.row(r).dot(xhat.row(r)) * inv_m;
                    dx.row(r) = inv_std(r) * (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx);
                  }
                  tp.accumulate(x, dx);
                });
}

// ---- reductions --------------------------------------------------------------

Var mean_rows(Var a) {
  Tape& t = tape_of(a);
  const Matrix& A = a.value();
  if (A.rows() == 0) throw DimensionError("mean_rows: empty sequence");
  Matrix C = A.colwise().mean();
  return t.push(std::move(C), {a}, [a](Tape& tp, const Matrix& G) {
    const Eigen::Index n = a.value().rows();
    tp.accumulate_expr(a, G.replicate(n, 1) / static_cast<Scalar>(n));
  });
}

Var sum_all(Var a) {
  Tape& t = tape_of(a);
  Matrix C = Matrix::Constant(1, 1, a.value().sum());
  return t.push(std::move(C), {a}, [a](Tape& tp, const Matrix& G) {
    tp.accumulate_expr(a, Matrix::Constant(a.value().rows(), a.value().cols(), G(0, 0)));
  });
}

Var mean_all(Var a) {
  const auto n = static_cast<Scalar>(a.value().size());
  return scale(sum_all(a), 1.0 / n);
}

// ---- structural ------------------------------------------------------------------

Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count) {
  Tape& t = tape_of(a);
  const Matrix& A = a.value();
  if (begin < 0 || count < 0 || begin + count > A.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) + ") out of " +
                         shape_str(A));
  }
  Matrix C = A.middleRows(begin, count);
  return t.push(std::move(C), {a}, [a, begin, count](Tape& tp, const Matrix& G) {
    Matrix g = Matrix::Zero(a.value().rows(), a.value().cols());
    g.middleRows(begin, count) = G;
    tp.accumulate(a, g);
  });
}

Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count) {
  Tape& t = tape_of(a);
  const Matrix& A = a.value();
  if (begin < 0 || count < 0 || begin + count > A.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) + ") out of " +
                         shape_str(A));
  }
  Matrix C = A.middleCols(begin, count);
  return t.push(std::move(C), {a}, [a, begin, count](Tape& tp, const Matrix& G) {
    Matrix g = Matrix::Zero(a.value().rows(), a.value().cols());
    g.middleCols(begin, count) = G;
    tp.accumulate(a, g);
  });
}

Var gather_rows(Var a, std::span<const int> rows) {
  Tape& t = tape_of(a);
  const Matrix& A = a.value();
  Matrix C(static_cast<Eigen::Index>(rows.size()), A.cols());
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j] < 0 || rows[j] >= A.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(rows[j]) + " out of " + shape_str(A));
    }
    C.row(static_cast<Eigen::Index>(j)) = A.row(rows[j]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return t.push(std::move(C), {a}, [a, idx = std::move(idx)](Tape& tp, const Matrix& G) {
    Matrix g = Matrix::Zero(a.value().rows(), a.value().cols());
    for (std::size_t j = 0; j < idx.size(); ++j) g.row(idx[j]) += G.row(static_cast<Eigen::Index>(j));
    tp.accumulate(a, g);
  });
}

namespace {

// Records a node with an arbitrary number of inputs by chaining through a
// single closure; the initializer_list form only covers fixed arities.
Var push_many(Tape& t, Matrix value, std::vector<Var> parts, bool by_rows) {
  bool rg = false;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw TapeError("operands belong to different tapes");
    rg = rg || (t.recording() && t.needs_grad(p));
  }
  if (!rg) return t.constant(std::move(value));
  // Anchor on the first part so the node is marked as requiring grad.
  Var anchor = parts.front();
  for (const Var& p : parts) {
    if (t.needs_grad(p)) {
      anchor = p;
      break;
    }
  }
  return t.push(std::move(value), {anchor}, [parts = std::move(parts), by_rows](Tape& tp, const Matrix& G) {
    Eigen::Index off = 0;
    for (const Var& p : parts) {
      const Matrix& v = p.value();
      if (by_rows) {
        if (tp.needs_grad(p)) tp.accumulate_expr(p, G.middleRows(off, v.rows()));
        off += v.rows();
      } else {
        if (tp.needs_grad(p)) tp.accumulate_expr(p, G.middleCols(off, v.cols()));
        off += v.cols();
      }
    }
  });
}

}  // namespace

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Tape& t = tape_of(parts.front());
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const Var& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: width mismatch " + shape_str(parts.front().value()) + " vs " +
                           shape_str(p.value()));
    }
    rows += p.rows();
  }
  Matrix C(rows, cols);
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    C.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  return push_many(t, std::move(C), std::vector<Var>(parts.begin(), parts.end()), true);
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Tape& t = tape_of(parts.front());
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  for (const Var& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: height mismatch " + shape_str(parts.front().value()) + " vs " +
                           shape_str(p.value()));
    }
    cols += p.cols();
  }
  Matrix C(rows, cols);
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    C.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  return push_many(t, std::move(C), std::vector<Var>(parts.begin(), parts.end()), false);
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  Tape& t = tape_of(a);
  const Matrix& A = a.value();
  if (rows * cols != A.size()) {
    throw DimensionError("reshape: " + shape_str(A) + " to [" + std::to_string(rows) + "x" + std::to_string(cols) +
                         "]");
  }
  Matrix C = Eigen::Map<const Matrix>(A.data(), rows, cols);
  return t.push(std::move(C), {a}, [a](Tape& tp, const Matrix& G) {
    tp.accumulate_expr(a, Eigen::Map<const Matrix>(G.data(), a.value().rows(), a.value().cols()));
  });
}

Var pick(Var a, std::span<const int> index) {
  Tape& t = tape_of(a);
  const Matrix& A = a.value();
  if (static_cast<Eigen::Index>(index.size()) != A.rows()) {
    throw DimensionError("pick: " + std::to_string(index.size()) + " indices for " + shape_str(A));
  }
  Matrix C(A.rows(), 1);
  for (Eigen::Index r = 0; r < A.rows(); ++r) {
    const int c = index[static_cast<std::size_t>(r)];
    if (c < 0 || c >= A.cols()) throw DimensionError("pick: column " + std::to_string(c) + " out of " + shape_str(A));
    C(r, 0) = A(r, c);
  }
  std::vector<int> idx(index.begin(), index.end());
  return t.push(std::move(C), {a}, [a, idx = std::move(idx)](Tape& tp, const Matrix& G) {
    Matrix g = Matrix::Zero(a.value().rows(), a.value().cols());
    for (std::size_t r = 0; r < idx.size(); ++r) g(static_cast<Eigen::Index>(r), idx[r]) = G(static_cast<Eigen::Index>(r), 0);
    tp.accumulate(a, g);
  });
}

}  // namespace vienna
