#include "instanton/autodiff/tape.hpp"

#include <string>
#include <utility>

namespace instanton::ad {

Tape& Var::tape() const {
  if (tape_ == nullptr) throw UsageError("variable is not attached to a tape");
  return *tape_;
}

const Matrix& Var::value() const { return tape().value(*this); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("scalar() on a " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()) + " node");
  return v(0, 0);
}

void Tape::check_owned(Var v) const {
  if (v.tape_ != this || v.index_ < 0 || static_cast<std::size_t>(v.index_) >= nodes_.size()) {
    throw UsageError("variable does not belong to this tape");
  }
}

const Tape::Node& Tape::node(Var v) const {
  check_owned(v);
  return nodes_[static_cast<std::size_t>(v.index_)];
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::set_value(Var leaf, const Matrix& value) {
  check_owned(leaf);
  Node& n = nodes_[static_cast<std::size_t>(leaf.index_)];
  if (!n.leaf) throw UsageError("set_value on a computed node");
  if (n.value.rows() != value.rows() || n.value.cols() != value.cols()) {
    throw ShapeError("set_value shape mismatch");
  }
  n.value = value;
}

Var Tape::record(std::initializer_list<Var> parents, ForwardFn forward, BackwardFn backward) {
  Node n;
  n.leaf = false;
  for (Var p : parents) {
    check_owned(p);
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(p.index_)].requires_grad;
  }
  n.forward = std::move(forward);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  Node& added = nodes_.back();
  added.forward(*this, added.value);
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::replay() {
  for (Node& n : nodes_) {
    if (!n.leaf) n.forward(*this, n.value);
  }
}

void Tape::sweep(Var output, Matrix seed) {
  const auto out = static_cast<std::size_t>(output.index_);
  for (Node& n : nodes_) n.touched = false;
  swept_ = true;
  Node& top = nodes_[out];
  if (!top.requires_grad) return;
  top.adjoint = std::move(seed);
  top.touched = true;
  for (std::size_t i = out + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.touched && !n.leaf && n.backward) n.backward(*this, n.value, n.adjoint);
  }
}

void Tape::backward(Var output) {
  if (nodes_.empty()) throw UsageError("gradient requested before a forward pass");
  const Node& n = node(output);
  if (n.value.size() != 1) throw ShapeError("backward() needs a scalar output; pass a component index");
  sweep(output, Matrix::Ones(1, 1));
}

void Tape::backward(Var output, Eigen::Index component) {
  if (nodes_.empty()) throw UsageError("gradient requested before a forward pass");
  const Node& n = node(output);
  if (component < 0 || component >= n.value.size()) throw ShapeError("output component out of range");
  Matrix seed = Matrix::Zero(n.value.rows(), n.value.cols());
  seed(component) = 1.0;
  sweep(output, std::move(seed));
}

Matrix Tape::adjoint(Var v) const {
  const Node& n = node(v);
  if (!swept_) throw UsageError("gradient requested before a backward pass");
  if (!n.touched) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.adjoint;
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

void Tape::clear() {
  nodes_.clear();
  swept_ = false;
}

namespace {

enum class Broadcast { none, left_scalar, right_scalar };

Broadcast broadcast_kind(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::none;
  if (a.size() == 1) return Broadcast::left_scalar;
  if (b.size() == 1) return Broadcast::right_scalar;
  throw ShapeError(std::string(op) + ": shapes " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                   " and " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + " do not match");
}

// Reduces a broadcast contribution back to the operand's shape.
template <typename Expr>
void scatter(Tape& t, int index, bool was_scalar, const Expr& contribution) {
  if (!t.needs_adjoint(index)) return;
  if (was_scalar) {
    t.accumulate(index, Matrix::Constant(1, 1, Matrix(contribution).sum()));
  } else {
    t.accumulate(index, contribution);
  }
}

}  // namespace

Var operator+(Var a, Var b) {
  const int ia = a.index(), ib = b.index();
  const Broadcast k = broadcast_kind(a.value(), b.value(), "add");
  return a.tape().record(
      {a, b},
      [ia, ib, k](Tape& t, Matrix& out) {
        const Matrix& x = t.value_at(ia);
        const Matrix& y = t.value_at(ib);
        if (k == Broadcast::none) out = x + y;
        else if (k == Broadcast::left_scalar) out = y.array() + x(0, 0);
        else out = x.array() + y(0, 0);
      },
      [ia, ib, k](Tape& t, const Matrix&, const Matrix& adj) {
        scatter(t, ia, k == Broadcast::left_scalar, adj);
        scatter(t, ib, k == Broadcast::right_scalar, adj);
      });
}

Var operator-(Var a, Var b) {
  const int ia = a.index(), ib = b.index();
  const Broadcast k = broadcast_kind(a.value(), b.value(), "sub");
  return a.tape().record(
      {a, b},
      [ia, ib, k](Tape& t, Matrix& out) {
        const Matrix& x = t.value_at(ia);
        const Matrix& y = t.value_at(ib);
        if (k == Broadcast::none) out = x - y;
        else if (k == Broadcast::left_scalar) out = (-y.array()) + x(0, 0);
        else out = x.array() - y(0, 0);
      },
      [ia, ib, k](Tape& t, const Matrix&, const Matrix& adj) {
        scatter(t, ia, k == Broadcast::left_scalar, adj);
        scatter(t, ib, k == Broadcast::right_scalar, -adj);
      });
}

Var operator*(Var a, Var b) {
  const int ia = a.index(), ib = b.index();
  const Broadcast k = broadcast_kind(a.value(), b.value(), "mul");
  return a.tape().record(
      {a, b},
      [ia, ib, k](Tape& t, Matrix& out) {
        const Matrix& x = t.value_at(ia);
        const Matrix& y = t.value_at(ib);
        if (k == Broadcast::none) out = x.cwiseProduct(y);
        else if (k == Broadcast::left_scalar) out = x(0, 0) * y;
        else out = y(0, 0) * x;
      },
      [ia, ib, k](Tape& t, const Matrix&, const Matrix& adj) {
        const Matrix& x = t.value_at(ia);
        const Matrix& y = t.value_at(ib);
        switch (k) {
          case Broadcast::none:
            t.accumulate(ia, adj.cwiseProduct(y));
            t.accumulate(ib, adj.cwiseProduct(x));
            break;
          case Broadcast::left_scalar:
            scatter(t, ia, true, adj.cwiseProduct(y));
            t.accumulate(ib, x(0, 0) * adj);
            break;
          case Broadcast::right_scalar:
            t.accumulate(ia, y(0, 0) * adj);
            scatter(t, ib, true, adj.cwiseProduct(x));
            break;
        }
      });
}

Var operator-(Var a) { return -1.0 * a; }

Var operator*(double c, Var a) {
  const int ia = a.index();
  return a.tape().record(
      {a}, [ia, c](Tape& t, Matrix& out) { out = c * t.value_at(ia); },
      [ia, c](Tape& t, const Matrix&, const Matrix& adj) { t.accumulate(ia, c * adj); });
}

Var operator+(Var a, double c) {
  const int ia = a.index();
  return a.tape().record(
      {a}, [ia, c](Tape& t, Matrix& out) { out = t.value_at(ia).array() + c; },
      [ia](Tape& t, const Matrix&, const Matrix& adj) { t.accumulate(ia, adj); });
}

Var operator-(double c, Var a) {
  const int ia = a.index();
  return a.tape().record(
      {a}, [ia, c](Tape& t, Matrix& out) { out = c - t.value_at(ia).array(); },
      [ia](Tape& t, const Matrix&, const Matrix& adj) { t.accumulate(ia, -adj); });
}

Matrix tanh_values(const Matrix& x) { return (1.0 - 2.0 / ((2.0 * x.array()).exp() + 1.0)).matrix(); }

Var tanh(Var a) {
  const int ia = a.index();
  return a.tape().record(
      {a}, [ia](Tape& t, Matrix& out) { out = 1.0 - 2.0 / ((2.0 * t.value_at(ia).array()).exp() + 1.0); },
      [ia](Tape& t, const Matrix& y, const Matrix& adj) {
        t.accumulate(ia, (adj.array() * (1.0 - y.array().square())).matrix());
      });
}

Var exp(Var a) {
  const int ia = a.index();
  return a.tape().record(
      {a}, [ia](Tape& t, Matrix& out) { out = t.value_at(ia).array().exp(); },
      [ia](Tape& t, const Matrix& y, const Matrix& adj) { t.accumulate(ia, adj.cwiseProduct(y)); });
}

Var log(Var a) {
  const int ia = a.index();
  return a.tape().record(
      {a}, [ia](Tape& t, Matrix& out) { out = t.value_at(ia).array().log(); },
      [ia](Tape& t, const Matrix&, const Matrix& adj) {
        t.accumulate(ia, (adj.array() / t.value_at(ia).array()).matrix());
      });
}

Var square(Var a) {
  const int ia = a.index();
  return a.tape().record(
      {a}, [ia](Tape& t, Matrix& out) { out = t.value_at(ia).array().square(); },
      [ia](Tape& t, const Matrix&, const Matrix& adj) {
        t.accumulate(ia, (2.0 * adj.array() * t.value_at(ia).array()).matrix());
      });
}

Var clamp(Var a, double lo, double hi) {
  const int ia = a.index();
  return a.tape().record(
      {a}, [ia, lo, hi](Tape& t, Matrix& out) { out = t.value_at(ia).cwiseMax(lo).cwiseMin(hi); },
      [ia, lo, hi](Tape& t, const Matrix&, const Matrix& adj) {
        const auto& x = t.value_at(ia).array();
        t.accumulate(ia, ((x >= lo && x <= hi).cast<double>() * adj.array()).matrix());
      });
}

Var inside_mask(Var a, double lo, double hi) {
  const int ia = a.index();
  return a.tape().record(
      {a},
      [ia, lo, hi](Tape& t, Matrix& out) {
        const auto& x = t.value_at(ia).array();
        out = (x >= lo && x <= hi).cast<double>().matrix();
      },
      [](Tape&, const Matrix&, const Matrix&) {});
}

Var matmul(Var a, Var b) {
  const int ia = a.index(), ib = b.index();
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  return a.tape().record(
      {a, b}, [ia, ib](Tape& t, Matrix& out) { out.noalias() = t.value_at(ia) * t.value_at(ib); },
      [ia, ib](Tape& t, const Matrix&, const Matrix& adj) {
        if (t.needs_adjoint(ia)) t.accumulate(ia, adj * t.value_at(ib).transpose());
        if (t.needs_adjoint(ib)) t.accumulate(ib, t.value_at(ia).transpose() * adj);
      });
}

Var affine(Var w, Var x, Var b) {
  const int iw = w.index(), ix = x.index(), ib = b.index();
  if (w.cols() != x.rows()) throw ShapeError("affine: weight columns differ from input rows");
  if (b.rows() != w.rows() || b.cols() != 1) throw ShapeError("affine: bias must be a column matching weight rows");
  return w.tape().record(
      {w, x, b},
      [iw, ix, ib](Tape& t, Matrix& out) {
        out.noalias() = t.value_at(iw) * t.value_at(ix);
        out.colwise() += t.value_at(ib).col(0);
      },
      [iw, ix, ib](Tape& t, const Matrix&, const Matrix& adj) {
        if (t.needs_adjoint(iw)) t.accumulate(iw, adj * t.value_at(ix).transpose());
        if (t.needs_adjoint(ix)) t.accumulate(ix, t.value_at(iw).transpose() * adj);
        if (t.needs_adjoint(ib)) t.accumulate(ib, adj.rowwise().sum());
      });
}

Var sum(Var a) {
  const int ia = a.index();
  return a.tape().record(
      {a}, [ia](Tape& t, Matrix& out) { out = Matrix::Constant(1, 1, t.value_at(ia).sum()); },
      [ia](Tape& t, const Matrix&, const Matrix& adj) {
        const Matrix& x = t.value_at(ia);
        t.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), adj(0, 0)));
      });
}

Var mean(Var a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean of an empty node");
  return (1.0 / n) * sum(a);
}

Var weighted_sum(Var a, Var weights) {
  const int ia = a.index(), iw = weights.index();
  if (a.rows() != weights.rows() || a.cols() != weights.cols()) throw ShapeError("weighted_sum: weight shape mismatch");
  return a.tape().record(
      {a, weights},
      [ia, iw](Tape& t, Matrix& out) {
        out = Matrix::Constant(1, 1, t.value_at(ia).cwiseProduct(t.value_at(iw)).sum());
      },
      [ia, iw](Tape& t, const Matrix&, const Matrix& adj) {
        t.accumulate(ia, adj(0, 0) * t.value_at(iw));
        t.accumulate(iw, adj(0, 0) * t.value_at(ia));
      });
}

Var sum_rows(Var a) {
  const int ia = a.index();
  return a.tape().record(
      {a}, [ia](Tape& t, Matrix& out) { out = t.value_at(ia).colwise().sum(); },
      [ia](Tape& t, const Matrix&, const Matrix& adj) {
        t.accumulate(ia, adj.replicate(t.value_at(ia).rows(), 1));
      });
}

Var column(Var a, Eigen::Index j) {
  const int ia = a.index();
  if (j < 0 || j >= a.cols()) throw ShapeError("column index out of range");
  return a.tape().record(
      {a}, [ia, j](Tape& t, Matrix& out) { out = t.value_at(ia).col(j); },
      [ia, j](Tape& t, const Matrix&, const Matrix& adj) {
        const Matrix& x = t.value_at(ia);
        Matrix c = Matrix::Zero(x.rows(), x.cols());
        c.col(j) = adj.col(0);
        t.accumulate(ia, c);
      });
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  const int ia = a.index();
  if (rows * cols != a.value().size()) throw ShapeError("reshape changes the element count");
  return a.tape().record(
      {a}, [ia, rows, cols](Tape& t, Matrix& out) { out = t.value_at(ia).reshaped(rows, cols); },
      [ia](Tape& t, const Matrix&, const Matrix& adj) {
        const Matrix& x = t.value_at(ia);
        t.accumulate(ia, adj.reshaped(x.rows(), x.cols()));
      });
}

}  // namespace instanton::ad
