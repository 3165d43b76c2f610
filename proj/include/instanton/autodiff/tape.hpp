#pragma once

// Reverse-mode differentiation over dense matrices.
//
// Every node holds a full Eigen matrix; samples are laid out as columns so a
// whole batch of residual points flows through one node. Nodes are appended
// in evaluation order, which is already a topological order, so the backward
// sweep is a single reverse pass over the node vector.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <vector>

#include "instanton/errors.hpp"

namespace instanton::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid as long as the tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const;
  int index() const noexcept { return index_; }

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, int index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  int index_ = -1;
};

class Tape {
 public:
  using ForwardFn = std::function<void(Tape&, Matrix& out)>;
  using BackwardFn = std::function<void(Tape&, const Matrix& out_value, const Matrix& out_adjoint)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives an adjoint.
  Var constant(Matrix value);
  /// Differentiable leaf (parameters, inputs of interest).
  Var variable(Matrix value);
  Var constant_scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }
  Var variable_scalar(double v) { return variable(Matrix::Constant(1, 1, v)); }

  /// Overwrites a leaf. Call replay() afterwards to refresh dependent nodes.
  void set_value(Var leaf, const Matrix& value);

  /// Recomputes every non-leaf node from its parents, in recording order.
  void replay();

  /// Seeds d(output)/d(output) = 1 for a 1x1 output and sweeps backwards.
  void backward(Var output);
  /// Seeds a unit adjoint at one component (column-major linear index).
  void backward(Var output, Eigen::Index component);

  /// Adjoint of a node after the last backward sweep (zeros if unreached).
  Matrix adjoint(Var v) const;

  const Matrix& value(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  void clear();

  /// Appends an operation. `forward` computes the node value from parent
  /// values (it is run once here and again by replay); `backward` scatters
  /// the node adjoint into the parents with accumulate().
  Var record(std::initializer_list<Var> parents, ForwardFn forward, BackwardFn backward);

  /// Parent values accessed by index (inside ForwardFn/BackwardFn).
  const Matrix& value_at(int index) const { return nodes_[static_cast<std::size_t>(index)].value; }

  template <typename Expr>
  void accumulate(int index, const Expr& contribution) {
    Node& n = nodes_[static_cast<std::size_t>(index)];
    if (!n.requires_grad) return;
    if (!n.touched) {
      n.adjoint.noalias() = contribution;
      n.touched = true;
    } else {
      n.adjoint.noalias() += contribution;
    }
  }

  bool needs_adjoint(int index) const { return nodes_[static_cast<std::size_t>(index)].requires_grad; }

 private:
  struct Node {
    Matrix value;
    Matrix adjoint;
    bool requires_grad = false;
    bool touched = false;
    bool leaf = true;
    ForwardFn forward;
    BackwardFn backward;
  };

  const Node& node(Var v) const;
  void check_owned(Var v) const;
  void sweep(Var output, Matrix seed);

  std::vector<Node> nodes_;
  bool swept_ = false;
};

// ---- primitive operations --------------------------------------------------
//
// Binary elementwise ops accept equal shapes, or a 1x1 operand that is
// broadcast over the other.

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator-(Var a);
Var operator*(double c, Var a);
Var operator+(Var a, double c);
Var operator-(double c, Var a);

/// Elementwise tanh as 1 - 2/(e^{2x} + 1), vectorized through exp; absolute
/// error below 1e-15.
Matrix tanh_values(const Matrix& x);

Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
/// Elementwise clamp; the derivative is zero where the clamp is active.
Var clamp(Var a, double lo, double hi);
/// 1 where lo <= a <= hi, else 0. Piecewise constant, so it passes no adjoint.
Var inside_mask(Var a, double lo, double hi);

Var matmul(Var a, Var b);
/// w * x + b broadcast across the columns of x.
Var affine(Var w, Var x, Var b);

Var sum(Var a);
Var mean(Var a);
/// sum_ij weights_ij * a_ij; weights must have the shape of a.
Var weighted_sum(Var a, Var weights);
/// Column sums, 1 x cols.
Var sum_rows(Var a);

Var column(Var a, Eigen::Index j);
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);

}  // namespace instanton::ad
