#pragma once

#include <functional>
#include <span>
#include <vector>

#include "egomg/matrix.hpp"

namespace egomg::ad {

class Tape;

/// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the tape is topologically
/// sorted by construction and backward is a single reverse sweep.
class Tape {
 public:
  /// Receives the gradient of the node's output; accumulates into its parents.
  using BackwardFn = std::function<void(Tape&, const Matrix&)>;

  Var variable(Matrix value);
  Var constant(Matrix value);
  Var record(Matrix value, bool requires_grad, BackwardFn backward);

  /// Populates gradients of every node the scalar `loss` depends on.
  void backward(Var loss);
  void reset();

  const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }
  const Matrix& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  void accumulate(std::size_t id, const Matrix& g);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

Var matmul(Var a, Var b);
/// Constant sparse matrix times a variable. `a` must outlive the tape's backward pass.
Var spmm(const CsrMatrix& a, Var b);
/// Elementwise sum. `b` may also be a 1 x n row added to every row of `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var softmax_rows(Var a);
/// Mean over rows of -log(p[row, label]) with p clamped to [1e-12, 1].
Var cross_entropy(Var probs, std::span<const std::size_t> labels);
Var cross_entropy(Var probs, std::size_t label);
/// Mean over rows of -sum_j t[row, j] log p[row, j] (same clamp).
Var soft_cross_entropy(Var probs, const Matrix& targets);
/// Each row scaled to unit L2 norm; zero rows stay zero.
Var l2_normalize_rows(Var a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var mean_rows(Var a);
Var select_row(Var a, std::size_t index);
Var gather_rows(Var a, std::span<const std::size_t> indices);
/// Row r comes from `when_set` if mask[r] != 0, else from `otherwise`.
Var mask_blend(std::span<const double> mask, Var when_set, Var otherwise);
Var scale_rows(Var a, std::span<const double> factors);
Var sum(Var a);

/// Max relative error between backward gradients of a scalar function and central differences.
double grad_check(const std::function<Var(Tape&, Var)>& f, const Matrix& input, double epsilon = 1e-5);

}  // namespace egomg::ad
