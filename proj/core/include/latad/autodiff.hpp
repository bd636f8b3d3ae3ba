#pragma once

// Minimal reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation applied to Vars. Calling backward() on a
// scalar (1x1) Var propagates gradients to every leaf that requires them:
// variables created with Tape::variable() and parameters created with
// Tape::parameter(), whose gradients are added into a caller-owned buffer
// indexed by parameter slot.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <unordered_map>
#include <vector>

#include "latad/common.hpp"

namespace latad::ad {

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  /// Called during backward with the node's forward value and the gradient
  /// flowing into it; must call accumulate() on each parent needing grads.
  using Backward = std::function<void(Tape&, const Matrix& out, const Matrix& grad_out)>;

  Tape() = default;
  /// With track_parameters == false, parameter leaves behave as constants.
  explicit Tape(bool track_parameters) : track_parameters_(track_parameters) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);
  /// Leaf backed by external storage that must outlive the tape. Repeated calls
  /// with the same slot return the same node.
  Var parameter(const Matrix& value, std::size_t slot);

  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var record(Matrix value, std::span<const Var> parents, Backward backward);

  /// Reverse pass from a 1x1 output. Parameter gradients are added into
  /// (*param_grads)[slot]; entries must be preallocated with matching shapes.
  void backward(Var output, std::vector<Matrix>* param_grads = nullptr);

  void accumulate(Var v, const Matrix& grad);
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].requires_grad; }
  /// Gradient of a variable after backward(); zero matrix if nothing flowed in.
  Matrix grad(Var v) const;

  const Matrix& value_of(int id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix owned;
    const Matrix* external = nullptr;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
    std::ptrdiff_t slot = -1;

    const Matrix& value() const { return external != nullptr ? *external : owned; }
  };

  std::vector<Node> nodes_;
  std::unordered_map<std::size_t, int> param_nodes_;
  bool track_parameters_ = true;
};

// ---- operations -----------------------------------------------------------

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
/// Elementwise a / b; same shapes.
Var divide(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
/// Broadcast-add a 1 x cols row to every row of a.
Var add_row(Var a, Var row);
/// out(i, j) = col_a(i) + col_b(j) for two column vectors.
Var outer_sum(Var col_a, Var col_b);
/// Multiply every entry of a by the 1x1 value s.
Var scale_by(Var a, Var s);

Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var sigmoid(Var a);
Var exp(Var a);

Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var row(Var a, Eigen::Index index);
/// out(t) = a(t - offset) when in range, else 0. Positive offset delays.
Var shift_rows(Var a, Eigen::Index offset);
/// Row-major reshape.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);

Var sum(Var a);
Var mean(Var a);
/// Column means as a 1 x cols row.
Var mean_rows(Var a);
/// Frobenius norm as 1x1.
Var l2_norm(Var a);
/// (1 - cos(u, v)) / 2 over the flattened entries; both must be nonzero.
Var cosine_distance(Var u, Var v);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

}  // namespace latad::ad
