// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

namespace canonflow {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid as long as the tape is
/// alive and has not been cleared.
struct Var {
  Tape* tape = nullptr;
  std::int32_t index = -1;

  bool valid() const { return tape != nullptr && index >= 0; }
  const Eigen::MatrixXd& value() const;
  /// Accumulated gradient after Tape::backward. Zero-sized matrix when no
  /// gradient reached this node.
  const Eigen::MatrixXd& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Reverse-mode automatic differentiation over dense double matrices.
///
/// The tape records one node per intermediate value in creation order. Each
/// differentiable node carries a backward closure that routes the node's
/// accumulated gradient to its parents. Tape::backward seeds a scalar root
/// with 1 and replays the closures in reverse creation order.
///
/// Graphs are rebuilt every iteration; closures must not create new nodes.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::int32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Node without gradient tracking.
  Var constant(Eigen::MatrixXd value);
  /// Node that accumulates gradient (parameters, or inputs under study).
  Var leaf(Eigen::MatrixXd value);
  /// Custom op node. `backward` receives the tape and the node's own index;
  /// it reads grad_of(self) and calls accumulate on each parent. Pass
  /// needs_grad = false to record a plain value.
  Var make_node(Eigen::MatrixXd value, BackwardFn backward, bool needs_grad);

  /// When disabled, every op produces constants and backward closures are
  /// dropped. Used for gradient-free evaluation through the same code paths.
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  const Eigen::MatrixXd& value_of(std::int32_t index) const;
  const Eigen::MatrixXd& grad_of(std::int32_t index) const;
  bool has_grad(std::int32_t index) const;
  bool needs_grad(std::int32_t index) const;
  /// Adds g into the node's gradient (allocating zeros first if untouched).
  /// No-op for nodes that do not need gradients.
  void accumulate(std::int32_t index, const Eigen::MatrixXd& g);

  /// Backpropagates from a scalar (1x1) root.
  void backward(const Var& root);

  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;  // zero-sized until first accumulate
    BackwardFn backward;   // empty for constants and leaves
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

// Primitive ops. Operands must live on the same tape. Shapes are validated
// and mismatches throw std::invalid_argument.

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// a (m x n) plus column bias b (m x 1) broadcast over columns.
Var add_bias(const Var& a, const Var& b);
Var cmul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
/// Elementwise product with a constant matrix of the same shape.
Var cmul_const(const Var& a, const Eigen::MatrixXd& m);
/// Rows of a scaled by constant per-row weights w (size rows(a)).
Var scale_rows(const Var& a, const Eigen::VectorXd& w);

Var relu(const Var& a);
Var sigmoid(const Var& a);
/// softplus(a - shift), evaluated in a numerically stable form.
Var softplus_shifted(const Var& a, double shift);
Var expv(const Var& a);
/// Natural log; caller guarantees strictly positive inputs.
Var logv(const Var& a);
Var absv(const Var& a);
Var square(const Var& a);
Var sinv(const Var& a);
Var cosv(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
/// Sums each column; result 1 x n.
Var colwise_sum(const Var& a);
/// Sums each row; result m x 1.
Var rowwise_sum(const Var& a);
/// Broadcasts an m x 1 column to m x n.
Var repeat_cols(const Var& a, Eigen::Index n);

/// Row-wise concatenation; all operands share a column count.
Var vcat(const std::vector<Var>& parts);
/// Column-wise concatenation; all operands share a row count.
Var hcat(const std::vector<Var>& parts);
/// Row slice [start, start + count).
Var rows(const Var& a, Eigen::Index start, Eigen::Index count);
/// Column slice [start, start + count).
Var cols(const Var& a, Eigen::Index start, Eigen::Index count);

}  // namespace canonflow
