// Copyright 2026 The Canonflow Authors
// SPDX-License-Identifier: Apache-2.0
#include "canonflow/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace canonflow {

namespace {

Tape* tape_of(const Var& v) {
  if (!v.valid()) throw std::invalid_argument("tape op: invalid Var");
  return v.tape;
}

Tape* common_tape(const Var& a, const Var& b) {
  Tape* t = tape_of(a);
  if (t != tape_of(b)) throw std::invalid_argument("tape op: operands on different tapes");
  return t;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

bool track(Tape* t, std::initializer_list<const Var*> parents) {
  if (!t->grad_enabled()) return false;
  for (const Var* p : parents) {
    if (t->needs_grad(p->index)) return true;
  }
  return false;
}

}  // namespace

const Eigen::MatrixXd& Var::value() const { return tape->value_of(index); }
const Eigen::MatrixXd& Var::grad() const { return tape->grad_of(index); }

Var Tape::constant(Eigen::MatrixXd value) {
  return make_node(std::move(value), BackwardFn(), false);
}

Var Tape::leaf(Eigen::MatrixXd value) {
  return make_node(std::move(value), BackwardFn(), grad_enabled_);
}

Var Tape::make_node(Eigen::MatrixXd value, BackwardFn backward, bool needs_grad) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  if (needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

const Eigen::MatrixXd& Tape::value_of(std::int32_t index) const {
  return nodes_.at(static_cast<std::size_t>(index)).value;
}

const Eigen::MatrixXd& Tape::grad_of(std::int32_t index) const {
  return nodes_.at(static_cast<std::size_t>(index)).grad;
}

bool Tape::has_grad(std::int32_t index) const {
  return nodes_.at(static_cast<std::size_t>(index)).grad.size() > 0;
}

bool Tape::needs_grad(std::int32_t index) const {
  return nodes_.at(static_cast<std::size_t>(index)).needs_grad;
}

void Tape::accumulate(std::int32_t index, const Eigen::MatrixXd& g) {
  Node& node = nodes_.at(static_cast<std::size_t>(index));
  if (!node.needs_grad) return;
  if (g.rows() != node.value.rows() || g.cols() != node.value.cols()) {
    throw std::invalid_argument("Tape::accumulate: gradient shape mismatch");
  }
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

void Tape::backward(const Var& root) {
  if (root.tape != this) throw std::invalid_argument("Tape::backward: root on different tape");
  if (root.rows() != 1 || root.cols() != 1) {
    throw std::invalid_argument("Tape::backward: root must be scalar");
  }
  if (!needs_grad(root.index)) return;
  accumulate(root.index, Eigen::MatrixXd::Ones(1, 1));
  for (std::int32_t i = root.index; i >= 0; --i) {
    Node& node = nodes_[static_cast<std::size_t>(i)];
    if (node.backward && node.grad.size() > 0) node.backward(*this, i);
  }
}

void Tape::clear() { nodes_.clear(); }

Var matmul(const Var& a, const Var& b) {
  Tape* t = common_tape(a, b);
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Eigen::MatrixXd value = a.value() * b.value();
  if (!track(t, {&a, &b})) return t->constant(std::move(value));
  const std::int32_t ai = a.index, bi = b.index;
  return t->make_node(std::move(value),
                      [ai, bi](Tape& tp, std::int32_t self) {
                        const Eigen::MatrixXd& g = tp.grad_of(self);
                        tp.accumulate(ai, g * tp.value_of(bi).transpose());
                        tp.accumulate(bi, tp.value_of(ai).transpose() * g);
                      },
                      true);
}

Var add(const Var& a, const Var& b) {
  Tape* t = common_tape(a, b);
  require_same_shape(a, b, "add");
  Eigen::MatrixXd value = a.value() + b.value();
  if (!track(t, {&a, &b})) return t->constant(std::move(value));
  const std::int32_t ai = a.index, bi = b.index;
  return t->make_node(std::move(value),
                      [ai, bi](Tape& tp, std::int32_t self) {
                        const Eigen::MatrixXd& g = tp.grad_of(self);
                        tp.accumulate(ai, g);
                        tp.accumulate(bi, g);
                      },
                      true);
}

Var sub(const Var& a, const Var& b) {
  Tape* t = common_tape(a, b);
  require_same_shape(a, b, "sub");
  Eigen::MatrixXd value = a.value() - b.value();
  if (!track(t, {&a, &b})) return t->constant(std::move(value));
  const std::int32_t ai = a.index, bi = b.index;
  return t->make_node(std::move(value),
                      [ai, bi](Tape& tp, std::int32_t self) {
                        const Eigen::MatrixXd& g = tp.grad_of(self);
                        tp.accumulate(ai, g);
                        tp.accumulate(bi, -g);
                      },
                      true);
}

Var add_bias(const Var& a, const Var& b) {
  Tape* t = common_tape(a, b);
  if (b.cols() != 1 || b.rows() != a.rows()) {
    throw std::invalid_argument("add_bias: bias must be rows(a) x 1");
  }
  Eigen::MatrixXd value = a.value().colwise() + Eigen::VectorXd(b.value());
  if (!track(t, {&a, &b})) return t->constant(std::move(value));
  const std::int32_t ai = a.index, bi = b.index;
  return t->make_node(std::move(value),
                      [ai, bi](Tape& tp, std::int32_t self) {
                        const Eigen::MatrixXd& g = tp.grad_of(self);
                        tp.accumulate(ai, g);
                        tp.accumulate(bi, g.rowwise().sum());
                      },
                      true);
}

Var cmul(const Var& a, const Var& b) {
  Tape* t = common_tape(a, b);
  require_same_shape(a, b, "cmul");
  Eigen::MatrixXd value = a.value().cwiseProduct(b.value());
  if (!track(t, {&a, &b})) return t->constant(std::move(value));
  const std::int32_t ai = a.index, bi = b.index;
  return t->make_node(std::move(value),
                      [ai, bi](Tape& tp, std::int32_t self) {
                        const Eigen::MatrixXd& g = tp.grad_of(self);
                        tp.accumulate(ai, g.cwiseProduct(tp.value_of(bi)));
                        tp.accumulate(bi, g.cwiseProduct(tp.value_of(ai)));
                      },
                      true);
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double s) {
  Tape* t = tape_of(a);
  Eigen::MatrixXd value = s * a.value();
  if (!track(t, {&a})) return t->constant(std::move(value));
  const std::int32_t ai = a.index;
  return t->make_node(std::move(value),
                      [ai, s](Tape& tp, std::int32_t self) {
                        tp.accumulate(ai, s * tp.grad_of(self));
                      },
                      true);
}

Var cmul_const(const Var& a, const Eigen::MatrixXd& m) {
  Tape* t = tape_of(a);
  if (m.rows() != a.rows() || m.cols() != a.cols()) {
    throw std::invalid_argument("cmul_const: shape mismatch");
  }
  Eigen::MatrixXd value = a.value().cwiseProduct(m);
  if (!track(t, {&a})) return t->constant(std::move(value));
  const std::int32_t ai = a.index;
  return t->make_node(std::move(value),
                      [ai, m](Tape& tp, std::int32_t self) {
                        tp.accumulate(ai, tp.grad_of(self).cwiseProduct(m));
                      },
                      true);
}

Var scale_rows(const Var& a, const Eigen::VectorXd& w) {
  Tape* t = tape_of(a);
  if (w.size() != a.rows()) throw std::invalid_argument("scale_rows: weight size mismatch");
  Eigen::MatrixXd value = w.asDiagonal() * a.value();
  if (!track(t, {&a})) return t->constant(std::move(value));
  const std::int32_t ai = a.index;
  return t->make_node(std::move(value),
                      [ai, w](Tape& tp, std::int32_t self) {
                        tp.accumulate(ai, w.asDiagonal() * tp.grad_of(self));
                      },
                      true);
}

namespace {

/// Shared scaffolding for elementwise unary ops. The backward multiplier is
/// computed from the op's input and output values at backward time.
template <typename Forward, typename Multiplier>
Var unary_op(const Var& a, Forward&& fwd, Multiplier&& mult) {
  Tape* t = tape_of(a);
  Eigen::MatrixXd value = fwd(a.value());
  if (!track(t, {&a})) return t->constant(std::move(value));
  const std::int32_t ai = a.index;
  auto m = std::forward<Multiplier>(mult);
  return t->make_node(std::move(value),
                      [ai, m](Tape& tp, std::int32_t self) {
                        tp.accumulate(ai, tp.grad_of(self).cwiseProduct(
                                              m(tp.value_of(ai), tp.value_of(self))));
                      },
                      true);
}

}  // namespace

Var relu(const Var& a) {
  return unary_op(
      a, [](const Eigen::MatrixXd& x) { return x.cwiseMax(0.0).eval(); },
      [](const Eigen::MatrixXd& x, const Eigen::MatrixXd&) {
        return (x.array() > 0.0).cast<double>().matrix().eval();
      });
}

Var sigmoid(const Var& a) {
  return unary_op(
      a,
      [](const Eigen::MatrixXd& x) {
        return (0.5 * ((0.5 * x).array().tanh() + 1.0)).matrix().eval();
      },
      [](const Eigen::MatrixXd&, const Eigen::MatrixXd& y) {
        return (y.array() * (1.0 - y.array())).matrix().eval();
      });
}

Var softplus_shifted(const Var& a, double shift) {
  return unary_op(
      a,
      [shift](const Eigen::MatrixXd& x) {
        const Eigen::ArrayXXd z = x.array() - shift;
        return (z.max(0.0) + (-z.abs()).exp().log1p()).matrix().eval();
      },
      [shift](const Eigen::MatrixXd& x, const Eigen::MatrixXd&) {
        return (0.5 * ((0.5 * (x.array() - shift)).tanh() + 1.0)).matrix().eval();
      });
}

Var expv(const Var& a) {
  return unary_op(
      a, [](const Eigen::MatrixXd& x) { return x.array().exp().matrix().eval(); },
      [](const Eigen::MatrixXd&, const Eigen::MatrixXd& y) { return y; });
}

Var logv(const Var& a) {
  return unary_op(
      a, [](const Eigen::MatrixXd& x) { return x.array().log().matrix().eval(); },
      [](const Eigen::MatrixXd& x, const Eigen::MatrixXd&) {
        return x.array().inverse().matrix().eval();
      });
}

Var absv(const Var& a) {
  return unary_op(
      a, [](const Eigen::MatrixXd& x) { return x.array().abs().matrix().eval(); },
      [](const Eigen::MatrixXd& x, const Eigen::MatrixXd&) {
        return x.array().sign().matrix().eval();
      });
}

Var square(const Var& a) {
  return unary_op(
      a, [](const Eigen::MatrixXd& x) { return x.array().square().matrix().eval(); },
      [](const Eigen::MatrixXd& x, const Eigen::MatrixXd&) { return (2.0 * x).eval(); });
}

Var sinv(const Var& a) {
  return unary_op(
      a, [](const Eigen::MatrixXd& x) { return x.array().sin().matrix().eval(); },
      [](const Eigen::MatrixXd& x, const Eigen::MatrixXd&) {
        return x.array().cos().matrix().eval();
      });
}

Var cosv(const Var& a) {
  return unary_op(
      a, [](const Eigen::MatrixXd& x) { return x.array().cos().matrix().eval(); },
      [](const Eigen::MatrixXd& x, const Eigen::MatrixXd&) {
        return (-x.array().sin()).matrix().eval();
      });
}

Var sum(const Var& a) {
  Tape* t = tape_of(a);
  Eigen::MatrixXd value(1, 1);
  value(0, 0) = a.value().sum();
  if (!track(t, {&a})) return t->constant(std::move(value));
  const std::int32_t ai = a.index;
  return t->make_node(std::move(value),
                      [ai](Tape& tp, std::int32_t self) {
                        const Eigen::MatrixXd& x = tp.value_of(ai);
                        tp.accumulate(ai, Eigen::MatrixXd::Constant(x.rows(), x.cols(),
                                                                    tp.grad_of(self)(0, 0)));
                      },
                      true);
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw std::invalid_argument("mean: empty operand");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var colwise_sum(const Var& a) {
  Tape* t = tape_of(a);
  Eigen::MatrixXd value = a.value().colwise().sum();
  if (!track(t, {&a})) return t->constant(std::move(value));
  const std::int32_t ai = a.index;
  return t->make_node(std::move(value),
                      [ai](Tape& tp, std::int32_t self) {
                        const Eigen::Index m = tp.value_of(ai).rows();
                        tp.accumulate(ai, tp.grad_of(self).colwise().replicate(m));
                      },
                      true);
}

Var rowwise_sum(const Var& a) {
  Tape* t = tape_of(a);
  Eigen::MatrixXd value = a.value().rowwise().sum();
  if (!track(t, {&a})) return t->constant(std::move(value));
  const std::int32_t ai = a.index;
  return t->make_node(std::move(value),
                      [ai](Tape& tp, std::int32_t self) {
                        const Eigen::Index n = tp.value_of(ai).cols();
                        tp.accumulate(ai, tp.grad_of(self).rowwise().replicate(n));
                      },
                      true);
}

Var repeat_cols(const Var& a, Eigen::Index n) {
  Tape* t = tape_of(a);
  if (a.cols() != 1) throw std::invalid_argument("repeat_cols: operand must have one column");
  Eigen::MatrixXd value = a.value().rowwise().replicate(n);
  if (!track(t, {&a})) return t->constant(std::move(value));
  const std::int32_t ai = a.index;
  return t->make_node(std::move(value),
                      [ai](Tape& tp, std::int32_t self) {
                        tp.accumulate(ai, tp.grad_of(self).rowwise().sum());
                      },
                      true);
}

Var vcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("vcat: no operands");
  Tape* t = tape_of(parts[0]);
  const Eigen::Index n = parts[0].cols();
  Eigen::Index m = 0;
  bool needs = false;
  for (const Var& p : parts) {
    common_tape(parts[0], p);
    if (p.cols() != n) throw std::invalid_argument("vcat: column count mismatch");
    m += p.rows();
    needs = needs || t->needs_grad(p.index);
  }
  Eigen::MatrixXd value(m, n);
  std::vector<std::pair<std::int32_t, Eigen::Index>> slices;  // parent index, row offset
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    value.middleRows(offset, p.rows()) = p.value();
    slices.emplace_back(p.index, offset);
    offset += p.rows();
  }
  if (!t->grad_enabled() || !needs) return t->constant(std::move(value));
  return t->make_node(std::move(value),
                      [slices](Tape& tp, std::int32_t self) {
                        const Eigen::MatrixXd& g = tp.grad_of(self);
                        for (const auto& [pi, off] : slices) {
                          tp.accumulate(pi, g.middleRows(off, tp.value_of(pi).rows()));
                        }
                      },
                      true);
}

Var hcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("hcat: no operands");
  Tape* t = tape_of(parts[0]);
  const Eigen::Index m = parts[0].rows();
  Eigen::Index n = 0;
  bool needs = false;
  for (const Var& p : parts) {
    common_tape(parts[0], p);
    if (p.rows() != m) throw std::invalid_argument("hcat: row count mismatch");
    n += p.cols();
    needs = needs || t->needs_grad(p.index);
  }
  Eigen::MatrixXd value(m, n);
  std::vector<std::pair<std::int32_t, Eigen::Index>> slices;  // parent index, col offset
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    value.middleCols(offset, p.cols()) = p.value();
    slices.emplace_back(p.index, offset);
    offset += p.cols();
  }
  if (!t->grad_enabled() || !needs) return t->constant(std::move(value));
  return t->make_node(std::move(value),
                      [slices](Tape& tp, std::int32_t self) {
                        const Eigen::MatrixXd& g = tp.grad_of(self);
                        for (const auto& [pi, off] : slices) {
                          tp.accumulate(pi, g.middleCols(off, tp.value_of(pi).cols()));
                        }
                      },
                      true);
}

Var rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  Tape* t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw std::invalid_argument("rows: slice out of range");
  }
  Eigen::MatrixXd value = a.value().middleRows(start, count);
  if (!track(t, {&a})) return t->constant(std::move(value));
  const std::int32_t ai = a.index;
  return t->make_node(std::move(value),
                      [ai, start, count](Tape& tp, std::int32_t self) {
                        const Eigen::MatrixXd& x = tp.value_of(ai);
                        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(x.rows(), x.cols());
                        g.middleRows(start, count) = tp.grad_of(self);
                        tp.accumulate(ai, g);
                      },
                      true);
}

Var cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  Tape* t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::invalid_argument("cols: slice out of range");
  }
  Eigen::MatrixXd value = a.value().middleCols(start, count);
  if (!track(t, {&a})) return t->constant(std::move(value));
  const std::int32_t ai = a.index;
  return t->make_node(std::move(value),
                      [ai, start, count](Tape& tp, std::int32_t self) {
                        const Eigen::MatrixXd& x = tp.value_of(ai);
                        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(x.rows(), x.cols());
                        g.middleCols(start, count) = tp.grad_of(self);
                        tp.accumulate(ai, g);
                      },
                      true);
}

}  // namespace canonflow
