#pragma once

#include <cstddef>
#include <memory>
#include <unordered_map>
#include <vector>

#include "physprior/numkit/tensor.hpp"

namespace physprior::numkit {

enum class OpKind {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,
  AddScalar,
  MatMul,
  Affine,
  Transpose,
  Monomial,
  Sigmoid,
  Relu,
  Abs,
  Sqrt,
  Sum,
  SumTo,
  BroadcastTo,
  Inverse,
  Diag,
  DiagPart,
  Reshape,
  Concat,
  Slice,
  GatherRows,
  ScatterAddRows,
};

const char* op_name(OpKind k);

struct Node {
  OpKind op = OpKind::Leaf;
  std::vector<std::shared_ptr<Node>> inputs;
  Shape shape;
  Tensor value;
  bool evaluated = false;
  bool requires_grad = false;
  // Depends on an unbound or rebindable leaf; such nodes keep their inputs.
  bool pending = false;
  bool placeholder = false;

  // Op attributes.
  double scalar = 0.0;
  bool trans_a = false;
  bool trans_b = false;
  std::size_t begin = 0;
  std::size_t end = 0;
  Shape target;
  std::shared_ptr<const std::vector<int>> orders;
  std::shared_ptr<const std::vector<std::size_t>> index;
};

// Handle to a node of the tape.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool evaluated() const { return node_ && node_->evaluated; }
  const Node* id() const { return node_.get(); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

// Disables graph recording for ops created in its scope (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Re-enables recording inside an inference scope, for local derivative graphs.
class EnableGradGuard {
 public:
  EnableGradGuard();
  ~EnableGradGuard();
  EnableGradGuard(const EnableGradGuard&) = delete;
  EnableGradGuard& operator=(const EnableGradGuard&) = delete;

 private:
  bool prev_;
};

Var constant(Tensor t);
Var constant(double v);
Var parameter(Tensor t);
// Leaf whose value is supplied later by bind().
Var placeholder(Shape shape, bool requires_grad = false);
void bind(const Var& leaf, Tensor t);

// Gradients keyed by leaf identity.
class GradMap {
 public:
  void accumulate(const Node* key, const Tensor& g);
  bool contains(const Var& v) const;
  // Gradient for v, or zeros of v's shape when v does not influence the root.
  Tensor get(const Var& v) const;
  std::size_t size() const { return map_.size(); }

 private:
  std::unordered_map<const Node*, Tensor> map_;
};

// Re-evaluates every node under root from its leaves.
Tensor forward_eval(const Var& root);

// Gradient of sum(root * seed) w.r.t. every grad-requiring leaf.
GradMap backward_grad(const Var& root, const Tensor& seed);
GradMap backward_grad(const Var& root);

// Gradients of sum(root * seed) w.r.t. wrt. With create_graph the results are
// themselves differentiable graph nodes.
std::vector<Var> grad(const Var& root, const std::vector<Var>& wrt, const Var& seed = Var(),
                      bool create_graph = false);

// Broadcasting elementwise ops (trailing-axis alignment).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

// op(a)·op(b) on rank-2 or batched rank-3 operands.
Var matmul(const Var& a, const Var& b, bool trans_a = false, bool trans_b = false);
// x·W + b, x: rows×in, W: in×out, b: out.
Var affine(const Var& x, const Var& w, const Var& b);
// Swaps the last two axes.
Var transpose(const Var& a);

// x^k / k! elementwise. Negative orders give zero.
Var monomial(const Var& x, int order);
// Per-column orders indexed by the last axis.
Var monomial(const Var& x, std::shared_ptr<const std::vector<int>> orders);
Var sigmoid(const Var& x);
Var relu(const Var& x);
Var abs(const Var& x);
Var sqrt(const Var& x);

Var sum(const Var& x);
Var mean(const Var& x);
Var sum_to(const Var& x, const Shape& shape);
Var broadcast_to(const Var& x, const Shape& shape);

// Inverse of an n×n matrix or a batch of them.
Var inverse(const Var& m);
// Vector(s) on the last axis to diagonal matrices.
Var diag(const Var& v);
Var diag_part(const Var& m);

Var reshape(const Var& x, const Shape& shape);
// Concatenation and slicing along the last axis.
Var concat(const std::vector<Var>& parts);
Var slice(const Var& x, std::size_t begin, std::size_t end);
// Row gather/scatter along the first axis.
Var gather_rows(const Var& x, std::shared_ptr<const std::vector<std::size_t>> index);
Var scatter_add_rows(const Var& x, std::shared_ptr<const std::vector<std::size_t>> index,
                     std::size_t rows);

}  // namespace physprior::numkit
