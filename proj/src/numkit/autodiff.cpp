#include "physprior/numkit/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <optional>
#include <unordered_set>

#include "physprior/error.hpp"
#include "physprior/numkit/linalg.hpp"

namespace physprior::numkit {

namespace {

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<Node>;

[[noreturn]] void shape_fail(OpKind op, const std::string& detail) {
  throw ShapeError(std::string(op_name(op)) + ": " + detail);
}

// ---- broadcasting helpers -------------------------------------------------

Shape broadcast_shape(OpKind op, const Shape& a, const Shape& b) {
  std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      shape_fail(op, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `in` expressed over the axes of `out`; zero on broadcast axes.
std::vector<std::size_t> aligned_strides(const Shape& in, const Shape& out) {
  std::size_t r = out.size();
  std::vector<std::size_t> st(r, 0);
  std::size_t s = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    std::size_t axis_in = in.size() - 1 - k;
    std::size_t axis_out = r - 1 - k;
    st[axis_out] = in[axis_in] == 1 ? 0 : s;
    s *= in[axis_in];
  }
  return st;
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  for (std::size_t k = 0; k < small.size(); ++k)
    if (small[small.size() - 1 - k] != big[big.size() - 1 - k]) return false;
  return true;
}

// Calls fn(out_index, in_offset) for every element of out.
template <class Fn>
void for_each_broadcast(const Shape& in, const Shape& out, Fn&& fn) {
  std::size_t n = shape_size(out);
  std::size_t m = shape_size(in);
  if (in == out) {
    for (std::size_t i = 0; i < n; ++i) fn(i, i);
    return;
  }
  if (m == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i, 0);
    return;
  }
  if (is_suffix(in, out)) {
    for (std::size_t i = 0; i < n; ++i) fn(i, i % m);
    return;
  }
  auto st = aligned_strides(in, out);
  std::size_t r = out.size();
  std::vector<std::size_t> idx(r, 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    fn(i, off);
    for (std::size_t ax = r; ax-- > 0;) {
      ++idx[ax];
      off += st[ax];
      if (idx[ax] < out[ax]) break;
      off -= st[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

template <class F>
Tensor binary_kernel(const Tensor& a, const Tensor& b, const Shape& out_shape, F f) {
  Tensor out(out_shape);
  double* o = out.data();
  const double* pa = a.data();
  const double* pb = b.data();
  std::size_t n = out.size();
  if (a.shape() == out_shape && b.shape() == out_shape) {
    for (std::size_t i = 0; i < n; ++i) o[i] = f(pa[i], pb[i]);
  } else if (a.shape() == out_shape) {
    for_each_broadcast(b.shape(), out_shape, [&](std::size_t i, std::size_t j) { o[i] = f(pa[i], pb[j]); });
  } else if (b.shape() == out_shape) {
    for_each_broadcast(a.shape(), out_shape, [&](std::size_t i, std::size_t j) { o[i] = f(pa[j], pb[i]); });
  } else {
    Tensor ab(out_shape);
    for_each_broadcast(a.shape(), out_shape, [&](std::size_t i, std::size_t j) { ab[i] = pa[j]; });
    for_each_broadcast(b.shape(), out_shape, [&](std::size_t i, std::size_t j) { o[i] = f(ab[i], pb[j]); });
  }
  return out;
}

bool can_reduce_to(const Shape& from, const Shape& to) {
  if (to.size() > from.size()) return false;
  for (std::size_t k = 0; k < to.size(); ++k) {
    std::size_t dt = to[to.size() - 1 - k];
    std::size_t df = from[from.size() - 1 - k];
    if (dt != df && dt != 1) return false;
  }
  return true;
}

Tensor reduce_to(const Tensor& x, const Shape& to) {
  Tensor out(to);
  double* o = out.data();
  const double* px = x.data();
  for_each_broadcast(to, x.shape(), [&](std::size_t i, std::size_t j) { o[j] += px[i]; });
  return out;
}

Tensor expand_to(const Tensor& x, const Shape& to) {
  Tensor out(to);
  double* o = out.data();
  const double* px = x.data();
  for_each_broadcast(x.shape(), to, [&](std::size_t i, std::size_t j) { o[i] = px[j]; });
  return out;
}

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

// ---- shape inference ------------------------------------------------------

Shape infer_shape(const Node& n) {
  auto in = [&](std::size_t i) -> const Shape& { return n.inputs[i]->shape; };
  switch (n.op) {
    case OpKind::Leaf:
      return n.shape;
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div:
      return broadcast_shape(n.op, in(0), in(1));
    case OpKind::Neg:
    case OpKind::Scale:
    case OpKind::AddScalar:
    case OpKind::Sigmoid:
    case OpKind::Relu:
    case OpKind::Abs:
    case OpKind::Sqrt:
      return in(0);
    case OpKind::Monomial: {
      const auto& s = in(0);
      std::size_t last = s.empty() ? 1 : s.back();
      if (n.orders->size() != 1 && n.orders->size() != last)
        shape_fail(n.op, "order table of length " + std::to_string(n.orders->size()) + " for input " + shape_str(s));
      return s;
    }
    case OpKind::MatMul: {
      const auto& sa = in(0);
      const auto& sb = in(1);
      if (sa.size() != sb.size() || (sa.size() != 2 && sa.size() != 3))
        shape_fail(n.op, "unsupported operand ranks " + shape_str(sa) + " x " + shape_str(sb));
      if (sa.size() == 3 && sa[0] != sb[0]) shape_fail(n.op, "batch mismatch " + shape_str(sa) + " x " + shape_str(sb));
      std::size_t ar = sa[sa.size() - 2], ac = sa.back(), br = sb[sb.size() - 2], bc = sb.back();
      std::size_t m = n.trans_a ? ac : ar, k = n.trans_a ? ar : ac;
      std::size_t k2 = n.trans_b ? bc : br, c = n.trans_b ? br : bc;
      if (k != k2) shape_fail(n.op, "inner dimensions differ for " + shape_str(sa) + " x " + shape_str(sb));
      return sa.size() == 3 ? Shape{sa[0], m, c} : Shape{m, c};
    }
    case OpKind::Affine: {
      const auto& sx = in(0);
      const auto& sw = in(1);
      const auto& sbias = in(2);
      if (sx.size() != 2 || sw.size() != 2 || sbias.size() != 1 || sx[1] != sw[0] || sw[1] != sbias[0])
        shape_fail(n.op, "x " + shape_str(sx) + ", W " + shape_str(sw) + ", b " + shape_str(sbias));
      return Shape{sx[0], sw[1]};
    }
    case OpKind::Transpose: {
      Shape s = in(0);
      if (s.size() < 2) shape_fail(n.op, "rank must be at least 2, got " + shape_str(s));
      std::swap(s[s.size() - 1], s[s.size() - 2]);
      return s;
    }
    case OpKind::Sum:
      return Shape{};
    case OpKind::SumTo:
      if (!can_reduce_to(in(0), n.target)) shape_fail(n.op, "cannot reduce " + shape_str(in(0)) + " to " + shape_str(n.target));
      return n.target;
    case OpKind::BroadcastTo:
      if (!can_reduce_to(n.target, in(0))) shape_fail(n.op, "cannot expand " + shape_str(in(0)) + " to " + shape_str(n.target));
      return n.target;
    case OpKind::Inverse: {
      const auto& s = in(0);
      if (s.size() < 2 || s[s.size() - 1] != s[s.size() - 2]) shape_fail(n.op, "expected square matrices, got " + shape_str(s));
      return s;
    }
    case OpKind::Diag: {
      Shape s = in(0);
      if (s.empty()) shape_fail(n.op, "expected vector input");
      s.push_back(s.back());
      return s;
    }
    case OpKind::DiagPart: {
      Shape s = in(0);
      if (s.size() < 2 || s[s.size() - 1] != s[s.size() - 2]) shape_fail(n.op, "expected square matrices, got " + shape_str(s));
      s.pop_back();
      return s;
    }
    case OpKind::Reshape:
      if (shape_size(n.target) != shape_size(in(0)))
        shape_fail(n.op, "cannot view " + shape_str(in(0)) + " as " + shape_str(n.target));
      return n.target;
    case OpKind::Concat: {
      Shape s = in(0);
      if (s.empty()) shape_fail(n.op, "scalar operand");
      std::size_t total = 0;
      for (const auto& p : n.inputs) {
        const auto& ps = p->shape;
        if (ps.size() != s.size() || !std::equal(ps.begin(), ps.end() - 1, s.begin()))
          shape_fail(n.op, "leading dimensions differ: " + shape_str(s) + " vs " + shape_str(ps));
        total += ps.back();
      }
      s.back() = total;
      return s;
    }
    case OpKind::Slice: {
      Shape s = in(0);
      if (s.empty() || n.begin > n.end || n.end > s.back())
        shape_fail(n.op, "range [" + std::to_string(n.begin) + "," + std::to_string(n.end) + ") on " + shape_str(s));
      s.back() = n.end - n.begin;
      return s;
    }
    case OpKind::GatherRows: {
      Shape s = in(0);
      if (s.empty()) shape_fail(n.op, "scalar operand");
      for (auto i : *n.index)
        if (i >= s[0]) shape_fail(n.op, "row index " + std::to_string(i) + " out of range for " + shape_str(s));
      s[0] = n.index->size();
      return s;
    }
    case OpKind::ScatterAddRows: {
      Shape s = in(0);
      if (s.empty() || s[0] != n.index->size())
        shape_fail(n.op, "index length " + std::to_string(n.index->size()) + " for " + shape_str(s));
      for (auto i : *n.index)
        if (i >= n.end) shape_fail(n.op, "row index " + std::to_string(i) + " out of range");
      s[0] = n.end;
      return s;
    }
  }
  shape_fail(n.op, "unknown op");
}

// ---- forward kernels ------------------------------------------------------

Tensor compute(const Node& n) {
  auto v = [&](std::size_t i) -> const Tensor& { return n.inputs[i]->value; };
  switch (n.op) {
    case OpKind::Leaf:
      return n.value;
    case OpKind::Add:
      return binary_kernel(v(0), v(1), n.shape, [](double a, double b) { return a + b; });
    case OpKind::Sub:
      return binary_kernel(v(0), v(1), n.shape, [](double a, double b) { return a - b; });
    case OpKind::Mul:
      return binary_kernel(v(0), v(1), n.shape, [](double a, double b) { return a * b; });
    case OpKind::Div:
      return binary_kernel(v(0), v(1), n.shape, [](double a, double b) { return a / b; });
    case OpKind::Neg: {
      Tensor r = v(0);
      for (double& x : r.values()) x = -x;
      return r;
    }
    case OpKind::Scale: {
      Tensor r = v(0);
      for (double& x : r.values()) x *= n.scalar;
      return r;
    }
    case OpKind::AddScalar: {
      Tensor r = v(0);
      for (double& x : r.values()) x += n.scalar;
      return r;
    }
    case OpKind::Monomial: {
      Tensor r = v(0);
      const auto& ord = *n.orders;
      if (ord.size() == 1) {
        int k = ord[0];
        double inv = 1.0 / factorial(std::max(k, 0));
        for (double& x : r.values()) {
          if (k < 0) {
            x = 0.0;
            continue;
          }
          double p = 1.0;
          for (int i = 0; i < k; ++i) p *= x;
          x = p * inv;
        }
      } else {
        std::size_t w = ord.size();
        std::vector<double> inv(w);
        for (std::size_t c = 0; c < w; ++c) inv[c] = 1.0 / factorial(std::max(ord[c], 0));
        double* d = r.data();
        for (std::size_t i = 0; i < r.size(); ++i) {
          int k = ord[i % w];
          if (k < 0) {
            d[i] = 0.0;
            continue;
          }
          double p = 1.0;
          for (int j = 0; j < k; ++j) p *= d[i];
          d[i] = p * inv[i % w];
        }
      }
      return r;
    }
    case OpKind::Sigmoid: {
      Tensor r = v(0);
      for (double& x : r.values()) x = 1.0 / (1.0 + std::exp(-x));
      return r;
    }
    case OpKind::Relu: {
      Tensor r = v(0);
      for (double& x : r.values()) x = x > 0.0 ? x : 0.0;
      return r;
    }
    case OpKind::Abs: {
      Tensor r = v(0);
      for (double& x : r.values()) x = std::abs(x);
      return r;
    }
    case OpKind::Sqrt: {
      Tensor r = v(0);
      for (double& x : r.values()) x = std::sqrt(x);
      return r;
    }
    case OpKind::MatMul:
      return numkit::matmul(v(0), v(1), n.trans_a, n.trans_b);
    case OpKind::Affine: {
      using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
      const Tensor& x = v(0);
      const Tensor& w = v(1);
      const Tensor& b = v(2);
      Tensor out(n.shape);
      Eigen::Map<const RowMat> X(x.data(), x.dim(0), x.dim(1));
      Eigen::Map<const RowMat> W(w.data(), w.dim(0), w.dim(1));
      Eigen::Map<const Eigen::RowVectorXd> B(b.data(), b.size());
      Eigen::Map<RowMat> Y(out.data(), n.shape[0], n.shape[1]);
      Y.noalias() = X * W;
      Y.rowwise() += B;
      return out;
    }
    case OpKind::Transpose:
      return numkit::transpose(v(0));
    case OpKind::Sum:
      return Tensor::scalar(numkit::sum(v(0)));
    case OpKind::SumTo:
      return reduce_to(v(0), n.shape);
    case OpKind::BroadcastTo:
      return expand_to(v(0), n.shape);
    case OpKind::Inverse:
      return invert_small_matrix(v(0));
    case OpKind::Diag: {
      const Tensor& x = v(0);
      std::size_t d = x.shape().back();
      std::size_t batch = x.size() / d;
      Tensor r(n.shape);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < d; ++i) r[b * d * d + i * d + i] = x[b * d + i];
      return r;
    }
    case OpKind::DiagPart: {
      const Tensor& x = v(0);
      std::size_t d = x.shape().back();
      std::size_t batch = x.size() / (d * d);
      Tensor r(n.shape);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < d; ++i) r[b * d + i] = x[b * d * d + i * d + i];
      return r;
    }
    case OpKind::Reshape:
      return Tensor(n.shape, v(0).values());
    case OpKind::Concat: {
      Tensor r(n.shape);
      std::size_t w = n.shape.back();
      std::size_t rows = r.size() / std::max<std::size_t>(w, 1);
      std::size_t off = 0;
      for (const auto& p : n.inputs) {
        std::size_t pw = p->shape.back();
        for (std::size_t i = 0; i < rows; ++i)
          std::copy_n(p->value.data() + i * pw, pw, r.data() + i * w + off);
        off += pw;
      }
      return r;
    }
    case OpKind::Slice: {
      const Tensor& x = v(0);
      Tensor r(n.shape);
      std::size_t w = x.shape().back(), pw = n.end - n.begin;
      std::size_t rows = x.size() / std::max<std::size_t>(w, 1);
      for (std::size_t i = 0; i < rows; ++i) std::copy_n(x.data() + i * w + n.begin, pw, r.data() + i * pw);
      return r;
    }
    case OpKind::GatherRows: {
      const Tensor& x = v(0);
      Tensor r(n.shape);
      std::size_t w = x.shape()[0] ? x.size() / x.shape()[0] : 0;
      const auto& idx = *n.index;
      for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(x.data() + idx[i] * w, w, r.data() + i * w);
      return r;
    }
    case OpKind::ScatterAddRows: {
      const Tensor& x = v(0);
      Tensor r(n.shape);
      std::size_t w = x.shape()[0] ? x.size() / x.shape()[0] : 0;
      const auto& idx = *n.index;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        double* dst = r.data() + idx[i] * w;
        const double* src = x.data() + i * w;
        for (std::size_t k = 0; k < w; ++k) dst[k] += src[k];
      }
      return r;
    }
  }
  shape_fail(n.op, "unknown op");
}

Var finish(NodePtr n) {
  bool req = false, pend = false, ready = true;
  for (const auto& in : n->inputs) {
    req = req || in->requires_grad;
    pend = pend || in->pending;
    ready = ready && in->evaluated;
  }
  n->requires_grad = g_grad_enabled && req;
  n->pending = pend;
  n->shape = infer_shape(*n);
  if (ready) {
    n->value = compute(*n);
    n->evaluated = true;
  }
  // Constant subgraphs do not need their parents.
  if (!n->requires_grad && !n->pending) n->inputs.clear();
  return Var(std::move(n));
}

NodePtr make_node(OpKind op, std::initializer_list<Var> inputs) {
  auto n = std::make_shared<Node>();
  n->op = op;
  for (const auto& v : inputs) {
    if (!v.defined()) shape_fail(op, "undefined operand");
    n->inputs.push_back(v.node());
  }
  return n;
}

// Post-order over nodes reachable from root; children of nodes in `stop` are not expanded.
std::vector<Node*> topo_order(Node* root, bool grad_only, const std::unordered_set<const Node*>* stop = nullptr) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size() && !(stop && stop->count(node))) {
      Node* child = node->inputs[next++].get();
      if ((!grad_only || child->requires_grad) && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

Tensor sign_mask(const Tensor& x, bool relu_mask) {
  Tensor m(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = x[i];
    m[i] = relu_mask ? (v > 0.0 ? 1.0 : 0.0) : (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
  }
  return m;
}

Var unbroadcast(const Var& g, const Shape& s) {
  if (g.shape() == s) return g;
  return sum_to(g, s);
}

// Vector-Jacobian products, written with tape ops so they can be recorded.
std::vector<Var> vjp(const NodePtr& np, const Var& g, const std::vector<bool>& need) {
  const Node& n = *np;
  auto in = [&](std::size_t i) { return Var(n.inputs[i]); };
  Var self(np);
  switch (n.op) {
    case OpKind::Leaf:
      return {};
    case OpKind::Add:
      return {unbroadcast(g, n.inputs[0]->shape), unbroadcast(g, n.inputs[1]->shape)};
    case OpKind::Sub:
      return {unbroadcast(g, n.inputs[0]->shape), unbroadcast(neg(g), n.inputs[1]->shape)};
    case OpKind::Mul:
      return {need[0] ? unbroadcast(mul(g, in(1)), n.inputs[0]->shape) : Var(),
              need[1] ? unbroadcast(mul(g, in(0)), n.inputs[1]->shape) : Var()};
    case OpKind::Div: {
      Var ga = div(g, in(1));
      return {unbroadcast(ga, n.inputs[0]->shape), need[1] ? unbroadcast(neg(mul(ga, self)), n.inputs[1]->shape) : Var()};
    }
    case OpKind::Neg:
      return {neg(g)};
    case OpKind::Scale:
      return {scale(g, n.scalar)};
    case OpKind::AddScalar:
      return {g};
    case OpKind::MatMul: {
      Var a = in(0), b = in(1);
      Var ga, gb;
      if (need[0]) ga = n.trans_a ? matmul(b, g, n.trans_b, true) : matmul(g, b, false, !n.trans_b);
      if (need[1]) gb = n.trans_b ? matmul(g, a, true, n.trans_a) : matmul(a, g, !n.trans_a, false);
      return {ga, gb};
    }
    case OpKind::Affine: {
      Var x = in(0), w = in(1);
      return {need[0] ? matmul(g, w, false, true) : Var(), need[1] ? matmul(x, g, true, false) : Var(),
              need[2] ? sum_to(g, n.inputs[2]->shape) : Var()};
    }
    case OpKind::Transpose:
      return {transpose(g)};
    case OpKind::Monomial: {
      auto lower = std::make_shared<std::vector<int>>(*n.orders);
      for (int& k : *lower) --k;
      return {mul(g, monomial(in(0), lower))};
    }
    case OpKind::Sigmoid:
      return {mul(g, mul(self, sub(constant(1.0), self)))};
    case OpKind::Relu:
      return {mul(g, constant(sign_mask(n.inputs[0]->value, true)))};
    case OpKind::Abs:
      return {mul(g, constant(sign_mask(n.inputs[0]->value, false)))};
    case OpKind::Sqrt:
      return {div(scale(g, 0.5), self)};
    case OpKind::Sum:
    case OpKind::SumTo:
      return {broadcast_to(g, n.inputs[0]->shape)};
    case OpKind::BroadcastTo:
      return {sum_to(g, n.inputs[0]->shape)};
    case OpKind::Inverse:
      return {neg(matmul(matmul(self, g, true, false), self, false, true))};
    case OpKind::Diag:
      return {diag_part(g)};
    case OpKind::DiagPart:
      return {diag(g)};
    case OpKind::Reshape:
      return {reshape(g, n.inputs[0]->shape)};
    case OpKind::Concat: {
      std::vector<Var> out;
      std::size_t off = 0;
      for (const auto& p : n.inputs) {
        std::size_t w = p->shape.back();
        out.push_back(slice(g, off, off + w));
        off += w;
      }
      return out;
    }
    case OpKind::Slice: {
      const Shape& s = n.inputs[0]->shape;
      std::vector<Var> parts;
      if (n.begin > 0) {
        Shape z = s;
        z.back() = n.begin;
        parts.push_back(constant(Tensor(z)));
      }
      parts.push_back(g);
      if (n.end < s.back()) {
        Shape z = s;
        z.back() = s.back() - n.end;
        parts.push_back(constant(Tensor(z)));
      }
      return {parts.size() == 1 ? g : concat(parts)};
    }
    case OpKind::GatherRows:
      return {scatter_add_rows(g, n.index, n.inputs[0]->shape[0])};
    case OpKind::ScatterAddRows:
      return {gather_rows(g, n.index)};
  }
  return {};
}

}  // namespace

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Neg: return "neg";
    case OpKind::Scale: return "scale";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::MatMul: return "matmul";
    case OpKind::Affine: return "affine";
    case OpKind::Transpose: return "transpose";
    case OpKind::Monomial: return "monomial";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Relu: return "relu";
    case OpKind::Abs: return "abs";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::Sum: return "sum";
    case OpKind::SumTo: return "sum_to";
    case OpKind::BroadcastTo: return "broadcast_to";
    case OpKind::Inverse: return "inverse";
    case OpKind::Diag: return "diag";
    case OpKind::DiagPart: return "diag_part";
    case OpKind::Reshape: return "reshape";
    case OpKind::Concat: return "concat";
    case OpKind::Slice: return "slice";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::ScatterAddRows: return "scatter_add_rows";
  }
  return "?";
}

const Tensor& Var::value() const {
  if (!node_) throw Error("value of an undefined variable");
  if (!node_->evaluated) throw Error(std::string(op_name(node_->op)) + ": value requested before evaluation");
  return node_->value;
}

const Shape& Var::shape() const {
  if (!node_) throw Error("shape of an undefined variable");
  return node_->shape;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
EnableGradGuard::EnableGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = true; }
EnableGradGuard::~EnableGradGuard() { g_grad_enabled = prev_; }

Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->shape = t.shape();
  n->value = std::move(t);
  n->evaluated = true;
  return Var(std::move(n));
}

Var constant(double v) { return constant(Tensor::scalar(v)); }

Var parameter(Tensor t) {
  auto n = std::make_shared<Node>();
  n->shape = t.shape();
  n->value = std::move(t);
  n->evaluated = true;
  n->requires_grad = true;
  return Var(std::move(n));
}

Var placeholder(Shape shape, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->placeholder = true;
  n->pending = true;
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

void bind(const Var& leaf, Tensor t) {
  if (!leaf.defined() || leaf.node()->op != OpKind::Leaf || !leaf.node()->placeholder)
    throw Error("bind: target is not a placeholder");
  if (t.shape() != leaf.shape())
    throw ShapeError("bind: shape " + shape_str(t.shape()) + " for placeholder " + shape_str(leaf.shape()));
  leaf.node()->value = std::move(t);
  leaf.node()->evaluated = true;
}

void GradMap::accumulate(const Node* key, const Tensor& g) {
  auto it = map_.find(key);
  if (it == map_.end())
    map_.emplace(key, g);
  else
    it->second += g;
}

bool GradMap::contains(const Var& v) const { return map_.count(v.id()) > 0; }

Tensor GradMap::get(const Var& v) const {
  auto it = map_.find(v.id());
  if (it == map_.end()) return Tensor(v.shape());
  return it->second;
}

Tensor forward_eval(const Var& root) {
  if (!root.defined()) throw Error("forward_eval: undefined root");
  auto order = topo_order(root.node().get(), false);
  for (Node* n : order) {
    if (n->op == OpKind::Leaf) {
      if (!n->evaluated) throw Error("forward_eval: unbound leaf of shape " + shape_str(n->shape));
      continue;
    }
    n->value = compute(*n);
    n->evaluated = true;
  }
  return root.node()->value;
}

std::vector<Var> grad(const Var& root, const std::vector<Var>& wrt, const Var& seed, bool create_graph) {
  if (!root.defined()) throw Error("backward: undefined root");
  Node* r = root.node().get();
  std::unordered_set<const Node*> targets;
  for (const auto& w : wrt) targets.insert(w.id());
  auto order = topo_order(r, true, &targets);
  // Only nodes with a path to some target need gradients.
  std::unordered_set<const Node*> reaches;
  for (Node* n : order) {
    if (!n->evaluated) throw Error(std::string("backward: graph not evaluated at ") + op_name(n->op));
    bool hit = targets.count(n) > 0;
    if (!hit)
      for (const auto& c : n->inputs)
        if (reaches.count(c.get())) {
          hit = true;
          break;
        }
    if (hit) reaches.insert(n);
  }
  std::unordered_map<const Node*, Var> grads;

  std::optional<NoGradGuard> guard;
  if (!create_graph) guard.emplace();

  Var s = seed.defined() ? seed : constant(Tensor(root.shape(), 1.0));
  if (s.shape() != root.shape())
    throw ShapeError("backward: seed shape " + shape_str(s.shape()) + " differs from root " + shape_str(root.shape()));

  std::unordered_map<const Node*, Var> kept;
  if (r->requires_grad) grads.emplace(r, s);

  // Shared pointers to nodes in order, needed to build VJP graphs.
  std::unordered_map<const Node*, NodePtr> owner;
  owner.emplace(r, root.node());
  for (Node* n : order)
    for (const auto& c : n->inputs) owner.emplace(c.get(), c);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    auto gi = grads.find(n);
    if (gi == grads.end()) continue;
    Var g = gi->second;
    if (targets.count(n)) kept[n] = g;
    if (n->op != OpKind::Leaf && !targets.count(n)) {
      std::vector<bool> need(n->inputs.size());
      for (std::size_t i = 0; i < need.size(); ++i)
        need[i] = n->inputs[i]->requires_grad && reaches.count(n->inputs[i].get()) > 0;
      auto contrib = vjp(owner.at(n), g, need);
      for (std::size_t i = 0; i < n->inputs.size() && i < contrib.size(); ++i) {
        Node* c = n->inputs[i].get();
        if (!c->requires_grad || !contrib[i].defined() || !reaches.count(c)) continue;
        auto ci = grads.find(c);
        if (ci == grads.end())
          grads.emplace(c, contrib[i]);
        else
          ci->second = add(ci->second, contrib[i]);
      }
    }
    grads.erase(n);
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto k = kept.find(w.id());
    out.push_back(k != kept.end() ? k->second : constant(Tensor(w.shape())));
  }
  return out;
}

GradMap backward_grad(const Var& root, const Tensor& seed) {
  if (!root.defined()) throw Error("backward: undefined root");
  if (!root.evaluated()) throw Error("backward: graph not evaluated");
  auto order = topo_order(root.node().get(), true);
  std::vector<Var> leaves;
  for (Node* n : order)
    if (n->op == OpKind::Leaf && n->requires_grad) leaves.push_back(Var(std::shared_ptr<Node>(root.node(), n)));
  GradMap gm;
  if (leaves.empty()) return gm;
  auto gs = grad(root, leaves, constant(seed), false);
  for (std::size_t i = 0; i < leaves.size(); ++i) gm.accumulate(leaves[i].id(), gs[i].value());
  return gm;
}

GradMap backward_grad(const Var& root) {
  if (!root.defined()) throw Error("backward: undefined root");
  return backward_grad(root, Tensor(root.shape(), 1.0));
}

// ---- op constructors ------------------------------------------------------

Var add(const Var& a, const Var& b) { return finish(make_node(OpKind::Add, {a, b})); }
Var sub(const Var& a, const Var& b) { return finish(make_node(OpKind::Sub, {a, b})); }
Var mul(const Var& a, const Var& b) { return finish(make_node(OpKind::Mul, {a, b})); }
Var div(const Var& a, const Var& b) { return finish(make_node(OpKind::Div, {a, b})); }
Var neg(const Var& a) { return finish(make_node(OpKind::Neg, {a})); }

Var scale(const Var& a, double s) {
  auto n = make_node(OpKind::Scale, {a});
  n->scalar = s;
  return finish(std::move(n));
}

Var add_scalar(const Var& a, double s) {
  auto n = make_node(OpKind::AddScalar, {a});
  n->scalar = s;
  return finish(std::move(n));
}

Var matmul(const Var& a, const Var& b, bool trans_a, bool trans_b) {
  auto n = make_node(OpKind::MatMul, {a, b});
  n->trans_a = trans_a;
  n->trans_b = trans_b;
  return finish(std::move(n));
}

Var affine(const Var& x, const Var& w, const Var& b) { return finish(make_node(OpKind::Affine, {x, w, b})); }
Var transpose(const Var& a) { return finish(make_node(OpKind::Transpose, {a})); }

Var monomial(const Var& x, int order) {
  return monomial(x, std::make_shared<const std::vector<int>>(1, order));
}

Var monomial(const Var& x, std::shared_ptr<const std::vector<int>> orders) {
  auto n = make_node(OpKind::Monomial, {x});
  if (!orders || orders->empty()) shape_fail(OpKind::Monomial, "empty order table");
  n->orders = std::move(orders);
  return finish(std::move(n));
}

Var sigmoid(const Var& x) { return finish(make_node(OpKind::Sigmoid, {x})); }
Var relu(const Var& x) { return finish(make_node(OpKind::Relu, {x})); }
Var abs(const Var& x) { return finish(make_node(OpKind::Abs, {x})); }
Var sqrt(const Var& x) { return finish(make_node(OpKind::Sqrt, {x})); }
Var sum(const Var& x) { return finish(make_node(OpKind::Sum, {x})); }

Var mean(const Var& x) {
  std::size_t n = shape_size(x.shape());
  if (n == 0) throw ShapeError("mean: empty operand");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var sum_to(const Var& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  auto n = make_node(OpKind::SumTo, {x});
  n->target = shape;
  return finish(std::move(n));
}

Var broadcast_to(const Var& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  auto n = make_node(OpKind::BroadcastTo, {x});
  n->target = shape;
  return finish(std::move(n));
}

Var inverse(const Var& m) { return finish(make_node(OpKind::Inverse, {m})); }
Var diag(const Var& v) { return finish(make_node(OpKind::Diag, {v})); }
Var diag_part(const Var& m) { return finish(make_node(OpKind::DiagPart, {m})); }

Var reshape(const Var& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  auto n = make_node(OpKind::Reshape, {x});
  n->target = shape;
  return finish(std::move(n));
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) shape_fail(OpKind::Concat, "no operands");
  if (parts.size() == 1) return parts[0];
  auto n = std::make_shared<Node>();
  n->op = OpKind::Concat;
  for (const auto& p : parts) {
    if (!p.defined()) shape_fail(OpKind::Concat, "undefined operand");
    n->inputs.push_back(p.node());
  }
  return finish(std::move(n));
}

Var slice(const Var& x, std::size_t begin, std::size_t end) {
  auto n = make_node(OpKind::Slice, {x});
  n->begin = begin;
  n->end = end;
  return finish(std::move(n));
}

Var gather_rows(const Var& x, std::shared_ptr<const std::vector<std::size_t>> index) {
  auto n = make_node(OpKind::GatherRows, {x});
  n->index = std::move(index);
  return finish(std::move(n));
}

Var scatter_add_rows(const Var& x, std::shared_ptr<const std::vector<std::size_t>> index, std::size_t rows) {
  auto n = make_node(OpKind::ScatterAddRows, {x});
  n->index = std::move(index);
  n->end = rows;
  return finish(std::move(n));
}

}  // namespace physprior::numkit
