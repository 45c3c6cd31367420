#include "physprior/hamiltonian/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "physprior/error.hpp"

namespace physprior::hamiltonian {

using numkit::Shape;

namespace {

void require_same(const Tensor& q, const Tensor& p) {
  if (q.shape() != p.shape())
    throw ShapeError("hamiltonian: q " + numkit::shape_str(q.shape()) + " and p " + numkit::shape_str(p.shape()));
}

std::size_t row_width(const Tensor& q) { return q.rank() == 0 ? 1 : q.shape().back(); }

Tensor positions(const Tensor& q, const Tensor& p, std::size_t n) {
  Tensor X(Shape{n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    X.at(i, 0) = q[i];
    X.at(i, 1) = p[i];
  }
  return X;
}

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

}  // namespace

Tensor energy(const AnalyticSystem& sys, const Tensor& q, const Tensor& p) {
  require_same(q, p);
  std::size_t w = row_width(q);
  std::size_t rows = q.size() / w;
  Tensor e(Shape{rows});
  if (sys.kind == SystemKind::PointVortex) {
    if (w != sys.gamma.size()) throw ShapeError("point vortex: state width differs from strength count");
    for (std::size_t r = 0; r < rows; ++r) {
      Tensor qr(Shape{w}, std::vector<double>(q.data() + r * w, q.data() + (r + 1) * w));
      Tensor pr(Shape{w}, std::vector<double>(p.data() + r * w, p.data() + (r + 1) * w));
      e[r] = point_vortex_hamiltonian(sys.gamma, positions(qr, pr, w));
    }
    return e;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    double h = 0.0;
    for (std::size_t i = 0; i < w; ++i) {
      double a = q[r * w + i], b = p[r * w + i];
      switch (sys.kind) {
        case SystemKind::Pendulum: h += 0.5 * b * b - std::cos(a); break;
        case SystemKind::Spring: h += 0.5 * (a * a + b * b); break;
        case SystemKind::NonseparableTest: h += 0.5 * (a * a + 1.0) * (b * b + 1.0); break;
        default: break;
      }
    }
    e[r] = h;
  }
  return e;
}

double energy1(const AnalyticSystem& sys, const Tensor& q, const Tensor& p) { return numkit::sum(energy(sys, q, p)); }

std::pair<Tensor, Tensor> analytic_grads(const AnalyticSystem& sys, const Tensor& q, const Tensor& p) {
  require_same(q, p);
  Tensor gq(q.shape()), gp(p.shape());
  if (sys.kind == SystemKind::PointVortex) {
    std::size_t n = sys.gamma.size();
    if (q.size() % n != 0) throw ShapeError("point vortex: state width differs from strength count");
    for (std::size_t r = 0; r < q.size() / n; ++r) {
      Tensor qr(Shape{n}, std::vector<double>(q.data() + r * n, q.data() + (r + 1) * n));
      Tensor pr(Shape{n}, std::vector<double>(p.data() + r * n, p.data() + (r + 1) * n));
      Tensor g = point_vortex_hamiltonian_grad(sys.gamma, positions(qr, pr, n));
      for (std::size_t i = 0; i < n; ++i) {
        gq[r * n + i] = g.at(i, 0);
        gp[r * n + i] = g.at(i, 1);
      }
    }
    return {gq, gp};
  }
  for (std::size_t i = 0; i < q.size(); ++i) {
    double a = q[i], b = p[i];
    switch (sys.kind) {
      case SystemKind::Pendulum:
        gq[i] = std::sin(a);
        gp[i] = b;
        break;
      case SystemKind::Spring:
        gq[i] = a;
        gp[i] = b;
        break;
      case SystemKind::NonseparableTest:
        gq[i] = a * (b * b + 1.0);
        gp[i] = b * (a * a + 1.0);
        break;
      default:
        break;
    }
  }
  return {gq, gp};
}

std::pair<Tensor, Tensor> analytic_flow(const AnalyticSystem& sys, const Tensor& q, const Tensor& p) {
  auto [gq, gp] = analytic_grads(sys, q, p);
  if (sys.kind == SystemKind::PointVortex) {
    // Γ dx/dt = -dH/dy, Γ dy/dt = dH/dx
    std::size_t n = sys.gamma.size();
    Tensor dx(q.shape()), dy(p.shape());
    for (std::size_t i = 0; i < q.size(); ++i) {
      double g = sys.gamma[i % n];
      if (g == 0.0) throw NumericError("point vortex: zero circulation has no canonical flow");
      dx[i] = -gp[i] / g;
      dy[i] = gq[i] / g;
    }
    return {dx, dy};
  }
  return {gp, -gq};
}

double point_vortex_hamiltonian(const std::vector<double>& gamma, const Tensor& X) {
  std::size_t n = gamma.size();
  if (X.size() != 2 * n) throw ShapeError("point_vortex_hamiltonian: positions do not match strengths");
  double h = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = j + 1; k < n; ++k) {
      double dx = X[2 * j] - X[2 * k], dy = X[2 * j + 1] - X[2 * k + 1];
      double r = std::hypot(dx, dy);
      if (r < 1e-12) throw NumericError("point_vortex_hamiltonian: coincident particles " + std::to_string(j) +
                                        " and " + std::to_string(k));
      h += 2.0 * gamma[j] * gamma[k] * std::log(r);
    }
  return h / (4.0 * M_PI);
}

Tensor point_vortex_hamiltonian_grad(const std::vector<double>& gamma, const Tensor& X) {
  std::size_t n = gamma.size();
  if (X.size() != 2 * n) throw ShapeError("point_vortex_hamiltonian_grad: positions do not match strengths");
  Tensor g(Shape{n, 2});
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k) {
      if (j == k) continue;
      double dx = X[2 * j] - X[2 * k], dy = X[2 * j + 1] - X[2 * k + 1];
      double r2 = dx * dx + dy * dy;
      if (r2 < 1e-24) throw NumericError("point_vortex_hamiltonian_grad: coincident particles");
      double c = gamma[j] * gamma[k] / (2.0 * M_PI * r2);
      g.at(j, 0) += c * dx;
      g.at(j, 1) += c * dy;
    }
  return g;
}

// ---- Taylor field ---------------------------------------------------------

Var TaylorField::eval(const std::vector<Var>& p, const Var& v) const {
  using namespace numkit;
  const Var& A = p.at(a);
  const Var& B = p.at(b);
  Var fa = monomial(matmul(v, A, false, true), orders);
  Var fb = monomial(matmul(v, B, false, true), orders);
  Var t = sub(matmul(fa, A), matmul(fb, B));
  return add(t, p.at(bias));
}

Tensor TaylorField::eval(const ParameterSet& ps, const Tensor& v) const {
  numkit::NoGradGuard ng;
  auto p = ps.bind(false);
  return eval(p, numkit::constant(v)).value();
}

Tensor TaylorField::jacobian(const ParameterSet& ps, const Tensor& v) const {
  if (v.size() != dim) throw ShapeError("taylor jacobian: point has wrong dimension");
  const Tensor& A = ps[a];
  const Tensor& B = ps[b];
  std::size_t rows = terms * hidden;
  Tensor J(Shape{dim, dim});
  for (int sgn = 0; sgn < 2; ++sgn) {
    const Tensor& W = sgn == 0 ? A : B;
    double s = sgn == 0 ? 1.0 : -1.0;
    for (std::size_t r = 0; r < rows; ++r) {
      double z = 0.0;
      for (std::size_t c = 0; c < dim; ++c) z += W.at(r, c) * v[c];
      int k = (*orders)[r] - 1;  // derivative of x^i/i! is x^(i-1)/(i-1)!
      double lam = k < 0 ? 0.0 : std::pow(z, k) / factorial(k);
      for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j) J.at(i, j) += s * lam * W.at(r, i) * W.at(r, j);
    }
  }
  return J;
}

TaylorField add_taylor_field(ParameterSet& ps, const std::string& prefix, std::size_t dim, std::size_t terms,
                             std::size_t hidden, Rng& rng) {
  TaylorField f;
  f.terms = terms;
  f.hidden = hidden;
  f.dim = dim;
  auto ord = std::make_shared<std::vector<int>>(terms * hidden);
  for (std::size_t r = 0; r < terms * hidden; ++r) (*ord)[r] = static_cast<int>(r / hidden) + 1;
  f.orders = ord;
  Tensor A(Shape{terms * hidden, dim}), B(Shape{terms * hidden, dim});
  for (std::size_t i = 1; i <= terms; ++i) {
    double sd = std::sqrt(2.0 / (static_cast<double>(dim * hidden) * static_cast<double>(i + 1)));
    for (std::size_t r = (i - 1) * hidden; r < i * hidden; ++r)
      for (std::size_t c = 0; c < dim; ++c) {
        A.at(r, c) = rng.normal(0.0, sd);
        B.at(r, c) = rng.normal(0.0, sd);
      }
  }
  f.a = ps.add(prefix + ".A", std::move(A));
  f.b = ps.add(prefix + ".B", std::move(B));
  f.bias = ps.add(prefix + ".bias", Tensor(Shape{dim}));
  return f;
}

TaylorNet make_taylor_net(ParameterSet& ps, std::size_t dim, std::size_t terms, std::size_t hidden, Rng& rng) {
  TaylorNet n;
  n.tp = add_taylor_field(ps, "tp", dim, terms, hidden, rng);
  n.vq = add_taylor_field(ps, "vq", dim, terms, hidden, rng);
  return n;
}

// ---- multilayer Hamiltonian ------------------------------------------------

Var MlpHamiltonian::energy(const std::vector<Var>& params, const Var& q, const Var& p) const {
  return net.forward(params, numkit::concat({q, p}));
}

std::pair<Var, Var> MlpHamiltonian::grads(const std::vector<Var>& params, const Var& q, const Var& p) const {
  // Rows are independent, so the gradient of the summed energy is per-row.
  // A graph for the gradient is only needed when something upstream will be differentiated.
  bool upstream = q.requires_grad() || p.requires_grad();
  for (const auto& v : params) upstream = upstream || v.requires_grad();
  bool need_graph = numkit::grad_enabled() && upstream;
  // dH/dq needs a local graph even in inference mode
  numkit::EnableGradGuard record;
  Var qq = q;
  Var pp = p;
  // Inputs that do not require grad would get zero gradients; promote them.
  if (!qq.requires_grad()) qq = numkit::add(qq, numkit::parameter(Tensor(Shape{})));
  if (!pp.requires_grad()) pp = numkit::add(pp, numkit::parameter(Tensor(Shape{})));
  Var h = numkit::sum(energy(params, qq, pp));
  auto g = numkit::grad(h, {qq, pp}, Var(), need_graph);
  return {g[0], g[1]};
}

MlpHamiltonian make_mlp_hamiltonian(ParameterSet& ps, std::size_t dim, Rng& rng, std::size_t hidden,
                                    std::size_t layers) {
  std::vector<std::size_t> widths{2 * dim};
  for (std::size_t i = 0; i + 1 < layers; ++i) widths.push_back(hidden);
  widths.push_back(1);
  MlpHamiltonian h;
  h.dim = dim;
  h.net = numkit::make_mlp(ps, "H", widths, numkit::Activation::Sigmoid, numkit::Init::XavierUniform, rng);
  return h;
}

// ---- pairwise vortex energy ------------------------------------------------

Var PairVortexNet::eval(const std::vector<Var>& params, const std::vector<double>& gamma, const Tensor& X) const {
  using namespace numkit;
  std::size_t n = gamma.size();
  if (X.size() != 2 * n) throw ShapeError("pair vortex net: positions do not match strengths");
  if (n < 2) return constant(0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (X[2 * i] != X[2 * j]) return X[2 * i] < X[2 * j];
    if (X[2 * i + 1] != X[2 * j + 1]) return X[2 * i + 1] < X[2 * j + 1];
    return gamma[i] < gamma[j];
  });
  Tensor feats(Shape{n * (n - 1), 4});
  Tensor weights(Shape{n * (n - 1), 1});
  std::size_t r = 0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b) continue;
      std::size_t j = order[a], k = order[b];
      feats.at(r, 0) = X[2 * j];
      feats.at(r, 1) = X[2 * j + 1];
      feats.at(r, 2) = X[2 * k];
      feats.at(r, 3) = X[2 * k + 1];
      weights.at(r, 0) = gamma[j] * gamma[k];
      ++r;
    }
  return sum(mul(net.forward(params, constant(feats)), constant(weights)));
}

PairVortexNet make_pair_vortex_net(ParameterSet& ps, Rng& rng, std::size_t hidden) {
  PairVortexNet p;
  p.net = numkit::make_mlp(ps, "pair", {4, hidden, hidden, 1}, numkit::Activation::Sigmoid,
                           numkit::Init::XavierUniform, rng);
  return p;
}

}  // namespace physprior::hamiltonian
