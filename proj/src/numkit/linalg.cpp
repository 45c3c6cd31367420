#include "physprior/numkit/linalg.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "physprior/error.hpp"

namespace physprior::numkit {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// Returns pivot ratio; throws on exact singularity.
double invert_one(const double* src, double* dst, std::size_t n) {
  std::vector<double> a(src, src + n * n);
  std::vector<double> inv(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
  double pmax = 0.0, pmin = INFINITY;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    double best = std::abs(a[col * n + col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      double v = std::abs(a[r * n + col]);
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    if (best == 0.0 || !std::isfinite(best)) throw SingularMatrixError("inverse: matrix is singular");
    pmax = std::max(pmax, best);
    pmin = std::min(pmin, best);
    if (piv != col) {
      for (std::size_t k = 0; k < n; ++k) {
        std::swap(a[col * n + k], a[piv * n + k]);
        std::swap(inv[col * n + k], inv[piv * n + k]);
      }
    }
    double d = 1.0 / a[col * n + col];
    for (std::size_t k = 0; k < n; ++k) {
      a[col * n + k] *= d;
      inv[col * n + k] *= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      double f = a[r * n + col];
      if (f == 0.0) continue;
      for (std::size_t k = 0; k < n; ++k) {
        a[r * n + k] -= f * a[col * n + k];
        inv[r * n + k] -= f * inv[col * n + k];
      }
    }
  }
  std::copy(inv.begin(), inv.end(), dst);
  return pmax / pmin;
}

}  // namespace

Tensor invert_small_matrix(const Tensor& m) { return invert_small_matrix(m, nullptr); }

Tensor invert_small_matrix(const Tensor& m, double* condition_estimate) {
  const auto& s = m.shape();
  if (s.size() < 2 || s[s.size() - 1] != s[s.size() - 2])
    throw ShapeError("inverse: expected square matrix, got " + shape_str(s));
  std::size_t n = s.back();
  std::size_t batch = m.size() / (n * n);
  Tensor out(s);
  double worst = 1.0;
  for (std::size_t b = 0; b < batch; ++b) {
    double c = invert_one(m.data() + b * n * n, out.data() + b * n * n, n);
    if (c > kMaxConditionEstimate)
      throw SingularMatrixError("inverse: condition estimate " + std::to_string(c) + " exceeds limit");
    worst = std::max(worst, c);
  }
  if (condition_estimate) *condition_estimate = worst;
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != sb.size() || (sa.size() != 2 && sa.size() != 3))
    throw ShapeError("matmul: unsupported operand ranks " + shape_str(sa) + " x " + shape_str(sb));
  std::size_t batch = 1;
  if (sa.size() == 3) {
    if (sa[0] != sb[0]) throw ShapeError("matmul: batch mismatch " + shape_str(sa) + " x " + shape_str(sb));
    batch = sa[0];
  }
  std::size_t ar = sa[sa.size() - 2], ac = sa.back();
  std::size_t br = sb[sb.size() - 2], bc = sb.back();
  std::size_t m = ta ? ac : ar, k = ta ? ar : ac;
  std::size_t k2 = tb ? bc : br, n = tb ? br : bc;
  if (k != k2)
    throw ShapeError("matmul: inner dimensions differ for " + shape_str(sa) + (ta ? "^T" : "") + " x " +
                     shape_str(sb) + (tb ? "^T" : ""));
  Shape so = sa.size() == 3 ? Shape{batch, m, n} : Shape{m, n};
  Tensor out(so);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    ConstMap A(a.data() + bi * ar * ac, ar, ac);
    ConstMap B(b.data() + bi * br * bc, br, bc);
    MutMap C(out.data() + bi * m * n, m, n);
    if (!ta && !tb)
      C.noalias() = A * B;
    else if (ta && !tb)
      C.noalias() = A.transpose() * B;
    else if (!ta && tb)
      C.noalias() = A * B.transpose();
    else
      C.noalias() = A.transpose() * B.transpose();
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  const auto& s = a.shape();
  if (s.size() < 2) throw ShapeError("transpose: rank must be at least 2, got " + shape_str(s));
  std::size_t r = s[s.size() - 2], c = s.back();
  std::size_t batch = a.size() / (r * c);
  Shape so = s;
  std::swap(so[so.size() - 1], so[so.size() - 2]);
  Tensor out(so);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = a[b * r * c + i * c + j];
  return out;
}

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw Error("finite_difference_grad: step must be positive");
  Tensor g(x.shape());
  Tensor xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double orig = xp[i];
    xp[i] = orig + h;
    double fp = f(xp);
    xp[i] = orig - h;
    double fm = f(xp);
    xp[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_difference_grad: non-finite function value at coordinate " + std::to_string(i));
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Tensor finite_difference_jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw Error("finite_difference_jacobian: step must be positive");
  Tensor xp = x;
  std::size_t n = x.size();
  Tensor jac;
  for (std::size_t i = 0; i < n; ++i) {
    double orig = xp[i];
    xp[i] = orig + h;
    Tensor fp = f(xp);
    xp[i] = orig - h;
    Tensor fm = f(xp);
    xp[i] = orig;
    if (i == 0) jac = Tensor(Shape{fp.size(), n});
    for (std::size_t r = 0; r < fp.size(); ++r) {
      double d = (fp[r] - fm[r]) / (2.0 * h);
      if (!std::isfinite(d)) throw NumericError("finite_difference_jacobian: non-finite value");
      jac.at(r, i) = d;
    }
  }
  return jac;
}

}  // namespace physprior::numkit
