#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "physprior/error.hpp"
#include "physprior/hyperbolic/hyperbolic.hpp"

namespace physprior::hyperbolic {

namespace {

constexpr double kCflSlack = 1e-12;

void check_cfl(double courant, const char* where) {
  if (!(courant <= 1.0 + kCflSlack)) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s: CFL violation, courant number %.6g > 1", where, courant);
    throw CflError(buf);
  }
}

std::string cell_msg(const char* where, std::size_t j, const char* what) {
  return std::string(where) + ": " + what + " at cell " + std::to_string(j);
}

}  // namespace

void GridField1D::validate() const {
  if (u.rank() != 2) throw ShapeError("GridField1D: u must be N_g x N_c");
  if (cells() < 3) throw ShapeError("GridField1D: need at least 3 nodes");
  if (!(dx > 0.0)) throw Error("GridField1D: dx must be positive");
  if (!u.all_finite()) throw NumericError("GridField1D: non-finite values");
}

Neighbors pad_neighbors(const GridField1D& f, std::size_t j) {
  std::size_t n = f.cells();
  if (j >= n) throw Error("pad_neighbors: node " + std::to_string(j) + " out of range");
  if (f.bc == Boundary::Periodic) return {(j + n - 1) % n, j, (j + 1) % n};
  return {j == 0 ? 0 : j - 1, j, j + 1 == n ? n - 1 : j + 1};
}

GridField1D roe_step_linear(const GridField1D& f, double a, double dt) {
  f.validate();
  double lam = dt / f.dx;
  check_cfl(std::abs(a) * lam, "roe_step_linear");
  double ap = 0.5 * (a + std::abs(a));
  double am = 0.5 * (a - std::abs(a));
  std::size_t n = f.cells(), nc = f.comps();
  GridField1D out = f;
  for (std::size_t j = 0; j < n; ++j) {
    auto nb = pad_neighbors(f, j);
    for (std::size_t c = 0; c < nc; ++c) {
      double ul = f.u.at(nb.left, c), uc = f.u.at(j, c), ur = f.u.at(nb.right, c);
      double fr = ap * uc + am * ur;
      double fl = ap * ul + am * uc;
      out.u.at(j, c) = uc - lam * (fr - fl);
    }
  }
  out.t = f.t + dt;
  return out;
}

void EulerGas::validate() const {
  if (!(gamma > 1.0)) throw ConfigError("EulerGas: gamma must exceed 1");
}

std::array<double, 3> to_conserved(const GasState& s, const EulerGas& gas) {
  return {s.rho, s.rho * s.v, s.p / (gas.gamma - 1.0) + 0.5 * s.rho * s.v * s.v};
}

GasState to_primitive(const double* u, const EulerGas& gas) {
  GasState s;
  s.rho = u[0];
  s.v = u[1] / u[0];
  s.p = (gas.gamma - 1.0) * (u[2] - 0.5 * u[1] * s.v);
  return s;
}

double sound_speed(const GasState& s, const EulerGas& gas) { return std::sqrt(gas.gamma * s.p / s.rho); }

GridField1D roe_step_euler(const GridField1D& f, const EulerGas& gas, double dt) {
  gas.validate();
  f.validate();
  if (f.comps() != 3) throw ShapeError("roe_step_euler: field must have 3 components");
  std::size_t n = f.cells();
  double g = gas.gamma;
  std::vector<GasState> prim(n);
  double smax = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    prim[j] = to_primitive(&f.u.data()[3 * j], gas);
    if (!(prim[j].rho > 0.0)) throw NumericError(cell_msg("roe_step_euler", j, "non-positive density"));
    if (!(prim[j].p > 0.0)) throw NumericError(cell_msg("roe_step_euler", j, "non-positive pressure"));
    smax = std::max(smax, std::abs(prim[j].v) + sound_speed(prim[j], gas));
  }
  double lam = dt / f.dx;
  check_cfl(smax * lam, "roe_step_euler");

  auto phys_flux = [](const double* u, const GasState& s) {
    return std::array<double, 3>{u[1], u[1] * s.v + s.p, s.v * (u[2] + s.p)};
  };
  // Flux through the face between cells a and b.
  auto face_flux = [&](std::size_t a, std::size_t b) {
    const double* ua = &f.u.data()[3 * a];
    const double* ub = &f.u.data()[3 * b];
    const GasState& sa = prim[a];
    const GasState& sb = prim[b];
    double ra = std::sqrt(sa.rho), rb = std::sqrt(sb.rho);
    double ha = (ua[2] + sa.p) / sa.rho, hb = (ub[2] + sb.p) / sb.rho;
    double v = (ra * sa.v + rb * sb.v) / (ra + rb);
    double h = (ra * ha + rb * hb) / (ra + rb);
    double c2 = (g - 1.0) * (h - 0.5 * v * v);
    if (!(c2 > 0.0)) throw NumericError(cell_msg("roe_step_euler", a, "non-positive Roe sound speed"));
    double c = std::sqrt(c2);
    double d1 = ub[0] - ua[0], d2 = ub[1] - ua[1], d3 = ub[2] - ua[2];
    double a2 = (g - 1.0) / c2 * ((h - v * v) * d1 + v * d2 - d3);
    double a1 = ((v + c) * d1 - d2 - c * a2) / (2.0 * c);
    double a3 = d1 - a1 - a2;
    double l1 = std::abs(v - c), l2 = std::abs(v), l3 = std::abs(v + c);
    auto fa = phys_flux(ua, sa);
    auto fb = phys_flux(ub, sb);
    std::array<double, 3> r;
    r[0] = 0.5 * (fa[0] + fb[0]) - 0.5 * (l1 * a1 + l2 * a2 + l3 * a3);
    r[1] = 0.5 * (fa[1] + fb[1]) - 0.5 * (l1 * a1 * (v - c) + l2 * a2 * v + l3 * a3 * (v + c));
    r[2] = 0.5 * (fa[2] + fb[2]) - 0.5 * (l1 * a1 * (h - v * c) + l2 * a2 * 0.5 * v * v + l3 * a3 * (h + v * c));
    return r;
  };

  // flux[j] is the face to the right of node j; a face on the left wall is added for replicate
  bool periodic = f.bc == Boundary::Periodic;
  std::vector<std::array<double, 3>> right(n);
  for (std::size_t j = 0; j < n; ++j) right[j] = face_flux(j, periodic ? (j + 1) % n : std::min(j + 1, n - 1));
  std::array<double, 3> wall = periodic ? right[n - 1] : face_flux(0, 0);

  GridField1D out = f;
  for (std::size_t j = 0; j < n; ++j) {
    const auto& fl = j == 0 ? wall : right[j - 1];
    for (std::size_t c = 0; c < 3; ++c) out.u.at(j, c) = f.u.at(j, c) - lam * (right[j][c] - fl[c]);
  }
  out.t = f.t + dt;
  return out;
}

GridField1D riemann_field(const RiemannSolution& sol, std::size_t n, double dx, double x0, double split,
                          double t) {
  GridField1D f;
  f.u = Tensor({n, 3});
  f.dx = dx;
  f.bc = Boundary::Replicate;
  f.t = t;
  f.x0 = x0;
  for (std::size_t j = 0; j < n; ++j) {
    double x = f.x(j);
    GasState s;
    if (t > 0.0) {
      s = sol.sample((x - split) / t);
    } else {
      s = x < split ? sol.left : sol.right;
    }
    auto u = to_conserved(s, sol.gas);
    for (std::size_t c = 0; c < 3; ++c) f.u.at(j, c) = u[c];
  }
  return f;
}

GridField1D sod_initial(const SodProblem& prob, const EulerGas& gas, double dx) { return sod_exact(prob, gas, dx, 0.0); }

GridField1D sod_exact(const SodProblem& prob, const EulerGas& gas, double dx, double t) {
  auto n = static_cast<std::size_t>(std::llround(prob.length / dx));
  auto sol = solve_riemann(prob.left, prob.right, gas);
  return riemann_field(sol, n, dx, 0.5 * dx, prob.split, t);
}

double density_l1(const GridField1D& a, const GridField1D& b) {
  if (a.u.shape() != b.u.shape()) throw ShapeError("density_l1: field shapes differ");
  double s = 0.0;
  for (std::size_t j = 0; j < a.cells(); ++j) s += std::abs(a.u.at(j, 0) - b.u.at(j, 0));
  return s * a.dx;
}

double advection_exact(double x, double t, double a, const std::function<double(double)>& u0, double lo,
                       double hi) {
  double len = hi - lo;
  double y = x - a * t - lo;
  y -= len * std::floor(y / len);
  return u0(lo + y);
}

double gaussian_pulse(double x, double center, double k, double lo, double hi) {
  double len = hi - lo;
  double d = x - center;
  d -= len * std::round(d / len);
  return std::exp(-k * d * d);
}

void write_field_csv(std::ostream& os, const std::vector<GridField1D>& snapshots, bool header) {
  if (snapshots.empty()) return;
  std::size_t nc = snapshots[0].comps();
  if (header) {
    os << "t,x";
    for (std::size_t c = 1; c <= nc; ++c) os << ",u_" << c;
    os << '\n';
  }
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
  };
  for (const auto& f : snapshots) {
    for (std::size_t j = 0; j < f.cells(); ++j) {
      put(f.t);
      os << ',';
      put(f.x(j));
      for (std::size_t c = 0; c < nc; ++c) os << ',', put(f.u.at(j, c));
      os << '\n';
    }
  }
}

}  // namespace physprior::hyperbolic
