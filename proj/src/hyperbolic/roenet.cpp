#include <algorithm>
#include <cmath>
#include <string>

#include "physprior/error.hpp"
#include "physprior/hyperbolic/hyperbolic.hpp"
#include "physprior/integrate/integrators.hpp"
#include "physprior/numkit/linalg.hpp"

namespace physprior::hyperbolic {

namespace nk = numkit;

Tensor pseudoinverse(const Tensor& l) {
  if (l.rank() != 2) throw ShapeError("pseudoinverse: expected an N_h x N_c matrix");
  Tensor g = nk::matmul(l, l, true, false);
  return nk::matmul(nk::invert_small_matrix(g), l, false, true);
}

Var pseudoinverse(const Var& l) {
  Var g = nk::matmul(l, l, true, false);
  return nk::matmul(nk::inverse(g), l, false, true);
}

RoeNetModel make_roenet(ParameterSet& ps, std::size_t nc, std::size_t nh, Rng& rng, std::size_t width,
                        std::size_t blocks) {
  if (nc == 0 || nh == 0) throw ConfigError("make_roenet: N_c and N_h must be positive");
  if (nh < nc) throw ConfigError("make_roenet: N_h < N_c makes L rank deficient");
  if (width == 0) width = std::max<std::size_t>(64, 4 * nc);
  RoeNetModel m;
  m.nc = nc;
  m.nh = nh;
  m.l_net = nk::make_resnet(ps, "roenet.L", 2 * nc, width, blocks, nh * nc, rng);
  m.lambda_net = nk::make_resnet(ps, "roenet.Lambda", 2 * nc, width, blocks, nh, rng);
  return m;
}

void set_constant_factors(ParameterSet& ps, const RoeNetModel& m, double l_value, double lambda_value) {
  ps[m.l_net.head.w] = Tensor(ps[m.l_net.head.w].shape());
  ps[m.lambda_net.head.w] = Tensor(ps[m.lambda_net.head.w].shape());
  Tensor lb({m.nh * m.nc});
  for (std::size_t i = 0; i < m.nh; ++i) lb[i * m.nc + i % m.nc] = l_value;
  ps[m.l_net.head.b] = lb;
  ps[m.lambda_net.head.b] = Tensor({m.nh}, lambda_value);
}

InterfaceLayout make_layout(std::size_t batch, std::size_t cells, Boundary bc) {
  if (cells < 3) throw ShapeError("make_layout: need at least 3 nodes");
  InterfaceLayout lay;
  lay.batch = batch;
  lay.cells = cells;
  lay.bc = bc;
  bool periodic = bc == Boundary::Periodic;
  // periodic: face i sits between nodes i and i+1; replicate: face i sits left of node i
  lay.faces = periodic ? cells : cells + 1;
  std::vector<std::size_t> fl, fr, cl, cr;
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t base = b * cells, fbase = b * lay.faces;
    for (std::size_t i = 0; i < lay.faces; ++i) {
      if (periodic) {
        fl.push_back(base + i);
        fr.push_back(base + (i + 1) % cells);
      } else {
        fl.push_back(base + (i == 0 ? 0 : i - 1));
        fr.push_back(base + std::min(i, cells - 1));
      }
    }
    for (std::size_t j = 0; j < cells; ++j) {
      if (periodic) {
        cl.push_back(fbase + (j + cells - 1) % cells);
        cr.push_back(fbase + j);
      } else {
        cl.push_back(fbase + j);
        cr.push_back(fbase + j + 1);
      }
    }
  }
  auto mk = [](std::vector<std::size_t>& v) { return std::make_shared<const std::vector<std::size_t>>(std::move(v)); };
  lay.face_left = mk(fl);
  lay.face_right = mk(fr);
  lay.cell_left_face = mk(cl);
  lay.cell_right_face = mk(cr);
  return lay;
}

Var roenet_step(const RoeNetModel& m, const std::vector<Var>& p, const Var& u, const InterfaceLayout& lay,
                double lambda) {
  std::size_t rows = lay.batch * lay.cells;
  if (u.shape() != nk::Shape{rows, m.nc}) throw ShapeError("roenet_step: state must be (B*N_g) x N_c");
  std::size_t nf = lay.batch * lay.faces;
  Var ul = nk::gather_rows(u, lay.face_left);
  Var ur = nk::gather_rows(u, lay.face_right);
  Var in = nk::concat({ul, ur});
  Var l = nk::reshape(m.l_net.forward(p, in), {nf, m.nh, m.nc});
  Var lam = m.lambda_net.forward(p, in);
  Var lp = pseudoinverse(l);
  Var mag = nk::abs(lam);
  Var pos = (lam + mag) * 0.5;
  Var negp = (lam - mag) * 0.5;
  auto project = [&](const Var& v) { return nk::reshape(nk::matmul(l, nk::reshape(v, {nf, m.nc, 1})), {nf, m.nh}); };
  auto lift = [&](const Var& w) { return nk::reshape(nk::matmul(lp, nk::reshape(w, {nf, m.nh, 1})), {nf, m.nc}); };
  Var du;
  if (m.form == RoeNetForm::FluxSplit) {
    Var flux = lift(pos * project(ul) + negp * project(ur));
    du = nk::gather_rows(flux, lay.cell_right_face) - nk::gather_rows(flux, lay.cell_left_face);
  } else {
    Var w = project(ur - ul);
    Var minus = lift(negp * w);
    Var plus = lift(pos * w);
    du = nk::gather_rows(minus, lay.cell_right_face) + nk::gather_rows(plus, lay.cell_left_face);
  }
  return u - du * lambda;
}

Var roenet_rollout(const RoeNetModel& m, const std::vector<Var>& p, const Var& u0, const InterfaceLayout& lay,
                   double lambda, std::size_t steps) {
  Var u = u0;
  for (std::size_t k = 0; k < steps; ++k) u = roenet_step(m, p, u, lay, lambda);
  return u;
}

GridField1D roenet_step(const RoeNetModel& m, const ParameterSet& ps, const GridField1D& f, double dt) {
  return roenet_rollout(m, ps, f, dt, dt);
}

GridField1D roenet_rollout(const RoeNetModel& m, const ParameterSet& ps, const GridField1D& f0, double t_span,
                           double dt) {
  f0.validate();
  if (f0.comps() != m.nc) throw ShapeError("roenet_rollout: component count does not match the model");
  if (!(dt > 0.0)) throw Error("roenet_rollout: dt must be positive");
  std::size_t steps = t_span > 0.0 ? integrate::step_count(t_span, dt) : 0;
  nk::NoGradGuard ng;
  auto lay = make_layout(1, f0.cells(), f0.bc);
  auto p = ps.bind(false);
  Var u = nk::constant(f0.u);
  GridField1D out = f0;
  for (std::size_t k = 0; k < steps; ++k) {
    u = roenet_step(m, p, u, lay, dt / f0.dx);
    if (!u.value().all_finite()) throw NumericError("roenet_rollout: non-finite state at step " + std::to_string(k));
  }
  out.u = u.value();
  out.t = f0.t + static_cast<double>(steps) * dt;
  return out;
}

}  // namespace physprior::hyperbolic
