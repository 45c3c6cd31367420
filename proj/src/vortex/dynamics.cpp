#include <algorithm>
#include <cmath>
#include <string>

#include "physprior/error.hpp"
#include "physprior/integrate/integrators.hpp"
#include "physprior/vortex/vortex.hpp"

namespace physprior::vortex {

namespace nk = numkit;

DynamicsNet make_dynamics_net(ParameterSet& ps, Rng& rng, std::size_t width, std::size_t blocks) {
  DynamicsNet net;
  net.pair_net = nk::make_resnet(ps, "dyn.pair", 4, width, blocks, 2, rng);
  net.local_net = nk::make_resnet(ps, "dyn.local", 3, width, blocks, 2, rng);
  return net;
}

ParticleBatch make_batch(const std::vector<const VortexSystem*>& systems, const std::vector<std::vector<double>>& local) {
  if (systems.size() != local.size()) throw ShapeError("make_batch: one local-vorticity list per system");
  ParticleBatch b;
  std::vector<std::size_t> pi, pj;
  std::vector<double> gsrc, loc;
  for (std::size_t s = 0; s < systems.size(); ++s) {
    const VortexSystem& sys = *systems[s];
    if (local[s].size() != sys.size()) throw ShapeError("make_batch: local vorticity length mismatch");
    if (s == 0) {
      b.length = sys.length;
      b.periodic = sys.periodic;
    }
    for (std::size_t i = 0; i < sys.size(); ++i) {
      for (std::size_t j = 0; j < sys.size(); ++j) {
        if (i == j) continue;
        pi.push_back(b.rows + i);
        pj.push_back(b.rows + j);
        gsrc.push_back(sys.gamma[j]);
      }
      loc.push_back(local[s][i]);
    }
    b.rows += sys.size();
  }
  b.gamma_src = Tensor({gsrc.size(), 1}, gsrc);
  b.local = Tensor({loc.size(), 1}, loc);
  b.pair_i = std::make_shared<const std::vector<std::size_t>>(std::move(pi));
  b.pair_j = std::make_shared<const std::vector<std::size_t>>(std::move(pj));
  return b;
}

Var dynamics_net_velocity(const DynamicsNet& net, const std::vector<Var>& p, const ParticleBatch& batch, const Var& X) {
  if (X.shape() != nk::Shape{batch.rows, 2}) throw ShapeError("dynamics_net_velocity: positions must be rows x 2");
  Var v = nk::constant(Tensor({batch.rows, 2}));
  double len = batch.length;
  if (!batch.pair_i->empty()) {
    Var diff = nk::gather_rows(X, batch.pair_i) - nk::gather_rows(X, batch.pair_j);
    if (batch.periodic) {
      Tensor shift(diff.shape());
      for (std::size_t k = 0; k < shift.size(); ++k) shift[k] = -len * std::round(diff.value()[k] / len);
      diff = diff + nk::constant(shift);
    }
    Var dist = nk::sqrt(nk::matmul(diff * diff, nk::constant(Tensor({2, 1}, 1.0))));
    Var in = nk::concat({diff, dist, nk::constant(batch.gamma_src)});
    v = nk::scatter_add_rows(net.pair_net.forward(p, in), batch.pair_i, batch.rows);
  }
  if (net.use_local) {
    Var pos = X;
    if (batch.periodic) {
      Tensor shift(X.shape());
      for (std::size_t k = 0; k < shift.size(); ++k) shift[k] = -len * std::floor(X.value()[k] / len);
      pos = X + nk::constant(shift);
    }
    v = v + net.local_net.forward(p, nk::concat({nk::constant(batch.local), pos}));
  }
  return v;
}

Var nvm_step(const DynamicsNet& net, const std::vector<Var>& p, const ParticleBatch& batch, const Var& X, double dt) {
  if (!(dt > 0.0)) throw Error("nvm_step: dt must be positive");
  auto f = [&](double, const Var& x) { return dynamics_net_velocity(net, p, batch, x); };
  return integrate::rk4_step(f, 0.0, X, dt);
}

Tensor dynamics_net_velocity(const DynamicsNet& net, const ParameterSet& ps, const VortexSystem& sys,
                             const std::vector<double>& local) {
  nk::NoGradGuard ng;
  auto batch = make_batch({&sys}, {local});
  return dynamics_net_velocity(net, ps.bind(false), batch, nk::constant(sys.X)).value();
}

VortexSystem nvm_step(const DynamicsNet& net, const ParameterSet& ps, const VortexSystem& sys,
                      const std::vector<double>& local, double dt) {
  nk::NoGradGuard ng;
  auto batch = make_batch({&sys}, {local});
  VortexSystem out = sys;
  out.X = nvm_step(net, ps.bind(false), batch, nk::constant(sys.X), dt).value();
  if (out.periodic)
    for (auto& x : out.X.values()) x = wrap_coordinate(x, out.length);
  return out;
}

std::vector<double> local_vorticity(const VortexSystem& sys, double sigma2) {
  std::vector<double> w(sys.size());
  for (std::size_t i = 0; i < sys.size(); ++i) w[i] = vorticity_at(sys, sys.pos(i), sigma2) * kTwoPi * sigma2;
  return w;
}

Trajectory nvm_rollout(const DynamicsNet& net, const ParameterSet& ps, const VortexSystem& sys0, double t_end,
                       double dt) {
  std::size_t n = integrate::step_count(t_end, dt);
  Trajectory tr;
  tr.gamma = sys0.gamma;
  VortexSystem s = sys0;
  tr.t.push_back(0.0);
  tr.X.push_back(s.X);
  for (std::size_t k = 1; k <= n; ++k) {
    s = nvm_step(net, ps, s, local_vorticity(s), dt);
    if (!s.X.all_finite()) throw NumericError("nvm_rollout: non-finite positions at step " + std::to_string(k));
    tr.t.push_back(static_cast<double>(k) * dt);
    tr.X.push_back(s.X);
  }
  return tr;
}

Trajectory lvm_rollout(const VortexSystem& sys0, double t_end, double dt, const DriftField& drift) {
  std::size_t n = integrate::step_count(t_end, dt);
  Trajectory tr;
  tr.gamma = sys0.gamma;
  VortexSystem s = sys0;
  tr.t.push_back(0.0);
  tr.X.push_back(s.X);
  for (std::size_t k = 1; k <= n; ++k) {
    s = lvm_step(s, dt, drift);
    tr.t.push_back(static_cast<double>(k) * dt);
    tr.X.push_back(s.X);
  }
  return tr;
}

std::vector<double> position_error(const Trajectory& pred, const Trajectory& ref, double length, bool periodic) {
  if (pred.X.size() != ref.X.size()) throw ShapeError("position_error: trajectory lengths differ");
  std::vector<double> out;
  for (std::size_t k = 0; k < pred.X.size(); ++k) {
    const Tensor& a = pred.X[k];
    const Tensor& b = ref.X[k];
    if (a.shape() != b.shape()) throw ShapeError("position_error: particle counts differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim(0); ++i) {
      double dx = a.at(i, 0) - b.at(i, 0), dy = a.at(i, 1) - b.at(i, 1);
      if (periodic) {
        dx -= length * std::round(dx / length);
        dy -= length * std::round(dy / length);
      }
      s += std::hypot(dx, dy);
    }
    out.push_back(s / static_cast<double>(a.dim(0)));
  }
  return out;
}

}  // namespace physprior::vortex
