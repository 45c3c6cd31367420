#include "physprior/train/hamiltonian_models.hpp"

#include <cmath>
#include <memory>

#include "physprior/error.hpp"
#include "physprior/numkit/random.hpp"

namespace physprior::train {

namespace nk = numkit;
using hamiltonian::AnalyticSystem;

PhaseState<Tensor> reference_flow(const AnalyticSystem& sys, const PhaseState<Tensor>& s, double span, double dt) {
  if (!(dt > 0.0)) throw ConfigError("reference_flow: dt must be positive");
  std::size_t n = static_cast<std::size_t>(std::ceil(span / dt - 1e-9));
  if (n == 0) return s;
  double h = span / static_cast<double>(n);
  PhaseState<Tensor> cur = s;
  if (sys.separable()) {
    auto tp = [&](const Tensor& p) { return analytic_grads(sys, cur.q, p).second; };
    auto vq = [&](const Tensor& q) { return analytic_grads(sys, q, cur.p).first; };
    for (std::size_t i = 0; i < n; ++i) cur = integrate::forest_ruth_step(tp, vq, cur, h);
    return cur;
  }
  std::size_t cols = s.q.dim(1);
  auto f = [&](double, const Tensor& y) {
    Tensor q({y.dim(0), cols});
    Tensor p({y.dim(0), cols});
    for (std::size_t r = 0; r < y.dim(0); ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        q.at(r, c) = y.at(r, c);
        p.at(r, c) = y.at(r, cols + c);
      }
    auto [dq, dp] = analytic_flow(sys, q, p);
    Tensor out({y.dim(0), 2 * cols});
    for (std::size_t r = 0; r < y.dim(0); ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        out.at(r, c) = dq.at(r, c);
        out.at(r, cols + c) = dp.at(r, c);
      }
    return out;
  };
  Tensor y({s.q.dim(0), 2 * cols});
  for (std::size_t r = 0; r < y.dim(0); ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      y.at(r, c) = s.q.at(r, c);
      y.at(r, cols + c) = s.p.at(r, c);
    }
  for (std::size_t i = 0; i < n; ++i) y = integrate::rk4_step(f, 0.0, y, h);
  for (std::size_t r = 0; r < y.dim(0); ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      cur.q.at(r, c) = y.at(r, c);
      cur.p.at(r, c) = y.at(r, cols + c);
    }
  return cur;
}

PairDataset make_hamiltonian_dataset(const HamiltonianDataConfig& cfg) {
  if (cfg.n_train == 0) throw ConfigError("make_hamiltonian_dataset: n_train must be at least 1");
  if (!(cfg.box_hi > cfg.box_lo)) throw ConfigError("make_hamiltonian_dataset: empty box");
  if (cfg.noise < 0.0) throw ConfigError("make_hamiltonian_dataset: negative noise");
  std::size_t dim = cfg.system.kind == hamiltonian::SystemKind::PointVortex ? cfg.system.gamma.size() : 1;
  std::size_t rows = cfg.n_train + cfg.n_val;
  PhaseState<Tensor> s0{Tensor({rows, dim}), Tensor({rows, dim})};
  std::vector<std::uint64_t> seeds(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    seeds[r] = nk::derive_seed(cfg.seed, r);
    nk::Rng rng(seeds[r]);
    for (std::size_t c = 0; c < dim; ++c) {
      s0.q.at(r, c) = rng.uniform(cfg.box_lo, cfg.box_hi);
      s0.p.at(r, c) = rng.uniform(cfg.box_lo, cfg.box_hi);
    }
  }
  PhaseState<Tensor> s1 = reference_flow(cfg.system, s0, cfg.t_span, cfg.reference_dt);
  PairDataset d{s0.q, s0.p, s1.q, s1.p, cfg.t_span, cfg.noise, cfg.n_train, cfg.n_val};
  if (cfg.noise > 0.0) {
    for (std::size_t r = 0; r < rows; ++r) {
      // separate stream from the one that drew the initial point
      nk::Rng rng(nk::derive_seed(seeds[r], 1));
      for (std::size_t c = 0; c < dim; ++c) {
        d.q0.at(r, c) += rng.normal(0.0, cfg.noise);
        d.p0.at(r, c) += rng.normal(0.0, cfg.noise);
        d.q1.at(r, c) += rng.normal(0.0, cfg.noise);
        d.p1.at(r, c) += rng.normal(0.0, cfg.noise);
      }
    }
  }
  return d;
}

std::string family_name(HamiltonianFamily f) {
  switch (f) {
    case HamiltonianFamily::TaylorNet: return "taylor-net";
    case HamiltonianFamily::OdeNet: return "ode-rk4";
    case HamiltonianFamily::Nssnn: return "nssnn";
    case HamiltonianFamily::Hrk: return "hrk";
  }
  return "unknown";
}

HamiltonianFamily parse_family(const std::string& name) {
  if (name == "taylor-net") return HamiltonianFamily::TaylorNet;
  if (name == "ode-rk4") return HamiltonianFamily::OdeNet;
  if (name == "nssnn") return HamiltonianFamily::Nssnn;
  if (name == "hrk") return HamiltonianFamily::Hrk;
  throw ConfigError("unknown Hamiltonian model family '" + name + "'");
}

HamiltonianModel make_hamiltonian_model(ParameterSet& ps, const HamiltonianModelConfig& cfg, Rng& rng) {
  if (cfg.dim == 0) throw ConfigError("make_hamiltonian_model: dim must be positive");
  HamiltonianModel m;
  m.cfg = cfg;
  switch (cfg.family) {
    case HamiltonianFamily::TaylorNet:
      m.taylor = hamiltonian::make_taylor_net(ps, cfg.dim, cfg.terms, cfg.taylor_hidden, rng);
      break;
    case HamiltonianFamily::OdeNet: {
      std::vector<std::size_t> widths{2 * cfg.dim};
      for (auto w : cfg.field_hidden) widths.push_back(w);
      widths.push_back(2 * cfg.dim);
      m.field = nk::make_mlp(ps, "field", widths, nk::Activation::Sigmoid, nk::Init::XavierUniform, rng);
      break;
    }
    case HamiltonianFamily::Nssnn:
    case HamiltonianFamily::Hrk:
      if (cfg.family == HamiltonianFamily::Nssnn) integrate::TaoConfig{cfg.omega, 1.0}.validate();
      m.energy = hamiltonian::make_mlp_hamiltonian(ps, cfg.dim, rng, cfg.energy_hidden, cfg.energy_layers);
      break;
  }
  return m;
}

ExtendedPhaseState<Var> HamiltonianModel::advance(const std::vector<Var>& params, const ExtendedPhaseState<Var>& s,
                                                  double dt, std::size_t steps) const {
  std::size_t n = cfg.dim;
  switch (cfg.family) {
    case HamiltonianFamily::TaylorNet: {
      auto tp = [&](const Var& p) { return taylor.tp.eval(params, p); };
      auto vq = [&](const Var& q) { return taylor.vq.eval(params, q); };
      PhaseState<Var> cur{s.q, s.p};
      for (std::size_t i = 0; i < steps; ++i) cur = integrate::forest_ruth_step(tp, vq, cur, dt);
      return integrate::extend(cur);
    }
    case HamiltonianFamily::OdeNet: {
      auto f = [&](double, const Var& y) { return field.forward(params, y); };
      Var y = nk::concat({s.q, s.p});
      for (std::size_t i = 0; i < steps; ++i) y = integrate::rk4_step(f, 0.0, y, dt);
      return integrate::extend(PhaseState<Var>{nk::slice(y, 0, n), nk::slice(y, n, 2 * n)});
    }
    case HamiltonianFamily::Hrk: {
      auto f = [&](double, const Var& y) {
        auto g = energy.grads(params, nk::slice(y, 0, n), nk::slice(y, n, 2 * n));
        return nk::concat({g.second, -g.first});
      };
      Var y = nk::concat({s.q, s.p});
      for (std::size_t i = 0; i < steps; ++i) y = integrate::rk4_step(f, 0.0, y, dt);
      return integrate::extend(PhaseState<Var>{nk::slice(y, 0, n), nk::slice(y, n, 2 * n)});
    }
    case HamiltonianFamily::Nssnn: {
      auto grads = [&](const Var& a, const Var& b) { return energy.grads(params, a, b); };
      integrate::TaoConfig tc{cfg.omega, dt};
      ExtendedPhaseState<Var> cur = s;
      for (std::size_t i = 0; i < steps; ++i) cur = integrate::tao_strang_step(grads, cur, tc);
      return cur;
    }
  }
  throw Error("HamiltonianModel::advance: unknown family");
}

std::vector<PhaseState<Tensor>> HamiltonianModel::predict(const ParameterSet& ps, const Tensor& q0, const Tensor& p0,
                                                          double dt, std::size_t steps) const {
  std::vector<PhaseState<Tensor>> traj;
  traj.reserve(steps + 1);
  traj.push_back({q0, p0});
  auto params = ps.bind(false);
  ExtendedPhaseState<Var> cur{nk::constant(q0), nk::constant(p0), nk::constant(q0), nk::constant(p0)};
  nk::NoGradGuard guard;
  for (std::size_t i = 0; i < steps; ++i) {
    auto next = advance(params, cur, dt, 1);
    cur = {nk::constant(next.q.value()), nk::constant(next.p.value()), nk::constant(next.x.value()),
           nk::constant(next.y.value())};
    traj.push_back({next.q.value(), next.p.value()});
  }
  return traj;
}

Var hamiltonian_loss(const HamiltonianModel& m, const ExtendedPhaseState<Var>& pred, const Var& q1, const Var& p1) {
  Var l = loss_l1(pred.q, q1) + loss_l1(pred.p, p1);
  if (m.cfg.family == HamiltonianFamily::Nssnn) l = l + loss_l1(pred.x, q1) + loss_l1(pred.y, p1);
  return l;
}

TrainResult train_hamiltonian(const HamiltonianModel& m, ParameterSet& ps, const PairDataset& data, double dt,
                              const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch) {
  if (data.n_train == 0) throw ConfigError("train_hamiltonian: empty training split");
  std::size_t steps = integrate::step_count(data.t_span, dt);
  if (steps == 0) throw ConfigError("train_hamiltonian: dt exceeds the pair time span");
  auto q0 = nk::constant(data.q0);
  auto p0 = nk::constant(data.p0);
  auto q1 = nk::constant(data.q1);
  auto p1 = nk::constant(data.p1);
  BatchLoss loss = [&](const std::vector<Var>& params, const std::vector<std::size_t>& idx, bool) {
    auto rows = std::make_shared<const std::vector<std::size_t>>(idx);
    Var q = nk::gather_rows(q0, rows);
    Var p = nk::gather_rows(p0, rows);
    auto pred = m.advance(params, {q, p, q, p}, dt, steps);
    return hamiltonian_loss(m, pred, nk::gather_rows(q1, rows), nk::gather_rows(p1, rows));
  };
  return train_loop(ps, data.n_train, data.n_val, loss, cfg, on_epoch);
}

}  // namespace physprior::train
