#include "physprior/train/roenet_training.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "physprior/error.hpp"
#include "physprior/integrate/integrators.hpp"
#include "physprior/numkit/random.hpp"
#include "physprior/parallel.hpp"

namespace physprior::train {

namespace nk = numkit;
using hyperbolic::Boundary;
using hyperbolic::GridField1D;

std::string problem_name(FieldProblem p) { return p == FieldProblem::Linear1C ? "1c-linear" : "sod"; }

namespace {

void put_rows(Tensor& dst, std::size_t row0, const Tensor& src) {
  std::copy(src.values().begin(), src.values().end(), dst.values().begin() + static_cast<long>(row0 * src.dim(1)));
}

}  // namespace

FieldDataset make_roenet_dataset(const FieldDataConfig& cfg) {
  if (cfg.n_samples < 2) throw ConfigError("make_roenet_dataset: need at least two samples");
  if (!(cfg.val_fraction >= 0.0 && cfg.val_fraction < 1.0)) throw ConfigError("make_roenet_dataset: bad split");
  if (cfg.noise < 0.0) throw ConfigError("make_roenet_dataset: negative noise");
  FieldDataset d;
  d.t_span = cfg.t_span;
  d.noise = cfg.noise;
  d.n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(cfg.n_samples)));
  d.n_train = cfg.n_samples - d.n_val;
  if (cfg.problem == FieldProblem::Linear1C) {
    d.cells = cfg.cells;
    d.comps = 1;
    d.dx = cfg.dx;
    d.bc = Boundary::Periodic;
  } else {
    cfg.gas.validate();
    d.cells = cfg.window;
    d.comps = 3;
    d.dx = cfg.sod_dx;
    d.bc = Boundary::Replicate;
  }
  d.u0 = Tensor({cfg.n_samples * d.cells, d.comps});
  d.u1 = Tensor({cfg.n_samples * d.cells, d.comps});
  double hi = cfg.x_lo + static_cast<double>(cfg.cells) * cfg.dx;
  parallel_for(cfg.n_samples, cfg.threads, [&](std::size_t s) {
    nk::Rng rng(nk::derive_seed(cfg.seed, s));
    if (cfg.problem == FieldProblem::Linear1C) {
      double c = rng.uniform(cfg.x_lo, hi);
      for (std::size_t j = 0; j < d.cells; ++j) {
        double x = cfg.x_lo + static_cast<double>(j) * cfg.dx;
        d.u0.at(s * d.cells + j, 0) = hyperbolic::gaussian_pulse(x, c, cfg.pulse_k, cfg.x_lo, hi);
        d.u1.at(s * d.cells + j, 0) =
            hyperbolic::gaussian_pulse(x - cfg.speed * cfg.t_span, c, cfg.pulse_k, cfg.x_lo, hi);
      }
    } else {
      hyperbolic::SodProblem base;
      auto scaled = [&](double v) { return v * rng.uniform(1.0 - cfg.jitter, 1.0 + cfg.jitter); };
      hyperbolic::GasState l{scaled(base.left.rho), 0.0, scaled(base.left.p)};
      hyperbolic::GasState r{scaled(base.right.rho), 0.0, scaled(base.right.p)};
      auto sol = hyperbolic::solve_riemann(l, r, cfg.gas);
      double t0 = rng.uniform(0.0, cfg.t0_max);
      // the left-going rarefaction is slower than the shock; put the split 42% in
      double width = static_cast<double>(d.cells) * d.dx;
      double split = width * rng.uniform(0.40, 0.44);
      auto a = hyperbolic::riemann_field(sol, d.cells, d.dx, 0.5 * d.dx, split, t0);
      auto b = hyperbolic::riemann_field(sol, d.cells, d.dx, 0.5 * d.dx, split, t0 + cfg.t_span);
      put_rows(d.u0, s * d.cells, a.u);
      put_rows(d.u1, s * d.cells, b.u);
    }
    if (cfg.noise > 0.0) {
      nk::Rng nr(nk::derive_seed(nk::derive_seed(cfg.seed, s), 1));
      for (std::size_t j = 0; j < d.cells * d.comps; ++j) {
        double e0 = nr.normal(0.0, cfg.noise);
        double e1 = nr.normal(0.0, cfg.noise);
        if (cfg.noise_inputs) d.u0[s * d.cells * d.comps + j] += e0;
        if (cfg.noise_targets) d.u1[s * d.cells * d.comps + j] += e1;
      }
    }
  });
  return d;
}

TrainResult train_roenet(const hyperbolic::RoeNetModel& m, ParameterSet& ps, const FieldDataset& data, double dt,
                         const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch) {
  if (data.n_train == 0) throw ConfigError("train_roenet: empty training split");
  if (data.comps != m.nc) throw ConfigError("train_roenet: component count differs from the model");
  std::size_t steps = integrate::step_count(data.t_span, dt);
  if (steps == 0) throw ConfigError("train_roenet: dt exceeds the pair time span");
  double lambda = dt / data.dx;
  auto u0 = nk::constant(data.u0);
  auto u1 = nk::constant(data.u1);
  BatchLoss loss = [&](const std::vector<Var>& params, const std::vector<std::size_t>& idx, bool) {
    std::vector<std::size_t> rows;
    rows.reserve(idx.size() * data.cells);
    for (auto i : idx)
      for (std::size_t j = 0; j < data.cells; ++j) rows.push_back(i * data.cells + j);
    auto ri = std::make_shared<const std::vector<std::size_t>>(std::move(rows));
    auto lay = hyperbolic::make_layout(idx.size(), data.cells, data.bc);
    Var u = hyperbolic::roenet_rollout(m, params, nk::gather_rows(u0, ri), lay, lambda, steps);
    return loss_mse(u, nk::gather_rows(u1, ri));
  };
  return train_loop(ps, data.n_train, data.n_val, loss, cfg, on_epoch);
}

double field_l2(const GridField1D& a, const GridField1D& b) {
  if (a.u.shape() != b.u.shape()) throw ShapeError("field_l2: shapes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.u.size(); ++i) s += (a.u[i] - b.u[i]) * (a.u[i] - b.u[i]);
  return std::sqrt(s * a.dx);
}

double field_max(const GridField1D& a, const GridField1D& b) {
  if (a.u.shape() != b.u.shape()) throw ShapeError("field_max: shapes differ");
  return numkit::max_abs_diff(a.u, b.u);
}

}  // namespace physprior::train
