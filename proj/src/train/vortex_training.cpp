#include "physprior/train/vortex_training.hpp"

#include <cmath>
#include <memory>
#include <optional>

#include "physprior/error.hpp"
#include "physprior/integrate/integrators.hpp"
#include "physprior/numkit/random.hpp"
#include "physprior/parallel.hpp"

namespace physprior::train {

namespace nk = numkit;
using vortex::Vec2;
using vortex::VortexSystem;

vortex::DriftField ForcingSpec::field() const {
  if (amplitude == 0.0) return {};
  double a = amplitude;
  return [a](const Vec2& x) { return Vec2{a * std::sin(x[1]), a * std::cos(x[0])}; };
}

VortexSystem random_vortex_system(std::size_t count, const VortexDataConfig& cfg, Rng& rng) {
  double c = 0.5 * cfg.grid.length;
  std::vector<Vec2> pos;
  std::size_t attempts = 0;
  while (pos.size() < count) {
    if (++attempts > 100000) throw ConfigError("random_vortex_system: cannot place vortices at this separation");
    Vec2 x{rng.uniform(c - cfg.spread, c + cfg.spread), rng.uniform(c - cfg.spread, c + cfg.spread)};
    bool ok = true;
    for (const auto& y : pos) ok = ok && std::hypot(x[0] - y[0], x[1] - y[1]) >= cfg.min_separation;
    if (ok) pos.push_back(x);
  }
  std::vector<double> gamma(count);
  for (auto& g : gamma) {
    double mag = rng.uniform(cfg.gamma_lo, cfg.gamma_hi);
    g = rng.uniform() < 0.5 ? -mag : mag;
  }
  return vortex::make_system(pos, gamma, cfg.reg, true);
}

VortexDataset make_vortex_dataset(const VortexDataConfig& cfg) {
  if (cfg.min_vortices < 1 || cfg.max_vortices < cfg.min_vortices)
    throw ConfigError("make_vortex_dataset: bad vortex count range");
  if (cfg.n_samples == 0) throw ConfigError("make_vortex_dataset: no samples");
  VortexDataset d;
  d.t_span = cfg.t_span;
  d.generated = cfg.n_samples;
  auto drift = cfg.forcing.field();
  std::vector<std::optional<VortexSample>> slots(cfg.n_samples);
  parallel_for(cfg.n_samples, cfg.threads, [&](std::size_t s) {
    nk::Rng rng(nk::derive_seed(cfg.seed, s));
    std::size_t span = cfg.max_vortices - cfg.min_vortices + 1;
    std::size_t count = cfg.min_vortices + rng.index(span);
    VortexSystem truth = random_vortex_system(count, cfg, rng);
    auto traj = vortex::reference_trajectory(truth, cfg.t_span, cfg.fine_dt, cfg.t_span, drift);
    VortexSystem end = truth;
    end.X = traj.X.back();
    auto a = vortex::detect_vortices(vortex::rasterize_vorticity(truth, cfg.grid), cfg.detect);
    auto b = vortex::detect_vortices(vortex::rasterize_vorticity(end, cfg.grid), cfg.detect);
    auto pairing = vortex::pair_vortices(a, b, cfg.grid.length);
    if (pairing.rejected || a.empty()) return;
    std::vector<Vec2> pos;
    std::vector<double> gamma;
    for (const auto& v : a) {
      pos.push_back(v.pos);
      gamma.push_back(v.strength);
    }
    VortexSample sample;
    sample.start = vortex::make_system(pos, gamma, cfg.reg, true);
    sample.target = Tensor({a.size(), 2});
    for (const auto& [ia, ib] : pairing.pairs) {
      sample.target.at(ia, 0) = b[ib].pos[0];
      sample.target.at(ia, 1) = b[ib].pos[1];
    }
    sample.truth = truth;
    slots[s] = std::move(sample);
  });
  for (auto& slot : slots) {
    if (slot) {
      d.samples.push_back(std::move(*slot));
    } else {
      ++d.rejected;
    }
  }
  std::size_t kept = d.samples.size();
  if (kept < 2) throw NumericError("make_vortex_dataset: fewer than two samples survived pairing");
  d.n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(kept)));
  d.n_train = kept - d.n_val;
  return d;
}

TrainResult train_vortex_dynamics(const vortex::DynamicsNet& net, ParameterSet& ps, const VortexDataset& data,
                                  double dt, const TrainConfig& cfg,
                                  const std::function<void(const EpochRecord&)>& on_epoch) {
  if (data.n_train == 0) throw ConfigError("train_vortex_dynamics: empty training split");
  std::size_t steps = integrate::step_count(data.t_span, dt);
  if (steps == 0) throw ConfigError("train_vortex_dynamics: dt exceeds the pair time span");
  BatchLoss loss = [&](const std::vector<Var>& params, const std::vector<std::size_t>& idx, bool) {
    std::vector<VortexSystem> cur;
    cur.reserve(idx.size());
    std::size_t rows = 0;
    for (auto i : idx) {
      const auto& smp = data.samples[i];
      cur.push_back(smp.start);
      rows += smp.start.size();
    }
    Tensor x0({rows, 2});
    Tensor target({rows, 2});
    {
      std::size_t r = 0;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto& smp = data.samples[idx[k]];
        for (std::size_t i = 0; i < smp.start.size(); ++i, ++r) {
          x0.at(r, 0) = smp.start.X.at(i, 0);
          x0.at(r, 1) = smp.start.X.at(i, 1);
          target.at(r, 0) = smp.target.at(i, 0);
          target.at(r, 1) = smp.target.at(i, 1);
        }
      }
    }
    Var X = nk::constant(x0);
    double len = data.samples.front().start.length;
    for (std::size_t step = 0; step < steps; ++step) {
      std::vector<const VortexSystem*> ptrs;
      std::vector<std::vector<double>> local;
      std::size_t r = 0;
      for (auto& sys : cur) {
        for (std::size_t i = 0; i < sys.size(); ++i, ++r) {
          sys.X.at(i, 0) = vortex::wrap_coordinate(X.value().at(r, 0), len);
          sys.X.at(i, 1) = vortex::wrap_coordinate(X.value().at(r, 1), len);
        }
        ptrs.push_back(&sys);
        local.push_back(vortex::local_vorticity(sys));
      }
      auto batch = vortex::make_batch(ptrs, local);
      X = vortex::nvm_step(net, params, batch, X, dt);
    }
    Tensor shift({rows, 2});
    for (std::size_t k = 0; k < shift.size(); ++k)
      shift[k] = -len * std::round((X.value()[k] - target[k]) / len);
    return loss_l1(X + nk::constant(shift), nk::constant(target));
  };
  return train_loop(ps, data.n_train, data.n_val, loss, cfg, on_epoch);
}

}  // namespace physprior::train
