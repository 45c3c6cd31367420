#pragma once

#include <cstdint>
#include <vector>

#include "physprior/train/optim.hpp"
#include "physprior/vortex/vortex.hpp"

namespace physprior::train {

// Smooth deterministic forcing u_ext = amplitude · (sin y, cos x).
struct ForcingSpec {
  double amplitude = 0.0;
  vortex::DriftField field() const;
};

struct VortexDataConfig {
  std::size_t n_samples = 2000;
  double val_fraction = 0.2;
  double t_span = 0.2;
  std::size_t min_vortices = 2;
  std::size_t max_vortices = 6;
  // positions uniform in the square of this half-width around the box centre
  double spread = 1.2;
  double min_separation = 0.5;
  double gamma_lo = 0.5;
  double gamma_hi = 1.5;
  double reg = 0.1;
  double fine_dt = 1e-4;
  ForcingSpec forcing;
  vortex::GridSpec grid;
  vortex::DetectOptions detect;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct VortexSample {
  vortex::VortexSystem start;  // detected positions and strengths at t = 0
  Tensor target;               // paired detected positions at t = T_train, rows aligned with start
  vortex::VortexSystem truth;  // the configuration that was simulated
};

struct VortexDataset {
  std::vector<VortexSample> samples;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::size_t rejected = 0;
  std::size_t generated = 0;
  double t_span = 0.0;
};

// Random configuration with the given particle count (rejection on separation).
vortex::VortexSystem random_vortex_system(std::size_t count, const VortexDataConfig& cfg, Rng& rng);

// Each sample is simulated, rasterized at both ends, detected and paired;
// rejected pairings are dropped and counted.
VortexDataset make_vortex_dataset(const VortexDataConfig& cfg);

// L1 on minimum-image position differences after t_span / dt network steps;
// the local vorticity feature is refreshed from the state before every step.
TrainResult train_vortex_dynamics(const vortex::DynamicsNet& net, ParameterSet& ps, const VortexDataset& data,
                                  double dt, const TrainConfig& cfg,
                                  const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace physprior::train
