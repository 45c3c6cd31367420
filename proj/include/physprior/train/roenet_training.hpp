#pragma once

#include <cstdint>
#include <string>

#include "physprior/hyperbolic/hyperbolic.hpp"
#include "physprior/train/optim.hpp"

namespace physprior::train {

enum class FieldProblem { Linear1C, Sod };

std::string problem_name(FieldProblem p);

struct FieldDataConfig {
  FieldProblem problem = FieldProblem::Linear1C;
  std::size_t n_samples = 500;
  double t_span = 0.04;
  double val_fraction = 0.1;
  double noise = 0.0;
  bool noise_inputs = true;
  bool noise_targets = true;
  std::uint64_t seed = 0;
  // workers for sample generation; the result does not depend on it
  std::size_t threads = 1;

  // periodic advection of e^{-k (x - c)^2}, c ~ U[x_lo, x_lo + cells·dx)
  double speed = 0.25;
  double pulse_k = 300.0;
  std::size_t cells = 100;
  double dx = 0.01;
  double x_lo = -0.5;

  // Riemann windows: Sod states scaled by factors in [1 - jitter, 1 + jitter],
  // initial time t0 ~ U[0, t0_max], the discontinuity placed inside a window of
  // `window` cells so no wave reaches its edges by t0 + t_span.
  std::size_t window = 72;
  double sod_dx = 0.005;
  double t0_max = 0.04;
  double jitter = 0.1;
  hyperbolic::EulerGas gas;
};

// Fields stacked field-major: rows s·cells .. (s+1)·cells - 1 belong to sample s.
struct FieldDataset {
  Tensor u0;
  Tensor u1;
  std::size_t cells = 0;
  std::size_t comps = 0;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  double dx = 0.01;
  hyperbolic::Boundary bc = hyperbolic::Boundary::Periodic;
  double t_span = 0.0;
  double noise = 0.0;
};

FieldDataset make_roenet_dataset(const FieldDataConfig& cfg);

// MSE between the unrolled model after t_span / dt steps and the targets.
TrainResult train_roenet(const hyperbolic::RoeNetModel& m, ParameterSet& ps, const FieldDataset& data, double dt,
                         const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {});

// L2 field error Σ_j |u - v|² dx, square-rooted, and the max-norm error.
double field_l2(const hyperbolic::GridField1D& a, const hyperbolic::GridField1D& b);
double field_max(const hyperbolic::GridField1D& a, const hyperbolic::GridField1D& b);

}  // namespace physprior::train
