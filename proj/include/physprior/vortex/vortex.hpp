#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "physprior/numkit/autodiff.hpp"
#include "physprior/numkit/nn.hpp"

namespace physprior::vortex {

using numkit::ParameterSet;
using numkit::Rng;
using numkit::Tensor;
using numkit::Var;
using Vec2 = std::array<double, 2>;

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct VortexSystem {
  Tensor X;  // N x 2
  std::vector<double> gamma;
  double reg = 0.1;
  // Periodic box [0, length)² with minimum-image displacements, else the free plane.
  bool periodic = true;
  double length = kTwoPi;

  std::size_t size() const { return gamma.size(); }
  Vec2 pos(std::size_t i) const { return {X.at(i, 0), X.at(i, 1)}; }
  void validate() const;
};

VortexSystem make_system(const std::vector<Vec2>& pos, std::vector<double> gamma, double reg = 0.1,
                         bool periodic = true);

// a - b, wrapped to the nearest image in the periodic case.
Vec2 displacement(const VortexSystem& sys, const Vec2& a, const Vec2& b);
double wrap_coordinate(double x, double length);

// (1/2π) Σ_{j≠i} Γ_j ẑ×(X_i − X_j) / (|X_i − X_j|² + R²)
Vec2 biot_savart_velocity(const VortexSystem& sys, std::size_t i);
// Velocity induced on particle i by particle j alone.
Vec2 biot_savart_pair(const VortexSystem& sys, std::size_t i, std::size_t j);
Tensor biot_savart_velocities(const VortexSystem& sys);

using DriftField = std::function<Vec2(const Vec2&)>;

// RK4 on Biot–Savart plus an optional drift; Γ unchanged, periodic positions wrapped.
VortexSystem lvm_step(const VortexSystem& sys, double dt, const DriftField& drift = {});

double total_circulation(const VortexSystem& sys);
Vec2 linear_impulse(const VortexSystem& sys);

struct Trajectory {
  std::vector<double> t;
  std::vector<Tensor> X;
  std::vector<double> gamma;
  double min_separation = INFINITY;
  bool flagged = false;  // particles came closer than R/10
};

// Fine-step RK4 oracle recorded every sample_dt; fine_dt must be ≤ 1e-4.
Trajectory reference_trajectory(const VortexSystem& sys0, double t_end, double fine_dt, double sample_dt,
                                const DriftField& f_ext = {});

void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

struct GridSpec {
  std::size_t n = 200;
  double length = kTwoPi;
  double sigma2 = 0.0025;
  double cell() const { return length / static_cast<double>(n); }
};

// values(i, j) sampled at (x_i, y_j) = (i h, j h).
struct VorticityGrid {
  Tensor values;
  GridSpec spec;
  double cell_area() const { return spec.cell() * spec.cell(); }
};

double gaussian_kernel(double r2, double sigma2);
VorticityGrid rasterize_vorticity(const VortexSystem& sys, const GridSpec& spec = {});
// Smooth vorticity at a point (the rasterized field before sampling).
double vorticity_at(const VortexSystem& sys, const Vec2& x, double sigma2);

struct DetectedVortex {
  Vec2 pos;
  double strength = 0.0;
};

struct DetectOptions {
  std::size_t box = 10;
  // Peaks below this fraction of the global maximum of |ω| are ignored.
  double rel_threshold = 0.1;
};

std::vector<DetectedVortex> detect_vortices(const VorticityGrid& grid, const DetectOptions& opt = {});

struct Pairing {
  bool rejected = false;
  std::string reason;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (index in a, index in b), sorted by a
};

// Greedy mutual-nearest matching; rejects count mismatch or relative strength gap above tol.
Pairing pair_vortices(const std::vector<DetectedVortex>& a, const std::vector<DetectedVortex>& b, double length,
                      double strength_tol = 0.2);

// A(θ1): (diff_x, diff_y, dist, Γ_j) -> 2; A(θ2): (ω_local, x, y) -> 2.
struct DynamicsNet {
  numkit::ResNet pair_net;
  numkit::ResNet local_net;
  bool use_local = true;
};

DynamicsNet make_dynamics_net(ParameterSet& ps, Rng& rng, std::size_t width = 64, std::size_t blocks = 5);

// Particles of several systems stacked into rows, with the ordered pairs (i, j), i ≠ j, of each system.
struct ParticleBatch {
  std::size_t rows = 0;
  double length = kTwoPi;
  bool periodic = true;
  Tensor gamma_src;  // pair rows: Γ_j
  Tensor local;      // particle rows: ω_local
  std::shared_ptr<const std::vector<std::size_t>> pair_i;
  std::shared_ptr<const std::vector<std::size_t>> pair_j;
};

ParticleBatch make_batch(const std::vector<const VortexSystem*>& systems, const std::vector<std::vector<double>>& local);

// Velocities for stacked positions (rows x 2).
Var dynamics_net_velocity(const DynamicsNet& net, const std::vector<Var>& p, const ParticleBatch& batch, const Var& X);
Tensor dynamics_net_velocity(const DynamicsNet& net, const ParameterSet& ps, const VortexSystem& sys,
                             const std::vector<double>& local);

// RK4 on the network velocity, local vorticity frozen within the step; not wrapped.
Var nvm_step(const DynamicsNet& net, const std::vector<Var>& p, const ParticleBatch& batch, const Var& X, double dt);
VortexSystem nvm_step(const DynamicsNet& net, const ParameterSet& ps, const VortexSystem& sys,
                      const std::vector<double>& local, double dt);

// Per-particle ω_local: smooth vorticity at the particle scaled by 2πσ² (≈ Γ_i for an isolated vortex).
std::vector<double> local_vorticity(const VortexSystem& sys, double sigma2 = GridSpec{}.sigma2);

// Rollout recording every step; local vorticity is refreshed from the state at each step.
Trajectory nvm_rollout(const DynamicsNet& net, const ParameterSet& ps, const VortexSystem& sys0, double t_end,
                       double dt);
Trajectory lvm_rollout(const VortexSystem& sys0, double t_end, double dt, const DriftField& drift = {});

// Mean over particles of |X̂ − X| (minimum image) at each recorded time.
std::vector<double> position_error(const Trajectory& pred, const Trajectory& ref, double length, bool periodic = true);

}  // namespace physprior::vortex
