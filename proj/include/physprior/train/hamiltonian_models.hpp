#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "physprior/hamiltonian/hamiltonian.hpp"
#include "physprior/integrate/integrators.hpp"
#include "physprior/train/optim.hpp"

namespace physprior::train {

using integrate::ExtendedPhaseState;
using integrate::PhaseState;

// Endpoint pairs (q0, p0) -> (q1, p1) a time span apart. Rows [0, n_train) are
// the training split, the next n_val rows the validation split.
struct PairDataset {
  Tensor q0, p0, q1, p1;
  double t_span = 0.0;
  double noise = 0.0;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::size_t dim() const { return q0.dim(1); }
  std::size_t rows() const { return q0.dim(0); }
};

struct HamiltonianDataConfig {
  hamiltonian::AnalyticSystem system = hamiltonian::AnalyticSystem::pendulum();
  std::size_t n_train = 15;
  std::size_t n_val = 100;
  double t_span = 0.01;
  // step of the reference integrator producing the targets
  double reference_dt = 1e-4;
  double noise = 0.0;
  double box_lo = -2.0;
  double box_hi = 2.0;
  std::uint64_t seed = 0;
};

// Initial points uniform in the box, targets by a fine reference integration
// (Forest–Ruth when separable, RK4 otherwise). With noise > 0 both endpoints
// get i.i.d. N(0, noise²) draws in every coordinate.
PairDataset make_hamiltonian_dataset(const HamiltonianDataConfig& cfg);

// Reference flow of an analytic system over span, batched over rows.
PhaseState<Tensor> reference_flow(const hamiltonian::AnalyticSystem& sys, const PhaseState<Tensor>& s, double span,
                                  double dt);

enum class HamiltonianFamily {
  TaylorNet,  // Taylor fields for dT/dp and dV/dq inside Forest–Ruth
  OdeNet,     // unconstrained (dq/dt, dp/dt) field inside RK4
  Nssnn,      // multilayer H inside Tao's extended-phase-space integrator
  Hrk,        // multilayer H inside RK4
};

std::string family_name(HamiltonianFamily f);
HamiltonianFamily parse_family(const std::string& name);

struct HamiltonianModelConfig {
  HamiltonianFamily family = HamiltonianFamily::TaylorNet;
  std::size_t dim = 1;
  std::size_t terms = 8;
  std::size_t taylor_hidden = 16;
  std::size_t energy_hidden = 64;
  std::size_t energy_layers = 6;
  std::vector<std::size_t> field_hidden{32, 32};
  double omega = 10.0;
};

struct HamiltonianModel {
  HamiltonianModelConfig cfg;
  hamiltonian::TaylorNet taylor;
  numkit::Mlp field;
  hamiltonian::MlpHamiltonian energy;

  // `steps` steps of size dt. For the Tao family the extended copies (x, y) are
  // carried; for the others they mirror (q, p).
  ExtendedPhaseState<Var> advance(const std::vector<Var>& params, const ExtendedPhaseState<Var>& s, double dt,
                                  std::size_t steps) const;

  // Frozen-parameter trajectory: steps + 1 states starting from (q0, p0).
  std::vector<PhaseState<Tensor>> predict(const ParameterSet& ps, const Tensor& q0, const Tensor& p0, double dt,
                                          std::size_t steps) const;
};

HamiltonianModel make_hamiltonian_model(ParameterSet& ps, const HamiltonianModelConfig& cfg, Rng& rng);

// Summed L1 over the phase coordinates, averaged over rows. The Tao family adds
// the distance of the extended copies to the targets.
Var hamiltonian_loss(const HamiltonianModel& m, const ExtendedPhaseState<Var>& pred, const Var& q1, const Var& p1);

// Trains through the unrolled integrator: each pair is advanced over t_span in
// steps of dt.
TrainResult train_hamiltonian(const HamiltonianModel& m, ParameterSet& ps, const PairDataset& data, double dt,
                              const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace physprior::train
