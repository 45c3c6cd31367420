#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "physprior/numkit/autodiff.hpp"
#include "physprior/numkit/nn.hpp"

namespace physprior::hamiltonian {

using numkit::ParameterSet;
using numkit::Rng;
using numkit::Tensor;
using numkit::Var;

enum class SystemKind { Pendulum, Spring, NonseparableTest, PointVortex };

// Analytic test systems. For point vortices q holds the x coordinates, p the
// y coordinates, and gamma the circulations.
struct AnalyticSystem {
  SystemKind kind = SystemKind::Pendulum;
  std::vector<double> gamma;

  static AnalyticSystem pendulum() { return {SystemKind::Pendulum, {}}; }
  static AnalyticSystem spring() { return {SystemKind::Spring, {}}; }
  static AnalyticSystem nonseparable() { return {SystemKind::NonseparableTest, {}}; }
  static AnalyticSystem point_vortex(std::vector<double> g) { return {SystemKind::PointVortex, std::move(g)}; }
  bool separable() const { return kind == SystemKind::Pendulum || kind == SystemKind::Spring; }
};

// Energy per row for batched (rows x N) q and p; returns shape {rows}.
Tensor energy(const AnalyticSystem& sys, const Tensor& q, const Tensor& p);
double energy1(const AnalyticSystem& sys, const Tensor& q, const Tensor& p);

// (dH/dq, dH/dp), same shapes as q and p.
std::pair<Tensor, Tensor> analytic_grads(const AnalyticSystem& sys, const Tensor& q, const Tensor& p);

// Time derivative (dq/dt, dp/dt). For point vortices this is the induced velocity.
std::pair<Tensor, Tensor> analytic_flow(const AnalyticSystem& sys, const Tensor& q, const Tensor& p);

// Sum over ordered pairs j != k of Γ_j Γ_k log|x_j - x_k| / (4π). X: N x 2.
double point_vortex_hamiltonian(const std::vector<double>& gamma, const Tensor& X);
// Gradient w.r.t. X, N x 2.
Tensor point_vortex_hamiltonian_grad(const std::vector<double>& gamma, const Tensor& X);

// Symmetric Taylor field T(v) = Σ_i A_iᵀ f_i(A_i v) - B_iᵀ f_i(B_i v) + b with
// f_i(x) = x^i / i!. The M weight blocks are stacked into one (M·N_h) x N matrix.
struct TaylorField {
  std::size_t terms = 8;
  std::size_t hidden = 16;
  std::size_t dim = 1;
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t bias = 0;
  std::shared_ptr<const std::vector<int>> orders;

  // v: rows x N.
  Var eval(const std::vector<Var>& p, const Var& v) const;
  Tensor eval(const ParameterSet& ps, const Tensor& v) const;
  // Analytic N x N Jacobian at a single point v (length N).
  Tensor jacobian(const ParameterSet& ps, const Tensor& v) const;
};

// Adds the field's parameters with the Taylor-series initialization
// A_i, B_i ~ N(0, sqrt(2 / (N·N_h·(i+1)))), zero bias.
TaylorField add_taylor_field(ParameterSet& ps, const std::string& prefix, std::size_t dim, std::size_t terms,
                             std::size_t hidden, Rng& rng);

// Pair of Taylor fields standing in for dT/dp and dV/dq.
struct TaylorNet {
  TaylorField tp;
  TaylorField vq;
};

TaylorNet make_taylor_net(ParameterSet& ps, std::size_t dim, std::size_t terms, std::size_t hidden, Rng& rng);

// Multilayer scalar Hamiltonian H(q, p): 6 affine layers of width 64 with
// logistic activations, Xavier initialization.
struct MlpHamiltonian {
  numkit::Mlp net;
  std::size_t dim = 1;

  // q, p: rows x N; returns rows x 1.
  Var energy(const std::vector<Var>& params, const Var& q, const Var& p) const;
  // In-graph gradients (dH/dq, dH/dp); differentiable w.r.t. the parameters.
  std::pair<Var, Var> grads(const std::vector<Var>& params, const Var& q, const Var& p) const;
};

MlpHamiltonian make_mlp_hamiltonian(ParameterSet& ps, std::size_t dim, Rng& rng, std::size_t hidden = 64,
                                    std::size_t layers = 6);

// Learned pair energy Ĥ(x_j, x_k): input (x_j, y_j, x_k, y_k).
struct PairVortexNet {
  numkit::Mlp net;
  // Σ_{j≠k} Γ_j Γ_k Ĥ(x_j, x_k); particles are put in a canonical order first so
  // the value does not depend on the input permutation.
  Var eval(const std::vector<Var>& params, const std::vector<double>& gamma, const Tensor& X) const;
};

PairVortexNet make_pair_vortex_net(ParameterSet& ps, Rng& rng, std::size_t hidden = 32);

}  // namespace physprior::hamiltonian
