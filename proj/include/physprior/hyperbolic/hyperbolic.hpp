#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <ostream>
#include <vector>

#include "physprior/numkit/autodiff.hpp"
#include "physprior/numkit/nn.hpp"

namespace physprior::hyperbolic {

using numkit::ParameterSet;
using numkit::Rng;
using numkit::Tensor;
using numkit::Var;

enum class Boundary { Periodic, Replicate };

// Node values u (N_g x N_c) at x_j = x0 + j*dx.
struct GridField1D {
  Tensor u;
  double dx = 0.01;
  Boundary bc = Boundary::Periodic;
  double t = 0.0;
  double x0 = 0.0;

  std::size_t cells() const { return u.dim(0); }
  std::size_t comps() const { return u.dim(1); }
  double x(std::size_t j) const { return x0 + static_cast<double>(j) * dx; }
  void validate() const;
};

struct Neighbors {
  std::size_t left;
  std::size_t center;
  std::size_t right;
};

Neighbors pad_neighbors(const GridField1D& f, std::size_t j);

// First-order Roe (upwind) step for u_t + a u_x = 0, applied per component.
GridField1D roe_step_linear(const GridField1D& f, double a, double dt);

struct EulerGas {
  double gamma = 1.4;
  void validate() const;
};

struct GasState {
  double rho = 1.0;
  double v = 0.0;
  double p = 1.0;
};

std::array<double, 3> to_conserved(const GasState& s, const EulerGas& gas);
GasState to_primitive(const double* u, const EulerGas& gas);
double sound_speed(const GasState& s, const EulerGas& gas);

// Roe-averaged flux-difference step, no entropy fix.
GridField1D roe_step_euler(const GridField1D& f, const EulerGas& gas, double dt);

struct RiemannSolution {
  GasState left;
  GasState right;
  EulerGas gas;
  double p_star = 0.0;
  double v_star = 0.0;
  int iterations = 0;
  // State on the ray x/t = xi.
  GasState sample(double xi) const;
};

// Exact solver; Newton on the star pressure, at most 100 iterations.
RiemannSolution solve_riemann(const GasState& left, const GasState& right, const EulerGas& gas,
                              int max_iterations = 100);

struct SodProblem {
  GasState left{1.0, 0.0, 1.0};
  GasState right{0.125, 0.0, 0.1};
  double split = 0.5;
  double length = 1.0;
};

// Conserved (ρ, ρv, e) of the canonical Sod solution on the ray x/t = xi.
std::array<double, 3> exact_riemann_sod(double xi, const EulerGas& gas);

// Exact solution sampled at the nodes of an n-cell grid with cell-centred nodes.
GridField1D riemann_field(const RiemannSolution& sol, std::size_t n, double dx, double x0, double split, double t);
GridField1D sod_initial(const SodProblem& prob, const EulerGas& gas, double dx);
GridField1D sod_exact(const SodProblem& prob, const EulerGas& gas, double dx, double t);

// Σ_j |ρ_a - ρ_b| dx over component 0.
double density_l1(const GridField1D& a, const GridField1D& b);

// u0(x - a t) with periodic wrapping onto [lo, hi).
double advection_exact(double x, double t, double a, const std::function<double(double)>& u0, double lo = -0.5,
                       double hi = 0.5);

// Periodic 1C profile e^{-k (x - c)^2} on [lo, hi), using the nearest image.
double gaussian_pulse(double x, double center, double k, double lo = -0.5, double hi = 0.5);

// (LᵀL)⁻¹Lᵀ for an N_h x N_c matrix.
Tensor pseudoinverse(const Tensor& l);
// Batched (R, N_h, N_c) -> (R, N_c, N_h).
Var pseudoinverse(const Var& l);

enum class RoeNetForm {
  // F_{j+1/2} = A⁺u_j + A⁻u_{j+1}, A± = L⁺Λ±L; conservative by construction
  FluxSplit,
  // u_j -= λ(A⁻_{j+1/2}Δ_{j+1/2} + A⁺_{j-1/2}Δ_{j-1/2}) with per-interface factors
  Fluctuation,
};

struct RoeNetModel {
  std::size_t nc = 1;
  std::size_t nh = 1;
  numkit::ResNet l_net;
  numkit::ResNet lambda_net;
  RoeNetForm form = RoeNetForm::FluxSplit;
};

// Both nets take (u_j, u_{j+1}); width 0 selects max(64, 4 N_c).
RoeNetModel make_roenet(ParameterSet& ps, std::size_t nc, std::size_t nh, Rng& rng, std::size_t width = 0,
                        std::size_t blocks = 3);

// Sets both heads to constants: L ≡ l_value · I-like fill, Λ ≡ lambda_value.
void set_constant_factors(ParameterSet& ps, const RoeNetModel& m, double l_value, double lambda_value);

// Interface gather tables for a batch of fields.
struct InterfaceLayout {
  std::size_t batch = 0;
  std::size_t cells = 0;
  std::size_t faces = 0;  // per field
  Boundary bc = Boundary::Periodic;
  std::shared_ptr<const std::vector<std::size_t>> face_left;
  std::shared_ptr<const std::vector<std::size_t>> face_right;
  std::shared_ptr<const std::vector<std::size_t>> cell_left_face;
  std::shared_ptr<const std::vector<std::size_t>> cell_right_face;
};

InterfaceLayout make_layout(std::size_t batch, std::size_t cells, Boundary bc);

// u: (B·N_g) x N_c rows, field-major.
Var roenet_step(const RoeNetModel& m, const std::vector<Var>& p, const Var& u, const InterfaceLayout& lay,
                double lambda);
Var roenet_rollout(const RoeNetModel& m, const std::vector<Var>& p, const Var& u0, const InterfaceLayout& lay,
                   double lambda, std::size_t steps);

GridField1D roenet_step(const RoeNetModel& m, const ParameterSet& ps, const GridField1D& f, double dt);
GridField1D roenet_rollout(const RoeNetModel& m, const ParameterSet& ps, const GridField1D& f0, double t_span,
                           double dt);

// `t,x,u_1..u_Nc`, one row per node.
void write_field_csv(std::ostream& os, const std::vector<GridField1D>& snapshots, bool header = true);

}  // namespace physprior::hyperbolic
