#pragma once

#include <cstddef>
#include <ostream>
#include <vector>

#include "physprior/cli/experiments.hpp"

namespace physprior::cli {

// Density L1 error of the classical Roe solver against the exact Sod solution
// at t = 0.1 with dx = 0.005 and dt = 0.001, measured once against the oracle.
inline constexpr double kSodRoeCalibrationL1 = 0.00882923;

// Each check measures one invariant and states it as value relation threshold.

// Taylor-field Jacobian symmetry, JᵀΩJ = Ω for Forest–Ruth and the Tao sub-maps,
// and the asymmetric-field negative control.
std::vector<ReportRow> symplectic_checks(std::size_t draws = 20);
// Convergence slopes of Euler, RK4, Forest–Ruth and Tao's scheme.
std::vector<ReportRow> integrator_order_checks();
// Roe vs exact Sod at the calibration resolution, and the error under dx halving.
std::vector<ReportRow> sod_calibration_checks();
// Periodic Roe and RoeNet sums, LVM circulation and linear impulse.
std::vector<ReportRow> conservation_checks();
// Rasterize -> detect accuracy, and pairing across a T = 0.2 evolution.
std::vector<ReportRow> detection_checks(std::size_t configs = 200);
// Reverse mode against central differences on every model family.
std::vector<ReportRow> gradient_checks();

// All of the above; prints one line per check and returns whether all passed.
bool run_selftest(std::ostream& os);

}  // namespace physprior::cli
