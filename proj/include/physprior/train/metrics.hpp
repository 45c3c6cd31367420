#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "physprior/integrate/integrators.hpp"
#include "physprior/numkit/tensor.hpp"

namespace physprior::train {

struct Metrics {
  // error at each time index, index 0 being the initial state
  std::vector<double> per_step;
  // average over the predicted points, indices 1..N
  double mean = 0.0;
};

// Per time index: Σ |q̂ - q| + |p̂ - p| over coordinates, averaged over the rows
// (test samples). Trajectories are time-major with rows x N states.
Metrics metric_eps_p(const std::vector<integrate::PhaseState<numkit::Tensor>>& pred,
                     const std::vector<integrate::PhaseState<numkit::Tensor>>& ref);

// ‖pred - ref‖₂ / ‖ref‖₂ over all entries.
double metric_eps_u(const numkit::Tensor& pred, const numkit::Tensor& ref);

// Header `t,<column>`, then one row per time.
void write_eval_csv(std::ostream& os, const std::string& column, const std::vector<double>& times,
                    const std::vector<double>& values);

}  // namespace physprior::train
