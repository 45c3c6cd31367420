#pragma once

#include <functional>

#include "physprior/numkit/tensor.hpp"

namespace physprior::numkit {

// Pivot-ratio threshold above which a matrix is treated as singular.
inline constexpr double kMaxConditionEstimate = 1e12;

// Gauss-Jordan with partial pivoting. Accepts n×n or batch×n×n.
// Throws SingularMatrixError for exact or numerical singularity.
Tensor invert_small_matrix(const Tensor& m);

// Optional out-param receives the pivot-ratio estimate of the worst batch entry.
Tensor invert_small_matrix(const Tensor& m, double* condition_estimate);

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
Tensor transpose(const Tensor& a);

// Central-difference gradient of a scalar function.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                              double h = 1e-6);

// Central-difference Jacobian of a vector function, rows = outputs.
Tensor finite_difference_jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  double h = 1e-6);

}  // namespace physprior::numkit
