#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "physprior/error.hpp"
#include "physprior/numkit/autodiff.hpp"
#include "physprior/numkit/tensor.hpp"

namespace physprior::integrate {

using numkit::Tensor;
using numkit::Var;

inline void check_finite(const Tensor& t, const char* where) {
  if (!t.all_finite()) throw NumericError(std::string(where) + ": non-finite state");
}

inline void check_finite(const Var& v, const char* where) {
  if (v.evaluated()) check_finite(v.value(), where);
}

inline void check_finite(double v, const char* where) {
  if (!std::isfinite(v)) throw NumericError(std::string(where) + ": non-finite state");
}

template <class V>
struct PhaseState {
  V q;
  V p;
};

template <class V>
struct ExtendedPhaseState {
  V q;
  V p;
  V x;
  V y;
};

template <class V>
ExtendedPhaseState<V> extend(const PhaseState<V>& s) {
  return {s.q, s.p, s.q, s.p};
}

struct SplitCoefficients {
  std::array<double, 4> c;
  std::array<double, 4> d;
};

// Fourth-order splitting weights from their closed forms.
const SplitCoefficients& forest_ruth_coefficients();

struct TaoConfig {
  double omega = 10.0;
  double dt = 0.01;
  void validate() const;
};

// Number of whole steps of size dt in span; exact multiples are not lost to round-off.
std::size_t step_count(double span, double dt);

template <class V, class F>
V euler_step(F&& f, double t, const V& y, double dt) {
  V k = f(t, y);
  check_finite(k, "euler_step");
  return y + k * dt;
}

// Explicit midpoint rule.
template <class V, class F>
V rk2_step(F&& f, double t, const V& y, double dt) {
  V k1 = f(t, y);
  check_finite(k1, "rk2_step");
  V k2 = f(t + 0.5 * dt, y + k1 * (0.5 * dt));
  check_finite(k2, "rk2_step");
  return y + k2 * dt;
}

template <class V, class F>
V rk4_step(F&& f, double t, const V& y, double dt) {
  V k1 = f(t, y);
  check_finite(k1, "rk4_step");
  V k2 = f(t + 0.5 * dt, y + k1 * (0.5 * dt));
  check_finite(k2, "rk4_step");
  V k3 = f(t + 0.5 * dt, y + k2 * (0.5 * dt));
  check_finite(k3, "rk4_step");
  V k4 = f(t + dt, y + k3 * dt);
  check_finite(k4, "rk4_step");
  return y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
}

// Tp = dT/dp, Vq = dV/dq; the two fields may be analytic or learned.
template <class V, class TpF, class VqF>
PhaseState<V> forest_ruth_step(TpF&& tp, VqF&& vq, const PhaseState<V>& s, double dt) {
  const auto& k = forest_ruth_coefficients();
  V q = s.q;
  V p = s.p;
  // drift then kick in each stage; with d4 = 0 the sequence is palindromic
  for (int j = 0; j < 4; ++j) {
    q = q + tp(p) * (k.c[j] * dt);
    if (k.d[j] != 0.0) p = p - vq(q) * (k.d[j] * dt);
  }
  check_finite(q, "forest_ruth_step");
  check_finite(p, "forest_ruth_step");
  return {q, p};
}

// grads(a, b) returns {dH/dq, dH/dp} evaluated at (q, p) = (a, b).
template <class V, class G>
ExtendedPhaseState<V> tao_phi1(G&& grads, const ExtendedPhaseState<V>& s, double delta) {
  auto g = grads(s.q, s.y);
  return {s.q, s.p - g.first * delta, s.x + g.second * delta, s.y};
}

template <class V, class G>
ExtendedPhaseState<V> tao_phi2(G&& grads, const ExtendedPhaseState<V>& s, double delta) {
  auto g = grads(s.x, s.p);
  return {s.q + g.second * delta, s.p, s.x, s.y - g.first * delta};
}

// Exact flow of the binding term: rotation of (q-x, p-y) by angle 2*omega*delta.
template <class V>
ExtendedPhaseState<V> tao_phi3(const ExtendedPhaseState<V>& s, double omega, double delta) {
  double c = std::cos(2.0 * omega * delta);
  double sn = std::sin(2.0 * omega * delta);
  V sq = s.q + s.x;
  V sp = s.p + s.y;
  V u = s.q - s.x;
  V v = s.p - s.y;
  V ru = u * c + v * sn;
  V rv = v * c - u * sn;
  return {(sq + ru) * 0.5, (sp + rv) * 0.5, (sq - ru) * 0.5, (sp - rv) * 0.5};
}

template <class V, class G>
ExtendedPhaseState<V> tao_strang_step(G&& grads, const ExtendedPhaseState<V>& s, const TaoConfig& cfg) {
  double h = 0.5 * cfg.dt;
  auto r = tao_phi1(grads, s, h);
  r = tao_phi2(grads, r, h);
  r = tao_phi3(r, cfg.omega, cfg.dt);
  r = tao_phi2(grads, r, h);
  r = tao_phi1(grads, r, h);
  check_finite(r.q, "tao_strang_step");
  check_finite(r.p, "tao_strang_step");
  check_finite(r.x, "tao_strang_step");
  check_finite(r.y, "tao_strang_step");
  return r;
}

// States at t0, t0+dt, ..., t0+n*dt with n = floor((t - t0)/dt).
template <class S, class Step>
std::vector<S> rollout(Step&& step, const S& s0, double t0, double t, double dt) {
  if (!(dt > 0.0)) throw Error("rollout: dt must be positive");
  if (t < t0) throw Error("rollout: end time before start time");
  std::size_t n = step_count(t - t0, dt);
  std::vector<S> traj;
  traj.reserve(n + 1);
  traj.push_back(s0);
  for (std::size_t i = 0; i < n; ++i) traj.push_back(step(traj.back(), t0 + static_cast<double>(i) * dt));
  return traj;
}

struct OrderEstimate {
  bool exact = false;
  double slope = 0.0;
  std::vector<double> errors;
};

// Least-squares slope of log(error) against log(dt).
OrderEstimate estimate_order(const std::function<double(double)>& error_at_dt, const std::vector<double>& dts);

std::vector<double> geometric_ladder(double dt0, double ratio, std::size_t count);

// Writes `t,q_1..q_N,p_1..p_N[,H]` rows.
void write_trajectory_csv(std::ostream& os, const std::vector<PhaseState<Tensor>>& traj, double t0, double dt,
                          const std::function<double(const Tensor&, const Tensor&)>& energy = {});

}  // namespace physprior::integrate
