#include "physprior/integrate/integrators.hpp"

#include <cstdio>

namespace physprior::integrate {

const SplitCoefficients& forest_ruth_coefficients() {
  static const SplitCoefficients k = [] {
    double cr = std::cbrt(2.0);
    double den = 2.0 - cr;
    SplitCoefficients s{};
    s.c[0] = s.c[3] = 1.0 / (2.0 * den);
    s.c[1] = s.c[2] = (1.0 - cr) / (2.0 * den);
    s.d[0] = s.d[2] = 1.0 / den;
    s.d[1] = -cr / den;
    s.d[3] = 0.0;
    return s;
  }();
  return k;
}

void TaoConfig::validate() const {
  if (!(omega > 0.0)) throw ConfigError("tao: omega must be positive");
  if (!(dt > 0.0)) throw ConfigError("tao: dt must be positive");
}

std::size_t step_count(double span, double dt) {
  if (!(dt > 0.0)) throw Error("step_count: dt must be positive");
  if (span <= 0.0) return 0;
  double r = span / dt;
  double n = std::floor(r);
  if (r - n > 1.0 - 1e-9 * std::max(1.0, r)) n += 1.0;
  return static_cast<std::size_t>(n);
}

OrderEstimate estimate_order(const std::function<double(double)>& error_at_dt, const std::vector<double>& dts) {
  if (dts.size() < 4) throw Error("estimate_order: need at least 4 step sizes");
  OrderEstimate est;
  for (double dt : dts) est.errors.push_back(error_at_dt(dt));
  bool all_zero = true;
  for (double e : est.errors) {
    if (!std::isfinite(e)) throw NumericError("estimate_order: non-finite error");
    if (e > 1e-14) all_zero = false;
  }
  if (all_zero) {
    est.exact = true;
    return est;
  }
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < dts.size(); ++i) {
    if (est.errors[i] <= 0.0) continue;
    double x = std::log(dts[i]), y = std::log(est.errors[i]);
    n += 1;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  if (n < 2) {
    est.exact = true;
    return est;
  }
  est.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return est;
}

std::vector<double> geometric_ladder(double dt0, double ratio, std::size_t count) {
  std::vector<double> v;
  double dt = dt0;
  for (std::size_t i = 0; i < count; ++i, dt *= ratio) v.push_back(dt);
  return v;
}

void write_trajectory_csv(std::ostream& os, const std::vector<PhaseState<Tensor>>& traj, double t0, double dt,
                          const std::function<double(const Tensor&, const Tensor&)>& energy) {
  if (traj.empty()) return;
  std::size_t n = traj[0].q.size();
  os << 't';
  for (std::size_t i = 1; i <= n; ++i) os << ",q_" << i;
  for (std::size_t i = 1; i <= n; ++i) os << ",p_" << i;
  if (energy) os << ",H";
  os << '\n';
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
  };
  for (std::size_t k = 0; k < traj.size(); ++k) {
    put(t0 + static_cast<double>(k) * dt);
    for (double v : traj[k].q.values()) os << ',', put(v);
    for (double v : traj[k].p.values()) os << ',', put(v);
    if (energy) os << ',', put(energy(traj[k].q, traj[k].p));
    os << '\n';
  }
}

}  // namespace physprior::integrate
