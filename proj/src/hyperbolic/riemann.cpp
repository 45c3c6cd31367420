#include <cmath>
#include <string>

#include "physprior/error.hpp"
#include "physprior/hyperbolic/hyperbolic.hpp"

namespace physprior::hyperbolic {

namespace {

// Pressure function of one side and its derivative.
void side_function(double p, const GasState& s, double c, double g, double& f, double& df) {
  if (p > s.p) {
    double a = 2.0 / ((g + 1.0) * s.rho);
    double b = (g - 1.0) / (g + 1.0) * s.p;
    double q = std::sqrt(a / (p + b));
    f = (p - s.p) * q;
    df = q * (1.0 - 0.5 * (p - s.p) / (b + p));
  } else {
    double r = p / s.p;
    f = 2.0 * c / (g - 1.0) * (std::pow(r, (g - 1.0) / (2.0 * g)) - 1.0);
    df = std::pow(r, -(g + 1.0) / (2.0 * g)) / (s.rho * c);
  }
}

}  // namespace

RiemannSolution solve_riemann(const GasState& left, const GasState& right, const EulerGas& gas,
                              int max_iterations) {
  gas.validate();
  if (!(left.rho > 0 && left.p > 0 && right.rho > 0 && right.p > 0))
    throw NumericError("solve_riemann: states need positive density and pressure");
  double g = gas.gamma;
  double cl = sound_speed(left, gas), cr = sound_speed(right, gas);
  double dv = right.v - left.v;
  if (2.0 / (g - 1.0) * (cl + cr) <= dv) throw NumericError("solve_riemann: initial data generate vacuum");

  // two-rarefaction guess
  double z = (g - 1.0) / (2.0 * g);
  double p = std::pow((cl + cr - 0.5 * (g - 1.0) * dv) / (cl / std::pow(left.p, z) + cr / std::pow(right.p, z)),
                      1.0 / z);
  p = std::max(p, 1e-12);
  RiemannSolution sol{left, right, gas};
  bool done = false;
  for (int it = 1; it <= max_iterations; ++it) {
    double fl, dfl, fr, dfr;
    side_function(p, left, cl, g, fl, dfl);
    side_function(p, right, cr, g, fr, dfr);
    double next = p - (fl + fr + dv) / (dfl + dfr);
    if (!std::isfinite(next)) break;
    if (next <= 0.0) next = 0.5 * p;
    double change = 2.0 * std::abs(next - p) / (next + p);
    p = next;
    sol.iterations = it;
    if (change < 1e-15) {
      done = true;
      break;
    }
  }
  if (!done) throw NumericError("solve_riemann: star pressure iteration did not converge in " + std::to_string(max_iterations) + " steps");
  double fl, dfl, fr, dfr;
  side_function(p, left, cl, g, fl, dfl);
  side_function(p, right, cr, g, fr, dfr);
  sol.p_star = p;
  sol.v_star = 0.5 * (left.v + right.v) + 0.5 * (fr - fl);
  return sol;
}

GasState RiemannSolution::sample(double xi) const {
  double g = gas.gamma;
  double gm = (g - 1.0) / (g + 1.0);
  if (xi <= v_star) {
    const GasState& s = left;
    double c = sound_speed(s, gas);
    if (p_star > s.p) {
      double ratio = p_star / s.p;
      double speed = s.v - c * std::sqrt((g + 1.0) / (2.0 * g) * ratio + (g - 1.0) / (2.0 * g));
      if (xi <= speed) return s;
      return {s.rho * (ratio + gm) / (ratio * gm + 1.0), v_star, p_star};
    }
    double head = s.v - c;
    if (xi <= head) return s;
    double cs = c * std::pow(p_star / s.p, (g - 1.0) / (2.0 * g));
    double tail = v_star - cs;
    if (xi > tail) return {s.rho * std::pow(p_star / s.p, 1.0 / g), v_star, p_star};
    double k = 2.0 / (g + 1.0) + gm / c * (s.v - xi);
    return {s.rho * std::pow(k, 2.0 / (g - 1.0)), 2.0 / (g + 1.0) * (c + (g - 1.0) / 2.0 * s.v + xi),
            s.p * std::pow(k, 2.0 * g / (g - 1.0))};
  }
  const GasState& s = right;
  double c = sound_speed(s, gas);
  if (p_star > s.p) {
    double ratio = p_star / s.p;
    double speed = s.v + c * std::sqrt((g + 1.0) / (2.0 * g) * ratio + (g - 1.0) / (2.0 * g));
    if (xi >= speed) return s;
    return {s.rho * (ratio + gm) / (ratio * gm + 1.0), v_star, p_star};
  }
  double head = s.v + c;
  if (xi >= head) return s;
  double cs = c * std::pow(p_star / s.p, (g - 1.0) / (2.0 * g));
  double tail = v_star + cs;
  if (xi < tail) return {s.rho * std::pow(p_star / s.p, 1.0 / g), v_star, p_star};
  double k = 2.0 / (g + 1.0) - gm / c * (s.v - xi);
  return {s.rho * std::pow(k, 2.0 / (g - 1.0)), 2.0 / (g + 1.0) * (-c + (g - 1.0) / 2.0 * s.v + xi),
          s.p * std::pow(k, 2.0 * g / (g - 1.0))};
}

std::array<double, 3> exact_riemann_sod(double xi, const EulerGas& gas) {
  SodProblem prob;
  auto sol = solve_riemann(prob.left, prob.right, gas);
  return to_conserved(sol.sample(xi), gas);
}

}  // namespace physprior::hyperbolic
