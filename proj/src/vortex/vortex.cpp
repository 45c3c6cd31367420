#include "physprior/vortex/vortex.hpp"

#include <algorithm>
#include <cstdio>

#include "physprior/error.hpp"
#include "physprior/integrate/integrators.hpp"

namespace physprior::vortex {

namespace nk = numkit;

void VortexSystem::validate() const {
  if (X.rank() != 2 || X.dim(1) != 2 || X.dim(0) != gamma.size())
    throw ShapeError("VortexSystem: X must be N x 2 with one circulation per particle");
  if (gamma.empty()) throw ShapeError("VortexSystem: need at least one particle");
  if (!(reg > 0.0)) throw ConfigError("VortexSystem: regularization must be positive");
  if (!X.all_finite()) throw NumericError("VortexSystem: non-finite positions");
}

VortexSystem make_system(const std::vector<Vec2>& pos, std::vector<double> gamma, double reg, bool periodic) {
  VortexSystem s;
  s.X = Tensor({pos.size(), 2});
  for (std::size_t i = 0; i < pos.size(); ++i) {
    s.X.at(i, 0) = pos[i][0];
    s.X.at(i, 1) = pos[i][1];
  }
  s.gamma = std::move(gamma);
  s.reg = reg;
  s.periodic = periodic;
  s.validate();
  return s;
}

double wrap_coordinate(double x, double length) {
  double y = x - length * std::floor(x / length);
  return y >= length ? 0.0 : y;
}

namespace {

double nearest_image(double d, double length) { return d - length * std::round(d / length); }

Vec2 displacement_raw(bool periodic, double length, const Vec2& a, const Vec2& b) {
  Vec2 d{a[0] - b[0], a[1] - b[1]};
  if (periodic) {
    d[0] = nearest_image(d[0], length);
    d[1] = nearest_image(d[1], length);
  }
  return d;
}

// Biot–Savart velocities at positions X (N x 2).
Tensor velocities_at(const VortexSystem& sys, const Tensor& X) {
  std::size_t n = sys.size();
  Tensor v({n, 2});
  double r2reg = sys.reg * sys.reg;
  for (std::size_t i = 0; i < n; ++i) {
    double vx = 0.0, vy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      Vec2 d = displacement_raw(sys.periodic, sys.length, {X.at(i, 0), X.at(i, 1)}, {X.at(j, 0), X.at(j, 1)});
      double w = sys.gamma[j] / (kTwoPi * (d[0] * d[0] + d[1] * d[1] + r2reg));
      vx -= w * d[1];
      vy += w * d[0];
    }
    v.at(i, 0) = vx;
    v.at(i, 1) = vy;
  }
  return v;
}

void wrap_positions(VortexSystem& s) {
  if (!s.periodic) return;
  for (auto& x : s.X.values()) x = wrap_coordinate(x, s.length);
}

double min_separation(const VortexSystem& s) {
  double best = INFINITY;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      Vec2 d = displacement(s, s.pos(i), s.pos(j));
      best = std::min(best, std::hypot(d[0], d[1]));
    }
  return best;
}

}  // namespace

Vec2 displacement(const VortexSystem& sys, const Vec2& a, const Vec2& b) {
  return displacement_raw(sys.periodic, sys.length, a, b);
}

Vec2 biot_savart_pair(const VortexSystem& sys, std::size_t i, std::size_t j) {
  if (i == j) return {0.0, 0.0};
  Vec2 d = displacement(sys, sys.pos(i), sys.pos(j));
  double w = sys.gamma[j] / (kTwoPi * (d[0] * d[0] + d[1] * d[1] + sys.reg * sys.reg));
  return {-w * d[1], w * d[0]};
}

Vec2 biot_savart_velocity(const VortexSystem& sys, std::size_t i) {
  if (i >= sys.size()) throw Error("biot_savart_velocity: particle index out of range");
  Vec2 v{0.0, 0.0};
  for (std::size_t j = 0; j < sys.size(); ++j) {
    if (j == i) continue;
    Vec2 c = biot_savart_pair(sys, i, j);
    v[0] += c[0];
    v[1] += c[1];
  }
  return v;
}

Tensor biot_savart_velocities(const VortexSystem& sys) { return velocities_at(sys, sys.X); }

VortexSystem lvm_step(const VortexSystem& sys, double dt, const DriftField& drift) {
  if (!(dt > 0.0)) throw Error("lvm_step: dt must be positive");
  auto f = [&](double, const Tensor& X) {
    Tensor v = velocities_at(sys, X);
    if (drift)
      for (std::size_t i = 0; i < sys.size(); ++i) {
        Vec2 d = drift({X.at(i, 0), X.at(i, 1)});
        v.at(i, 0) += d[0];
        v.at(i, 1) += d[1];
      }
    return v;
  };
  VortexSystem out = sys;
  out.X = integrate::rk4_step(f, 0.0, sys.X, dt);
  wrap_positions(out);
  return out;
}

double total_circulation(const VortexSystem& sys) {
  double s = 0.0;
  for (double g : sys.gamma) s += g;
  return s;
}

Vec2 linear_impulse(const VortexSystem& sys) {
  Vec2 p{0.0, 0.0};
  for (std::size_t i = 0; i < sys.size(); ++i) {
    p[0] += sys.gamma[i] * sys.X.at(i, 0);
    p[1] += sys.gamma[i] * sys.X.at(i, 1);
  }
  return p;
}

Trajectory reference_trajectory(const VortexSystem& sys0, double t_end, double fine_dt, double sample_dt,
                                const DriftField& f_ext) {
  sys0.validate();
  if (!(fine_dt > 0.0 && fine_dt <= 1e-4 + 1e-15)) throw ConfigError("reference_trajectory: fine dt must be in (0, 1e-4]");
  double ratio = sample_dt / fine_dt;
  auto per = static_cast<std::size_t>(std::llround(ratio));
  if (per == 0 || std::abs(ratio - static_cast<double>(per)) > 1e-6 * ratio)
    throw ConfigError("reference_trajectory: sample dt must be a multiple of the fine dt");
  std::size_t samples = integrate::step_count(t_end, sample_dt);
  Trajectory tr;
  tr.gamma = sys0.gamma;
  VortexSystem s = sys0;
  tr.t.push_back(0.0);
  tr.X.push_back(s.X);
  tr.min_separation = min_separation(s);
  for (std::size_t k = 1; k <= samples; ++k) {
    for (std::size_t m = 0; m < per; ++m) {
      s = lvm_step(s, fine_dt, f_ext);
      tr.min_separation = std::min(tr.min_separation, min_separation(s));
    }
    tr.t.push_back(static_cast<double>(k) * sample_dt);
    tr.X.push_back(s.X);
  }
  tr.flagged = tr.min_separation < 0.1 * sys0.reg;
  return tr;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  std::size_t n = traj.gamma.size();
  os << 't';
  for (std::size_t i = 1; i <= n; ++i) os << ",x_" << i << ",y_" << i << ",Γ_" << i;
  os << '\n';
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
  };
  for (std::size_t k = 0; k < traj.t.size(); ++k) {
    put(traj.t[k]);
    for (std::size_t i = 0; i < n; ++i) {
      os << ',', put(traj.X[k].at(i, 0));
      os << ',', put(traj.X[k].at(i, 1));
      os << ',', put(traj.gamma[i]);
    }
    os << '\n';
  }
}

double gaussian_kernel(double r2, double sigma2) { return std::exp(-0.5 * r2 / sigma2) / (kTwoPi * sigma2); }

VorticityGrid rasterize_vorticity(const VortexSystem& sys, const GridSpec& spec) {
  if (!(spec.sigma2 > 0.0)) throw ConfigError("rasterize_vorticity: sigma2 must be positive");
  VorticityGrid g;
  g.spec = spec;
  std::size_t n = spec.n;
  g.values = Tensor({n, n});
  double h = spec.cell();
  // the kernel is below 1e-14 of its peak beyond 8σ
  auto reach = static_cast<long>(std::ceil(8.0 * std::sqrt(spec.sigma2) / h));
  long nl = static_cast<long>(n);
  for (std::size_t v = 0; v < sys.size(); ++v) {
    double px = sys.X.at(v, 0), py = sys.X.at(v, 1);
    long ci = std::lround(px / h), cj = std::lround(py / h);
    for (long di = -reach; di <= reach; ++di) {
      long i = ((ci + di) % nl + nl) % nl;
      double dx = nearest_image(static_cast<double>(i) * h - px, spec.length);
      for (long dj = -reach; dj <= reach; ++dj) {
        long j = ((cj + dj) % nl + nl) % nl;
        double dy = nearest_image(static_cast<double>(j) * h - py, spec.length);
        g.values.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) +=
            sys.gamma[v] * gaussian_kernel(dx * dx + dy * dy, spec.sigma2);
      }
    }
  }
  return g;
}

double vorticity_at(const VortexSystem& sys, const Vec2& x, double sigma2) {
  double w = 0.0;
  for (std::size_t v = 0; v < sys.size(); ++v) {
    Vec2 d = displacement(sys, x, sys.pos(v));
    w += sys.gamma[v] * gaussian_kernel(d[0] * d[0] + d[1] * d[1], sigma2);
  }
  return w;
}

std::vector<DetectedVortex> detect_vortices(const VorticityGrid& grid, const DetectOptions& opt) {
  std::size_t n = grid.spec.n;
  long nl = static_cast<long>(n);
  const Tensor& w = grid.values;
  auto at = [&](long i, long j) { return w.at(static_cast<std::size_t>((i % nl + nl) % nl), static_cast<std::size_t>((j % nl + nl) % nl)); };
  double peak = nk::max_abs(w);
  std::vector<DetectedVortex> out;
  if (peak == 0.0) return out;
  double thr = opt.rel_threshold * peak;

  struct Cand {
    long i, j;
    double mag;
  };
  std::vector<Cand> cands;
  for (long i = 0; i < nl; ++i)
    for (long j = 0; j < nl; ++j) {
      double m = std::abs(at(i, j));
      if (m < thr) continue;
      bool best = true;
      for (long di = -1; di <= 1 && best; ++di)
        for (long dj = -1; dj <= 1 && best; ++dj) {
          if (di == 0 && dj == 0) continue;
          double o = std::abs(at(i + di, j + dj));
          // ties go to the earlier node in scan order
          bool earlier = di < 0 || (di == 0 && dj < 0);
          if (o > m || (o == m && earlier)) best = false;
        }
      if (best) cands.push_back({i, j, m});
    }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.mag > b.mag; });

  long box = static_cast<long>(opt.box);
  long half = box / 2;
  auto index_gap = [&](long a, long b) {
    long d = std::abs(a - b) % nl;
    return std::min(d, nl - d);
  };
  std::vector<Cand> kept;
  double h = grid.spec.cell();
  for (const auto& c : cands) {
    bool close = false;
    for (const auto& k : kept)
      if (index_gap(c.i, k.i) <= half && index_gap(c.j, k.j) <= half) close = true;
    if (close) continue;
    kept.push_back(c);
    // place the even-sized box toward the larger neighbour along each axis
    long si = std::abs(at(c.i + 1, c.j)) >= std::abs(at(c.i - 1, c.j)) ? c.i - half + 1 : c.i - half;
    long sj = std::abs(at(c.i, c.j + 1)) >= std::abs(at(c.i, c.j - 1)) ? c.j - half + 1 : c.j - half;
    double mass = 0.0, mx = 0.0, my = 0.0, strength = 0.0;
    for (long i = si; i < si + box; ++i)
      for (long j = sj; j < sj + box; ++j) {
        double v = at(i, j);
        double a = std::abs(v);
        mass += a;
        mx += a * static_cast<double>(i);
        my += a * static_cast<double>(j);
        strength += v;
      }
    DetectedVortex d;
    d.pos = {wrap_coordinate(mx / mass * h, grid.spec.length), wrap_coordinate(my / mass * h, grid.spec.length)};
    d.strength = strength * grid.cell_area();
    out.push_back(d);
  }
  return out;
}

Pairing pair_vortices(const std::vector<DetectedVortex>& a, const std::vector<DetectedVortex>& b, double length,
                      double strength_tol) {
  Pairing res;
  if (a.size() != b.size()) {
    res.rejected = true;
    res.reason = "count mismatch";
    return res;
  }
  std::size_t n = a.size();
  std::vector<bool> used_a(n, false), used_b(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    double best = INFINITY;
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (used_a[i]) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (used_b[j]) continue;
        Vec2 d = displacement_raw(true, length, a[i].pos, b[j].pos);
        double r = std::hypot(d[0], d[1]);
        if (r < best) {
          best = r;
          bi = i;
          bj = j;
        }
      }
    }
    used_a[bi] = used_b[bj] = true;
    double sa = a[bi].strength, sb = b[bj].strength;
    if (std::abs(sa - sb) > strength_tol * std::max(std::abs(sa), std::abs(sb))) {
      res.rejected = true;
      res.reason = "strength mismatch";
      res.pairs.clear();
      return res;
    }
    res.pairs.emplace_back(bi, bj);
  }
  std::sort(res.pairs.begin(), res.pairs.end());
  return res;
}

}  // namespace physprior::vortex
