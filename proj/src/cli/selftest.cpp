#include "physprior/cli/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "physprior/integrate/integrators.hpp"
#include "physprior/numkit/linalg.hpp"
#include "physprior/numkit/random.hpp"

namespace physprior::cli {

namespace nk = numkit;
using integrate::ExtendedPhaseState;
using integrate::PhaseState;
using numkit::ParameterSet;
using numkit::Rng;
using numkit::Shape;
using numkit::Tensor;
using numkit::Var;

namespace {

Tensor omega_matrix(std::size_t n, std::size_t pairs) {
  std::size_t d = 2 * n * pairs;
  Tensor w(Shape{d, d});
  for (std::size_t k = 0; k < pairs; ++k)
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t qi = 2 * n * k + i, pi = 2 * n * k + n + i;
      w.at(qi, pi) = 1.0;
      w.at(pi, qi) = -1.0;
    }
  return w;
}

double symplectic_defect(const Tensor& jac, const Tensor& om) {
  Tensor lhs = nk::matmul(nk::matmul(nk::transpose(jac), om), jac);
  return nk::max_abs_diff(lhs, om);
}

Tensor pack(std::initializer_list<const Tensor*> parts) {
  std::vector<double> v;
  for (const Tensor* t : parts) v.insert(v.end(), t->values().begin(), t->values().end());
  return Tensor::vector(v);
}

Tensor slice(const Tensor& z, std::size_t k, std::size_t n) {
  return Tensor::vector({z.values().begin() + k * n, z.values().begin() + (k + 1) * n});
}

double column_sum(const hyperbolic::GridField1D& f, std::size_t c) {
  double s = 0.0;
  for (std::size_t j = 0; j < f.cells(); ++j) s += f.u.at(j, c);
  return s;
}

// Largest relative gap between reverse-mode and central-difference gradients.
double gradient_gap(const ParameterSet& ps, const std::function<Var(const std::vector<Var>&)>& loss) {
  auto p = ps.bind();
  auto grads = nk::collect_grads(nk::backward_grad(loss(p)), p);
  double worst = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto fi = [&](const Tensor& t) {
      nk::NoGradGuard ng;
      auto q = ps.bind(false);
      q[i] = nk::constant(t);
      return loss(q).value().item();
    };
    Tensor fd = nk::finite_difference_grad(fi, ps[i], 1e-6);
    worst = std::max(worst, nk::max_abs_diff(grads[i], fd) / std::max(nk::max_abs(fd), 1e-6));
  }
  return worst;
}

}  // namespace

std::vector<ReportRow> symplectic_checks(std::size_t draws) {
  Rng rng(101);
  double asym = 0.0, fr = 0.0, tao = 0.0;
  Tensor om2 = omega_matrix(2, 1), om_ext = omega_matrix(1, 2);
  auto sys = hamiltonian::AnalyticSystem::nonseparable();
  auto grads = [&](const Tensor& a, const Tensor& b) { return hamiltonian::analytic_grads(sys, a, b); };
  for (std::size_t d = 0; d < draws; ++d) {
    ParameterSet ps;
    auto net = hamiltonian::make_taylor_net(ps, 2, 8, 16, rng);
    Tensor v = rng.uniform_tensor({2}, -1.0, 1.0);
    for (const auto* f : {&net.tp, &net.vq}) {
      Tensor J = f->jacobian(ps, v);
      asym = std::max(asym, nk::max_abs_diff(J, nk::transpose(J)));
    }
    auto tp = [&](const Tensor& x) { return net.tp.eval(ps, x.reshaped({1, 2})).reshaped({2}); };
    auto vq = [&](const Tensor& x) { return net.vq.eval(ps, x.reshaped({1, 2})).reshaped({2}); };
    auto step = [&](const Tensor& z) {
      auto s = integrate::forest_ruth_step(tp, vq, PhaseState<Tensor>{slice(z, 0, 2), slice(z, 1, 2)}, 0.1);
      return pack({&s.q, &s.p});
    };
    fr = std::max(fr, symplectic_defect(nk::finite_difference_jacobian(step, rng.uniform_tensor({4}, -1, 1), 1e-5), om2));

    Tensor z = rng.uniform_tensor({4}, -1.0, 1.0);
    auto ext = [](const Tensor& w) {
      return ExtendedPhaseState<Tensor>{slice(w, 0, 1), slice(w, 1, 1), slice(w, 2, 1), slice(w, 3, 1)};
    };
    auto out = [](const ExtendedPhaseState<Tensor>& s) { return pack({&s.q, &s.p, &s.x, &s.y}); };
    auto f1 = [&](const Tensor& w) { return out(integrate::tao_phi1(grads, ext(w), 0.1)); };
    auto f2 = [&](const Tensor& w) { return out(integrate::tao_phi2(grads, ext(w), 0.1)); };
    auto f3 = [&](const Tensor& w) { return out(integrate::tao_phi3(ext(w), 10.0, 0.1)); };
    for (const std::function<Tensor(const Tensor&)>& f : {std::function<Tensor(const Tensor&)>(f1), {f2}, {f3}})
      tao = std::max(tao, symplectic_defect(nk::finite_difference_jacobian(f, z, 1e-5), om_ext));
  }

  // negative control: unconstrained fields with asymmetric Jacobians in the same scheme
  ParameterSet ps;
  auto mt = nk::make_mlp(ps, "t", {2, 8, 2}, nk::Activation::Sigmoid, nk::Init::XavierUniform, rng);
  auto mv = nk::make_mlp(ps, "v", {2, 8, 2}, nk::Activation::Sigmoid, nk::Init::XavierUniform, rng);
  auto run = [&](const nk::Mlp& m, const Tensor& x) {
    nk::NoGradGuard ng;
    return m.forward(ps.bind(false), nk::constant(x.reshaped({1, 2}))).value().reshaped({2}) * 3.0;
  };
  auto tp = [&](const Tensor& x) { return run(mt, x); };
  auto vq = [&](const Tensor& x) { return run(mv, x); };
  auto step = [&](const Tensor& z) {
    auto s = integrate::forest_ruth_step(tp, vq, PhaseState<Tensor>{slice(z, 0, 2), slice(z, 1, 2)}, 0.1);
    return pack({&s.q, &s.p});
  };
  double control =
      symplectic_defect(nk::finite_difference_jacobian(step, Tensor::vector({0.2, -0.3, 0.5, 0.1}), 1e-5), om2);

  return {make_row("taylor_jacobian_asymmetry", asym, "<", 1e-10),
          make_row("forest_ruth_symplectic_defect", fr, "<", 1e-6),
          make_row("tao_submap_symplectic_defect", tao, "<", 1e-6),
          make_row("unconstrained_field_symplectic_defect", control, ">", 1e-3)};
}

std::vector<ReportRow> integrator_order_checks() {
  auto ladder = integrate::geometric_ladder(0.2, 0.5, 5);
  auto osc = [](double, const Tensor& y) { return Tensor::vector({y[1], -y[0]}); };
  auto ident = [](const Tensor& v) { return v; };

  auto euler = integrate::estimate_order(
      [](double dt) {
        double y = 1.0;
        auto f = [](double, double x) { return x; };
        for (std::size_t i = 0; i < integrate::step_count(1.0, dt); ++i) y = integrate::euler_step(f, 0.0, y, dt);
        return std::abs(y - std::exp(1.0));
      },
      integrate::geometric_ladder(0.1, 0.5, 5));
  auto rk4 = integrate::estimate_order(
      [&](double dt) {
        Tensor y = Tensor::vector({1.0, 0.0});
        std::size_t n = integrate::step_count(2.0, dt);
        for (std::size_t i = 0; i < n; ++i) y = integrate::rk4_step(osc, 0.0, y, dt);
        double t = static_cast<double>(n) * dt;
        return std::hypot(y[0] - std::cos(t), y[1] + std::sin(t));
      },
      ladder);
  auto fr = integrate::estimate_order(
      [&](double dt) {
        PhaseState<Tensor> s{Tensor::vector({1.0}), Tensor::vector({0.0})};
        std::size_t n = integrate::step_count(2.0, dt);
        for (std::size_t i = 0; i < n; ++i) s = integrate::forest_ruth_step(ident, ident, s, dt);
        double t = static_cast<double>(n) * dt;
        return std::hypot(s.q[0] - std::cos(t), s.p[0] + std::sin(t));
      },
      ladder);
  auto tao = integrate::estimate_order(
      [](double dt) {
        auto s = integrate::extend(PhaseState<Tensor>{Tensor::vector({1.0}), Tensor::vector({0.0})});
        auto g = [](const Tensor& a, const Tensor& b) { return std::make_pair(a, b); };
        integrate::TaoConfig cfg{10.0, dt};
        std::size_t n = integrate::step_count(1.0, dt);
        for (std::size_t i = 0; i < n; ++i) s = integrate::tao_strang_step(g, s, cfg);
        double t = static_cast<double>(n) * dt;
        return std::hypot(s.q[0] - std::cos(t), s.p[0] + std::sin(t));
      },
      integrate::geometric_ladder(0.02, 0.5, 5));
  auto band = [](const std::string& name, double slope, double order) {
    return make_row(name + "_order_deviation", std::abs(slope - order), "<=", 0.3);
  };
  return {band("euler", euler.slope, 1.0), band("rk4", rk4.slope, 4.0), band("forest_ruth", fr.slope, 4.0),
          band("tao", tao.slope, 2.0)};
}

std::vector<ReportRow> sod_calibration_checks() {
  hyperbolic::SodProblem prob;
  hyperbolic::EulerGas gas;
  auto error_at = [&](double dx) {
    double dt = 0.2 * dx;
    auto f = hyperbolic::sod_initial(prob, gas, dx);
    std::size_t n = integrate::step_count(0.1, dt);
    for (std::size_t k = 0; k < n; ++k) f = hyperbolic::roe_step_euler(f, gas, dt);
    return hyperbolic::density_l1(f, hyperbolic::sod_exact(prob, gas, dx, 0.1));
  };
  double e1 = error_at(0.01), e2 = error_at(0.005), e3 = error_at(0.0025);
  return {make_row("roe_sod_density_l1", e2, "<", 2.0 * kSodRoeCalibrationL1),
          make_row("roe_sod_halving_ratio_coarse", e2 / e1, "<", 1.0),
          make_row("roe_sod_halving_ratio_fine", e3 / e2, "<", 1.0)};
}

std::vector<ReportRow> conservation_checks() {
  Rng rng(103);
  auto random_field = [&](std::size_t n, std::size_t nc) {
    hyperbolic::GridField1D f;
    f.u = Tensor({n, nc});
    f.dx = 1.0 / static_cast<double>(n);
    f.bc = hyperbolic::Boundary::Periodic;
    hyperbolic::EulerGas gas;
    for (std::size_t j = 0; j < n; ++j) {
      if (nc == 3) {
        hyperbolic::GasState s{rng.uniform(0.5, 1.5), rng.uniform(-0.5, 0.5), rng.uniform(0.5, 1.5)};
        auto u = hyperbolic::to_conserved(s, gas);
        for (std::size_t c = 0; c < 3; ++c) f.u.at(j, c) = u[c];
      } else {
        for (std::size_t c = 0; c < nc; ++c) f.u.at(j, c) = rng.uniform(0.5, 1.5);
      }
    }
    return f;
  };
  auto rel_drift = [](const hyperbolic::GridField1D& a, const hyperbolic::GridField1D& b) {
    double worst = 0.0;
    for (std::size_t c = 0; c < a.comps(); ++c) {
      double s = column_sum(a, c);
      worst = std::max(worst, std::abs(column_sum(b, c) - s) / std::max(1.0, std::abs(s)));
    }
    return worst;
  };
  double roe = 0.0, roenet = 0.0;
  hyperbolic::EulerGas gas;
  for (int draw = 0; draw < 10; ++draw) {
    auto f1 = random_field(40, 1);
    roe = std::max(roe, rel_drift(f1, hyperbolic::roe_step_linear(f1, 0.7, 0.01)));
    auto f3 = random_field(40, 3);
    roe = std::max(roe, rel_drift(f3, hyperbolic::roe_step_euler(f3, gas, 0.002)));
    for (std::size_t nc : {1u, 3u}) {
      ParameterSet ps;
      auto m = hyperbolic::make_roenet(ps, nc, nc == 1 ? 1 : 8, rng, 16, 2);
      auto f = random_field(40, nc);
      roenet = std::max(roenet, rel_drift(f, hyperbolic::roenet_step(m, ps, f, 0.002)));
    }
  }

  std::vector<vortex::Vec2> pos;
  std::vector<double> gamma;
  for (int i = 0; i < 5; ++i) {
    pos.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
    gamma.push_back(rng.uniform(-1.5, 1.5));
  }
  auto sys = vortex::make_system(pos, gamma, 0.1, false);
  double g0 = vortex::total_circulation(sys);
  auto i0 = vortex::linear_impulse(sys);
  double circ = 0.0, impulse = 0.0;
  for (int k = 0; k < 1000; ++k) {
    sys = vortex::lvm_step(sys, 0.01);
    circ = std::max(circ, std::abs(vortex::total_circulation(sys) - g0));
    auto ik = vortex::linear_impulse(sys);
    impulse = std::max(impulse, std::hypot(ik[0] - i0[0], ik[1] - i0[1]));
  }
  return {make_row("roe_periodic_sum_drift", roe, "<=", 1e-12),
          make_row("roenet_periodic_sum_drift", roenet, "<=", 1e-12),
          make_row("lvm_circulation_drift", circ, "<=", 0.0),
          make_row("lvm_impulse_drift", impulse, "<=", 1e-8)};
}

std::vector<ReportRow> detection_checks(std::size_t configs) {
  Rng rng(104);
  vortex::GridSpec spec;
  double worst_pos = 0.0, worst_str = 0.0;
  std::size_t unrejected = 0, recovered = 0;
  train::VortexDataConfig vc;
  vc.min_separation = 0.5;
  for (std::size_t draw = 0; draw < configs; ++draw) {
    auto sys = train::random_vortex_system(1 + rng.index(6), vc, rng);
    auto found = vortex::detect_vortices(vortex::rasterize_vorticity(sys, spec));
    std::vector<vortex::DetectedVortex> truth;
    for (std::size_t i = 0; i < sys.size(); ++i) truth.push_back({sys.pos(i), sys.gamma[i]});
    auto direct = vortex::pair_vortices(found, truth, spec.length);
    if (direct.rejected) {
      worst_pos = INFINITY;
      continue;
    }
    for (auto [i, j] : direct.pairs) {
      auto d = vortex::displacement(sys, found[i].pos, truth[j].pos);
      worst_pos = std::max(worst_pos, std::hypot(d[0], d[1]));
      worst_str = std::max(worst_str, std::abs(found[i].strength - truth[j].strength) / std::abs(truth[j].strength));
    }

    // pairing across the training time span against the simulated identities
    auto traj = vortex::reference_trajectory(sys, 0.2, 1e-4, 0.2);
    auto end = sys;
    end.X = traj.X.back();
    auto later = vortex::detect_vortices(vortex::rasterize_vorticity(end, spec));
    auto p = vortex::pair_vortices(found, later, spec.length);
    if (p.rejected) continue;
    ++unrejected;
    auto nearest = [](const vortex::VortexSystem& s, const vortex::Vec2& x) {
      std::size_t best = 0;
      double bd = INFINITY;
      for (std::size_t i = 0; i < s.size(); ++i) {
        auto d = vortex::displacement(s, x, s.pos(i));
        double r = std::hypot(d[0], d[1]);
        if (r < bd) bd = r, best = i;
      }
      return best;
    };
    bool ok = true;
    for (auto [a, b] : p.pairs) ok = ok && nearest(sys, found[a].pos) == nearest(end, later[b].pos);
    recovered += ok;
  }
  double frac = unrejected ? static_cast<double>(recovered) / static_cast<double>(unrejected) : 0.0;
  return {make_row("detect_position_error_cells", worst_pos / spec.cell(), "<", 1.0),
          make_row("detect_strength_rel_error", worst_str, "<", 0.05),
          make_row("pairing_recovery_fraction", frac, ">=", 0.95)};
}

std::vector<ReportRow> gradient_checks() {
  Rng rng(105);
  std::vector<ReportRow> rows;
  Tensor q0 = rng.uniform_tensor({3, 1}, -1.0, 1.0), p0 = rng.uniform_tensor({3, 1}, -1.0, 1.0);
  Tensor w1 = rng.normal_tensor({3, 1}, 1.0), w2 = rng.normal_tensor({3, 1}, 1.0);
  for (auto fam : {train::HamiltonianFamily::TaylorNet, train::HamiltonianFamily::OdeNet,
                   train::HamiltonianFamily::Nssnn, train::HamiltonianFamily::Hrk}) {
    ParameterSet ps;
    train::HamiltonianModelConfig mc;
    mc.family = fam;
    mc.terms = 3;
    mc.taylor_hidden = 4;
    mc.energy_hidden = 6;
    mc.energy_layers = 3;
    mc.field_hidden = {6};
    auto m = train::make_hamiltonian_model(ps, mc, rng);
    auto loss = [&](const std::vector<Var>& p) {
      Var q = nk::constant(q0), pp = nk::constant(p0);
      auto s = m.advance(p, {q, pp, q, pp}, 0.1, 2);
      return nk::sum(nk::mul(s.q, nk::constant(w1))) + nk::sum(nk::mul(s.p, nk::constant(w2))) +
             nk::sum(nk::mul(s.x, nk::constant(w2)));
    };
    rows.push_back(make_row(train::family_name(fam) + "_gradient_rel_error", gradient_gap(ps, loss), "<", 1e-5));
  }
  {
    ParameterSet ps;
    auto m = hyperbolic::make_roenet(ps, 2, 3, rng, 8, 1);
    auto lay = hyperbolic::make_layout(2, 6, hyperbolic::Boundary::Replicate);
    Tensor u0 = rng.uniform_tensor({12, 2}, 0.5, 1.5), w = rng.normal_tensor({12, 2}, 1.0);
    auto loss = [&](const std::vector<Var>& p) {
      return nk::sum(nk::mul(hyperbolic::roenet_rollout(m, p, nk::constant(u0), lay, 0.2, 2), nk::constant(w)));
    };
    rows.push_back(make_row("roenet_gradient_rel_error", gradient_gap(ps, loss), "<", 1e-5));
  }
  {
    ParameterSet ps;
    auto net = vortex::make_dynamics_net(ps, rng, 8, 1);
    auto sys = vortex::make_system({{2.0, 3.0}, {3.1, 3.2}, {2.5, 4.0}}, {1.0, -0.7, 0.5});
    auto batch = vortex::make_batch({&sys}, {vortex::local_vorticity(sys)});
    Tensor w = rng.normal_tensor({3, 2}, 1.0);
    auto loss = [&](const std::vector<Var>& p) {
      return nk::sum(nk::mul(vortex::nvm_step(net, p, batch, nk::constant(sys.X), 0.1), nk::constant(w)));
    };
    rows.push_back(make_row("vortex_dynamics_gradient_rel_error", gradient_gap(ps, loss), "<", 1e-5));
  }
  return rows;
}

bool run_selftest(std::ostream& os) {
  std::vector<ReportRow> all;
  auto append = [&](std::vector<ReportRow> rows) { all.insert(all.end(), rows.begin(), rows.end()); };
  append(symplectic_checks());
  append(integrator_order_checks());
  append(sod_calibration_checks());
  append(conservation_checks());
  append(detection_checks(50));
  append(gradient_checks());
  bool ok = true;
  char buf[256];
  for (const auto& r : all) {
    std::snprintf(buf, sizeof buf, "%s %s: %.6g %s %.6g", r.pass ? "PASS" : "FAIL", r.check.c_str(), r.value,
                  r.relation.c_str(), r.threshold);
    os << buf << '\n';
    ok = ok && r.pass;
  }
  return ok;
}

}  // namespace physprior::cli
