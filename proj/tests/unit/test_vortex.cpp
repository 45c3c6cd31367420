#include <doctest.h>

#include <cmath>
#include <sstream>

#include "physprior/error.hpp"
#include "physprior/numkit/linalg.hpp"
#include "physprior/numkit/random.hpp"
#include "physprior/vortex/vortex.hpp"

using namespace physprior;
using namespace physprior::vortex;
namespace nk = physprior::numkit;

namespace {

VortexSystem random_system(Rng& rng, std::size_t n, bool periodic, double min_sep = 0.5) {
  std::vector<Vec2> pos;
  std::vector<double> g;
  while (pos.size() < n) {
    Vec2 p{rng.uniform(0.5, kTwoPi - 0.5), rng.uniform(0.5, kTwoPi - 0.5)};
    bool ok = true;
    for (const auto& q : pos)
      if (std::hypot(p[0] - q[0], p[1] - q[1]) < min_sep) ok = false;
    if (!ok) continue;
    pos.push_back(p);
    double mag = rng.uniform(0.5, 1.5);
    g.push_back(rng.uniform() < 0.5 ? -mag : mag);
  }
  return make_system(pos, g, 0.1, periodic);
}

}  // namespace

TEST_CASE("biot-savart examples") {
  auto one = make_system({{1.0, 2.0}}, {1.0});
  auto v = biot_savart_velocity(one, 0);
  CHECK(v[0] == 0.0);
  CHECK(v[1] == 0.0);

  auto two = make_system({{3.0, 3.0}, {4.0, 3.0}}, {1.0, 1.0});
  auto a = biot_savart_velocity(two, 0), b = biot_savart_velocity(two, 1);
  CHECK(std::hypot(a[0], a[1]) == doctest::Approx(1.0 / (kTwoPi * 1.01)).epsilon(1e-12));
  CHECK(1.0 / (kTwoPi * 1.01) == doctest::Approx(0.157549).epsilon(2e-4));
  CHECK(a[0] == doctest::Approx(0.0));
  CHECK(a[1] == doctest::Approx(-b[1]));

  // mirror in the line x = 3.5
  auto m = make_system({{3.2, 3.0}, {3.8, 3.0}, {3.5, 3.6}}, {1.0, 1.0, -0.5});
  auto v0 = biot_savart_velocity(m, 0), v1 = biot_savart_velocity(m, 1), v2 = biot_savart_velocity(m, 2);
  // reflection flips the sense of rotation, so the mirrored velocities satisfy u -> u, v -> -v up to the image pairing
  CHECK(v0[0] == doctest::Approx(v1[0]));
  CHECK(v0[1] == doctest::Approx(-v1[1]));
  CHECK(v2[1] == doctest::Approx(0.0));
}

TEST_CASE("biot-savart invariants") {
  Rng rng(21);
  for (int draw = 0; draw < 20; ++draw) {
    auto sys = random_system(rng, 2 + rng.index(5), false);
    for (std::size_t i = 0; i < sys.size(); ++i)
      for (std::size_t j = 0; j < sys.size(); ++j) {
        if (i == j) continue;
        auto vij = biot_savart_pair(sys, i, j), vji = biot_savart_pair(sys, j, i);
        CHECK(std::abs(sys.gamma[i] * vij[0] + sys.gamma[j] * vji[0]) < 1e-15);
        CHECK(std::abs(sys.gamma[i] * vij[1] + sys.gamma[j] * vji[1]) < 1e-15);
      }
    double phi = rng.uniform(0, kTwoPi);
    double c = std::cos(phi), s = std::sin(phi);
    auto rot = sys;
    for (std::size_t i = 0; i < sys.size(); ++i) {
      rot.X.at(i, 0) = c * sys.X.at(i, 0) - s * sys.X.at(i, 1);
      rot.X.at(i, 1) = s * sys.X.at(i, 0) + c * sys.X.at(i, 1);
    }
    Tensor v = biot_savart_velocities(sys), vr = biot_savart_velocities(rot);
    for (std::size_t i = 0; i < sys.size(); ++i) {
      CHECK(std::abs(vr.at(i, 0) - (c * v.at(i, 0) - s * v.at(i, 1))) < 1e-10);
      CHECK(std::abs(vr.at(i, 1) - (s * v.at(i, 0) + c * v.at(i, 1))) < 1e-10);
    }
  }
}

TEST_CASE("lvm step") {
  auto zero = make_system({{1.0, 1.0}, {2.0, 1.5}}, {0.0, 0.0});
  CHECK(lvm_step(zero, 0.1).X.values() == zero.X.values());
  CHECK_THROWS_AS(lvm_step(zero, 0.0), Error);

  // co-rotating pair about the midpoint
  auto pair = make_system({{3.0, 3.0}, {4.0, 3.0}}, {1.0, 1.0});
  double omega = 2.0 * (1.0 / (kTwoPi * 1.01));
  CHECK(omega == doctest::Approx(0.315098).epsilon(2e-4));
  auto s = pair;
  double dt = 0.01;
  for (int k = 0; k < 100; ++k) s = lvm_step(s, dt);
  double ang = std::atan2(s.X.at(1, 1) - s.X.at(0, 1), s.X.at(1, 0) - s.X.at(0, 0));
  CHECK(ang == doctest::Approx(omega * 1.0).epsilon(1e-8));
  CHECK(std::abs(ang - 1.0 / M_PI) > 1e-3);

  // ΣΓ and ΣΓX over 10³ steps
  Rng rng(22);
  for (bool periodic : {false, true}) {
    auto sys = random_system(rng, 4, periodic, 0.8);
    for (std::size_t i = 0; i < sys.size(); ++i)
      for (std::size_t c = 0; c < 2; ++c) sys.X.at(i, c) = 2.5 + 0.4 * (sys.X.at(i, c) - M_PI) / M_PI;
    auto p0 = linear_impulse(sys);
    double g0 = total_circulation(sys);
    auto t = sys;
    for (int k = 0; k < 1000; ++k) t = lvm_step(t, 0.01);
    CHECK(total_circulation(t) == g0);
    auto p1 = linear_impulse(t);
    CHECK(std::abs(p1[0] - p0[0]) < 1e-8);
    CHECK(std::abs(p1[1] - p0[1]) < 1e-8);
  }
  // periodic wrap
  auto edge = make_system({{kTwoPi - 1e-3, 1.0}}, {1.0});
  auto moved = lvm_step(edge, 0.1, [](const Vec2&) { return Vec2{0.1, 0.0}; });
  CHECK(moved.X.at(0, 0) == doctest::Approx(0.01 - 1e-3));
}

TEST_CASE("reference trajectory") {
  auto pair = make_system({{3.0, 3.0}, {3.5, 3.0}}, {1.0, 1.0});
  double omega = 2.0 / (kTwoPi * (0.25 + 0.01));
  double period = kTwoPi / omega;
  auto tr = reference_trajectory(pair, period, 1e-4, period / 40.0 > 1e-4 ? 1e-2 : 1e-4);
  for (const auto& X : tr.X) {
    double r = std::hypot(X.at(1, 0) - X.at(0, 0), X.at(1, 1) - X.at(0, 1));
    CHECK(std::abs(r - 0.5) < 1e-6);
  }
  CHECK(!tr.flagged);
  CHECK(tr.t.size() == tr.X.size());

  auto drift = reference_trajectory(pair, 1.0, 1e-4, 0.1, [](const Vec2&) { return Vec2{0.1, 0.0}; });
  auto c0x = 0.5 * (drift.X.front().at(0, 0) + drift.X.front().at(1, 0));
  auto c1x = 0.5 * (drift.X.back().at(0, 0) + drift.X.back().at(1, 0));
  auto c1y = 0.5 * (drift.X.back().at(0, 1) + drift.X.back().at(1, 1));
  CHECK(c1x - c0x == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(c1y == doctest::Approx(3.0).epsilon(1e-12));

  // coarse lvm converges to the oracle at fourth order
  Rng rng(23);
  auto sys = random_system(rng, 3, true, 0.8);
  auto ref = reference_trajectory(sys, 0.4, 1e-4, 0.4);
  std::vector<double> errs;
  for (double dt : {0.1, 0.05, 0.025}) {
    auto lv = lvm_rollout(sys, 0.4, dt);
    errs.push_back(position_error({{}, {lv.X.back()}, {}}, {{}, {ref.X.back()}, {}}, kTwoPi)[0]);
  }
  CHECK(std::log2(errs[0] / errs[1]) == doctest::Approx(4.0).epsilon(0.1));
  CHECK(std::log2(errs[1] / errs[2]) == doctest::Approx(4.0).epsilon(0.1));

  CHECK_THROWS_AS(reference_trajectory(pair, 1.0, 1e-3, 0.1), ConfigError);
  auto close = make_system({{3.0, 3.0}, {3.005, 3.0}}, {1.0, -1.0});
  CHECK(reference_trajectory(close, 1e-3, 1e-4, 1e-3).flagged);

  std::ostringstream os;
  Trajectory t1;
  t1.t = {0.0};
  t1.X = {Tensor::matrix(1, 2, {0.5, 0.25})};
  t1.gamma = {2.0};
  write_trajectory_csv(os, t1);
  CHECK(os.str() == "t,x_1,y_1,Γ_1\n0,0.5,0.25,2\n");
}

TEST_CASE("rasterize and detect") {
  GridSpec spec;
  auto empty = make_system({{1.0, 1.0}}, {0.0});
  auto g0 = rasterize_vorticity(empty, spec);
  CHECK(nk::max_abs(g0.values) == 0.0);
  CHECK(detect_vortices(g0).empty());

  auto one = make_system({{1.234, 4.321}}, {0.8});
  auto g1 = rasterize_vorticity(one, spec);
  std::size_t best = 0;
  for (std::size_t k = 0; k < g1.values.size(); ++k)
    if (g1.values[k] > g1.values[best]) best = k;
  double h = spec.cell();
  CHECK(best / spec.n == static_cast<std::size_t>(std::lround(1.234 / h)));
  CHECK(best % spec.n == static_cast<std::size_t>(std::lround(4.321 / h)));
  CHECK(nk::sum(g1.values) * g1.cell_area() == doctest::Approx(0.8).epsilon(0.01));

  auto opp = make_system({{2.0, 2.0}, {3.0, 2.5}}, {1.0, -0.7});
  auto det = detect_vortices(rasterize_vorticity(opp, spec));
  REQUIRE(det.size() == 2);
  auto pr = pair_vortices(det, {{{2.0, 2.0}, 1.0}, {{3.0, 2.5}, -0.7}}, kTwoPi);
  CHECK(!pr.rejected);
  bool pos_first = det[pr.pairs[0].first].strength > 0;
  CHECK(pos_first == (pr.pairs[0].second == 0));
  CHECK(det[0].strength * det[1].strength < 0);

  // round trip on random configurations, including the periodic seam
  Rng rng(24);
  double worst_pos = 0.0, worst_str = 0.0;
  for (int draw = 0; draw < 50; ++draw) {
    auto sys = random_system(rng, 1 + rng.index(6), true);
    if (draw % 5 == 0) sys.X.at(0, 0) = 0.01;
    auto d = detect_vortices(rasterize_vorticity(sys, spec));
    REQUIRE(d.size() == sys.size());
    std::vector<DetectedVortex> truth;
    for (std::size_t i = 0; i < sys.size(); ++i) truth.push_back({sys.pos(i), sys.gamma[i]});
    auto p = pair_vortices(d, truth, kTwoPi);
    REQUIRE(!p.rejected);
    for (auto [i, j] : p.pairs) {
      auto dd = displacement(sys, d[i].pos, truth[j].pos);
      worst_pos = std::max(worst_pos, std::hypot(dd[0], dd[1]));
      worst_str = std::max(worst_str, std::abs(d[i].strength - truth[j].strength) / std::abs(truth[j].strength));
    }
  }
  CHECK(worst_pos < h);
  CHECK(worst_str < 0.05);
}

TEST_CASE("pairing") {
  std::vector<DetectedVortex> a{{{1.0, 1.0}, 1.0}, {{2.0, 2.0}, -1.0}, {{3.0, 1.0}, 0.5}};
  auto id = pair_vortices(a, a, kTwoPi);
  CHECK(!id.rejected);
  for (std::size_t k = 0; k < 3; ++k) CHECK((id.pairs[k].first == k && id.pairs[k].second == k));
  auto fewer = pair_vortices(a, {a[0], a[1]}, kTwoPi);
  CHECK(fewer.rejected);
  CHECK(fewer.reason == "count mismatch");
  auto weak = a;
  weak[1].strength = -0.3;
  CHECK(pair_vortices(a, weak, kTwoPi).rejected);

  Rng rng(25);
  double h = GridSpec{}.cell();
  int recovered = 0;
  for (int draw = 0; draw < 100; ++draw) {
    auto sys = random_system(rng, 2 + rng.index(5), true);
    std::vector<DetectedVortex> x, y;
    std::vector<std::size_t> perm;
    for (std::size_t i = 0; i < sys.size(); ++i) x.push_back({sys.pos(i), sys.gamma[i]});
    perm.resize(x.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = perm.size() - 1 - i;
    y.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      double r = rng.uniform(0, 2 * h), th = rng.uniform(0, kTwoPi);
      y[perm[i]] = {{x[i].pos[0] + r * std::cos(th), x[i].pos[1] + r * std::sin(th)}, x[i].strength};
    }
    auto p = pair_vortices(x, y, kTwoPi);
    bool ok = !p.rejected;
    for (auto [i, j] : p.pairs) ok = ok && perm[i] == j;
    recovered += ok;
  }
  CHECK(recovered == 100);
}

TEST_CASE("dynamics network") {
  Rng rng(26);
  ParameterSet ps;
  auto net = make_dynamics_net(ps, rng, 16, 2);
  auto sys = random_system(rng, 4, true);
  auto local = local_vorticity(sys);
  for (std::size_t i = 0; i < 4; ++i) CHECK(local[i] == doctest::Approx(sys.gamma[i]).epsilon(1e-3));

  ParameterSet zero = ps;
  for (auto& t : zero.values()) t = Tensor(t.shape());
  CHECK(nk::max_abs(dynamics_net_velocity(net, zero, sys, local)) == 0.0);
  CHECK(nvm_step(net, zero, sys, local, 0.1).X.values() == sys.X.values());

  // particle 0 does not care about the order of the others
  Tensor v = dynamics_net_velocity(net, ps, sys, local);
  auto perm = sys;
  std::vector<std::size_t> order{0, 3, 1, 2};
  std::vector<double> lp(4);
  for (std::size_t k = 0; k < 4; ++k) {
    perm.X.at(k, 0) = sys.X.at(order[k], 0);
    perm.X.at(k, 1) = sys.X.at(order[k], 1);
    perm.gamma[k] = sys.gamma[order[k]];
    lp[k] = local[order[k]];
  }
  Tensor vp = dynamics_net_velocity(net, ps, perm, lp);
  CHECK(std::abs(vp.at(0, 0) - v.at(0, 0)) < 1e-12);
  CHECK(std::abs(vp.at(0, 1) - v.at(0, 1)) < 1e-12);

  // the pair term is translation invariant
  net.use_local = false;
  Tensor a = dynamics_net_velocity(net, ps, sys, local);
  auto moved = sys;
  for (std::size_t i = 0; i < 4; ++i) {
    moved.X.at(i, 0) += 0.37;
    moved.X.at(i, 1) -= 0.21;
  }
  CHECK(nk::max_abs_diff(dynamics_net_velocity(net, ps, moved, local), a) < 1e-12);
  net.use_local = true;

  // small-step displacement approaches the velocity
  auto step = nvm_step(net, ps, sys, local, 1e-6);
  Tensor disp = (step.X - sys.X) * 1e6;
  CHECK(nk::max_abs_diff(disp, v) < 1e-5);

  // gradients of a batched two-step rollout against finite differences
  auto sys2 = random_system(rng, 2, true);
  auto batch = make_batch({&sys, &sys2}, {local, local_vorticity(sys2)});
  Tensor X0({6, 2});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 2; ++c) X0.at(i, c) = sys.X.at(i, c);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t c = 0; c < 2; ++c) X0.at(4 + i, c) = sys2.X.at(i, c);
  Tensor w = rng.normal_tensor({6, 2}, 1.0);
  auto loss = [&](const std::vector<Var>& p) {
    Var x = nvm_step(net, p, batch, nk::constant(X0), 0.1);
    x = nvm_step(net, p, batch, x, 0.1);
    return nk::sum(nk::mul(x, nk::constant(w)));
  };
  auto p = ps.bind();
  auto grads = nk::collect_grads(nk::backward_grad(loss(p)), p);
  for (std::size_t i = 0; i < ps.size(); i += 3) {
    auto fi = [&](const Tensor& t) {
      nk::NoGradGuard ng;
      auto q = ps.bind(false);
      q[i] = nk::constant(t);
      return loss(q).value().item();
    };
    Tensor fd = nk::finite_difference_grad(fi, ps[i], 1e-6);
    CHECK(nk::max_abs_diff(grads[i], fd) / std::max(nk::max_abs(fd), 1e-6) < 1e-5);
  }
}
