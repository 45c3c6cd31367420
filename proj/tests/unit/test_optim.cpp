#include <doctest.h>

#include <cmath>
#include <sstream>

#include "physprior/error.hpp"
#include "physprior/numkit/linalg.hpp"
#include "physprior/numkit/random.hpp"
#include "physprior/train/optim.hpp"

using namespace physprior;
using namespace physprior::train;
namespace nk = physprior::numkit;

TEST_CASE("adam update") {
  ParameterSet ps;
  ps.add("w", Tensor::vector({0.5, -1.0}));
  auto st = make_adam(ps);
  adam_update(st, ps, {Tensor({2})});
  CHECK(ps[0].values() == std::vector<double>{0.5, -1.0});

  ParameterSet one;
  one.add("w", Tensor::vector({0.0}));
  auto s1 = make_adam(one);
  adam_update(s1, one, {Tensor::vector({1.0})});
  CHECK(one[0][0] == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));

  Tensor bad = Tensor::vector({1.0, NAN});
  try {
    adam_update(st, ps, {bad});
    CHECK(false);
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("w") != std::string::npos);
  }
  CHECK_THROWS_AS(adam_update(st, ps, {Tensor({3})}), ShapeError);

  // step-size bound over a run with noisy gradients
  nk::Rng rng(1);
  ParameterSet q;
  q.add("x", rng.normal_tensor({50}, 1.0));
  auto sq = make_adam(q);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    Tensor before = q[0];
    adam_update(sq, q, {rng.normal_tensor({50}, std::pow(10.0, rng.uniform(-4, 4)))});
    if (k > 0) worst = std::max(worst, nk::max_abs_diff(before, q[0]));
  }
  CHECK(worst <= 2e-3);

  // determinism
  auto run = [] {
    nk::Rng r(7);
    ParameterSet p;
    p.add("x", r.normal_tensor({10}, 1.0));
    auto s = make_adam(p);
    for (int k = 0; k < 20; ++k) adam_update(s, p, {r.normal_tensor({10}, 1.0)});
    return p[0];
  };
  CHECK(run().values() == run().values());
}

TEST_CASE("schedule") {
  LrSchedule s{0.05, 10, 0.8};
  CHECK(s.rate(0) == 0.05);
  CHECK(s.rate(9) == 0.05);
  CHECK(s.rate(10) == 0.05 * 0.8);
  CHECK(s.rate(35) == 0.05 * 0.8 * 0.8 * 0.8);
  CHECK_THROWS_AS((LrSchedule{0.1, 10, 1.5}.validate()), ConfigError);
  CHECK_THROWS_AS((LrSchedule{0.1, 0, 0.5}.validate()), ConfigError);
}

TEST_CASE("regression losses") {
  auto pred = nk::parameter(Tensor::matrix(1, 2, {1.0, -2.0}));
  auto zero = nk::constant(Tensor({1, 2}));
  CHECK(loss_l1(zero, zero).value().item() == 0.0);
  CHECK(loss_l1(pred, zero).value().item() == 3.0);
  CHECK(loss_mse(pred, zero).value().item() == 2.5);
  CHECK(loss_mse(zero, zero).value().item() == 0.0);
  // batch mean over rows
  auto two = nk::constant(Tensor::matrix(2, 2, {1, -2, 3, 0}));
  CHECK(loss_l1(two, nk::constant(Tensor({2, 2}))).value().item() == 3.0);

  auto sub = nk::parameter(Tensor::matrix(1, 3, {0.5, 0.0, -1.0}));
  auto g = nk::backward_grad(loss_l1(sub, nk::constant(Tensor({1, 3}))));
  CHECK(g.get(sub).values() == std::vector<double>{1.0, 0.0, -1.0});
  CHECK_THROWS_AS(loss_mse(pred, nk::constant(Tensor({2}))), ShapeError);

  nk::Rng rng(3);
  Tensor x = rng.normal_tensor({4, 3}, 1.0), y = rng.normal_tensor({4, 3}, 1.0);
  auto px = nk::parameter(x);
  Tensor ga = nk::backward_grad(loss_mse(px, nk::constant(y))).get(px);
  auto f = [&](const Tensor& t) { return loss_mse(nk::constant(t), nk::constant(y)).value().item(); };
  CHECK(nk::max_abs_diff(ga, nk::finite_difference_grad(f, x)) < 1e-6);
}

TEST_CASE("classification losses") {
  Tensor p = Tensor::matrix(1, 2, {0.5, 0.5});
  Tensor y = Tensor::matrix(1, 2, {0.0, 1.0});
  CHECK(loss_cross_entropy(p, y).value == doctest::Approx(std::log(2.0)));
  CHECK(loss_binary_cross_entropy(Tensor::vector({0.5}), Tensor::vector({1.0})).value == doctest::Approx(std::log(2.0)));
  CHECK(loss_cross_entropy(Tensor::matrix(1, 2, {0.0, 1.0}), y).value == 0.0);
  CHECK(loss_cross_entropy(Tensor::matrix(1, 2, {1.0, 0.0}), y).value == doctest::Approx(-std::log(kProbFloor)));

  nk::Rng rng(4);
  for (int draw = 0; draw < 20; ++draw) {
    double q = rng.uniform(0.01, 0.99);
    double lab = rng.uniform() < 0.5 ? 1.0 : 0.0;
    double two = loss_cross_entropy(Tensor::matrix(1, 2, {1 - q, q}), Tensor::matrix(1, 2, {1 - lab, lab})).value;
    double bin = loss_binary_cross_entropy(Tensor::vector({q}), Tensor::vector({lab})).value;
    CHECK(two == doctest::Approx(bin).epsilon(1e-12));
  }

  Tensor pf = Tensor::matrix(1, 2, {0.1, 0.9});
  CHECK(loss_focal(pf, y, 0.4, 2.0).value == doctest::Approx(-0.4 * 0.01 * std::log(0.9)).epsilon(1e-12));
  CHECK(-0.4 * 0.01 * std::log(0.9) == doctest::Approx(4.214e-4).epsilon(1e-3));
  Tensor probs = Tensor::matrix(2, 3, {0.2, 0.5, 0.3, 0.6, 0.1, 0.3});
  Tensor labels = Tensor::matrix(2, 3, {0, 1, 0, 1, 0, 0});
  CHECK(loss_focal(probs, labels, 1.0, 0.0).value == doctest::Approx(loss_cross_entropy(probs, labels).value));
  for (double pt : {0.9, 0.99, 0.999}) {
    Tensor pr = Tensor::matrix(1, 2, {1 - pt, pt});
    double ratio = loss_focal(pr, y, 1.0, 2.0).value / loss_cross_entropy(pr, y).value;
    CHECK(ratio == doctest::Approx((1 - pt) * (1 - pt)));
  }
  // analytic gradients against finite differences
  auto fd_check = [&](auto fn) {
    auto val = [&](const Tensor& t) { return fn(t).value; };
    CHECK(nk::max_abs_diff(fn(probs).grad, nk::finite_difference_grad(val, probs)) < 1e-6);
  };
  fd_check([&](const Tensor& t) { return loss_focal(t, labels, 0.4, 2.0); });
  fd_check([&](const Tensor& t) { return loss_cross_entropy(t, labels); });
  fd_check([&](const Tensor& t) { return loss_binary_cross_entropy(t, labels); });
}

TEST_CASE("training loop") {
  // fit y = 2x + 1
  nk::Rng rng(5);
  Tensor x = rng.uniform_tensor({64, 1}, -1, 1);
  Tensor y = x * 2.0;
  for (auto& v : y.values()) v += 1.0;
  auto make = [] {
    ParameterSet ps;
    ps.add("w", Tensor::matrix(1, 1, {0.0}));
    ps.add("b", Tensor::vector({0.0}));
    return ps;
  };
  auto loss = [&](const std::vector<Var>& p, const std::vector<std::size_t>& idx, bool) {
    auto ix = std::make_shared<const std::vector<std::size_t>>(idx);
    Var xb = nk::gather_rows(nk::constant(x), ix);
    return loss_mse(nk::affine(xb, p[0], p[1]), nk::gather_rows(nk::constant(y), ix));
  };
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch = 8;
  cfg.schedule = {0.05, 20, 0.5};
  cfg.seed = 9;
  auto ps = make();
  auto res = train_loop(ps, 56, 8, loss, cfg);
  CHECK(!res.diverged);
  CHECK(res.history.size() == 60);
  CHECK(res.history.back().loss_train < res.history.front().loss_train);
  CHECK(ps[0][0] == doctest::Approx(2.0).epsilon(1e-2));
  CHECK(res.history[25].lr == 0.025);

  auto ps2 = make();
  auto res2 = train_loop(ps2, 56, 8, loss, cfg);
  CHECK(ps2[0].values() == ps[0].values());
  for (std::size_t i = 0; i < 60; ++i) CHECK(res2.history[i].loss_train == res.history[i].loss_train);

  cfg.epochs = 0;
  auto ps3 = make();
  auto res3 = train_loop(ps3, 56, 8, loss, cfg);
  CHECK(res3.history.empty());
  CHECK(ps3[0][0] == 0.0);

  // divergence keeps the last good parameters
  cfg.epochs = 5;
  int calls = 0;
  auto blow = [&](const std::vector<Var>& p, const std::vector<std::size_t>& idx, bool val) {
    ++calls;
    Var l = loss(p, idx, val);
    return calls > 10 ? l * NAN : l;
  };
  auto ps4 = make();
  auto res4 = train_loop(ps4, 56, 8, blow, cfg);
  CHECK(res4.diverged);
  CHECK(res4.history.size() == 1);
  CHECK(std::isfinite(ps4[0][0]));

  std::ostringstream os;
  write_metrics_csv(os, {{1, 0.5, 0.25, 0.001}});
  CHECK(os.str() == "epoch,loss_train,loss_val,lr\n1,0.5,0.25,0.001\n");
  CHECK(permutation(5, 1) == permutation(5, 1));
}
