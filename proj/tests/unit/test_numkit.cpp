#include <doctest.h>

#include <cmath>
#include <cstring>
#include <functional>

#include "physprior/error.hpp"
#include "physprior/numkit/autodiff.hpp"
#include "physprior/numkit/linalg.hpp"
#include "physprior/numkit/nn.hpp"

using namespace physprior;
using namespace physprior::numkit;

namespace {

double rel_err(const Tensor& a, const Tensor& b) {
  double scale = std::max({max_abs(a), max_abs(b), 1e-8});
  return max_abs_diff(a, b) / scale;
}

// Checks d(sum(f(x) * w))/dx against central differences for random x.
void check_unary_grad(const std::function<Var(const Var&)>& f, Shape shape, Rng& rng, double lo = -1.5,
                      double hi = 1.5) {
  for (int draw = 0; draw < 20; ++draw) {
    Tensor x0 = rng.uniform_tensor(shape, lo, hi);
    Var probe = f(constant(x0));
    Tensor w = rng.normal_tensor(probe.shape(), 1.0);
    auto scalar_fn = [&](const Tensor& x) {
      NoGradGuard ng;
      return sum(mul(f(constant(x)), constant(w))).value().item();
    };
    Var x = parameter(x0);
    Var y = sum(mul(f(x), constant(w)));
    Tensor g = backward_grad(y).get(x);
    Tensor fd = finite_difference_grad(scalar_fn, x0, 1e-6);
    CHECK(rel_err(g, fd) < 1e-5);
  }
}

}  // namespace

TEST_CASE("forward examples") {
  Tensor v = Tensor::matrix(2, 1, {3.5, -1.25});
  Var r = matmul(constant(Tensor::identity(2)), constant(v));
  CHECK(r.value().values() == v.values());
  CHECK(sigmoid(constant(0.0)).value().item() == doctest::Approx(0.5));
  CHECK(relu(constant(-3.0)).value().item() == 0.0);
  CHECK(relu(constant(3.0)).value().item() == 3.0);
}

TEST_CASE("backward examples") {
  Var x = parameter(Tensor::vector({3.0}));
  Var y = sum(mul(x, x));
  CHECK(backward_grad(y).get(x)[0] == doctest::Approx(6.0));

  Var p = parameter(Tensor::vector({1.0, 2.0}));
  Var c = constant(4.0);
  GradMap gm = backward_grad(c);
  Tensor g = gm.get(p);
  CHECK(g.size() == 2);
  CHECK(max_abs(g) == 0.0);
}

TEST_CASE("shape mismatch names the primitive") {
  Var a = constant(Tensor(Shape{2, 3}));
  Var b = constant(Tensor(Shape{2, 3}));
  try {
    matmul(a, b);
    FAIL("expected failure");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("matmul") != std::string::npos);
  }
  CHECK_THROWS_AS(add(constant(Tensor(Shape{3})), constant(Tensor(Shape{4}))), ShapeError);
}

TEST_CASE("backward on unevaluated graph fails") {
  Var x = placeholder(Shape{2}, true);
  Var y = sum(mul(x, x));
  CHECK_FALSE(y.evaluated());
  CHECK_THROWS_AS(backward_grad(y, Tensor::scalar(1.0)), Error);
  bind(x, Tensor::vector({1.0, 2.0}));
  CHECK(forward_eval(y).item() == doctest::Approx(5.0));
  GradMap gm = backward_grad(y);
  CHECK(gm.get(x)[1] == doctest::Approx(4.0));
}

TEST_CASE("forward_eval is referentially transparent") {
  Rng rng(3);
  Var x = placeholder(Shape{4, 3});
  Var w = constant(rng.normal_tensor({3, 5}, 1.0));
  Var b = constant(rng.normal_tensor({5}, 1.0));
  Var y = sum(sigmoid(affine(x, w, b)));
  bind(x, rng.normal_tensor({4, 3}, 1.0));
  double a = forward_eval(y).item();
  double c = forward_eval(y).item();
  CHECK(std::memcmp(&a, &c, sizeof a) == 0);
}

TEST_CASE("finite_difference_grad examples") {
  auto sq = [](const Tensor& x) { return x[0] * x[0]; };
  CHECK(std::abs(finite_difference_grad(sq, Tensor::vector({3.0}), 1e-6)[0] - 6.0) < 1e-6);
  auto cst = [](const Tensor&) { return 2.0; };
  CHECK(max_abs(finite_difference_grad(cst, Tensor::vector({1.0, 2.0, 3.0}))) == 0.0);
  auto pend = [](const Tensor& s) { return 0.5 * s[1] * s[1] - std::cos(s[0]); };
  Tensor g = finite_difference_grad(pend, Tensor::vector({0.0, 1.0}));
  CHECK(std::abs(g[0]) < 1e-9);
  CHECK(std::abs(g[1] - 1.0) < 1e-8);
  auto bad = [](const Tensor& x) { return x[0] > 0 ? NAN : 0.0; };
  CHECK_THROWS_AS(finite_difference_grad(bad, Tensor::vector({0.0})), NumericError);
}

TEST_CASE("invert_small_matrix examples") {
  CHECK(max_abs_diff(invert_small_matrix(Tensor::identity(3)), Tensor::identity(3)) == 0.0);
  Tensor d = Tensor::matrix(2, 2, {2, 0, 0, 4});
  Tensor di = invert_small_matrix(d);
  CHECK(di.at(0, 0) == doctest::Approx(0.5));
  CHECK(di.at(1, 1) == doctest::Approx(0.25));
  CHECK(di.at(0, 1) == 0.0);
  CHECK_THROWS_AS(invert_small_matrix(Tensor::matrix(2, 2, {1, 1, 1, 1})), SingularMatrixError);
  CHECK_THROWS_AS(invert_small_matrix(Tensor::matrix(2, 2, {1, 0, 0, 1e-14})), SingularMatrixError);

  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    Tensor m = rng.normal_tensor({3, 3}, 1.0);
    for (std::size_t k = 0; k < 3; ++k) m.at(k, k) += 3.0;
    Tensor prod = matmul(m, invert_small_matrix(m));
    CHECK(max_abs_diff(prod, Tensor::identity(3)) < 1e-10);
  }
  Tensor batch = rng.normal_tensor({4, 2, 2}, 1.0);
  for (std::size_t b = 0; b < 4; ++b) batch[b * 4] += 3.0, batch[b * 4 + 3] += 3.0;
  Tensor inv = invert_small_matrix(batch);
  Tensor prod = matmul(batch, inv);
  for (std::size_t b = 0; b < 4; ++b) {
    CHECK(std::abs(prod[b * 4] - 1.0) < 1e-10);
    CHECK(std::abs(prod[b * 4 + 1]) < 1e-10);
  }
}

TEST_CASE("primitive gradients match finite differences") {
  Rng rng(42);
  Tensor wmat = rng.normal_tensor({3, 4}, 1.0);
  Tensor bvec = rng.normal_tensor({4}, 1.0);
  Tensor other = rng.uniform_tensor({5, 3}, 0.5, 2.0);
  Tensor row = rng.uniform_tensor({3}, 0.5, 2.0);

  SUBCASE("affine in x") { check_unary_grad([&](const Var& x) { return affine(x, constant(wmat), constant(bvec)); }, {5, 3}, rng); }
  SUBCASE("affine in W") {
    check_unary_grad([&](const Var& w) { return affine(constant(other), w, constant(bvec)); }, {3, 4}, rng);
  }
  SUBCASE("affine in b") {
    check_unary_grad([&](const Var& b) { return affine(constant(other), constant(wmat), b); }, {4}, rng);
  }
  SUBCASE("matmul variants") {
    Tensor m34 = rng.normal_tensor({3, 4}, 1.0);
    Tensor m43 = rng.normal_tensor({4, 3}, 1.0);
    check_unary_grad([&](const Var& a) { return matmul(a, constant(m34)); }, {2, 3}, rng);
    check_unary_grad([&](const Var& a) { return matmul(a, constant(m43), false, true); }, {2, 3}, rng);
    check_unary_grad([&](const Var& a) { return matmul(a, constant(m34), true, false); }, {3, 2}, rng);
    check_unary_grad([&](const Var& a) { return matmul(a, constant(m43), true, true); }, {3, 2}, rng);
    check_unary_grad([&](const Var& b) { return matmul(constant(m43), b); }, {3, 2}, rng);
    check_unary_grad([&](const Var& b) { return matmul(constant(m34), b, true, true); }, {2, 3}, rng);
    Tensor bat = rng.normal_tensor({2, 3, 4}, 1.0);
    check_unary_grad([&](const Var& a) { return matmul(a, constant(bat)); }, {2, 2, 3}, rng);
    check_unary_grad([&](const Var& b) { return matmul(constant(bat), b, true, false); }, {2, 3, 5}, rng);
  }
  SUBCASE("transpose") { check_unary_grad([](const Var& x) { return transpose(x); }, {2, 3}, rng); }
  SUBCASE("monomial") {
    for (int k = 0; k <= 5; ++k) check_unary_grad([k](const Var& x) { return monomial(x, k); }, {4}, rng);
    auto ord = std::make_shared<const std::vector<int>>(std::vector<int>{1, 2, 3});
    check_unary_grad([&](const Var& x) { return monomial(x, ord); }, {2, 3}, rng);
  }
  SUBCASE("activations") {
    check_unary_grad([](const Var& x) { return sigmoid(x); }, {6}, rng);
    check_unary_grad([](const Var& x) { return relu(x); }, {6}, rng);
    check_unary_grad([](const Var& x) { return abs(x); }, {6}, rng);
    check_unary_grad([](const Var& x) { return sqrt(x); }, {6}, rng, 0.3, 2.0);
  }
  SUBCASE("broadcast arithmetic") {
    check_unary_grad([&](const Var& x) { return mul(x, constant(row)); }, {5, 3}, rng);
    check_unary_grad([&](const Var& r) { return mul(constant(other), r); }, {3}, rng);
    check_unary_grad([&](const Var& r) { return div(constant(other), r); }, {3}, rng, 0.5, 2.0);
    check_unary_grad([&](const Var& x) { return div(x, constant(other)); }, {5, 3}, rng);
    check_unary_grad([&](const Var& r) { return sub(constant(other), r); }, {5, 1}, rng);
    check_unary_grad([&](const Var& x) { return add(x, constant(row)); }, {5, 3}, rng);
    check_unary_grad([](const Var& x) { return scale(neg(x), 2.5); }, {3}, rng);
  }
  SUBCASE("reductions") {
    check_unary_grad([](const Var& x) { return sum(x); }, {2, 3}, rng);
    check_unary_grad([](const Var& x) { return sum_to(x, {3}); }, {4, 3}, rng);
    check_unary_grad([](const Var& x) { return sum_to(x, {4, 1}); }, {4, 3}, rng);
    check_unary_grad([](const Var& x) { return broadcast_to(x, {4, 3}); }, {3}, rng);
  }
  SUBCASE("inverse and diagonal") {
    auto f = [](const Var& m) { return inverse(add(m, constant(Tensor::identity(3) * 4.0))); };
    check_unary_grad(f, {3, 3}, rng);
    auto fb = [](const Var& m) {
      Tensor eye(Shape{2, 2, 2});
      eye[0] = eye[3] = eye[4] = eye[7] = 4.0;
      return inverse(add(m, constant(eye)));
    };
    check_unary_grad(fb, {2, 2, 2}, rng);
    check_unary_grad([](const Var& v) { return diag(v); }, {2, 3}, rng);
    check_unary_grad([](const Var& m) { return diag_part(m); }, {2, 3, 3}, rng);
  }
  SUBCASE("layout ops") {
    check_unary_grad([](const Var& x) { return reshape(x, {3, 2}); }, {2, 3}, rng);
    check_unary_grad([&](const Var& x) { return concat({x, constant(other), x}); }, {5, 2}, rng);
    check_unary_grad([](const Var& x) { return slice(x, 1, 3); }, {4, 4}, rng);
    auto idx = std::make_shared<const std::vector<std::size_t>>(std::vector<std::size_t>{2, 0, 2, 1});
    check_unary_grad([&](const Var& x) { return gather_rows(x, idx); }, {3, 2}, rng);
    check_unary_grad([&](const Var& x) { return scatter_add_rows(x, idx, 5); }, {4, 2}, rng);
  }
}

TEST_CASE("backward is linear in the root") {
  Rng rng(5);
  Tensor x0 = rng.normal_tensor({4}, 1.0);
  Var x = parameter(x0);
  Var f = sum(sigmoid(x));
  Var g = sum(mul(x, mul(x, x)));
  Tensor gf = backward_grad(f).get(x);
  Tensor gg = backward_grad(g).get(x);
  Tensor gs = backward_grad(add(f, g)).get(x);
  CHECK(max_abs_diff(gs, gf + gg) < 1e-14);
}

TEST_CASE("create_graph gives differentiable gradients") {
  // f = sum(x^3)/3 -> df/dx = x^2 -> d(sum(df/dx * w))/dx = 2 x w
  Var x = parameter(Tensor::vector({1.5, -2.0}));
  Var f = scale(sum(mul(x, mul(x, x))), 1.0 / 3.0);
  Var gx = grad(f, {x}, Var(), true)[0];
  CHECK(gx.requires_grad());
  CHECK(gx.value()[0] == doctest::Approx(2.25));
  Var w = constant(Tensor::vector({1.0, 3.0}));
  Tensor h = backward_grad(sum(mul(gx, w))).get(x);
  CHECK(h[0] == doctest::Approx(3.0));
  CHECK(h[1] == doctest::Approx(-12.0));
}

TEST_CASE("full networks match finite differences") {
  Rng rng(9);
  for (int draw = 0; draw < 20; ++draw) {
    ParameterSet ps;
    Mlp mlp = make_mlp(ps, "h", {2, 8, 8, 1}, Activation::Sigmoid, Init::XavierUniform, rng);
    ResNet res = make_resnet(ps, "r", 3, 6, 2, 2, rng);
    Tensor xin = rng.normal_tensor({4, 2}, 1.0);
    Tensor rin = rng.normal_tensor({4, 3}, 1.0);
    auto loss = [&](const std::vector<Var>& p) {
      return add(sum(mlp.forward(p, constant(xin))), sum(mul(res.forward(p, constant(rin)), res.forward(p, constant(rin)))));
    };
    auto p = ps.bind();
    Var l = loss(p);
    auto grads = collect_grads(backward_grad(l), p);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      auto f = [&](const Tensor& t) {
        NoGradGuard ng;
        auto q = ps.bind(false);
        q[i] = constant(t);
        return loss(q).value().item();
      };
      Tensor fd = finite_difference_grad(f, ps[i], 1e-6);
      CHECK(rel_err(grads[i], fd) < 1e-5);
    }
  }
}
