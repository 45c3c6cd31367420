#include <doctest.h>

#include <cmath>
#include <sstream>

#include "physprior/error.hpp"
#include "physprior/train/hamiltonian_models.hpp"
#include "physprior/train/metrics.hpp"
#include "physprior/train/roenet_training.hpp"
#include "physprior/train/vortex_training.hpp"

using namespace physprior;
using namespace physprior::train;

namespace {

using Traj = std::vector<PhaseState<Tensor>>;

Traj random_traj(Rng& rng, std::size_t steps, std::size_t rows, std::size_t dim) {
  Traj t;
  for (std::size_t k = 0; k < steps; ++k)
    t.push_back({rng.uniform_tensor({rows, dim}, -1, 1), rng.uniform_tensor({rows, dim}, -1, 1)});
  return t;
}

}  // namespace

TEST_CASE("eps_p") {
  Rng rng(3);
  Traj ref = random_traj(rng, 6, 4, 2);
  CHECK(metric_eps_p(ref, ref).mean == 0.0);

  // offset of 1 in the first q coordinate only
  Traj off = ref;
  for (auto& s : off)
    for (std::size_t r = 0; r < 4; ++r) s.q.at(r, 0) += 1.0;
  Metrics m = metric_eps_p(off, ref);
  CHECK(m.mean == doctest::Approx(1.0).epsilon(1e-12));
  REQUIRE(m.per_step.size() == 6);
  for (double e : m.per_step) CHECK(e == doctest::Approx(1.0).epsilon(1e-12));

  Traj short_traj(ref.begin(), ref.end() - 1);
  CHECK_THROWS_AS(metric_eps_p(short_traj, ref), ShapeError);
}

TEST_CASE("eps_u") {
  Rng rng(4);
  Tensor ref = rng.uniform_tensor({16, 2}, -1, 1);
  Tensor pred = rng.uniform_tensor({16, 2}, -1, 1);
  CHECK(metric_eps_u(ref, ref) == 0.0);
  CHECK(metric_eps_u(Tensor(ref.shape()), ref) == doctest::Approx(1.0));
  CHECK(metric_eps_u(pred * 2.0, ref * 2.0) == doctest::Approx(metric_eps_u(pred, ref)).epsilon(1e-14));
  CHECK_THROWS_AS(metric_eps_u(Tensor({3, 2}), ref), ShapeError);

  std::ostringstream os;
  write_eval_csv(os, "eps_u", {0.0, 0.1}, {0.0, 1.0 / 3.0});
  CHECK(os.str() == "t,eps_u\n0,0\n0.10000000000000001,0.33333333333333331\n");
}

TEST_CASE("hamiltonian dataset") {
  HamiltonianDataConfig cfg;
  cfg.seed = 11;
  PairDataset a = make_hamiltonian_dataset(cfg);
  CHECK(a.n_train == 15);
  CHECK(a.n_val == 100);
  CHECK(a.rows() == 115);
  for (double v : a.q0.values()) CHECK((v >= -2.0 && v <= 2.0));
  PairDataset b = make_hamiltonian_dataset(cfg);
  CHECK(a.q1.values() == b.q1.values());
  CHECK(a.p1.values() == b.p1.values());

  // the pendulum rests at the energy minimum
  PhaseState<Tensor> rest{Tensor({1, 1}), Tensor({1, 1})};
  auto end = reference_flow(hamiltonian::AnalyticSystem::pendulum(), rest, 0.01, 1e-4);
  CHECK(end.q[0] == 0.0);
  CHECK(end.p[0] == 0.0);

  cfg.noise = 0.1;
  PairDataset n = make_hamiltonian_dataset(cfg);
  CHECK(n.q0.values() != a.q0.values());
}

TEST_CASE("linear advection dataset") {
  FieldDataConfig cfg;
  cfg.n_samples = 20;
  cfg.seed = 5;
  FieldDataset d = make_roenet_dataset(cfg);
  CHECK(d.n_train + d.n_val == 20);
  CHECK(d.n_val == 2);
  CHECK(d.cells == 100);
  // speed 0.25 over 0.04 moves the profile exactly one cell
  for (std::size_t s = 0; s < 20; ++s)
    for (std::size_t j = 0; j < 100; ++j) {
      std::size_t prev = (j + 99) % 100;
      CHECK(d.u1.at(s * 100 + j, 0) == doctest::Approx(d.u0.at(s * 100 + prev, 0)).epsilon(1e-9));
    }
}

TEST_CASE("sod dataset stays inside the windows") {
  FieldDataConfig cfg;
  cfg.problem = FieldProblem::Sod;
  cfg.n_samples = 10;
  cfg.t_span = 0.06;
  cfg.seed = 6;
  FieldDataset d = make_roenet_dataset(cfg);
  CHECK(d.comps == 3);
  CHECK(d.cells == cfg.window);
  // no wave reaches the window ends: the edge states are unchanged
  for (std::size_t s = 0; s < 10; ++s)
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(d.u1.at(s * d.cells, c) == doctest::Approx(d.u0.at(s * d.cells, c)).epsilon(1e-9));
      CHECK(d.u1.at(s * d.cells + d.cells - 1, c) == doctest::Approx(d.u0.at(s * d.cells + d.cells - 1, c)).epsilon(1e-9));
    }
}

TEST_CASE("vortex dataset rejection rate") {
  VortexDataConfig cfg;
  cfg.n_samples = 100;
  cfg.seed = 8;
  VortexDataset d = make_vortex_dataset(cfg);
  CHECK(d.generated == 100);
  CHECK(static_cast<double>(d.rejected) / static_cast<double>(d.generated) < 0.05);
  CHECK(d.n_train + d.n_val == d.samples.size());
  for (const auto& s : d.samples) {
    CHECK(s.start.size() >= 2);
    CHECK(s.start.size() <= 6);
    CHECK(s.target.dim(0) == s.start.size());
  }
  VortexDataset e = make_vortex_dataset(cfg);
  REQUIRE(e.samples.size() == d.samples.size());
  CHECK(e.samples.back().target.values() == d.samples.back().target.values());
}
