#include <doctest.h>

#include <cmath>

#include "tippingrd/pdesim.hpp"

using namespace tipping;
namespace pde = tipping::pdesim;

namespace {

pde::Grid test_grid() {
  pde::Grid g;
  g.half_width = 30.0;
  g.n_points = 1201;
  return g;
}

}  // namespace

TEST_SUITE("pdesim") {

TEST_CASE("grid validation") {
  ModelSpec spec = ModelSpec::allee();
  pde::Grid g = test_grid();
  CHECK_NOTHROW(g.validate(spec));
  g.n_points = 301;
  CHECK_THROWS_AS(g.validate(spec), ConfigError);

  pde::Grid coarse;
  coarse.half_width = 400.0;
  coarse.n_points = 401;
  ModelSpec fast = spec;
  fast.c = 3.0;
  CHECK_THROWS_AS(coarse.validate(fast), ConfigError);  // cell Peclet > 2
}

TEST_CASE("zero state is an exact fixed point") {
  const ModelSpec spec = ModelSpec::allee();
  const pde::Grid grid = test_grid();
  const pde::SteadyResult r = pde::step_to_steady(pde::Field::zeros(grid), spec, grid);
  CHECK(r.converged);
  CHECK(r.field.max() == 0.0);
  CHECK(r.t_elapsed == 0.0);
}

TEST_CASE("subthreshold seed dies, generous seed reaches the carrying pulse") {
  const ModelSpec spec = ModelSpec::allee();
  const pde::Grid grid = test_grid();

  const pde::Field small = pde::gaussian_bump(grid, 0.05, 0.0, 1.0);
  const pde::SteadyResult dead = pde::step_to_steady(small, spec, grid);
  CHECK(dead.converged);
  CHECK(dead.field.max() < 1e-6);

  const pde::Field big = pde::gaussian_bump(grid, 2.5, 0.0, 2.0);
  const pde::SteadyResult alive = pde::step_to_steady(big, spec, grid);
  CHECK(alive.converged);
  // Dimensionless carrying amplitude ~0.55 maps to ~0.55 a sqrt(D/gamma).
  const double expect = 0.55 * u_physical_from_dimensionless(1.0, spec);
  CHECK(alive.field.max() > 0.6 * expect);
  CHECK(alive.field.max() < 1.6 * expect);
}

TEST_CASE("nonnegative initial data stays nonnegative") {
  const ModelSpec spec = ModelSpec::allee();
  const pde::Grid grid = test_grid();
  const pde::Field seed = pde::gaussian_bump(grid, 2.0, 1.0, 1.5);
  const pde::SteadyResult r = pde::step_to_steady(seed, spec, grid);
  CHECK(r.field.values.minCoeff() >= -1e-12);
}

TEST_CASE("extinction state classifies as stable") {
  const ModelSpec spec = ModelSpec::allee();
  const pde::Grid grid = test_grid();
  const pde::Field zero = pde::Field::zeros(grid);
  CHECK(pde::classify_stability(zero, spec, grid) == pde::Stability::Stable);
}

TEST_CASE("sweep enforces a monotone schedule and records the hysteresis run") {
  const ModelSpec spec = ModelSpec::allee();
  const pde::Grid grid = test_grid();
  const pde::Field big = pde::gaussian_bump(grid, 2.5, 0.0, 2.0);

  CHECK_THROWS_AS(pde::sweep(spec, "L", {5.0, 4.0, 4.5}, big, grid), ConfigError);

  const pde::SweepResult down = pde::sweep(spec, "L", {5.0, 4.0, 3.0}, big, grid);
  CHECK(down.direction == "down");
  CHECK(down.attractor_measure.size() == 3);
  CHECK(down.attractor_measure[0] > 1.0);
  CHECK(down.attractor_measure[2] > 1.0);  // still above threshold at L = 3
  const std::string csv = down.to_csv("L");
  CHECK(csv.find("L,maxU,direction") == 0);
}

}  // TEST_SUITE
