#include <doctest.h>

#include <cmath>
#include <iostream>

#include "tippingrd/lin.hpp"

using namespace tipping;
namespace li = tipping::lin;

namespace {

constexpr double kPi = 3.14159265358979323846;

ModelSpec standing_spec() {
  ModelSpec spec = ModelSpec::allee();
  spec.L = 5.0;
  spec.c = 0.0;
  spec.D = 0.8;
  return spec;
}

}  // namespace

TEST_SUITE("lin") {

TEST_CASE("trivial segments at theta = pi/2 reach the section at the origin") {
  const ModelSpec spec = standing_spec();
  const li::LinSetup setup;

  auto gm = li::gamma_minus(kPi / 2, spec, setup);
  CHECK(gm.Z > 0.0);
  CHECK(std::abs(gm.right()[2]) <= 1e-10);
  CHECK(std::abs(gm.right()[0]) <= 1e-10);
  CHECK(std::abs(gm.right()[1]) <= 1e-10);
  CHECK(gm.left()[2] == doctest::Approx(-1.0 + setup.eps_for(Side::Minus)).epsilon(1e-12));

  auto gp = li::gamma_plus(kPi / 2, spec, setup);
  CHECK(gp.Z < 0.0);
  CHECK(std::abs(gp.right()[2]) <= 1e-10);
  CHECK(std::abs(gp.right()[0]) <= 1e-10);
  CHECK(gp.left()[2] == doctest::Approx(1.0 - setup.eps_for(Side::Plus)).epsilon(1e-12));
}

TEST_CASE("boundary angles in the invariant planes never reach the section") {
  const ModelSpec spec = standing_spec();
  CHECK_THROWS_AS(li::gamma_minus(0.0, spec), ConfigError);
  CHECK_THROWS_AS(li::gamma_minus(1e-13, spec), NumericalError);
  CHECK_THROWS_AS(li::gamma_plus(kPi - 1e-13, spec), NumericalError);
}

TEST_CASE("manifold traces cross in exactly three points at the reference model") {
  li::GapSystem gs(standing_spec());
  li::TraceOptions topts;
  topts.n_samples = 400;
  auto [trace_u, trace_s] = li::trace_manifolds(gs, topts);

  std::cout << "[probe] trace_u samples=" << trace_u.samples.size()
            << " excluded=" << trace_u.excluded.size() << "\n";
  std::cout << "[probe] trace_s samples=" << trace_s.samples.size()
            << " excluded=" << trace_s.excluded.size() << "\n";
  double umin = 1e9, umax = -1e9;
  for (const auto& s : trace_u.samples) {
    umin = std::min(umin, s.point[0]);
    umax = std::max(umax, s.point[0]);
  }
  std::cout << "[probe] trace_u U range [" << umin << ", " << umax << "]\n";

  const auto isecs = li::find_intersections(trace_u, trace_s, gs);
  for (const auto& i : isecs) {
    std::cout << "[probe] " << i.label << " theta=(" << i.theta_minus << ","
              << i.theta_plus << ") point=(" << i.point[0] << "," << i.point[1]
              << ") angle=" << i.crossing_angle << "\n";
  }
  REQUIRE(isecs.size() == 3);
  CHECK(isecs[0].label == "U0");
  CHECK(std::abs(isecs[0].point[0]) <= 1e-9);
  CHECK(isecs[1].point[0] > 1e-3);
  CHECK(isecs[2].point[0] > isecs[1].point[0]);
}

}  // TEST_SUITE
