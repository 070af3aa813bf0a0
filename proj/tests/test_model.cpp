#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "tippingrd/model.hpp"

using namespace tipping;

namespace {

// Direct transcription of the habitat definition, safe away from the tails.
double habitat_reference(double xi, double L, double a) {
  return (std::tanh(a * (xi + 0.5 * L)) - std::tanh(a * (xi - 0.5 * L))) /
         (2.0 * std::tanh(0.5 * a * L));
}

CompactifiedSystem reference_allee_system() {
  return CompactifiedSystem::from_spec(ModelSpec::allee());
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("habitat_xi matches the tanh formula and its exact values") {
  CHECK(habitat_xi(0.0, 5.0, 5.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(habitat_xi(80.0, 5.0, 5.0) < 1e-30);
  CHECK(habitat_xi(-80.0, 5.0, 5.0) < 1e-30);

  // Direct evaluation oracle on points where the raw formula has no
  // cancellation trouble.
  for (double xi : {0.1, 0.5, 1.0, 2.0, 2.5, 3.0}) {
    CHECK(habitat_xi(xi, 5.0, 5.0) ==
          doctest::Approx(habitat_reference(xi, 5.0, 5.0)).epsilon(1e-12));
  }
  // Half-length point, frozen from the direct formula tanh(aL)/(2 tanh(aL/2)).
  const double expect = std::tanh(25.0) / (2.0 * std::tanh(12.5));
  CHECK(habitat_xi(2.5, 5.0, 5.0) == doctest::Approx(expect).epsilon(1e-13));
  CHECK(habitat_xi(2.5, 5.0, 5.0) == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("habitat_xi symmetry and monotonicity") {
  for (double xi : {0.3, 1.7, 4.0, 9.0, 30.0}) {
    CHECK(habitat_xi(-xi, 5.0, 5.0) == habitat_xi(xi, 5.0, 5.0));
  }
  double prev = habitat_xi(0.0, 5.0, 5.0);
  for (double xi = 0.25; xi < 12.0; xi += 0.25) {
    const double h = habitat_xi(xi, 5.0, 5.0);
    CHECK(h < prev);
    prev = h;
  }
  CHECK_THROWS_AS(habitat_xi(std::nan(""), 5.0, 5.0), ConfigError);
  CHECK_THROWS_AS(habitat_xi(0.0, -1.0, 5.0), ConfigError);
}

TEST_CASE("nondimensionalize applies the rescalings") {
  ModelSpec spec = ModelSpec::allee();
  spec.D = 0.8;
  const DimensionlessParams p = nondimensionalize(spec);
  CHECK(p.beta_t == doctest::Approx(0.15).epsilon(1e-14));
  CHECK(p.L_t == doctest::Approx(25.0).epsilon(1e-14));
  CHECK(p.c_t == 0.0);

  ModelSpec bad = spec;
  bad.D = 0.0;
  CHECK_THROWS_AS(nondimensionalize(bad), ConfigError);
}

TEST_CASE("habitat_s agrees with the decompactified habitat") {
  CompactifiedSystem sys = reference_allee_system();
  CHECK(sys.alpha == doctest::Approx(0.075).epsilon(1e-14));
  CHECK(sys.habitat_s(0.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(sys.habitat_s(1.0) == 0.0);
  CHECK(sys.habitat_s(-1.0) == 0.0);
  CHECK_THROWS_AS(sys.habitat_s(1.0 + 1e-12), ConfigError);

  // Consistency with habitat_xi through the inverse map and the Table-2
  // rescalings, across the whole compactified range.
  const ModelSpec spec = ModelSpec::allee();
  for (double s = -1.0 + 1e-6; s < 1.0; s += 0.01) {
    const double z = decompactify(s, sys.alpha);
    const double via_xi = habitat_xi(z / spec.a, spec.L, spec.a);
    CHECK(std::abs(sys.habitat_s(s) - via_xi) <= 1e-12);
  }

  // Inverse-map cross-check example at alpha = 1: g^{-1}(1/2) = ln 3.
  CompactifiedSystem unit = sys;
  unit.alpha = 1.0;
  CHECK(decompactify(0.5, 1.0) == doctest::Approx(std::log(3.0)).epsilon(1e-15));
  CHECK(unit.habitat_s(0.5) ==
        doctest::Approx(habitat_z(std::log(3.0), 25.0)).epsilon(1e-14));

  // Even in s when the habitat is c-independent.
  for (double s : {0.1, 0.33, 0.77, 0.999}) {
    CHECK(sys.habitat_s(-s) == doctest::Approx(sys.habitat_s(s)).epsilon(1e-14));
  }
}

TEST_CASE("habitat_s is C1 at the boundary for admissible alpha") {
  // The decay prefactor grows like exp(L~), so the habitat length is chosen per
  // alpha to keep the asymptotic regime within representable step sizes.
  struct Case {
    double alpha, L_t;
  };
  for (const Case cse : {Case{0.075, 25.0}, Case{1.0, 5.0}}) {
    CompactifiedSystem sys = reference_allee_system();
    sys.alpha = cse.alpha;
    sys.params.L_t = cse.L_t;
    double prev_quot = std::numeric_limits<double>::infinity();
    for (double h : {1e-2, 1e-4, 1e-6}) {
      const double quot = std::abs(sys.habitat_s(1.0 - h) - sys.habitat_s(1.0)) / h;
      CHECK(quot < prev_quot + 1e-12);
      prev_quot = quot;
    }
    CHECK(prev_quot < 1e-3);
    CHECK(sys.habitat_s_deriv(1.0) == 0.0);
    CHECK(sys.habitat_s_deriv(-1.0) == 0.0);
  }
}

TEST_CASE("habitat_s_deriv matches finite differences") {
  CompactifiedSystem sys = reference_allee_system();
  for (double s : {-0.95, -0.5, -0.1, 0.0, 0.2, 0.6, 0.9, 0.99}) {
    const double h = 1e-6;
    const double fd = (sys.habitat_s(s + h) - sys.habitat_s(s - h)) / (2.0 * h);
    CHECK(sys.habitat_s_deriv(s) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("reaction terms") {
  const DimensionlessParams p{0.15, 25.0, 0.0};
  CHECK(reaction(0.0, 0.3, p, ReactionKind::Allee) == 0.0);
  CHECK(reaction(0.0, 0.3, p, ReactionKind::Logistic) == 0.0);

  // Allee at H = 1/2 factors as -U (U - beta_t)^2: double root at beta_t.
  for (double U : {0.01, 0.1, 0.15, 0.2, 0.5}) {
    const double expect = -U * (U - 0.15) * (U - 0.15);
    CHECK(reaction(U, 0.5, p, ReactionKind::Allee) ==
          doctest::Approx(expect).epsilon(1e-13));
  }
  CHECK(reaction(0.15, 0.5, p, ReactionKind::Allee) == doctest::Approx(0.0));

  // Logistic at H = 1 has roots {0, beta_t^2}.
  const double bt2 = 0.15 * 0.15;
  CHECK(reaction(bt2, 1.0, p, ReactionKind::Logistic) == doctest::Approx(0.0));
  CHECK(reaction(0.5 * bt2, 1.0, p, ReactionKind::Logistic) > 0.0);
}

TEST_CASE("rhs has exact equilibria and the section drift") {
  CompactifiedSystem sys = reference_allee_system();
  for (double s : {-1.0, 1.0}) {
    const Eigen::Vector3d r = sys.rhs(Eigen::Vector3d(0.0, 0.0, s));
    CHECK(r[0] == 0.0);
    CHECK(r[1] == 0.0);
    CHECK(r[2] == 0.0);
  }
  const Eigen::Vector3d r0 = sys.rhs(Eigen::Vector3d(0.0, 0.0, 0.0));
  CHECK(r0[0] == 0.0);
  CHECK(r0[1] == 0.0);
  CHECK(r0[2] == doctest::Approx(0.5 * sys.alpha).epsilon(1e-15));
}

TEST_CASE("jacobian matches finite differences at random interior states") {
  for (ReactionKind kind : {ReactionKind::Allee, ReactionKind::Logistic}) {
    CompactifiedSystem sys = reference_allee_system();
    sys.kind = kind;
    std::mt19937 rng(12345);
    std::uniform_real_distribution<double> uamp(-0.6, 0.8);
    std::uniform_real_distribution<double> samp(-0.995, 0.995);
    for (int trial = 0; trial < 100; ++trial) {
      Eigen::Vector3d x(uamp(rng), uamp(rng), samp(rng));
      const Eigen::Matrix3d J = sys.jacobian(x);
      Eigen::Matrix3d fd;
      for (int k = 0; k < 3; ++k) {
        const double h = 1e-6 * (1.0 + std::abs(x[k]));
        Eigen::Vector3d xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        fd.col(k) = (sys.rhs(xp) - sys.rhs(xm)) / (2.0 * h);
      }
      const double scale = std::max(1.0, J.cwiseAbs().maxCoeff());
      CHECK((J - fd).cwiseAbs().maxCoeff() / scale <= 1e-6);
    }
  }
}

TEST_CASE("jacobian boundary entries carry the compactification eigenvalue") {
  CompactifiedSystem sys = reference_allee_system();
  CHECK(sys.jacobian(Eigen::Vector3d(0, 0, -1.0))(2, 2) ==
        doctest::Approx(sys.alpha).epsilon(1e-15));
  CHECK(sys.jacobian(Eigen::Vector3d(0, 0, 1.0))(2, 2) ==
        doctest::Approx(-sys.alpha).epsilon(1e-15));
}

TEST_CASE("equilibria eigen-data") {
  CompactifiedSystem sys = reference_allee_system();
  auto [minus, plus] = equilibria(sys);

  CHECK(minus.point == Eigen::Vector3d(0, 0, -1));
  CHECK(plus.point == Eigen::Vector3d(0, 0, 1));
  CHECK(minus.eigenvalues[0] == doctest::Approx(-0.15).epsilon(1e-14));
  CHECK(minus.eigenvalues[1] == doctest::Approx(0.15).epsilon(1e-14));
  CHECK(minus.eigenvalues[2] == doctest::Approx(sys.alpha));
  CHECK(plus.eigenvalues[2] == doctest::Approx(-sys.alpha));
  CHECK(minus.unstable_dim == 2);
  CHECK(plus.stable_dim == 2);

  // Same planar eigenvalues on both sides (c > 0 included).
  ModelSpec moving = ModelSpec::allee();
  moving.c = 1.0;
  CompactifiedSystem sysc = CompactifiedSystem::from_spec(moving);
  auto [m2, p2] = equilibria(sysc);
  CHECK(m2.eigenvalues[0] == p2.eigenvalues[0]);
  CHECK(m2.eigenvalues[1] == p2.eigenvalues[1]);
  CHECK(m2.eigenvalues[0] < 0.0);
  CHECK(m2.eigenvalues[1] > 0.0);

  // Residual of each eigenpair against the analytic Jacobian.
  for (const CompactifiedSystem* s : {&sys, &sysc}) {
    auto [mm, pp] = equilibria(*s);
    for (const EquilibriumData& eq : {mm, pp}) {
      const Eigen::Matrix3d J = s->jacobian(eq.point);
      for (int k = 0; k < 3; ++k) {
        const Eigen::Vector3d v = eq.eigenvectors.col(k);
        CHECK((J * v - eq.eigenvalues[k] * v).norm() <= 1e-10);
        CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-14));
      }
      // Orientation rule: nonnegative leading component.
      CHECK(eq.eigenvectors(0, 0) >= 0.0);
      CHECK(eq.eigenvectors(0, 1) >= 0.0);
      CHECK(eq.eigenvectors(2, 2) >= 0.0);
    }
  }

  // Generic eigensolver cross-check.
  for (const CompactifiedSystem* s : {&sys, &sysc}) {
    auto [mm, pp] = equilibria(*s);
    for (const EquilibriumData& eq : {mm, pp}) {
      Eigen::EigenSolver<Eigen::Matrix3d> es(s->jacobian(eq.point));
      Eigen::Vector3d got = es.eigenvalues().real();
      std::sort(got.data(), got.data() + 3);
      Eigen::Vector3d want = eq.eigenvalues;
      std::sort(want.data(), want.data() + 3);
      CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }

  CompactifiedSystem degenerate = sys;
  degenerate.params.beta_t = 0.0;
  CHECK_THROWS_AS(equilibria(degenerate), NumericalError);
}

TEST_CASE("select_alpha follows the diffusion split rule") {
  ModelSpec spec = ModelSpec::allee();
  spec.D = 0.8;
  CHECK(select_alpha(spec) == doctest::Approx(0.075).epsilon(1e-14));
  spec.D = 0.001;
  CHECK(select_alpha(spec) == 1.0);
  spec.D = 4.5e-3;
  CHECK(select_alpha(spec) == 1.0);  // boundary assigned to the unit arm
}

TEST_CASE("lambda override is rejected by the dimensionless reduction") {
  ModelSpec spec = ModelSpec::allee();
  spec.lambda = 1.7;
  CHECK_FALSE(spec.lambda_is_standard());
  CHECK_THROWS_AS(CompactifiedSystem::from_spec(spec), ConfigError);
}

TEST_CASE("unit conversions round-trip") {
  for (ModelSpec spec : {ModelSpec::allee(), ModelSpec::logistic()}) {
    const double u = 0.37;
    CHECK(u_dimensionless_from_physical(u_physical_from_dimensionless(u, spec), spec) ==
          doctest::Approx(u).epsilon(1e-14));
  }
}

TEST_CASE("model spec JSON round-trip and defaults") {
  const ModelSpec spec = model_spec_from_json_text(R"({"kind":"allee","D":0.8,"L":5.0})");
  CHECK(spec.beta == doctest::Approx(0.45));
  CHECK(spec.a == doctest::Approx(5.0));
  CHECK(spec.lambda == doctest::Approx(4.0 * std::sqrt(0.45)));

  const ModelSpec back = model_spec_from_json_text(model_spec_to_json_text(spec));
  CHECK(back.D == spec.D);
  CHECK(back.L == spec.L);
  CHECK(back.kind == spec.kind);

  CHECK_THROWS_AS(model_spec_from_json_text(R"({"kind":"nope"})"), ConfigError);
  CHECK_THROWS_AS(ModelSpec::allee().with("zeta", 1.0), ConfigError);
}

}  // TEST_SUITE
