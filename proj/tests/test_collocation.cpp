#include <doctest.h>

#include <cmath>

#include "tippingrd/collocation.hpp"
#include "tippingrd/model.hpp"

using namespace tipping;
namespace co = tipping::collocation;

namespace {

// Decoupled compactification flow s' = (alpha/2)(1 - s^2) with U = V = 0; the
// closed form through s(0) = s0 is s(z) = tanh(alpha z / 2 + atanh(s0)).
co::BvpProblem s_equation_problem(double alpha, double s0, double s1, bool fix_z,
                                  double z_fixed = 0.0) {
  CompactifiedSystem sys = CompactifiedSystem::from_spec(ModelSpec::allee());
  sys.alpha = alpha;
  co::BvpProblem prob;
  prob.ode.f = [sys](const Eigen::Vector3d& u, const Eigen::VectorXd& sc) {
    return (sc[0] * sys.rhs(u)).eval();
  };
  prob.ode.df_du = [sys](const Eigen::Vector3d& u, const Eigen::VectorXd& sc) {
    return (sc[0] * sys.jacobian(u)).eval();
  };
  prob.n_scalars = 1;
  prob.bcs.push_back({[](const Eigen::Vector3d& l, const Eigen::Vector3d&,
                         const Eigen::VectorXd&) { return l[0]; },
                      "U0"});
  prob.bcs.push_back({[](const Eigen::Vector3d& l, const Eigen::Vector3d&,
                         const Eigen::VectorXd&) { return l[1]; },
                      "V0"});
  prob.bcs.push_back({[s0](const Eigen::Vector3d& l, const Eigen::Vector3d&,
                           const Eigen::VectorXd&) { return l[2] - s0; },
                      "s0"});
  if (fix_z) {
    prob.bcs.push_back({[z_fixed](const Eigen::Vector3d&, const Eigen::Vector3d&,
                                  const Eigen::VectorXd& sc) { return sc[0] - z_fixed; },
                        "Z"});
  } else {
    prob.bcs.push_back({[s1](const Eigen::Vector3d&, const Eigen::Vector3d& r,
                             const Eigen::VectorXd&) { return r[2] - s1; },
                        "s1"});
  }
  return prob;
}

co::OrbitSegment straight_guess(const co::Mesh& mesh, double s0, double s1, double Z) {
  co::OrbitSegment seg;
  seg.mesh = mesh;
  seg.coeffs.resize(3, mesh.n_nodes());
  const int m = mesh.degree;
  for (int j = 0; j < mesh.n_intervals(); ++j) {
    const double a = mesh.breakpoints[j];
    const double h = mesh.breakpoints[j + 1] - a;
    for (int k = 0; k <= m; ++k) {
      const double t = a + h * double(k) / m;
      seg.coeffs.col(j * m + k) = Eigen::Vector3d(0.0, 0.0, s0 + (s1 - s0) * t);
    }
  }
  seg.Z = Z;
  seg.scalars = Eigen::VectorXd::Constant(1, Z);
  return seg;
}

double closed_form_s(double t, double s0, double Z, double alpha) {
  return std::tanh(0.5 * alpha * Z * t + std::atanh(s0));
}

}  // namespace

TEST_SUITE("collocation") {

TEST_CASE("mesh and problem validation") {
  CHECK_THROWS_AS(co::Mesh::uniform(3), ConfigError);
  CHECK_THROWS_AS(co::Mesh::uniform(10, 1), ConfigError);
  CHECK_THROWS_AS(co::Mesh::uniform(10, 8), ConfigError);
  CHECK_NOTHROW(co::Mesh::uniform(4, 2));

  // Well-posedness: constraint count must equal state dim + free scalars.
  co::BvpProblem prob = s_equation_problem(1.0, -0.99, 0.99, false);
  prob.bcs.pop_back();
  co::OrbitSegment guess = straight_guess(co::Mesh::uniform(8), -0.99, 0.99, 10.0);
  CHECK_THROWS_AS(co::solve(prob, guess), ConfigError);
}

TEST_CASE("trivial s-equation BVP recovers the tanh profile") {
  const double alpha = 1.0;
  const double delta = 1e-2;
  const double s0 = -1.0 + delta, s1 = 1.0 - delta;
  co::BvpProblem prob = s_equation_problem(alpha, s0, s1, false);
  const double Z_exact = 2.0 * (std::atanh(s1) - std::atanh(s0)) / alpha;
  co::OrbitSegment guess = straight_guess(co::Mesh::uniform(50), s0, s1, 0.8 * Z_exact);

  co::SolveResult res = co::solve(prob, guess);
  CHECK(res.residual_norm <= 1e-10);
  CHECK(res.segment.Z == doctest::Approx(Z_exact).epsilon(1e-9));

  for (double t : {0.0, 0.1, 0.25, 0.5, 0.77, 1.0}) {
    const Eigen::Vector3d u = res.segment.evaluate(t);
    CHECK(u[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(u[2] - closed_form_s(t, s0, res.segment.Z, alpha)) <= 1e-8);
  }
  CHECK(res.segment.evaluate(0.0)[2] == doctest::Approx(s0).epsilon(1e-12));
  CHECK(res.segment.evaluate(1.0)[2] == doctest::Approx(s1).epsilon(1e-12));

  // s stays monotone along the segment.
  double prev = -2.0;
  for (int q = 0; q < res.segment.mesh.n_nodes(); ++q) {
    CHECK(res.segment.coeffs(2, q) >= prev);
    prev = res.segment.coeffs(2, q);
  }
}

TEST_CASE("superconvergence at breakpoints on the closed-form problem") {
  const double alpha = 1.0;
  const double delta = 1e-2;
  const double s0 = -1.0 + delta;
  const double Z = 4.0 * std::atanh(1.0 - delta) / alpha;

  std::vector<double> errors;
  for (int N : {4, 8, 16}) {
    co::BvpProblem prob = s_equation_problem(alpha, s0, 0.0, true, Z);
    co::OrbitSegment guess = straight_guess(co::Mesh::uniform(N, 4), s0, 1.0 - delta, Z);
    co::SolveOptions opts;
    opts.adapt_passes = 0;
    co::SolveResult res = co::solve(prob, guess, opts);
    double emax = 0.0;
    for (double bp : res.segment.mesh.breakpoints) {
      const double err =
          std::abs(res.segment.evaluate(bp)[2] - closed_form_s(bp, s0, Z, alpha));
      emax = std::max(emax, err);
    }
    errors.push_back(emax);
  }
  // Expected superconvergence order at breakpoints is >= degree + 1 = 5.
  for (size_t i = 0; i + 1 < errors.size(); ++i) {
    if (errors[i + 1] < 1e-14) continue;  // below roundoff floor
    const double order = std::log2(errors[i] / errors[i + 1]);
    CHECK(order >= 5.0);
  }
  CHECK(errors.back() <= 1e-8);
}

TEST_CASE("mesh adaptation equidistributes and clusters at sharp layers") {
  // Mild profile: near-uniform mesh.
  {
    co::BvpProblem prob = s_equation_problem(1.0, -0.9, 0.9, false);
    co::OrbitSegment guess = straight_guess(co::Mesh::uniform(24), -0.9, 0.9, 6.0);
    co::SolveOptions opts;
    opts.adapt_passes = 0;
    co::SolveResult res = co::solve(prob, guess, opts);
    const co::Mesh adapted = co::adapt(res.segment);
    double hmin = 1.0, hmax = 0.0;
    for (int j = 0; j < adapted.n_intervals(); ++j) {
      const double h = adapted.breakpoints[j + 1] - adapted.breakpoints[j];
      hmin = std::min(hmin, h);
      hmax = std::max(hmax, h);
    }
    CHECK(hmax / hmin < 6.0);
  }

  // Sharp interior layer: breakpoints must cluster where curvature is largest.
  {
    const double delta = 1e-6;
    co::BvpProblem prob = s_equation_problem(2.0, -1.0 + delta, 1.0 - delta, false);
    co::OrbitSegment guess =
        straight_guess(co::Mesh::uniform(60), -1.0 + delta, 1.0 - delta, 16.0);
    co::SolveResult res = co::solve(prob, guess);  // adaptive by default
    // The layer sits at the segment midpoint; compare local spacing there to
    // the tail spacing.
    const auto& bp = res.segment.mesh.breakpoints;
    auto spacing_at = [&](double t) {
      for (size_t j = 0; j + 1 < bp.size(); ++j) {
        if (bp[j] <= t && t <= bp[j + 1]) return bp[j + 1] - bp[j];
      }
      return 1.0;
    };
    CHECK(spacing_at(0.5) < 0.5 * spacing_at(0.05));

    // Equidistribution within the spec factor.
    const Eigen::VectorXd E = co::error_indicators(res.segment);
    CHECK(E.maxCoeff() / std::max(E.minCoeff(), 1e-300) <
          40.0);  // loose; indicator ratio, not the adapted target

    // Re-adapting an equidistributed mesh changes breakpoints only slightly.
    const co::Mesh again = co::adapt(res.segment);
    double shift = 0.0;
    for (size_t i = 0; i < bp.size(); ++i) {
      shift = std::max(shift, std::abs(again.breakpoints[i] - bp[i]));
    }
    CHECK(shift < 0.3 / res.segment.mesh.n_intervals() * 10.0);
  }
}

TEST_CASE("oversampled defect certification") {
  const double alpha = 1.0;
  const double delta = 1e-2;
  co::BvpProblem prob = s_equation_problem(alpha, -1.0 + delta, 1.0 - delta, false);
  co::OrbitSegment guess =
      straight_guess(co::Mesh::uniform(300, 4), -1.0 + delta, 1.0 - delta, 10.0);
  co::SolveOptions opts;
  opts.adapt_passes = 2;
  co::SolveResult res = co::solve(prob, guess, opts);
  CHECK(co::certify(prob, res.segment) <= 1e-9);  // 10 x tol_resid
}

TEST_CASE("determinism: identical problem and guess give identical coefficients") {
  co::BvpProblem prob = s_equation_problem(0.5, -0.99, 0.99, false);
  co::OrbitSegment guess = straight_guess(co::Mesh::uniform(20), -0.99, 0.99, 20.0);
  co::SolveResult a = co::solve(prob, guess);
  co::SolveResult b = co::solve(prob, guess);
  REQUIRE(a.segment.coeffs.size() == b.segment.coeffs.size());
  for (int i = 0; i < a.segment.coeffs.size(); ++i) {
    CHECK(a.segment.coeffs.data()[i] == b.segment.coeffs.data()[i]);
  }
  CHECK(a.segment.Z == b.segment.Z);
}

TEST_CASE("segment JSON round-trip") {
  co::BvpProblem prob = s_equation_problem(1.0, -0.9, 0.9, false);
  co::OrbitSegment guess = straight_guess(co::Mesh::uniform(8), -0.9, 0.9, 5.0);
  co::SolveResult res = co::solve(prob, guess);
  const co::OrbitSegment back = co::segment_from_json_text(co::segment_to_json_text(res.segment));
  CHECK(back.Z == res.segment.Z);
  CHECK(back.mesh.degree == res.segment.mesh.degree);
  for (double t : {0.0, 0.3, 0.9, 1.0}) {
    CHECK((back.evaluate(t) - res.segment.evaluate(t)).norm() == 0.0);
  }
}

TEST_CASE("evaluate is continuous across breakpoints") {
  co::BvpProblem prob = s_equation_problem(1.0, -0.9, 0.9, false);
  co::OrbitSegment guess = straight_guess(co::Mesh::uniform(16), -0.9, 0.9, 5.0);
  co::SolveResult res = co::solve(prob, guess);
  for (size_t j = 1; j + 1 < res.segment.mesh.breakpoints.size(); ++j) {
    const double t = res.segment.mesh.breakpoints[j];
    const Eigen::Vector3d lo = res.segment.evaluate(t - 1e-13);
    const Eigen::Vector3d hi = res.segment.evaluate(t + 1e-13);
    CHECK((lo - hi).norm() <= 1e-12);
  }
  CHECK_THROWS_AS(res.segment.evaluate(1.5), ConfigError);
}

}  // TEST_SUITE
