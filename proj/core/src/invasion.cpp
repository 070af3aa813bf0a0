#include "tippingrd/invasion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tipping::invasion {

namespace {

struct PlanarState {
  double U, V;
};

// Homogeneous dimensionless Allee front system, H = 1.
PlanarState front_rhs(const PlanarState& s, double c_t, double beta_t, double dir) {
  const double f = s.U * (-beta_t * beta_t + 4.0 * beta_t * s.U - s.U * s.U);
  return {dir * s.V, dir * (-c_t * s.V - f)};
}

PlanarState rk4_step(const PlanarState& s, double h, double c_t, double beta_t,
                     double dir) {
  const PlanarState k1 = front_rhs(s, c_t, beta_t, dir);
  const PlanarState k2 =
      front_rhs({s.U + 0.5 * h * k1.U, s.V + 0.5 * h * k1.V}, c_t, beta_t, dir);
  const PlanarState k3 =
      front_rhs({s.U + 0.5 * h * k2.U, s.V + 0.5 * h * k2.V}, c_t, beta_t, dir);
  const PlanarState k4 = front_rhs({s.U + h * k3.U, s.V + h * k3.V}, c_t, beta_t, dir);
  return {s.U + h / 6.0 * (k1.U + 2.0 * k2.U + 2.0 * k3.U + k4.U),
          s.V + h / 6.0 * (k1.V + 2.0 * k2.V + 2.0 * k3.V + k4.V)};
}

// Integrates until U crosses `u_section` (bisection-refined within the last
// step). Returns V at the crossing. When `stop_on_turn` and V reaches >= 0
// before the section, returns 0 (the manifold turned back; the sign convention
// of the splitting function stays valid).
double shoot_to_section(PlanarState s, double u_section, bool decreasing, double dir,
                        double c_t, double beta_t, bool stop_on_turn) {
  const double h = 0.0025 / std::max(beta_t, 0.05);
  const long max_steps = 4'000'000;
  for (long i = 0; i < max_steps; ++i) {
    const PlanarState next = rk4_step(s, h, c_t, beta_t, dir);
    const bool crossed = decreasing ? next.U <= u_section : next.U >= u_section;
    if (crossed) {
      double lo = 0.0, hi = h;
      PlanarState a = s;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        const PlanarState m = rk4_step(a, mid, c_t, beta_t, dir);
        const bool c = decreasing ? m.U <= u_section : m.U >= u_section;
        if (c) {
          hi = mid;
        } else {
          lo = mid;
        }
      }
      return rk4_step(a, 0.5 * (lo + hi), c_t, beta_t, dir).V;
    }
    if (stop_on_turn && next.V >= 0.0) return 0.0;
    if (std::abs(next.U) > 100.0 * std::max(beta_t, 1.0) || !std::isfinite(next.U)) {
      throw NumericalError(ErrorCode::NotConverged,
                           "front shooting escaped before reaching the section");
    }
    s = next;
  }
  throw NumericalError(ErrorCode::NotConverged, "front shooting exceeded step budget");
}

}  // namespace

FrontEquilibria allee_front_equilibria(double beta_t) {
  FrontEquilibria eq;
  eq.U0 = 0.0;
  eq.U1 = (2.0 - std::sqrt(3.0)) * beta_t;
  eq.U2 = (2.0 + std::sqrt(3.0)) * beta_t;
  return eq;
}

double splitting_function(double c_t, double beta_t) {
  const FrontEquilibria eq = allee_front_equilibria(beta_t);
  const double u_mid = 0.5 * (eq.U0 + eq.U2);
  const double delta = 1e-7 * (1.0 + eq.U2);

  // Unstable manifold of the carrying-capacity saddle, heading down in U.
  const double fpU2 = -beta_t * beta_t + 8.0 * beta_t * eq.U2 - 3.0 * eq.U2 * eq.U2;
  const double mu_plus = 0.5 * (-c_t + std::sqrt(c_t * c_t - 4.0 * fpU2));
  Eigen::Vector2d vu(1.0, mu_plus);
  vu.normalize();
  PlanarState su{eq.U2 - delta * vu[0], -delta * vu[1]};
  const double Vu = shoot_to_section(su, u_mid, /*decreasing=*/true, +1.0, c_t, beta_t,
                                     /*stop_on_turn=*/false);

  // Stable manifold of the origin, grown backwards in z.
  const double l1 = 0.5 * (-c_t - std::sqrt(c_t * c_t + 4.0 * beta_t * beta_t));
  Eigen::Vector2d vs(1.0, l1);
  vs.normalize();
  PlanarState ss{delta * vs[0], delta * vs[1]};
  const double Vs = shoot_to_section(ss, u_mid, /*decreasing=*/false, -1.0, c_t, beta_t,
                                     /*stop_on_turn=*/true);

  return Vu - Vs;
}

double allee_c_inv_dimensionless(double beta_t, double tol) {
  if (beta_t == 0.0) return 0.0;
  double lo = 0.1 * beta_t, hi = 6.0 * beta_t;
  double flo = splitting_function(lo, beta_t);
  double fhi = splitting_function(hi, beta_t);
  if (flo * fhi > 0.0) {
    lo = 0.01 * beta_t;
    hi = 12.0 * beta_t;
    flo = splitting_function(lo, beta_t);
    fhi = splitting_function(hi, beta_t);
    if (flo * fhi > 0.0) {
      throw NumericalError(ErrorCode::BracketNotFound,
                           "splitting function has one sign on the search interval");
    }
  }
  while (hi - lo > tol * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    const double fm = splitting_function(mid, beta_t);
    if (fm == 0.0) return mid;
    if (flo * fm < 0.0) {
      hi = mid;
      fhi = fm;
    } else {
      lo = mid;
      flo = fm;
    }
  }
  return 0.5 * (lo + hi);
}

double allee_c_inv(const ModelSpec& spec) {
  if (spec.kind != ReactionKind::Allee) {
    throw ConfigError("allee_c_inv requires the Allee reaction kind");
  }
  if (spec.beta == 0.0) return 0.0;
  const DimensionlessParams p = nondimensionalize(spec);
  return spec.a * spec.D * allee_c_inv_dimensionless(p.beta_t);
}

double logistic_c_inv(const ModelSpec& spec) {
  if (spec.kind != ReactionKind::Logistic) {
    throw ConfigError("logistic_c_inv requires the logistic reaction kind");
  }
  return 2.0 * std::sqrt(spec.beta * spec.D);
}

double c_inv(const ModelSpec& spec) {
  return spec.kind == ReactionKind::Allee ? allee_c_inv(spec) : logistic_c_inv(spec);
}

FrontManifolds front_manifolds(double c_t, double beta_t, double z_span) {
  FrontManifolds out;
  const FrontEquilibria eq = allee_front_equilibria(beta_t);
  const double delta = 1e-6 * (1.0 + eq.U2);
  const double h = 0.005 / std::max(beta_t, 0.05);
  const int stride = 10;

  const double fpU2 = -beta_t * beta_t + 8.0 * beta_t * eq.U2 - 3.0 * eq.U2 * eq.U2;
  const double mu_plus = 0.5 * (-c_t + std::sqrt(c_t * c_t - 4.0 * fpU2));
  PlanarState su{eq.U2 - delta, -delta * mu_plus};
  double z = 0.0;
  int i = 0;
  while (z < z_span && std::abs(su.U) < 3.0 * eq.U2 && std::abs(su.V) < 10.0 * beta_t) {
    if (i++ % stride == 0) out.unstable.emplace_back(z, su.U, su.V);
    su = rk4_step(su, h, c_t, beta_t, +1.0);
    z += h;
  }

  const double l1 = 0.5 * (-c_t - std::sqrt(c_t * c_t + 4.0 * beta_t * beta_t));
  PlanarState ss{delta, delta * l1};
  z = 0.0;
  i = 0;
  while (z < z_span && std::abs(ss.U) < 3.0 * eq.U2 && std::abs(ss.V) < 10.0 * beta_t) {
    if (i++ % stride == 0) out.stable.emplace_back(-z, ss.U, ss.V);
    ss = rk4_step(ss, h, c_t, beta_t, -1.0);
    z += h;
  }
  std::reverse(out.stable.begin(), out.stable.end());
  return out;
}

std::string c_inv_curve_csv(const ModelSpec& base, const std::vector<double>& Ds) {
  std::ostringstream os;
  os.precision(16);
  os << "D,c_inv\n";
  for (const double D : Ds) {
    os << D << "," << c_inv(base.with("D", D)) << "\n";
  }
  return os.str();
}

}  // namespace tipping::invasion
