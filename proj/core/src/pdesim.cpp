#include "tippingrd/pdesim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tipping::pdesim {

namespace {

// Tridiagonal Thomas solve: diag a, lower l, upper u (interior system).
void thomas_factor(const Eigen::VectorXd& lower, const Eigen::VectorXd& diag,
                   const Eigen::VectorXd& upper, Eigen::VectorXd* cp,
                   Eigen::VectorXd* dp_scratch) {
  const int n = static_cast<int>(diag.size());
  cp->resize(n);
  dp_scratch->resize(n);
  (*cp)[0] = upper[0] / diag[0];
  (*dp_scratch)[0] = diag[0];
  for (int i = 1; i < n; ++i) {
    const double m = diag[i] - lower[i] * (*cp)[i - 1];
    (*dp_scratch)[i] = m;
    (*cp)[i] = upper[i] / m;
  }
}

void thomas_solve(const Eigen::VectorXd& lower, const Eigen::VectorXd& cp,
                  const Eigen::VectorXd& dp, Eigen::VectorXd* rhs) {
  const int n = static_cast<int>(rhs->size());
  (*rhs)[0] /= dp[0];
  for (int i = 1; i < n; ++i) {
    (*rhs)[i] = ((*rhs)[i] - lower[i] * (*rhs)[i - 1]) / dp[i];
  }
  for (int i = n - 2; i >= 0; --i) {
    (*rhs)[i] -= cp[i] * (*rhs)[i + 1];
  }
}

Eigen::VectorXd habitat_on_grid(const ModelSpec& spec, const Grid& grid) {
  Eigen::VectorXd H(grid.n_points);
  for (int i = 0; i < grid.n_points; ++i) {
    H[i] = habitat_xi(grid.xi(i), spec.L, spec.a);
  }
  return H;
}

double rhs_residual(const Eigen::VectorXd& U, const Eigen::VectorXd& H,
                    const ModelSpec& spec, const Grid& grid) {
  const double dx = grid.spacing();
  double worst = 0.0;
  for (int i = 1; i + 1 < U.size(); ++i) {
    const double uxx = (U[i - 1] - 2.0 * U[i] + U[i + 1]) / (dx * dx);
    const double ux = (U[i + 1] - U[i - 1]) / (2.0 * dx);
    const double r = spec.D * uxx + spec.c * ux + reaction_physical(U[i], H[i], spec);
    worst = std::max(worst, std::abs(r));
  }
  return worst;
}

}  // namespace

void Grid::validate(const ModelSpec& spec) const {
  if (n_points < 401) throw ConfigError("grid needs at least 401 points");
  if (half_width <= 0.0) throw ConfigError("grid half-width must be positive");
  const double peclet = std::abs(spec.c) * spacing() / spec.D;
  if (peclet > 2.0) {
    std::ostringstream os;
    os << "cell Peclet number " << peclet
       << " exceeds 2; refine the grid for the central advection stencil";
    throw ConfigError(os.str());
  }
}

Field Field::zeros(const Grid& grid) {
  Field f;
  f.values = Eigen::VectorXd::Zero(grid.n_points);
  return f;
}

void Field::clip_negative() {
  for (int i = 0; i < values.size(); ++i) {
    if (values[i] < 0.0 && values[i] > -1e-12) values[i] = 0.0;
  }
}

SteadyResult step_to_steady(const Field& u0, const ModelSpec& spec, const Grid& grid,
                            const StepOptions& opts) {
  grid.validate(spec);
  if (u0.values.size() != grid.n_points) {
    throw ConfigError("initial field does not match grid");
  }
  const int n = grid.n_points;
  const int ni = n - 2;  // interior unknowns
  const double dx = grid.spacing();
  const double dt = opts.dt;
  const Eigen::VectorXd H = habitat_on_grid(spec, grid);

  // I - dt (D Dxx + c Dx), interior rows.
  const double a_lo = -dt * (spec.D / (dx * dx) - spec.c / (2.0 * dx));
  const double a_hi = -dt * (spec.D / (dx * dx) + spec.c / (2.0 * dx));
  const double a_di = 1.0 + 2.0 * dt * spec.D / (dx * dx);
  Eigen::VectorXd lower = Eigen::VectorXd::Constant(ni, a_lo);
  Eigen::VectorXd diag = Eigen::VectorXd::Constant(ni, a_di);
  Eigen::VectorXd upper = Eigen::VectorXd::Constant(ni, a_hi);
  lower[0] = 0.0;
  upper[ni - 1] = 0.0;
  Eigen::VectorXd cp, dp;
  thomas_factor(lower, diag, upper, &cp, &dp);

  SteadyResult out;
  Eigen::VectorXd U = u0.values;
  U[0] = 0.0;
  U[n - 1] = 0.0;
  for (int i = 0; i < n; ++i) {
    if (U[i] < 0.0) U[i] = U[i] > -1e-12 ? 0.0 : U[i];
  }

  double t = 0.0;
  Eigen::VectorXd rhs(ni);
  int step_count = 0;
  double residual = rhs_residual(U, H, spec, grid);
  while (t < opts.t_max) {
    if (residual <= opts.steady_tol) break;
    for (int i = 0; i < ni; ++i) {
      const int gi = i + 1;
      rhs[i] = U[gi] + dt * reaction_physical(U[gi], H[gi], spec);
    }
    thomas_solve(lower, cp, dp, &rhs);
    for (int i = 0; i < ni; ++i) {
      double v = rhs[i];
      if (v < 0.0 && v > -1e-12) v = 0.0;
      U[i + 1] = v;
    }
    t += dt;
    if (++step_count % opts.check_every == 0) {
      residual = rhs_residual(U, H, spec, grid);
      if (!std::isfinite(residual)) {
        throw NumericalError(ErrorCode::NotConverged, "PDE state became non-finite");
      }
    }
  }
  residual = rhs_residual(U, H, spec, grid);

  // Boundary contamination check on the converged state.
  if (std::abs(U[1]) > opts.boundary_tol || std::abs(U[n - 2]) > opts.boundary_tol) {
    throw NumericalError(ErrorCode::BoundaryContaminated,
                         "solution mass reached the truncated boundary; enlarge the domain");
  }

  out.field.values = U;
  out.converged = residual <= opts.steady_tol;
  out.residual = residual;
  out.t_elapsed = t;
  return out;
}

Stability classify_stability(const Field& pulse, const ModelSpec& spec, const Grid& grid,
                             const ClassifyOptions& opts) {
  const Eigen::VectorXd H = habitat_on_grid(spec, grid);
  const double pre_resid = rhs_residual(pulse.values, H, spec, grid);
  if (pre_resid > opts.steady_residual_pre) {
    throw ConfigError("classify_stability requires an approximate steady state");
  }
  const Field bump = gaussian_bump(grid, opts.bump_amp, 0.0, std::max(spec.L / 4.0, 0.5));

  int returned = 0, departed = 0;
  for (const double sign : {+1.0, -1.0}) {
    Field u0;
    u0.values = pulse.values + sign * bump.values;
    for (int i = 0; i < u0.values.size(); ++i) u0.values[i] = std::max(u0.values[i], 0.0);
    SteadyResult r = step_to_steady(u0, spec, grid, opts.step);
    if (!r.converged) {
      throw NumericalError(ErrorCode::Inconclusive,
                           "perturbed run did not converge within t_max");
    }
    const double dist = (r.field.values - pulse.values).lpNorm<Eigen::Infinity>();
    if (dist <= opts.return_tol) {
      ++returned;
    } else {
      ++departed;
    }
  }
  if (returned == 2) return Stability::Stable;
  if (departed >= 1) return Stability::Unstable;
  throw NumericalError(ErrorCode::Inconclusive, "stability test ambiguous");
}

SweepResult sweep(const ModelSpec& spec, const std::string& param,
                  const std::vector<double>& schedule, const Field& u0, const Grid& grid,
                  const StepOptions& opts) {
  if (schedule.size() < 2) throw ConfigError("sweep schedule needs at least two values");
  for (size_t i = 1; i < schedule.size(); ++i) {
    if ((schedule[1] > schedule[0] && schedule[i] <= schedule[i - 1]) ||
        (schedule[1] < schedule[0] && schedule[i] >= schedule[i - 1])) {
      throw ConfigError("sweep schedule must be monotone");
    }
  }
  SweepResult out;
  out.schedule = schedule;
  out.direction = schedule.back() > schedule.front() ? "up" : "down";
  Field state = u0;
  for (const double value : schedule) {
    const ModelSpec at = spec.with(param, value);
    SteadyResult r = step_to_steady(state, at, grid, opts);
    if (!r.converged) {
      throw NumericalError(ErrorCode::NotConverged,
                           "sweep step did not reach steady state at " + param + " = " +
                               std::to_string(value));
    }
    out.attractor_measure.push_back(r.field.max());
    out.converged.push_back(r.converged);
    state = r.field;
  }
  return out;
}

double threshold_bisect(const ModelSpec& spec, const std::string& param,
                        double surviving, double extinct, const Field& surviving_state,
                        const Grid& grid, double tol, const StepOptions& opts) {
  Field state = surviving_state;
  const double survive_floor = 0.05 * state.max();
  if (survive_floor <= 0.0) throw ConfigError("surviving state must be nontrivial");
  double a = surviving, b = extinct;
  while (std::abs(b - a) > tol) {
    const double m = 0.5 * (a + b);
    SteadyResult r = step_to_steady(state, spec.with(param, m), grid, opts);
    if (r.converged && r.field.max() > survive_floor) {
      a = m;
      state = r.field;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

Field field_from_heteroclinic(const lin::Heteroclinic& het, const ModelSpec& spec,
                              const Grid& grid) {
  Field out = Field::zeros(grid);
  const auto prof = het.profile();
  // Profile is sampled in dimensionless (z, U); interpolate linearly in z.
  size_t k = 0;
  for (int i = 0; i < grid.n_points; ++i) {
    const double z = spec.a * grid.xi(i);
    if (z <= prof.front()[0] || z >= prof.back()[0]) continue;
    while (k + 1 < prof.size() && prof[k + 1][0] < z) ++k;
    while (k > 0 && prof[k][0] > z) --k;
    const double z0 = prof[k][0], z1 = prof[k + 1][0];
    const double w = (z - z0) / (z1 - z0);
    const double u_cal = (1.0 - w) * prof[k][1] + w * prof[k + 1][1];
    out.values[i] = u_physical_from_dimensionless(u_cal, spec);
  }
  out.values[0] = 0.0;
  out.values[grid.n_points - 1] = 0.0;
  out.clip_negative();
  return out;
}

Field gaussian_bump(const Grid& grid, double amp, double center, double width) {
  Field f = Field::zeros(grid);
  for (int i = 0; i < grid.n_points; ++i) {
    const double d = (grid.xi(i) - center) / width;
    f.values[i] = amp * std::exp(-0.5 * d * d);
  }
  f.values[0] = 0.0;
  f.values[grid.n_points - 1] = 0.0;
  return f;
}

std::string field_to_csv(const Field& field, const Grid& grid) {
  std::ostringstream os;
  os.precision(16);
  os << "xi,U\n";
  for (int i = 0; i < grid.n_points; ++i) os << grid.xi(i) << "," << field.values[i] << "\n";
  return os.str();
}

std::string SweepResult::to_csv(const std::string& param) const {
  std::ostringstream os;
  os.precision(16);
  os << param << ",maxU,direction\n";
  for (size_t i = 0; i < schedule.size(); ++i) {
    os << schedule[i] << "," << attractor_measure[i] << "," << direction << "\n";
  }
  return os.str();
}

}  // namespace tipping::pdesim
