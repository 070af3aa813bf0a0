#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "tippingrd/lin.hpp"
#include "tippingrd/model.hpp"

namespace tipping::pdesim {

// Uniform grid on [-X, X] in the moving-frame coordinate, Dirichlet U = 0 at
// both ends.
struct Grid {
  double half_width = 40.0;
  int n_points = 1601;

  double spacing() const { return 2.0 * half_width / (n_points - 1); }
  double xi(int i) const { return -half_width + i * spacing(); }
  // n_points >= 401 and cell Peclet |c| dx / D <= 2 (central advection stencil).
  void validate(const ModelSpec& spec) const;
};

struct Field {
  Eigen::VectorXd values;

  static Field zeros(const Grid& grid);
  void clip_negative();  // round-off floor: values in (-1e-12, 0) -> 0
  double max() const { return values.size() ? values.maxCoeff() : 0.0; }
};

struct StepOptions {
  double dt = 0.05;
  double steady_tol = 1e-9;  // ||U_t||_inf
  double t_max = 5000.0;
  int check_every = 20;
  double boundary_tol = 1e-6;
};

struct SteadyResult {
  Field field;
  bool converged = false;
  double residual = 0.0;
  double t_elapsed = 0.0;
};

// Semi-implicit method of lines for U_t = D U_xixi + c U_xi + f(U, H(xi)):
// backward-Euler diffusion/advection, explicit reaction. The steady state is a
// fixed point of the spatial discretization, independent of dt.
SteadyResult step_to_steady(const Field& u0, const ModelSpec& spec, const Grid& grid,
                            const StepOptions& opts = {});

enum class Stability { Stable, Unstable };

struct ClassifyOptions {
  double bump_amp = 1e-3;
  double return_tol = 1e-4;
  double steady_residual_pre = 1e-6;
  StepOptions step;
};

// Perturbs the pulse by +-bump and integrates; stable iff both runs return.
// Throws NumericalError(Inconclusive) when the runs disagree ambiguously.
Stability classify_stability(const Field& pulse, const ModelSpec& spec, const Grid& grid,
                             const ClassifyOptions& opts = {});

struct SweepResult {
  std::vector<double> schedule;
  std::vector<double> attractor_measure;  // max U of the converged state
  std::vector<bool> converged;
  std::string direction;  // "up" | "down"

  std::string to_csv(const std::string& param) const;
};

// Hysteresis protocol: each converged state seeds the next parameter value.
SweepResult sweep(const ModelSpec& spec, const std::string& param,
                  const std::vector<double>& schedule, const Field& u0, const Grid& grid,
                  const StepOptions& opts = {});

// Bisects the survival boundary in `param` between a surviving and an extinct
// value, warm-starting from the surviving attractor.
double threshold_bisect(const ModelSpec& spec, const std::string& param,
                        double surviving, double extinct, const Field& surviving_state,
                        const Grid& grid, double tol, const StepOptions& opts = {});

// Maps a dimensionless heteroclinic profile onto the grid in physical units.
Field field_from_heteroclinic(const lin::Heteroclinic& het, const ModelSpec& spec,
                              const Grid& grid);

Field gaussian_bump(const Grid& grid, double amp, double center, double width);

std::string field_to_csv(const Field& field, const Grid& grid);

}  // namespace tipping::pdesim
