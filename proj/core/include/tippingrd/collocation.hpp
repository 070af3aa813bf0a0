#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "tippingrd/errors.hpp"

namespace tipping::collocation {

// Piecewise-polynomial mesh on the normalized interval [0,1]. `degree` is the
// number of Gauss collocation points per subinterval.
struct Mesh {
  std::vector<double> breakpoints;
  int degree = 4;

  int n_intervals() const { return static_cast<int>(breakpoints.size()) - 1; }
  int n_nodes() const { return n_intervals() * degree + 1; }

  static Mesh uniform(int n_intervals, int degree = 4);
  void validate() const;
};

struct BcData {
  double eps = 0.0;
  double theta = 0.0;
  int equilibrium = -1;  // -1 none, 0 minus side, 1 plus side
};

// Finite-'time' solution on a mesh. The state is sampled on the extended mesh
// (degree+1 uniformly spaced Lagrange nodes per interval, shared breakpoints),
// which doubles as the polynomial coefficient set. `scalars` holds the free
// scalar unknowns of the problem that produced the segment; by convention
// scalars[0] is the total length Z when the problem has one.
struct OrbitSegment {
  Mesh mesh;
  Eigen::MatrixXd coeffs;  // 3 x n_nodes
  double Z = 1.0;
  Eigen::VectorXd scalars;
  BcData bc_data;
  double residual_norm = -1.0;

  Eigen::Vector3d evaluate(double t) const;    // t in [0,1]
  Eigen::Vector3d derivative(double t) const;  // d/dt in normalized time
  Eigen::Vector3d left() const { return coeffs.col(0); }
  Eigen::Vector3d right() const { return coeffs.col(coeffs.cols() - 1); }

  // Max over mesh nodes of a state component.
  double max_component(int dim) const { return coeffs.row(dim).maxCoeff(); }
  double min_component(int dim) const { return coeffs.row(dim).minCoeff(); }
};

// Right-hand side of du/dtau = F(u, sigma) in normalized time tau in [0,1],
// together with its state Jacobian. Scalar derivatives are taken by finite
// differences inside the solver.
struct OdeSystem {
  std::function<Eigen::Vector3d(const Eigen::Vector3d&, const Eigen::VectorXd&)> f;
  std::function<Eigen::Matrix3d(const Eigen::Vector3d&, const Eigen::VectorXd&)> df_du;
};

// Scalar constraint g(u(0), u(1), sigma) = 0.
struct BoundaryCondition {
  std::function<double(const Eigen::Vector3d&, const Eigen::Vector3d&,
                       const Eigen::VectorXd&)> g;
  std::string name;
};

struct BvpProblem {
  OdeSystem ode;
  std::vector<BoundaryCondition> bcs;
  int n_scalars = 1;

  // Well-posedness: #bcs = state dim + #free scalars.
  void validate() const;
};

struct SolveOptions {
  double tol_resid = 1e-10;
  int max_newton = 25;
  int min_newton = 0;  // take at least this many steps even if already below tol
  double min_damping = 1.0 / 1024.0;  // 2^-10
  int adapt_passes = 2;
  double equidist_factor = 10.0;
  int max_intervals = 400;
  bool allow_growth = false;
  double growth_defect_target = 0.0;  // grow N while est. error above this (if > 0)
};

struct SolveResult {
  OrbitSegment segment;
  int newton_iterations = 0;
  double residual_norm = 0.0;
  int adapt_passes_used = 0;
};

SolveResult solve(const BvpProblem& problem, const OrbitSegment& guess,
                  const SolveOptions& opts = {});

// Raw collocation + boundary residual of a segment (no solving).
Eigen::VectorXd residual(const BvpProblem& problem, const OrbitSegment& seg);

// Solves J dX = -dR for the full unknown vector (nodes then scalars) with J the
// collocation Jacobian at `at`. Used for boundary-parameter sensitivities.
Eigen::VectorXd solution_sensitivity(const BvpProblem& problem, const OrbitSegment& at,
                                     const Eigen::VectorXd& minus_dR);

// Local-error indicators per interval (scaled (m+1)-st derivative estimate).
Eigen::VectorXd error_indicators(const OrbitSegment& seg);

// Redistributes breakpoints to equidistribute the local error density. The
// interval count is preserved.
Mesh adapt(const OrbitSegment& seg);

// Interpolates a segment onto a new mesh (initial guess for a re-solve).
OrbitSegment interpolate(const OrbitSegment& seg, const Mesh& mesh);

// Max defect ||u'(t) - F(u(t))||_inf / (1 + ||F||_inf) over `oversample` x degree
// sample points per interval, off the collocation points.
double certify(const BvpProblem& problem, const OrbitSegment& seg, int oversample = 3);

std::string segment_to_json_text(const OrbitSegment& seg);
OrbitSegment segment_from_json_text(const std::string& text);

}  // namespace tipping::collocation
