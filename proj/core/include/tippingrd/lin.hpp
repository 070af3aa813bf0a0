#pragma once

#include <Eigen/Dense>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tippingrd/collocation.hpp"
#include "tippingrd/continuation.hpp"
#include "tippingrd/model.hpp"

namespace tipping::lin {

// Boundary-value setup for the two orbit-segment families: Gamma- starts on an
// eps-half-circle in the unstable eigenspace of p- and runs to the section
// Sigma = {s = 0}; Gamma+ starts on an eps-half-circle in the stable eigenspace
// of p+ and runs backwards (Z < 0) to Sigma.
struct LinSetup {
  double eps_minus = 0.0;  // 0 resolves to 1e-4 * (1 + ||p-||) = 2e-4
  double eps_plus = 0.0;
  int mesh_intervals = 60;
  int mesh_degree = 4;
  // Tight inner tolerance: the Lin gap is resolved down to ~10x the segment
  // endpoint noise, which must sit well below the 1e-9 gap target.
  collocation::SolveOptions solve{.tol_resid = 1e-12, .adapt_passes = 1};

  double eps_for(Side side) const;
};

// Orbit segments from one side, parameterised by the boundary angle theta in
// (0, pi). Caches the last solution as warm start.
class SegmentFamily {
 public:
  SegmentFamily(Side side, const ModelSpec& spec, const LinSetup& setup);

  void set_model(const ModelSpec& spec);
  const ModelSpec& model() const { return spec_; }
  const CompactifiedSystem& system() const { return sys_; }
  Side side() const { return side_; }

  collocation::OrbitSegment trivial_segment() const;  // theta = pi/2, exact

  // Linearized-flow initial guess: the sphere state propagated along the
  // planar eigendirection on top of the exact s-profile, amplitude-clamped.
  collocation::OrbitSegment linear_guess(double theta) const;

  collocation::OrbitSegment solve(double theta,
                                  const collocation::OrbitSegment* warm = nullptr);

  Eigen::Vector2d sigma_endpoint(const collocation::OrbitSegment& seg) const;
  // Full discrete solution tangent dX/dtheta at a solved segment.
  Eigen::VectorXd full_theta_sensitivity(const collocation::OrbitSegment& seg,
                                         double theta) const;
  // First-order predictor: seg extrapolated along its theta tangent. Used as a
  // Newton guess, not a solution.
  collocation::OrbitSegment predict(const collocation::OrbitSegment& seg,
                                    double theta_new) const;
  // d(sigma endpoint)/d theta via the discrete sensitivity of the BVP.
  Eigen::Vector2d endpoint_theta_sensitivity(const collocation::OrbitSegment& seg,
                                             double theta) const;
  // d(sigma endpoint)/d param via finite-differenced residual derivative.
  Eigen::Vector2d endpoint_param_sensitivity(const collocation::OrbitSegment& seg,
                                             double theta, const std::string& param,
                                             double rel_step = 1e-6) const;

  const collocation::OrbitSegment* cached() const;
  void set_cached(const collocation::OrbitSegment& seg);
  void clear_cache();
  void readapt();  // re-equidistribute the cached segment's mesh

  Eigen::Vector3d sphere_point(double theta) const;

 private:
  collocation::BvpProblem build_problem(double theta) const;

  Side side_;
  ModelSpec spec_;
  LinSetup setup_;
  CompactifiedSystem sys_;
  EquilibriumData eq_;
  std::optional<collocation::OrbitSegment> cache_;
};

struct Heteroclinic {
  collocation::OrbitSegment gamma_minus;
  collocation::OrbitSegment gamma_plus;
  double theta_minus = 0.0;
  double theta_plus = 0.0;
  double gap = 0.0;  // Lin gap eta at return
  std::string label;

  double Z() const { return gamma_minus.Z - gamma_plus.Z; }
  Eigen::Vector2d sigma_point() const;
  double max_U() const;

  // Concatenated profile (z, U, V, s) with z = 0 on Sigma.
  std::vector<Eigen::Vector4d> profile() const;
  std::string profile_to_csv() const;
  std::string profile_su_to_csv() const;  // (s, U) pairs
};

// Both families bound to one model; the unit of all heteroclinic work.
class GapSystem {
 public:
  GapSystem(const ModelSpec& spec, const LinSetup& setup = {});

  void set_model(const ModelSpec& spec);
  const ModelSpec& model() const { return minus_.model(); }

  SegmentFamily& minus() { return minus_; }
  SegmentFamily& plus() { return plus_; }

  // Solves both segments; returns the 2-vector gap in Sigma coordinates (U,V).
  Eigen::Vector2d gap(double theta_minus, double theta_plus);
  Eigen::Matrix2d gap_theta_jacobian();  // at the segments of the last gap()
  Eigen::Vector2d gap_param_derivative(const std::string& param);

  const collocation::OrbitSegment& last_minus() const { return *minus_.cached(); }
  const collocation::OrbitSegment& last_plus() const { return *plus_.cached(); }
  double last_theta_minus() const { return last_theta_minus_; }
  double last_theta_plus() const { return last_theta_plus_; }

 private:
  SegmentFamily minus_;
  SegmentFamily plus_;
  double last_theta_minus_ = std::numbers::pi / 2;
  double last_theta_plus_ = std::numbers::pi / 2;
};

struct CloseGapOptions {
  double tol = 1e-10;
  int max_iter = 25;
};

Heteroclinic close_gap(GapSystem& gs, double theta_minus, double theta_plus,
                       const CloseGapOptions& opts = {});

// Spec-shaped single-segment entry points.
collocation::OrbitSegment gamma_minus(double theta, const ModelSpec& spec,
                                      const LinSetup& setup = {});
collocation::OrbitSegment gamma_plus(double theta, const ModelSpec& spec,
                                     const LinSetup& setup = {});

// --- manifold traces in Sigma ------------------------------------------------

struct TraceOptions {
  int n_samples = 400;   // target sample count along the trace curve
  double delta = 1e-3;   // theta range (delta, pi - delta)
  double sigma_step = 0.0;  // arc step in Sigma; 0 = auto from n_samples
  double theta_step_min = 1e-14;
  double point_cap = 0.0;  // stop when ||(U,V)|| exceeds this; 0 = auto 12 beta_t
  int max_samples = 50000;
};

struct TraceSample {
  double theta = 0.0;
  Eigen::Vector2d point;  // (U, V) on Sigma
};

struct ManifoldTrace {
  Side side = Side::Minus;
  std::vector<TraceSample> samples;  // ordered by theta
  std::vector<std::pair<double, double>> excluded;

  // Sparse warm-start anchors along the walk; intersection refinement re-seeds
  // the segment family from the anchor nearest a crossing candidate.
  struct Anchor {
    std::size_t sample_index = 0;
    collocation::OrbitSegment segment;
  };
  std::vector<Anchor> anchors;
  const Anchor* nearest_anchor(std::size_t sample_index) const;

  std::string to_csv() const;
};

ManifoldTrace trace_manifold(SegmentFamily& family, const TraceOptions& opts = {});
std::pair<ManifoldTrace, ManifoldTrace> trace_manifolds(GapSystem& gs,
                                                        const TraceOptions& opts = {});

// --- intersections ------------------------------------------------------------

struct SigmaIntersection {
  double theta_minus = 0.0;
  double theta_plus = 0.0;
  Eigen::Vector2d point;
  double crossing_angle = 0.0;  // radians between the two trace curves
  bool tangency_warning = false;
  std::string label;
};

struct FindOptions {
  double tangency_angle = 1e-3;
  double dedup_tol = 1e-8;  // Sigma-point distance identifying one heteroclinic
  CloseGapOptions gap;
};

std::vector<SigmaIntersection> find_intersections(const ManifoldTrace& trace_u,
                                                  const ManifoldTrace& trace_s,
                                                  GapSystem& gs,
                                                  const FindOptions& opts = {});

// --- continuation problems -----------------------------------------------------

// Reduced branch problem: x = (theta-, theta+), g = gap, mu = a model parameter.
class HeteroclinicProblem : public continuation::Problem {
 public:
  HeteroclinicProblem(const ModelSpec& base, std::string param,
                      const LinSetup& setup = {});
  int dim() const override { return 2; }
  Eigen::VectorXd eval(const Eigen::VectorXd& x, double mu) override;
  void jacobian(const Eigen::VectorXd& x, double mu, Eigen::MatrixXd* dg_dx,
                Eigen::VectorXd* dg_dmu) override;
  std::map<std::string, double> monitors(const Eigen::VectorXd& x, double mu) override;
  std::shared_ptr<const void> snapshot() const override;
  void restore(const std::shared_ptr<const void>& state) override;

  GapSystem& gap_system() { return gs_; }
  const std::string& param() const { return param_; }
  continuation::StepControl default_step_control() const;

 private:
  ModelSpec base_;
  std::string param_;
  GapSystem gs_;
};

// --- two-parameter tipping curves ----------------------------------------------

struct TippingCurve {
  std::string kind;  // "SN" | "TR"
  std::pair<std::string, std::string> plane;
  std::vector<Eigen::Vector2d> points;  // (param1, param2)
  double asymptote = std::numeric_limits<double>::quiet_NaN();
  bool closed_loop = false;

  std::string to_csv(const std::string& curve_id) const;
};

struct TangencyOptions {
  double p1_min = -std::numeric_limits<double>::infinity();
  double p1_max = std::numeric_limits<double>::infinity();
  double p2_min = -std::numeric_limits<double>::infinity();
  double p2_max = std::numeric_limits<double>::infinity();
  int max_points = 2000;
  int point_budget = 0;
  double h0 = 0.02;
  double h_max = 0.08;
  bool stop_on_closed_loop = false;
  LinSetup setup;
};

// Continues a codimension-one (tangent) heteroclinic in two parameters. The
// augmented unknowns are (theta-, theta+, psi, p1) with the gap, the singular
// gap Jacobian direction M psi = 0, and |psi|^2 = 1 as equations.
TippingCurve continue_tangency(const ModelSpec& at_fold, double theta_minus,
                               double theta_plus, const std::string& p1,
                               const std::string& p2, const TangencyOptions& opts);

// Transcritical locus of the logistic model: zero of the linearized-trivial-state
// connection coefficient, traced in (p1, p2).
double tr_test_function(const ModelSpec& spec);
double locate_tr(const ModelSpec& base, const std::string& param, double lo, double hi,
                 double tol = 1e-10);
TippingCurve trace_tr_curve(const ModelSpec& seed_model, const std::string& p1,
                            const std::string& p2, const TangencyOptions& opts);

}  // namespace tipping::lin
