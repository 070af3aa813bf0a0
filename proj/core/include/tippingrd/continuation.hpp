#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tippingrd/errors.hpp"

namespace tipping::continuation {

// Reduced nonlinear system g(x, mu) = 0 with dim(g) = dim(x) = n, smooth in the
// continuation parameter mu. Implementations own the heavy state behind a point
// (orbit segments, warm starts); eval() must leave that state consistent with
// its arguments so monitors() can read it.
class Problem {
 public:
  virtual ~Problem() = default;
  virtual int dim() const = 0;
  virtual Eigen::VectorXd eval(const Eigen::VectorXd& x, double mu) = 0;
  // dg_dx is n x n, dg_dmu is n x 1, both at (x, mu).
  virtual void jacobian(const Eigen::VectorXd& x, double mu, Eigen::MatrixXd* dg_dx,
                        Eigen::VectorXd* dg_dmu) = 0;
  virtual std::map<std::string, double> monitors(const Eigen::VectorXd& x, double mu) {
    (void)x;
    (void)mu;
    return {};
  }
  // Snapshot/rollback of warm-start state across rejected steps.
  virtual std::shared_ptr<const void> snapshot() const { return nullptr; }
  virtual void restore(const std::shared_ptr<const void>&) {}
};

struct BranchPoint {
  Eigen::VectorXd x;
  double mu = 0.0;
  Eigen::VectorXd tangent;  // normalized (x, mu) tangent in the weighted metric
  std::map<std::string, double> monitors;
  std::vector<std::string> tags;
};

enum class EventKind { Fold, Transcritical, GapZero, User };

const char* event_kind_name(EventKind kind);

struct Event {
  int index = 0;  // index of the branch point preceding the event
  EventKind kind = EventKind::Fold;
  double mu = 0.0;
  Eigen::VectorXd x;
  Eigen::VectorXd null_direction;
  std::map<std::string, double> monitors;
};

struct Branch {
  std::string primary_param;
  int direction = +1;
  std::vector<BranchPoint> points;
  std::vector<Event> events;

  std::string to_csv() const;          // one row per point: mu + monitors + tags
  std::string events_to_json() const;  // sidecar
};

struct FoldPoint {
  double mu = 0.0;
  Eigen::VectorXd x;
  Eigen::VectorXd null_direction;
  std::map<std::string, double> monitors;
};

struct StepControl {
  double h0 = 0.02;
  double h_min = 1e-6;
  double h_max = 0.1;
  double grow = 1.3;
  double shrink = 0.5;
  int grow_iters = 3;    // grow step if corrector took <= this
  int shrink_iters = 8;  // shrink step if corrector took >= this
  int max_corrector = 12;
  double corrector_tol = 1e-10;
  Eigen::VectorXd x_weights;  // weighted arclength metric; empty = all ones
  double mu_weight = 1.0;
};

struct StopCondition {
  double mu_min = -std::numeric_limits<double>::infinity();
  double mu_max = std::numeric_limits<double>::infinity();
  int max_points = 5000;   // hard safety: exceeding it throws StopConditionNever
  int point_budget = 0;    // soft stop when > 0
  std::function<bool(const BranchPoint&)> predicate;
  bool stop_on_closed_loop = false;
  double loop_tol = 1e-3;
};

struct MonitorWatch {
  std::string name;
  EventKind kind = EventKind::User;
};

struct EngineOptions {
  StepControl step;
  StopCondition stop;
  std::vector<MonitorWatch> watches;
  double tol_event = 1e-8;  // in the parameter
  bool localize_folds = true;
};

// Pseudo-arclength continuation with tangents from the kernel of [dg/dx dg/dmu]
// and event localization by secant iteration along the branch.
Branch continue_branch(Problem& problem, const Eigen::VectorXd& x0, double mu0,
                       int direction, const EngineOptions& opts,
                       const std::string& primary_param);

std::vector<FoldPoint> detect_fold(const Branch& branch);
std::vector<double> detect_transcritical(const Branch& branch);

}  // namespace tipping::continuation
