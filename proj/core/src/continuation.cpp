#include "tippingrd/continuation.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tipping::continuation {

namespace {

Eigen::VectorXd weights_or_ones(const StepControl& sc, int n) {
  if (sc.x_weights.size() == 0) return Eigen::VectorXd::Ones(n);
  if (sc.x_weights.size() != n) throw ConfigError("x_weights size mismatch");
  return sc.x_weights;
}

// Normalized kernel vector of the n x (n+1) matrix [dg_dx dg_dmu], oriented to
// have positive inner product with `orient` in the weighted metric.
Eigen::VectorXd branch_tangent(Problem& problem, const Eigen::VectorXd& x, double mu,
                               const Eigen::VectorXd& w, double w_mu,
                               const Eigen::VectorXd& orient) {
  const int n = problem.dim();
  Eigen::MatrixXd gx;
  Eigen::VectorXd gmu;
  problem.jacobian(x, mu, &gx, &gmu);
  Eigen::MatrixXd A(n, n + 1);
  A.leftCols(n) = gx;
  A.col(n) = gmu;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  lu.setThreshold(1e-12);
  Eigen::MatrixXd kern = lu.kernel();
  Eigen::VectorXd t = kern.col(0);
  if (kern.cols() > 1) {
    // Pick the kernel vector best aligned with the previous tangent.
    double best = -1.0;
    for (int c = 0; c < kern.cols(); ++c) {
      const double score = std::abs(kern.col(c).normalized().dot(orient));
      if (score > best) {
        best = score;
        t = kern.col(c);
      }
    }
  }
  double norm2 = w_mu * w_mu * t[n] * t[n];
  for (int i = 0; i < n; ++i) norm2 += w[i] * w[i] * t[i] * t[i];
  t /= std::sqrt(norm2);
  // Weighted orientation test.
  double dot = w_mu * w_mu * t[n] * orient[n];
  for (int i = 0; i < n; ++i) dot += w[i] * w[i] * t[i] * orient[i];
  if (dot < 0.0) t = -t;
  return t;
}

struct CorrectorResult {
  Eigen::VectorXd x;
  double mu = 0.0;
  int iterations = 0;
};

// Newton on [g(x,mu); t.((x,mu)-pred)] = 0 in the weighted metric.
CorrectorResult correct(Problem& problem, const Eigen::VectorXd& x_pred, double mu_pred,
                        const Eigen::VectorXd& tangent, const Eigen::VectorXd& w,
                        double w_mu, const StepControl& sc) {
  const int n = problem.dim();
  Eigen::VectorXd x = x_pred;
  double mu = mu_pred;
  Eigen::VectorXd g = problem.eval(x, mu);
  CorrectorResult out;
  for (int it = 0; it < sc.max_corrector; ++it) {
    double arc = 0.0;
    for (int i = 0; i < n; ++i) arc += w[i] * w[i] * tangent[i] * (x[i] - x_pred[i]);
    arc += w_mu * w_mu * tangent[n] * (mu - mu_pred);
    const double rnorm = std::max(g.lpNorm<Eigen::Infinity>(), std::abs(arc));
    if (rnorm <= sc.corrector_tol) {
      out.x = x;
      out.mu = mu;
      out.iterations = it;
      return out;
    }
    Eigen::MatrixXd gx;
    Eigen::VectorXd gmu;
    problem.jacobian(x, mu, &gx, &gmu);
    Eigen::MatrixXd J(n + 1, n + 1);
    J.topLeftCorner(n, n) = gx;
    J.topRightCorner(n, 1) = gmu;
    for (int i = 0; i < n; ++i) J(n, i) = w[i] * w[i] * tangent[i];
    J(n, n) = w_mu * w_mu * tangent[n];
    Eigen::VectorXd rhs(n + 1);
    rhs.head(n) = -g;
    rhs[n] = -arc;
    Eigen::VectorXd step = J.fullPivLu().solve(rhs);
    if (!step.allFinite()) {
      throw NumericalError(ErrorCode::SingularJacobian, "corrector linear solve failed");
    }
    double lambda = 1.0;
    bool accepted = false;
    while (lambda >= 1.0 / 64.0) {
      const Eigen::VectorXd xt = x + lambda * step.head(n);
      const double mut = mu + lambda * step[n];
      Eigen::VectorXd gt;
      try {
        gt = problem.eval(xt, mut);
      } catch (const NumericalError&) {
        lambda *= 0.5;
        continue;
      }
      double arct = 0.0;
      for (int i = 0; i < n; ++i) arct += w[i] * w[i] * tangent[i] * (xt[i] - x_pred[i]);
      arct += w_mu * w_mu * tangent[n] * (mut - mu_pred);
      const double rt = std::max(gt.lpNorm<Eigen::Infinity>(), std::abs(arct));
      if (rt < rnorm * (1.0 - 1e-4 * lambda) || rt <= sc.corrector_tol) {
        x = xt;
        mu = mut;
        g = gt;
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      throw NumericalError(ErrorCode::NewtonDiverged, "branch corrector stalled");
    }
  }
  throw NumericalError(ErrorCode::NewtonDiverged, "branch corrector did not converge");
}

double weighted_distance(const Eigen::VectorXd& xa, double mua, const Eigen::VectorXd& xb,
                         double mub, const Eigen::VectorXd& w, double w_mu) {
  double d2 = w_mu * w_mu * (mua - mub) * (mua - mub);
  for (int i = 0; i < xa.size(); ++i) {
    d2 += w[i] * w[i] * (xa[i] - xb[i]) * (xa[i] - xb[i]);
  }
  return std::sqrt(d2);
}

}  // namespace

const char* event_kind_name(EventKind kind) {
  switch (kind) {
    case EventKind::Fold: return "fold";
    case EventKind::Transcritical: return "transcritical";
    case EventKind::GapZero: return "gap_zero";
    case EventKind::User: return "user";
  }
  return "unknown";
}

Branch continue_branch(Problem& problem, const Eigen::VectorXd& x0, double mu0,
                       int direction, const EngineOptions& opts,
                       const std::string& primary_param) {
  const int n = problem.dim();
  const StepControl& sc = opts.step;
  const Eigen::VectorXd w = weights_or_ones(sc, n);
  const double w_mu = sc.mu_weight;

  Branch branch;
  branch.primary_param = primary_param;
  branch.direction = direction;

  // Initial solve at fixed mu (natural continuation for the first point).
  Eigen::VectorXd x = x0;
  {
    Eigen::VectorXd t_fix = Eigen::VectorXd::Zero(n + 1);
    t_fix[n] = 1.0;
    CorrectorResult r0 = correct(problem, x, mu0, t_fix, w, w_mu, sc);
    x = r0.x;
  }

  BranchPoint p0;
  p0.x = x;
  p0.mu = mu0;
  p0.monitors = problem.monitors(x, mu0);

  Eigen::VectorXd orient = Eigen::VectorXd::Zero(n + 1);
  orient[n] = direction >= 0 ? 1.0 : -1.0;
  Eigen::VectorXd tangent = branch_tangent(problem, x, mu0, w, w_mu, orient);
  if (std::abs(tangent[n]) > 1e-10) {
    // Make sure the initial march follows the requested mu direction.
    if (tangent[n] * (direction >= 0 ? 1.0 : -1.0) < 0.0) tangent = -tangent;
  }
  p0.tangent = tangent;
  branch.points.push_back(p0);

  // Sign bookkeeping for event test functions.
  auto monitor_value = [&](const BranchPoint& bp, const std::string& name) {
    auto it = bp.monitors.find(name);
    return it == bp.monitors.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
  };

  double h = sc.h0;
  while (true) {
    const BranchPoint& last = branch.points.back();
    if (static_cast<int>(branch.points.size()) >= opts.stop.max_points) {
      throw NumericalError(ErrorCode::StopConditionNever,
                           "stop condition not reached within max points");
    }
    if (opts.stop.point_budget > 0 &&
        static_cast<int>(branch.points.size()) >= opts.stop.point_budget) {
      break;
    }

    auto state = problem.snapshot();
    BranchPoint next;
    bool stepped = false;
    while (h >= sc.h_min) {
      Eigen::VectorXd x_pred = last.x;
      for (int i = 0; i < n; ++i) x_pred[i] += h * last.tangent[i];
      const double mu_pred = last.mu + h * last.tangent[n];
      try {
        CorrectorResult r = correct(problem, x_pred, mu_pred, last.tangent, w, w_mu, sc);
        next.x = r.x;
        next.mu = r.mu;
        next.monitors = problem.monitors(r.x, r.mu);
        next.tangent = branch_tangent(problem, r.x, r.mu, w, w_mu, last.tangent);
        stepped = true;
        if (r.iterations <= sc.grow_iters) h = std::min(h * sc.grow, sc.h_max);
        else if (r.iterations >= sc.shrink_iters) h = std::max(h * sc.shrink, sc.h_min);
        break;
      } catch (const NumericalError&) {
        problem.restore(state);
        h *= sc.shrink;
      }
    }
    if (!stepped) {
      throw NumericalError(ErrorCode::StepFailure,
                           "continuation step failed below minimum step size");
    }

    // Event detection between `last` and `next`.
    const int idx = static_cast<int>(branch.points.size()) - 1;
    if (opts.localize_folds && last.tangent[n] * next.tangent[n] < 0.0) {
      // Secant iteration in arclength on the tangent mu-component.
      double eta_lo = 0.0, tau_lo = last.tangent[n];
      double eta_hi = weighted_distance(last.x, last.mu, next.x, next.mu, w, w_mu);
      double tau_hi = next.tangent[n];
      Eigen::VectorXd xe = next.x;
      double mue = next.mu;
      Eigen::VectorXd te = next.tangent;
      std::map<std::string, double> mon_e = next.monitors;
      double mu_prev_it = next.mu;
      for (int it = 0; it < 40; ++it) {
        const double eta = eta_lo - tau_lo * (eta_hi - eta_lo) / (tau_hi - tau_lo);
        Eigen::VectorXd x_pred = last.x;
        for (int i = 0; i < n; ++i) x_pred[i] += eta * last.tangent[i];
        const double mu_pred = last.mu + eta * last.tangent[n];
        CorrectorResult r;
        try {
          r = correct(problem, x_pred, mu_pred, last.tangent, w, w_mu, sc);
        } catch (const NumericalError&) {
          break;  // keep the best bracket endpoint found so far
        }
        xe = r.x;
        mue = r.mu;
        te = branch_tangent(problem, r.x, r.mu, w, w_mu, last.tangent);
        mon_e = problem.monitors(r.x, r.mu);
        const double tau = te[n];
        if ((tau < 0.0) == (tau_lo < 0.0)) {
          eta_lo = eta;
          tau_lo = tau;
        } else {
          eta_hi = eta;
          tau_hi = tau;
        }
        if (std::abs(mue - mu_prev_it) <= opts.tol_event || std::abs(tau) < 1e-13) break;
        mu_prev_it = mue;
      }
      Event ev;
      ev.index = idx;
      ev.kind = EventKind::Fold;
      ev.mu = mue;
      ev.x = xe;
      ev.null_direction = te;
      ev.monitors = mon_e;
      branch.events.push_back(ev);
    }

    for (const MonitorWatch& watch : opts.watches) {
      const double va = monitor_value(last, watch.name);
      const double vb = monitor_value(next, watch.name);
      if (!std::isfinite(va) || !std::isfinite(vb) || va * vb >= 0.0) continue;
      double eta_lo = 0.0, f_lo = va;
      double eta_hi = weighted_distance(last.x, last.mu, next.x, next.mu, w, w_mu);
      double f_hi = vb;
      Eigen::VectorXd xe = next.x;
      double mue = next.mu;
      std::map<std::string, double> mon_e = next.monitors;
      double mu_prev_it = next.mu;
      for (int it = 0; it < 40; ++it) {
        const double eta = eta_lo - f_lo * (eta_hi - eta_lo) / (f_hi - f_lo);
        Eigen::VectorXd x_pred = last.x;
        for (int i = 0; i < n; ++i) x_pred[i] += eta * last.tangent[i];
        const double mu_pred = last.mu + eta * last.tangent[n];
        CorrectorResult r;
        try {
          r = correct(problem, x_pred, mu_pred, last.tangent, w, w_mu, sc);
        } catch (const NumericalError&) {
          break;
        }
        xe = r.x;
        mue = r.mu;
        mon_e = problem.monitors(r.x, r.mu);
        const double f = mon_e.count(watch.name) ? mon_e[watch.name]
                                                 : std::numeric_limits<double>::quiet_NaN();
        if (!std::isfinite(f)) break;
        if ((f < 0.0) == (f_lo < 0.0)) {
          eta_lo = eta;
          f_lo = f;
        } else {
          eta_hi = eta;
          f_hi = f;
        }
        if (std::abs(mue - mu_prev_it) <= opts.tol_event || std::abs(f) < 1e-13) break;
        mu_prev_it = mue;
      }
      Event ev;
      ev.index = idx;
      ev.kind = watch.kind;
      ev.mu = mue;
      ev.x = xe;
      ev.monitors = mon_e;
      branch.events.push_back(ev);
    }

    // Re-establish the accepted point as the warm state (event localization may
    // have wandered off it).
    if (!branch.events.empty() && branch.events.back().index == idx) {
      problem.eval(next.x, next.mu);
    }

    branch.points.push_back(next);

    if (next.mu < opts.stop.mu_min || next.mu > opts.stop.mu_max) break;
    if (opts.stop.predicate && opts.stop.predicate(next)) break;
    if (opts.stop.stop_on_closed_loop && branch.points.size() > 10) {
      const BranchPoint& first = branch.points.front();
      const double d =
          weighted_distance(next.x, next.mu, first.x, first.mu, w, w_mu);
      double tdot = w_mu * w_mu * next.tangent[n] * first.tangent[n];
      for (int i = 0; i < n; ++i) {
        tdot += w[i] * w[i] * next.tangent[i] * first.tangent[i];
      }
      if (d < opts.stop.loop_tol && tdot > 0.0) {
        branch.points.back().tags.push_back("closed_loop");
        break;
      }
    }
  }
  return branch;
}

std::vector<FoldPoint> detect_fold(const Branch& branch) {
  std::vector<FoldPoint> folds;
  if (branch.points.size() < 3) return folds;
  for (const Event& ev : branch.events) {
    if (ev.kind != EventKind::Fold) continue;
    FoldPoint fp;
    fp.mu = ev.mu;
    fp.x = ev.x;
    fp.null_direction = ev.null_direction;
    fp.monitors = ev.monitors;
    folds.push_back(fp);
  }
  return folds;
}

std::vector<double> detect_transcritical(const Branch& branch) {
  std::vector<double> out;
  for (const Event& ev : branch.events) {
    if (ev.kind == EventKind::Transcritical) out.push_back(ev.mu);
  }
  return out;
}

std::string Branch::to_csv() const {
  std::set<std::string> keys;
  for (const BranchPoint& p : points) {
    for (const auto& [k, v] : p.monitors) keys.insert(k);
  }
  std::ostringstream os;
  os.precision(16);
  os << primary_param;
  for (const auto& k : keys) os << "," << k;
  os << ",tags\n";
  for (const BranchPoint& p : points) {
    os << p.mu;
    for (const auto& k : keys) {
      auto it = p.monitors.find(k);
      os << ",";
      if (it != p.monitors.end()) os << it->second;
    }
    os << ",";
    for (size_t i = 0; i < p.tags.size(); ++i) os << (i ? ";" : "") << p.tags[i];
    os << "\n";
  }
  return os.str();
}

std::string Branch::events_to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const Event& ev : events) {
    nlohmann::json e;
    e["index"] = ev.index;
    e["kind"] = event_kind_name(ev.kind);
    e["param"] = primary_param;
    e["value"] = ev.mu;
    e["monitors"] = ev.monitors;
    arr.push_back(e);
  }
  return arr.dump(2);
}

}  // namespace tipping::continuation
