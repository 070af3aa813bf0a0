#include "tippingrd/lin.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tippingrd/log.hpp"

namespace tipping::lin {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kHalfPi = std::numbers::pi / 2;

void require_theta(double theta) {
  if (!(theta > 0.0 && theta < kPi)) {
    throw ConfigError("boundary angle theta must lie in (0, pi)");
  }
}

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a[0] * b[1] - a[1] * b[0];
}

}  // namespace

double LinSetup::eps_for(Side side) const {
  const double given = side == Side::Minus ? eps_minus : eps_plus;
  if (given > 0.0) return given;
  return 1e-4 * (1.0 + 1.0);  // ||p+-|| = 1 for the extinction equilibria
}

// --- SegmentFamily -----------------------------------------------------------

SegmentFamily::SegmentFamily(Side side, const ModelSpec& spec, const LinSetup& setup)
    : side_(side), spec_(spec), setup_(setup), sys_(CompactifiedSystem::from_spec(spec)) {
  auto [m, p] = equilibria(sys_);
  eq_ = side_ == Side::Minus ? m : p;
}

void SegmentFamily::set_model(const ModelSpec& spec) {
  spec_ = spec;
  sys_ = CompactifiedSystem::from_spec(spec);
  auto [m, p] = equilibria(sys_);
  eq_ = side_ == Side::Minus ? m : p;
}

Eigen::Vector3d SegmentFamily::sphere_point(double theta) const {
  const double eps = setup_.eps_for(side_);
  if (side_ == Side::Minus) {
    // Gamma-(0) = p- + eps (v2 cos th + v3 sin th), inside s > -1 for th in (0,pi)
    return eq_.point + eps * (eq_.eigenvectors.col(1) * std::cos(theta) +
                              eq_.eigenvectors.col(2) * std::sin(theta));
  }
  // Gamma+(0) = p+ + eps (v1 cos th + n sin th) with the inward normal n = -v3,
  // so the half-circle stays inside s < +1.
  return eq_.point + eps * (eq_.eigenvectors.col(0) * std::cos(theta) -
                            eq_.eigenvectors.col(2) * std::sin(theta));
}

collocation::BvpProblem SegmentFamily::build_problem(double theta) const {
  collocation::BvpProblem prob;
  const CompactifiedSystem sys = sys_;
  prob.ode.f = [sys](const Eigen::Vector3d& u, const Eigen::VectorXd& sc) {
    return (sc[0] * sys.rhs(u)).eval();
  };
  prob.ode.df_du = [sys](const Eigen::Vector3d& u, const Eigen::VectorXd& sc) {
    return (sc[0] * sys.jacobian(u)).eval();
  };
  // Sphere rows are normalized by eps so that theta enters the residual at
  // unit scale; this keeps sub-activation theta corrections visible to Newton.
  const Eigen::Vector3d q = sphere_point(theta);
  const double inv_eps = 1.0 / setup_.eps_for(side_);
  for (int d = 0; d < 3; ++d) {
    prob.bcs.push_back({[q, d, inv_eps](const Eigen::Vector3d& l, const Eigen::Vector3d&,
                                        const Eigen::VectorXd&) {
                          return (l[d] - q[d]) * inv_eps;
                        },
                        "sphere"});
  }
  prob.bcs.push_back({[](const Eigen::Vector3d&, const Eigen::Vector3d& r,
                         const Eigen::VectorXd&) { return r[2]; },
                      "section"});
  prob.n_scalars = 1;
  return prob;
}

collocation::OrbitSegment SegmentFamily::trivial_segment() const {
  return linear_guess(kHalfPi);
}

collocation::OrbitSegment SegmentFamily::linear_guess(double theta) const {
  collocation::OrbitSegment seg;
  seg.mesh = collocation::Mesh::uniform(setup_.mesh_intervals, setup_.mesh_degree);
  const Eigen::Vector3d q = sphere_point(theta);
  if (std::abs(q[2]) >= 1.0) {
    // sin(theta) underflowed against eps: the start lies numerically in the
    // invariant plane and can never reach the section.
    throw NumericalError(ErrorCode::NewtonDiverged,
                         "boundary point lies in the invariant plane S-+");
  }
  const double A = std::atanh(q[2]);
  const double Z = -2.0 * A / sys_.alpha;
  // Planar growth rate toward the section: l2 forward from p-, l1 backward
  // from p+ (Z < 0 makes the exponent positive along tau either way).
  const double rate = side_ == Side::Minus ? eq_.eigenvalues[1] : eq_.eigenvalues[0];
  const double u_cap = 6.0 * std::max(sys_.params.beta_t, 1e-6);
  seg.coeffs.resize(3, seg.mesh.n_nodes());
  const int m = seg.mesh.degree;
  for (int j = 0; j < seg.mesh.n_intervals(); ++j) {
    const double a = seg.mesh.breakpoints[j];
    const double h = seg.mesh.breakpoints[j + 1] - a;
    for (int k = (j == 0 ? 0 : 1); k <= m; ++k) {
      const double t = a + h * double(k) / m;
      double u = q[0] * std::exp(rate * Z * t);
      u = std::clamp(u, -u_cap, u_cap);
      seg.coeffs.col(j * m + k) =
          Eigen::Vector3d(u, rate * u, std::tanh(A * (1.0 - t)));
    }
  }
  seg.coeffs.col(0) = q;
  seg.Z = Z;
  seg.scalars = Eigen::VectorXd::Constant(1, Z);
  seg.bc_data.eps = setup_.eps_for(side_);
  seg.bc_data.theta = theta;
  seg.bc_data.equilibrium = side_ == Side::Minus ? 0 : 1;
  seg.residual_norm = -1.0;
  return seg;
}

collocation::OrbitSegment SegmentFamily::solve(double theta,
                                               const collocation::OrbitSegment* warm) {
  require_theta(theta);

  auto attempt_once = [&](double th, const collocation::OrbitSegment& guess) {
    collocation::SolveOptions opts = setup_.solve;
    // A sub-activation theta change leaves the warm residual below tolerance;
    // one forced step applies the linear correction exactly.
    if (guess.bc_data.theta != th) opts.min_newton = std::max(opts.min_newton, 1);
    collocation::SolveResult res = collocation::solve(build_problem(th), guess, opts);
    res.segment.bc_data.eps = setup_.eps_for(side_);
    res.segment.bc_data.theta = th;
    res.segment.bc_data.equilibrium = side_ == Side::Minus ? 0 : 1;
    cache_ = res.segment;
    return res.segment;
  };
  // The family is single-valued in theta, so falling back to the linearized
  // guess cannot land on a different solution branch.
  auto attempt_at = [&](double th, const collocation::OrbitSegment& guess) {
    try {
      return attempt_once(th, guess);
    } catch (const NumericalError&) {
      return attempt_once(th, linear_guess(th));
    }
  };

  if (warm != nullptr) return attempt_at(theta, *warm);

  // Walk theta from the cached angle; the family is single-valued in theta
  // (s is strictly monotone along segments), so warm walking cannot jump branch.
  if (!cache_) cache_ = trivial_segment();
  collocation::OrbitSegment current = *cache_;
  double theta_c = current.bc_data.theta;
  double step = theta - theta_c;
  bool reset_tried = false;
  int guard = 0;
  while (true) {
    if (++guard > 4000) {
      throw NumericalError(ErrorCode::NewtonDiverged,
                           "segment walk exceeded iteration budget");
    }
    const double remaining = theta - theta_c;
    double theta_n = theta;
    if (remaining != 0.0) {
      if (std::abs(step) > std::abs(remaining) || step * remaining <= 0.0) {
        step = remaining;
      }
      theta_n = theta_c + step;
    }
    try {
      current = attempt_at(theta_n, current);
      theta_c = theta_n;
      if (theta_c == theta) return current;
      step *= 2.0;
    } catch (const NumericalError&) {
      if (remaining == 0.0) {
        // Stale cache (parameters changed since it was computed): restart the
        // walk from the exact trivial solution once.
        if (reset_tried) throw;
        reset_tried = true;
        current = trivial_segment();
        theta_c = kHalfPi;
        step = theta - theta_c;
        continue;
      }
      step *= 0.25;
      if (std::abs(step) < 1e-13) {
        throw NumericalError(ErrorCode::NewtonDiverged,
                             "segment family: no solution reachable at requested theta "
                             "(trajectory never reaches the section)");
      }
    }
  }
}

Eigen::Vector2d SegmentFamily::sigma_endpoint(const collocation::OrbitSegment& seg) const {
  return seg.right().head<2>();
}

Eigen::VectorXd SegmentFamily::full_theta_sensitivity(const collocation::OrbitSegment& seg,
                                                      double theta) const {
  const collocation::BvpProblem prob = build_problem(theta);
  const int rows = 3 * seg.mesh.n_intervals() * seg.mesh.degree + 4;
  Eigen::VectorXd minus_dR = Eigen::VectorXd::Zero(rows);
  Eigen::Vector3d dq;
  if (side_ == Side::Minus) {
    dq = -eq_.eigenvectors.col(1) * std::sin(theta) +
         eq_.eigenvectors.col(2) * std::cos(theta);
  } else {
    dq = -eq_.eigenvectors.col(0) * std::sin(theta) -
         eq_.eigenvectors.col(2) * std::cos(theta);
  }
  // Sphere rows are R = (u(0) - q(theta))/eps with dq/dtheta = eps * (..), so
  // -dR/dtheta reduces to the unit-scale direction above.
  const int bc0 = rows - 4;
  for (int d = 0; d < 3; ++d) minus_dR[bc0 + d] = dq[d];
  return collocation::solution_sensitivity(prob, seg, minus_dR);
}

collocation::OrbitSegment SegmentFamily::predict(const collocation::OrbitSegment& seg,
                                                 double theta_new) const {
  const Eigen::VectorXd dX = full_theta_sensitivity(seg, seg.bc_data.theta);
  const double dtheta = theta_new - seg.bc_data.theta;
  collocation::OrbitSegment out = seg;
  const int nn = seg.mesh.n_nodes();
  for (int q = 0; q < nn; ++q) {
    out.coeffs.col(q) += dtheta * dX.segment<3>(3 * q);
  }
  for (int k = 0; k < out.scalars.size(); ++k) {
    out.scalars[k] += dtheta * dX[3 * nn + k];
  }
  out.Z = out.scalars.size() ? out.scalars[0] : out.Z;
  // Keep the origin theta so the solver treats this as a changed-theta guess.
  return out;
}

Eigen::Vector2d SegmentFamily::endpoint_theta_sensitivity(
    const collocation::OrbitSegment& seg, double theta) const {
  const Eigen::VectorXd dX = full_theta_sensitivity(seg, theta);
  const int nn = seg.mesh.n_nodes();
  return Eigen::Vector2d(dX[3 * (nn - 1)], dX[3 * (nn - 1) + 1]);
}

Eigen::Vector2d SegmentFamily::endpoint_param_sensitivity(
    const collocation::OrbitSegment& seg, double theta, const std::string& param,
    double rel_step) const {
  const double v = spec_.get(param);
  const double h = rel_step * (1.0 + std::abs(v));
  SegmentFamily fp(side_, spec_.with(param, v + h), setup_);
  SegmentFamily fm(side_, spec_.with(param, v - h), setup_);
  const Eigen::VectorXd Rp = collocation::residual(fp.build_problem(theta), seg);
  const Eigen::VectorXd Rm = collocation::residual(fm.build_problem(theta), seg);
  const Eigen::VectorXd minus_dR = -(Rp - Rm) / (2.0 * h);
  const Eigen::VectorXd dX =
      collocation::solution_sensitivity(build_problem(theta), seg, minus_dR);
  const int nn = seg.mesh.n_nodes();
  return Eigen::Vector2d(dX[3 * (nn - 1)], dX[3 * (nn - 1) + 1]);
}

const collocation::OrbitSegment* SegmentFamily::cached() const {
  return cache_ ? &*cache_ : nullptr;
}

void SegmentFamily::set_cached(const collocation::OrbitSegment& seg) { cache_ = seg; }

void SegmentFamily::clear_cache() { cache_.reset(); }

void SegmentFamily::readapt() {
  if (!cache_) return;
  const collocation::Mesh mesh = collocation::adapt(*cache_);
  cache_ = collocation::interpolate(*cache_, mesh);
}

// --- Heteroclinic ------------------------------------------------------------

Eigen::Vector2d Heteroclinic::sigma_point() const {
  return gamma_minus.right().head<2>();
}

double Heteroclinic::max_U() const {
  return std::max(gamma_minus.max_component(0), gamma_plus.max_component(0));
}

std::vector<Eigen::Vector4d> Heteroclinic::profile() const {
  std::vector<Eigen::Vector4d> out;
  auto node_time = [](const collocation::Mesh& mesh, int q) {
    const int m = mesh.degree;
    const int j = std::min(q / m, mesh.n_intervals() - 1);
    const int k = q - j * m;
    return mesh.breakpoints[j] +
           (mesh.breakpoints[j + 1] - mesh.breakpoints[j]) * double(k) / m;
  };
  for (int q = 0; q < gamma_minus.mesh.n_nodes(); ++q) {
    const double t = node_time(gamma_minus.mesh, q);
    const double z = gamma_minus.Z * (t - 1.0);
    const Eigen::Vector3d u = gamma_minus.coeffs.col(q);
    out.emplace_back(z, u[0], u[1], u[2]);
  }
  for (int q = gamma_plus.mesh.n_nodes() - 2; q >= 0; --q) {
    const double t = node_time(gamma_plus.mesh, q);
    const double z = gamma_plus.Z * (t - 1.0);  // Z+ < 0: ascending z > 0
    const Eigen::Vector3d u = gamma_plus.coeffs.col(q);
    out.emplace_back(z, u[0], u[1], u[2]);
  }
  return out;
}

std::string Heteroclinic::profile_to_csv() const {
  std::ostringstream os;
  os.precision(16);
  os << "z,U,V,s\n";
  for (const auto& row : profile()) {
    os << row[0] << "," << row[1] << "," << row[2] << "," << row[3] << "\n";
  }
  return os.str();
}

std::string Heteroclinic::profile_su_to_csv() const {
  std::ostringstream os;
  os.precision(16);
  os << "s,U\n";
  for (const auto& row : profile()) os << row[3] << "," << row[1] << "\n";
  return os.str();
}

// --- GapSystem ---------------------------------------------------------------

GapSystem::GapSystem(const ModelSpec& spec, const LinSetup& setup)
    : minus_(Side::Minus, spec, setup), plus_(Side::Plus, spec, setup) {}

void GapSystem::set_model(const ModelSpec& spec) {
  minus_.set_model(spec);
  plus_.set_model(spec);
}

Eigen::Vector2d GapSystem::gap(double theta_minus, double theta_plus) {
  const collocation::OrbitSegment sm = minus_.solve(theta_minus);
  const collocation::OrbitSegment sp = plus_.solve(theta_plus);
  last_theta_minus_ = theta_minus;
  last_theta_plus_ = theta_plus;
  return minus_.sigma_endpoint(sm) - plus_.sigma_endpoint(sp);
}

Eigen::Matrix2d GapSystem::gap_theta_jacobian() {
  Eigen::Matrix2d M;
  M.col(0) = minus_.endpoint_theta_sensitivity(*minus_.cached(), last_theta_minus_);
  M.col(1) = -plus_.endpoint_theta_sensitivity(*plus_.cached(), last_theta_plus_);
  return M;
}

Eigen::Vector2d GapSystem::gap_param_derivative(const std::string& param) {
  return minus_.endpoint_param_sensitivity(*minus_.cached(), last_theta_minus_, param) -
         plus_.endpoint_param_sensitivity(*plus_.cached(), last_theta_plus_, param);
}

// --- close_gap ----------------------------------------------------------------

Heteroclinic close_gap(GapSystem& gs, double theta_minus, double theta_plus,
                       const CloseGapOptions& opts) {
  require_theta(theta_minus);
  require_theta(theta_plus);
  Eigen::Vector2d th(theta_minus, theta_plus);
  Eigen::Vector2d g = gs.gap(th[0], th[1]);
  double gnorm = g.norm();
  for (int it = 0; it <= opts.max_iter; ++it) {
    if (gnorm <= opts.tol) {
      Heteroclinic het;
      het.gamma_minus = gs.last_minus();
      het.gamma_plus = gs.last_plus();
      het.theta_minus = th[0];
      het.theta_plus = th[1];
      het.gap = gnorm;
      return het;
    }
    if (it == opts.max_iter) break;
    const Eigen::Matrix2d M = gs.gap_theta_jacobian();
    const double scale = M.colwise().norm().maxCoeff();
    if (std::abs(M.determinant()) <= 1e-14 * std::max(scale * scale, 1e-300)) {
      throw NumericalError(ErrorCode::SingularGapJacobian,
                           "gap Jacobian is singular (manifold tangency)");
    }
    const Eigen::Vector2d step = M.partialPivLu().solve(-g);
    double lambda = 1.0;
    bool accepted = false;
    while (lambda >= 1.0 / 1024.0) {
      const Eigen::Vector2d tht = th + lambda * step;
      if (!(tht[0] > 0.0 && tht[0] < kPi && tht[1] > 0.0 && tht[1] < kPi)) {
        lambda *= 0.5;
        continue;
      }
      Eigen::Vector2d gt;
      try {
        gt = gs.gap(tht[0], tht[1]);
      } catch (const NumericalError&) {
        lambda *= 0.5;
        continue;
      }
      if (gt.norm() < gnorm * (1.0 - 1e-4 * lambda) || gt.norm() <= opts.tol) {
        th = tht;
        g = gt;
        gnorm = gt.norm();
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      if (gnorm <= 10.0 * opts.tol) break;  // resolved to the solver noise floor
      throw NumericalError(ErrorCode::NewtonDiverged, "gap Newton stalled");
    }
  }
  if (gnorm <= 10.0 * opts.tol) {
    Heteroclinic het;
    het.gamma_minus = gs.last_minus();
    het.gamma_plus = gs.last_plus();
    het.theta_minus = th[0];
    het.theta_plus = th[1];
    het.gap = gnorm;
    return het;
  }
  throw NumericalError(ErrorCode::NewtonDiverged,
                       "gap Newton did not reach tolerance (eta = " +
                           std::to_string(gnorm) + ")");
}

collocation::OrbitSegment gamma_minus(double theta, const ModelSpec& spec,
                                      const LinSetup& setup) {
  SegmentFamily fam(Side::Minus, spec, setup);
  return fam.solve(theta);
}

collocation::OrbitSegment gamma_plus(double theta, const ModelSpec& spec,
                                     const LinSetup& setup) {
  SegmentFamily fam(Side::Plus, spec, setup);
  return fam.solve(theta);
}

// --- manifold traces -----------------------------------------------------------

ManifoldTrace trace_manifold(SegmentFamily& family, const TraceOptions& opts) {
  if (opts.n_samples < 100) throw ConfigError("trace needs n_samples >= 100");
  const double beta_t = family.system().params.beta_t;
  const double ds_target =
      opts.sigma_step > 0.0 ? opts.sigma_step : 16.0 * beta_t / opts.n_samples;
  const double theta_cap = (kPi - 2.0 * opts.delta) / opts.n_samples;
  const double point_cap = opts.point_cap > 0.0 ? opts.point_cap : 12.0 * beta_t;

  ManifoldTrace trace;
  trace.side = family.side();

  family.clear_cache();
  collocation::OrbitSegment center = family.solve(kHalfPi, nullptr);

  struct Walk {
    std::vector<TraceSample> samples;
    std::vector<std::pair<std::size_t, collocation::OrbitSegment>> anchors;
    double theta_end = 0.0;
    bool hit_boundary = false;
  };
  constexpr int kAnchorStride = 20;

  auto extrapolate = [](const collocation::OrbitSegment& seg, const Eigen::VectorXd& dX,
                        double dtheta) {
    collocation::OrbitSegment out = seg;
    const int nn = seg.mesh.n_nodes();
    for (int q = 0; q < nn; ++q) out.coeffs.col(q) += dtheta * dX.segment<3>(3 * q);
    for (int k = 0; k < out.scalars.size(); ++k) out.scalars[k] += dtheta * dX[3 * nn + k];
    if (out.scalars.size()) out.Z = out.scalars[0];
    return out;
  };

  auto walk = [&](int dir) {
    Walk w;
    const double bound = dir > 0 ? kPi - opts.delta : opts.delta;
    double theta_c = kHalfPi;
    collocation::OrbitSegment seg = center;
    Eigen::VectorXd sens = family.full_theta_sensitivity(seg, theta_c);
    Eigen::Vector2d pt_c = family.sigma_endpoint(seg);
    // Start conservatively: the Sigma response to theta is steepest right at
    // the trivial connection.
    const int nn = seg.mesh.n_nodes();
    const double gain0 =
        Eigen::Vector2d(sens[3 * (nn - 1)], sens[3 * (nn - 1) + 1]).norm();
    double dtheta = std::min(1e-6, ds_target / std::max(gain0, 1.0));
    int count = 0;
    while (count < opts.max_samples) {
      double theta_n = theta_c + dir * dtheta;
      bool last = false;
      if ((dir > 0 && theta_n >= bound) || (dir < 0 && theta_n <= bound)) {
        theta_n = bound;
        last = true;
      }
      try {
        const collocation::OrbitSegment guess =
            extrapolate(seg, sens, theta_n - theta_c);
        const collocation::OrbitSegment seg_n = family.solve(theta_n, &guess);
        const Eigen::Vector2d pt_n = family.sigma_endpoint(seg_n);
        const double moved = (pt_n - pt_c).norm();
        w.samples.push_back({theta_n, pt_n});
        if (count % kAnchorStride == 0) w.anchors.emplace_back(w.samples.size() - 1, seg_n);
        ++count;
        seg = seg_n;
        sens = family.full_theta_sensitivity(seg, theta_n);
        pt_c = pt_n;
        theta_c = theta_n;
        if (last) {
          w.hit_boundary = true;
          break;
        }
        // Past the cap the endpoint is running off along a blowup asymptote;
        // no further crossings of interest live out there.
        if (pt_n.norm() > point_cap) break;
        const double ratio = moved > 0.0 ? ds_target / moved : 3.0;
        dtheta *= std::clamp(ratio, 0.3, 3.0);
        dtheta = std::min(dtheta, theta_cap);
      } catch (const NumericalError&) {
        dtheta *= 0.25;
        if (dtheta < opts.theta_step_min * std::max(1.0, std::abs(theta_c))) break;
      }
    }
    if (!w.samples.empty()) w.anchors.emplace_back(w.samples.size() - 1, seg);
    w.theta_end = theta_c;
    return w;
  };

  Walk up = walk(+1);
  family.set_cached(center);
  Walk down = walk(-1);

  const std::size_t n_down = down.samples.size();
  trace.samples.reserve(up.samples.size() + n_down + 1);
  for (auto it = down.samples.rbegin(); it != down.samples.rend(); ++it) {
    trace.samples.push_back(*it);
  }
  trace.samples.push_back({kHalfPi, family.sigma_endpoint(center)});
  for (const auto& s : up.samples) trace.samples.push_back(s);

  for (const auto& [k, s] : down.anchors) {
    trace.anchors.push_back({n_down - 1 - k, s});
  }
  trace.anchors.push_back({n_down, center});
  for (const auto& [k, s] : up.anchors) {
    trace.anchors.push_back({n_down + 1 + k, s});
  }

  if (!down.hit_boundary) trace.excluded.emplace_back(opts.delta, down.theta_end);
  if (!up.hit_boundary) trace.excluded.emplace_back(up.theta_end, kPi - opts.delta);
  family.set_cached(center);
  return trace;
}

const ManifoldTrace::Anchor* ManifoldTrace::nearest_anchor(std::size_t sample_index) const {
  const Anchor* best = nullptr;
  std::size_t best_dist = std::numeric_limits<std::size_t>::max();
  for (const Anchor& a : anchors) {
    const std::size_t d = a.sample_index > sample_index ? a.sample_index - sample_index
                                                        : sample_index - a.sample_index;
    if (d < best_dist) {
      best_dist = d;
      best = &a;
    }
  }
  return best;
}

std::pair<ManifoldTrace, ManifoldTrace> trace_manifolds(GapSystem& gs,
                                                        const TraceOptions& opts) {
  ManifoldTrace u = trace_manifold(gs.minus(), opts);
  ManifoldTrace s = trace_manifold(gs.plus(), opts);
  return {u, s};
}

std::string ManifoldTrace::to_csv() const {
  std::ostringstream os;
  os.precision(16);
  os << "theta,U,V\n";
  for (const auto& s : samples) os << s.theta << "," << s.point[0] << "," << s.point[1] << "\n";
  return os.str();
}

// --- intersections ---------------------------------------------------------------

std::vector<SigmaIntersection> find_intersections(const ManifoldTrace& trace_u,
                                                  const ManifoldTrace& trace_s,
                                                  GapSystem& gs, const FindOptions& opts) {
  if (trace_u.samples.size() < 2 || trace_s.samples.size() < 2) {
    throw ConfigError("find_intersections: traces must be nonempty");
  }

  struct Candidate {
    double theta_minus, theta_plus, angle;
    std::size_t iu, is;
  };
  std::vector<Candidate> candidates;

  const auto& A = trace_u.samples;
  const auto& B = trace_s.samples;
  for (size_t i = 0; i + 1 < A.size(); ++i) {
    const Eigen::Vector2d a0 = A[i].point, a1 = A[i + 1].point;
    const Eigen::Vector2d r = a1 - a0;
    const double alox = std::min(a0[0], a1[0]), ahix = std::max(a0[0], a1[0]);
    const double aloy = std::min(a0[1], a1[1]), ahiy = std::max(a0[1], a1[1]);
    for (size_t j = 0; j + 1 < B.size(); ++j) {
      const Eigen::Vector2d b0 = B[j].point, b1 = B[j + 1].point;
      if (std::max(b0[0], b1[0]) < alox - 1e-12 || std::min(b0[0], b1[0]) > ahix + 1e-12 ||
          std::max(b0[1], b1[1]) < aloy - 1e-12 || std::min(b0[1], b1[1]) > ahiy + 1e-12) {
        continue;
      }
      const Eigen::Vector2d sv = b1 - b0;
      const double denom = cross2(r, sv);
      if (std::abs(denom) < 1e-300) continue;
      const double t = cross2(b0 - a0, sv) / denom;
      const double u = cross2(b0 - a0, r) / denom;
      if (t < -1e-9 || t > 1.0 + 1e-9 || u < -1e-9 || u > 1.0 + 1e-9) continue;
      double angle = std::atan2(std::abs(denom), std::abs(r.dot(sv)));
      Candidate c;
      c.theta_minus = A[i].theta + t * (A[i + 1].theta - A[i].theta);
      c.theta_plus = B[j].theta + u * (B[j + 1].theta - B[j].theta);
      c.angle = angle;
      c.iu = i;
      c.is = j;
      candidates.push_back(c);
    }
  }

  std::vector<SigmaIntersection> out;
  for (const Candidate& c : candidates) {
    SigmaIntersection isec;
    isec.theta_minus = c.theta_minus;
    isec.theta_plus = c.theta_plus;
    isec.crossing_angle = c.angle;
    isec.tangency_warning = c.angle < opts.tangency_angle;
    // Re-seed both families near the candidate; the traces may have parked the
    // warm caches far away (e.g. at a blowup boundary).
    if (const auto* a = trace_u.nearest_anchor(c.iu)) {
      gs.minus().set_cached(a->segment);
    }
    if (const auto* a = trace_s.nearest_anchor(c.is)) {
      gs.plus().set_cached(a->segment);
    }
    try {
      const Heteroclinic het = close_gap(gs, c.theta_minus, c.theta_plus, opts.gap);
      isec.theta_minus = het.theta_minus;
      isec.theta_plus = het.theta_plus;
      isec.point = het.sigma_point();
    } catch (const NumericalError& err) {
      log_debug("intersection candidate at theta=(" + std::to_string(c.theta_minus) +
                ", " + std::to_string(c.theta_plus) + ") failed: " + err.what());
      if (err.code() == ErrorCode::SingularGapJacobian) {
        isec.tangency_warning = true;
      } else {
        continue;  // candidate was spurious (polyline artifact)
      }
      const collocation::OrbitSegment seg = gs.minus().solve(isec.theta_minus);
      isec.point = gs.minus().sigma_endpoint(seg);
    }
    // Distinct heteroclinics cannot share a Sigma point (orbit uniqueness), so
    // the refined point identifies duplicates.
    bool duplicate = false;
    for (const SigmaIntersection& prev : out) {
      if ((prev.point - isec.point).norm() < opts.dedup_tol) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) out.push_back(isec);
  }

  std::sort(out.begin(), out.end(), [](const SigmaIntersection& a, const SigmaIntersection& b) {
    return a.point[0] < b.point[0];
  });
  for (size_t i = 0; i < out.size(); ++i) out[i].label = "U" + std::to_string(i);
  return out;
}

// --- heteroclinic branch problem ----------------------------------------------

namespace {
struct GapSnapshot {
  std::optional<collocation::OrbitSegment> m, p;
  double thm = kHalfPi, thp = kHalfPi;
};
}  // namespace

HeteroclinicProblem::HeteroclinicProblem(const ModelSpec& base, std::string param,
                                         const LinSetup& setup)
    : base_(base), param_(std::move(param)), gs_(base, setup) {
  base_.get(param_);  // validates the name
}

Eigen::VectorXd HeteroclinicProblem::eval(const Eigen::VectorXd& x, double mu) {
  gs_.set_model(base_.with(param_, mu));
  return gs_.gap(x[0], x[1]);
}

void HeteroclinicProblem::jacobian(const Eigen::VectorXd& x, double mu,
                                   Eigen::MatrixXd* dg_dx, Eigen::VectorXd* dg_dmu) {
  eval(x, mu);
  *dg_dx = gs_.gap_theta_jacobian();
  *dg_dmu = gs_.gap_param_derivative(param_);
}

std::map<std::string, double> HeteroclinicProblem::monitors(const Eigen::VectorXd& x,
                                                            double mu) {
  const Eigen::Vector2d g = eval(x, mu);
  const ModelSpec spec = base_.with(param_, mu);
  std::map<std::string, double> mon;
  const auto& sm = gs_.last_minus();
  const auto& sp = gs_.last_plus();
  mon["max_U"] = std::max(sm.max_component(0), sp.max_component(0));
  mon["U_sigma"] = sm.right()[0];
  mon["V_sigma"] = sm.right()[1];
  mon["eta"] = g.norm();
  mon["theta_minus"] = x[0];
  mon["theta_plus"] = x[1];
  mon["Z_minus"] = sm.Z;
  mon["Z_plus"] = sp.Z;
  mon["L"] = spec.L;
  mon["c"] = spec.c;
  mon["D"] = spec.D;
  return mon;
}

std::shared_ptr<const void> HeteroclinicProblem::snapshot() const {
  auto snap = std::make_shared<GapSnapshot>();
  auto& gs = const_cast<GapSystem&>(gs_);
  if (gs.minus().cached()) snap->m = *gs.minus().cached();
  if (gs.plus().cached()) snap->p = *gs.plus().cached();
  snap->thm = gs.last_theta_minus();
  snap->thp = gs.last_theta_plus();
  return snap;
}

void HeteroclinicProblem::restore(const std::shared_ptr<const void>& state) {
  if (!state) return;
  const auto* snap = static_cast<const GapSnapshot*>(state.get());
  if (snap->m) gs_.minus().set_cached(*snap->m);
  if (snap->p) gs_.plus().set_cached(*snap->p);
}

continuation::StepControl HeteroclinicProblem::default_step_control() const {
  continuation::StepControl sc;
  sc.x_weights = Eigen::VectorXd(2);
  sc.x_weights << 1.0 / (10.0 * 2e-4), 1.0 / (10.0 * 2e-4);
  sc.mu_weight = 1.0;
  sc.h0 = 0.02;
  sc.h_max = 0.1;
  sc.h_min = 1e-6;
  return sc;
}

// --- tangency (SN) continuation --------------------------------------------------

namespace {

// Augmented system for a codimension-one (tangent) heteroclinic:
//   unknowns x = (theta-, theta+, psi1, psi2, p1), parameter mu = p2
//   equations  g = 0 (2), M psi = 0 (2), |psi|^2 - 1 = 0
class TangencyProblem : public continuation::Problem {
 public:
  TangencyProblem(const ModelSpec& base, std::string p1, std::string p2,
                  const LinSetup& setup)
      : base_(base), p1_(std::move(p1)), p2_(std::move(p2)), gs_(base, setup) {}

  int dim() const override { return 5; }

  void set_params(double v1, double v2) {
    gs_.set_model(base_.with(p1_, v1).with(p2_, v2));
  }

  // gap + gap Jacobian at (thetas, params)
  void eval_gm(const Eigen::VectorXd& x, double mu, Eigen::Vector2d* g,
               Eigen::Matrix2d* M) {
    set_params(x[4], mu);
    *g = gs_.gap(x[0], x[1]);
    *M = gs_.gap_theta_jacobian();
  }

  Eigen::VectorXd eval(const Eigen::VectorXd& x, double mu) override {
    Eigen::Vector2d g;
    Eigen::Matrix2d M;
    eval_gm(x, mu, &g, &M);
    const Eigen::Vector2d psi(x[2], x[3]);
    Eigen::VectorXd out(5);
    out.head<2>() = g;
    out.segment<2>(2) = M * psi;
    out[4] = psi.squaredNorm() - 1.0;
    return out;
  }

  void jacobian(const Eigen::VectorXd& x, double mu, Eigen::MatrixXd* dg_dx,
                Eigen::VectorXd* dg_dmu) override {
    dg_dx->resize(5, 5);
    dg_dmu->resize(5);
    const Eigen::Vector2d psi(x[2], x[3]);

    Eigen::Vector2d g0;
    Eigen::Matrix2d M0;
    eval_gm(x, mu, &g0, &M0);

    // psi columns are analytic.
    dg_dx->setZero();
    dg_dx->block<2, 2>(2, 2) = M0;
    (*dg_dx)(4, 2) = 2.0 * psi[0];
    (*dg_dx)(4, 3) = 2.0 * psi[1];

    auto fd_column = [&](int which, double h) {
      Eigen::VectorXd xp = x, xm = x;
      double mup = mu, mum = mu;
      if (which < 5) {
        xp[which] += h;
        xm[which] -= h;
      } else {
        mup += h;
        mum -= h;
      }
      Eigen::Vector2d gp, gm;
      Eigen::Matrix2d Mp, Mm;
      eval_gm(xp, mup, &gp, &Mp);
      eval_gm(xm, mum, &gm, &Mm);
      Eigen::VectorXd col(5);
      col.head<2>() = (gp - gm) / (2.0 * h);
      col.segment<2>(2) = (Mp * psi - Mm * psi) / (2.0 * h);
      col[4] = 0.0;
      return col;
    };

    const double h_theta = 1e-7;
    dg_dx->col(0) = fd_column(0, h_theta);
    dg_dx->col(1) = fd_column(1, h_theta);
    dg_dx->col(4) = fd_column(4, 1e-6 * (1.0 + std::abs(x[4])));
    *dg_dmu = fd_column(5, 1e-6 * (1.0 + std::abs(mu)));

    // Leave the warm state at the base point.
    Eigen::Vector2d gtmp;
    Eigen::Matrix2d Mtmp;
    eval_gm(x, mu, &gtmp, &Mtmp);
  }

  std::map<std::string, double> monitors(const Eigen::VectorXd& x, double mu) override {
    std::map<std::string, double> mon;
    mon[p1_] = x[4];
    mon[p2_] = mu;
    mon["theta_minus"] = x[0];
    mon["theta_plus"] = x[1];
    mon["max_U"] = gs_.last_minus().max_component(0);
    return mon;
  }

  std::shared_ptr<const void> snapshot() const override {
    auto snap = std::make_shared<GapSnapshot>();
    auto& gs = const_cast<GapSystem&>(gs_);
    if (gs.minus().cached()) snap->m = *gs.minus().cached();
    if (gs.plus().cached()) snap->p = *gs.plus().cached();
    return snap;
  }

  void restore(const std::shared_ptr<const void>& state) override {
    if (!state) return;
    const auto* snap = static_cast<const GapSnapshot*>(state.get());
    if (snap->m) gs_.minus().set_cached(*snap->m);
    if (snap->p) gs_.plus().set_cached(*snap->p);
  }

  GapSystem& gap_system() { return gs_; }

 private:
  ModelSpec base_;
  std::string p1_, p2_;
  GapSystem gs_;
};

continuation::EngineOptions tangency_engine_options(const TangencyOptions& opts) {
  continuation::EngineOptions eo;
  eo.step.x_weights = Eigen::VectorXd(5);
  eo.step.x_weights << 1.0 / (10.0 * 2e-4), 1.0 / (10.0 * 2e-4), 1.0, 1.0, 1.0;
  eo.step.mu_weight = 1.0;
  eo.step.h0 = opts.h0;
  eo.step.h_max = opts.h_max;
  eo.step.h_min = 1e-7;
  eo.stop.max_points = opts.max_points;
  eo.stop.point_budget = opts.point_budget;
  eo.stop.mu_min = opts.p2_min;
  eo.stop.mu_max = opts.p2_max;
  eo.stop.stop_on_closed_loop = opts.stop_on_closed_loop;
  eo.localize_folds = false;
  return eo;
}

}  // namespace

TippingCurve continue_tangency(const ModelSpec& at_fold, double theta_minus,
                               double theta_plus, const std::string& p1,
                               const std::string& p2, const TangencyOptions& opts) {
  TangencyProblem prob(at_fold, p1, p2, opts.setup);
  prob.set_params(at_fold.get(p1), at_fold.get(p2));

  // Seed psi with the null direction of the gap Jacobian at the fold.
  Eigen::Vector2d g;
  Eigen::Matrix2d M;
  {
    Eigen::VectorXd xseed(5);
    xseed << theta_minus, theta_plus, 1.0, 0.0, at_fold.get(p1);
    prob.eval_gm(xseed, at_fold.get(p2), &g, &M);
  }
  Eigen::JacobiSVD<Eigen::Matrix2d> svd(M, Eigen::ComputeFullV);
  const Eigen::Vector2d psi = svd.matrixV().col(1);
  const auto seed_state = prob.snapshot();

  Eigen::VectorXd x0(5);
  x0 << theta_minus, theta_plus, psi[0], psi[1], at_fold.get(p1);
  const double mu0 = at_fold.get(p2);

  continuation::EngineOptions eo = tangency_engine_options(opts);
  auto within_p1 = [&](const continuation::BranchPoint& bp) {
    return bp.x[4] < opts.p1_min || bp.x[4] > opts.p1_max;
  };
  eo.stop.predicate = within_p1;

  TippingCurve curve;
  curve.kind = "SN";
  curve.plane = {p1, p2};

  auto collect = [&](const continuation::Branch& br, bool reversed) {
    std::vector<Eigen::Vector2d> pts;
    pts.reserve(br.points.size());
    for (const auto& bp : br.points) pts.emplace_back(bp.x[4], bp.mu);
    if (reversed) std::reverse(pts.begin(), pts.end());
    return pts;
  };

  continuation::Branch fwd = continuation::continue_branch(prob, x0, mu0, +1, eo, p2);
  const bool closed = !fwd.points.empty() && !fwd.points.back().tags.empty() &&
                      fwd.points.back().tags.back() == "closed_loop";
  if (closed) {
    curve.points = collect(fwd, false);
    curve.closed_loop = true;
    return curve;
  }
  prob.restore(seed_state);
  continuation::Branch bwd = continuation::continue_branch(prob, x0, mu0, -1, eo, p2);
  curve.points = collect(bwd, true);
  const auto fwd_pts = collect(fwd, false);
  curve.points.insert(curve.points.end(), fwd_pts.begin(), fwd_pts.end());
  return curve;
}

// --- transcritical locus ----------------------------------------------------------

double tr_test_function(const ModelSpec& spec) {
  const DimensionlessParams p = nondimensionalize(spec);
  const double bt = p.beta_t;
  const double ct = p.c_t;
  const double disc = std::sqrt(ct * ct + 4.0 * bt * bt);
  const double l1 = 0.5 * (-ct - disc);
  const double l2 = 0.5 * (-ct + disc);

  const double Z0 = 0.5 * p.L_t + 20.0;
  const int n_steps = std::max(4000, int(std::ceil(2.0 * Z0 / 0.005)));
  const double h = 2.0 * Z0 / n_steps;

  // Linearization about the trivial state along z; bounded-connection test is
  // the coefficient of the growing mode at +infinity.
  auto deriv = [&](double z, const Eigen::Vector2d& psi) {
    const double H = habitat_z(z, p.L_t);
    const double a21 = -reaction_dU(0.0, H, p, spec.kind);
    return Eigen::Vector2d(psi[1], a21 * psi[0] - ct * psi[1]);
  };

  Eigen::Vector2d psi(1.0, l2);
  psi.normalize();
  double z = -Z0;
  for (int i = 0; i < n_steps; ++i) {
    const Eigen::Vector2d k1 = deriv(z, psi);
    const Eigen::Vector2d k2 = deriv(z + 0.5 * h, psi + 0.5 * h * k1);
    const Eigen::Vector2d k3 = deriv(z + 0.5 * h, psi + 0.5 * h * k2);
    const Eigen::Vector2d k4 = deriv(z + h, psi + h * k3);
    psi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    z += h;
    const double nrm = psi.norm();
    if (nrm > 1e6) psi /= nrm;  // positive rescaling keeps the sign information
  }
  return (psi[1] - l1 * psi[0]) / psi.norm();
}

double locate_tr(const ModelSpec& base, const std::string& param, double lo, double hi,
                 double tol) {
  double a = lo, b = hi;
  double fa = tr_test_function(base.with(param, a));
  double fb = tr_test_function(base.with(param, b));
  if (fa * fb > 0.0) {
    throw NumericalError(ErrorCode::BracketNotFound,
                         "transcritical test function does not change sign on bracket");
  }
  for (int it = 0; it < 200; ++it) {
    const double m = 0.5 * (a + b);
    if (b - a < tol) return m;
    const double fm = tr_test_function(base.with(param, m));
    if (fm == 0.0) return m;
    if (fa * fm < 0.0) {
      b = m;
      fb = fm;
    } else {
      a = m;
      fa = fm;
    }
  }
  return 0.5 * (a + b);
}

namespace {

class TrCurveProblem : public continuation::Problem {
 public:
  TrCurveProblem(const ModelSpec& base, std::string p1, std::string p2)
      : base_(base), p1_(std::move(p1)), p2_(std::move(p2)) {}
  int dim() const override { return 1; }
  Eigen::VectorXd eval(const Eigen::VectorXd& x, double mu) override {
    Eigen::VectorXd out(1);
    out[0] = tr_test_function(base_.with(p1_, x[0]).with(p2_, mu));
    return out;
  }
  void jacobian(const Eigen::VectorXd& x, double mu, Eigen::MatrixXd* dg_dx,
                Eigen::VectorXd* dg_dmu) override {
    dg_dx->resize(1, 1);
    dg_dmu->resize(1);
    const double h1 = 1e-6 * (1.0 + std::abs(x[0]));
    const double h2 = 1e-6 * (1.0 + std::abs(mu));
    Eigen::VectorXd xp = x, xm = x;
    xp[0] += h1;
    xm[0] -= h1;
    (*dg_dx)(0, 0) = (eval(xp, mu)[0] - eval(xm, mu)[0]) / (2.0 * h1);
    (*dg_dmu)[0] = (eval(x, mu + h2)[0] - eval(x, mu - h2)[0]) / (2.0 * h2);
  }
  std::map<std::string, double> monitors(const Eigen::VectorXd& x, double mu) override {
    return {{p1_, x[0]}, {p2_, mu}};
  }

 private:
  ModelSpec base_;
  std::string p1_, p2_;
};

}  // namespace

TippingCurve trace_tr_curve(const ModelSpec& seed_model, const std::string& p1,
                            const std::string& p2, const TangencyOptions& opts) {
  TrCurveProblem prob(seed_model, p1, p2);
  Eigen::VectorXd x0(1);
  x0 << seed_model.get(p1);
  const double mu0 = seed_model.get(p2);

  continuation::EngineOptions eo;
  eo.step.h0 = opts.h0;
  eo.step.h_max = std::max(opts.h_max, 0.05);
  eo.step.h_min = 1e-8;
  eo.stop.max_points = opts.max_points;
  eo.stop.point_budget = opts.point_budget;
  eo.stop.mu_min = opts.p2_min;
  eo.stop.mu_max = opts.p2_max;
  eo.stop.stop_on_closed_loop = opts.stop_on_closed_loop;
  eo.localize_folds = false;
  eo.stop.predicate = [&](const continuation::BranchPoint& bp) {
    return bp.x[0] < opts.p1_min || bp.x[0] > opts.p1_max;
  };

  TippingCurve curve;
  curve.kind = "TR";
  curve.plane = {p1, p2};
  continuation::Branch fwd = continuation::continue_branch(prob, x0, mu0, +1, eo, p2);
  continuation::Branch bwd = continuation::continue_branch(prob, x0, mu0, -1, eo, p2);
  for (auto it = bwd.points.rbegin(); it != bwd.points.rend(); ++it) {
    curve.points.emplace_back(it->x[0], it->mu);
  }
  for (const auto& bp : fwd.points) curve.points.emplace_back(bp.x[0], bp.mu);
  const bool closed = !fwd.points.empty() && !fwd.points.back().tags.empty() &&
                      fwd.points.back().tags.back() == "closed_loop";
  curve.closed_loop = closed;
  return curve;
}

std::string TippingCurve::to_csv(const std::string& curve_id) const {
  std::ostringstream os;
  os.precision(16);
  os << "curve," << plane.first << "," << plane.second << "\n";
  for (const auto& p : points) os << curve_id << "," << p[0] << "," << p[1] << "\n";
  return os.str();
}

}  // namespace tipping::lin
