#include "tippingrd/collocation.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace tipping::collocation {

namespace {

// Gauss-Legendre nodes on [0,1] by Newton iteration on P_m.
std::vector<double> gauss_nodes(int m) {
  std::vector<double> nodes(m);
  for (int i = 1; i <= m; ++i) {
    double x = std::cos(M_PI * (i - 0.25) / (m + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= m; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double dp = m * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[m - i] = 0.5 * (1.0 + x);
  }
  std::sort(nodes.begin(), nodes.end());
  return nodes;
}

// Lagrange basis values and derivatives at t for the given nodes.
void lagrange_basis(const std::vector<double>& x, double t, Eigen::VectorXd* val,
                    Eigen::VectorXd* der) {
  const int n = static_cast<int>(x.size());
  if (val) val->resize(n);
  if (der) der->resize(n);
  for (int k = 0; k < n; ++k) {
    if (val) {
      double v = 1.0;
      for (int j = 0; j < n; ++j) {
        if (j != k) v *= (t - x[j]) / (x[k] - x[j]);
      }
      (*val)[k] = v;
    }
    if (der) {
      double d = 0.0;
      for (int i = 0; i < n; ++i) {
        if (i == k) continue;
        double term = 1.0 / (x[k] - x[i]);
        for (int j = 0; j < n; ++j) {
          if (j != k && j != i) term *= (t - x[j]) / (x[k] - x[j]);
        }
        d += term;
      }
      (*der)[k] = d;
    }
  }
}

struct DegreeTables {
  std::vector<double> local_nodes;  // k/m, k=0..m
  std::vector<double> gauss;        // m Gauss points on [0,1]
  Eigen::MatrixXd val;              // m x (m+1)
  Eigen::MatrixXd der;              // m x (m+1)
};

const DegreeTables& tables(int degree) {
  static DegreeTables cache[8];
  DegreeTables& T = cache[degree];
  if (T.gauss.empty()) {
    T.local_nodes.resize(degree + 1);
    for (int k = 0; k <= degree; ++k) T.local_nodes[k] = double(k) / degree;
    T.gauss = gauss_nodes(degree);
    T.val.resize(degree, degree + 1);
    T.der.resize(degree, degree + 1);
    Eigen::VectorXd v, d;
    for (int i = 0; i < degree; ++i) {
      lagrange_basis(T.local_nodes, T.gauss[i], &v, &d);
      T.val.row(i) = v.transpose();
      T.der.row(i) = d.transpose();
    }
  }
  return T;
}

int find_interval(const std::vector<double>& bp, double t) {
  const int n = static_cast<int>(bp.size()) - 1;
  if (t <= bp.front()) return 0;
  if (t >= bp.back()) return n - 1;
  int j = int(std::upper_bound(bp.begin(), bp.end(), t) - bp.begin()) - 1;
  return std::clamp(j, 0, n - 1);
}

Eigen::VectorXd pack(const OrbitSegment& seg) {
  const int nn = seg.mesh.n_nodes();
  const int p = static_cast<int>(seg.scalars.size());
  Eigen::VectorXd X(3 * nn + p);
  for (int q = 0; q < nn; ++q) X.segment<3>(3 * q) = seg.coeffs.col(q);
  X.tail(p) = seg.scalars;
  return X;
}

void unpack(const Eigen::VectorXd& X, OrbitSegment* seg) {
  const int nn = seg->mesh.n_nodes();
  const int p = static_cast<int>(seg->scalars.size());
  for (int q = 0; q < nn; ++q) seg->coeffs.col(q) = X.segment<3>(3 * q);
  seg->scalars = X.tail(p);
  if (p > 0) seg->Z = seg->scalars[0];
}

Eigen::VectorXd assemble_residual(const BvpProblem& prob, const Mesh& mesh,
                                  const Eigen::VectorXd& X) {
  const DegreeTables& T = tables(mesh.degree);
  const int m = mesh.degree;
  const int N = mesh.n_intervals();
  const int nn = mesh.n_nodes();
  const int p = prob.n_scalars;
  const Eigen::VectorXd sigma = X.tail(p);
  const int nbc = static_cast<int>(prob.bcs.size());

  Eigen::VectorXd R(3 * N * m + nbc);
  Eigen::Matrix3Xd loc(3, m + 1);
  for (int j = 0; j < N; ++j) {
    const double h = mesh.breakpoints[j + 1] - mesh.breakpoints[j];
    for (int k = 0; k <= m; ++k) loc.col(k) = X.segment<3>(3 * (j * m + k));
    for (int i = 0; i < m; ++i) {
      Eigen::Vector3d u = Eigen::Vector3d::Zero();
      Eigen::Vector3d du = Eigen::Vector3d::Zero();
      for (int k = 0; k <= m; ++k) {
        u += T.val(i, k) * loc.col(k);
        du += T.der(i, k) * loc.col(k);
      }
      R.segment<3>(3 * (j * m + i)) = du / h - prob.ode.f(u, sigma);
    }
  }
  const Eigen::Vector3d uL = X.segment<3>(0);
  const Eigen::Vector3d uR = X.segment<3>(3 * (nn - 1));
  for (int b = 0; b < nbc; ++b) {
    R[3 * N * m + b] = prob.bcs[b].g(uL, uR, sigma);
  }
  return R;
}

using SpMat = Eigen::SparseMatrix<double>;

SpMat assemble_jacobian(const BvpProblem& prob, const Mesh& mesh,
                        const Eigen::VectorXd& X) {
  const DegreeTables& T = tables(mesh.degree);
  const int m = mesh.degree;
  const int N = mesh.n_intervals();
  const int nn = mesh.n_nodes();
  const int p = prob.n_scalars;
  const Eigen::VectorXd sigma = X.tail(p);
  const int nbc = static_cast<int>(prob.bcs.size());
  const int nrows = 3 * N * m + nbc;
  const int ncols = 3 * nn + p;

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(size_t(N) * m * (9 * (m + 1) + 3 * p) + size_t(nbc) * (6 + p));

  Eigen::Matrix3Xd loc(3, m + 1);
  for (int j = 0; j < N; ++j) {
    const double h = mesh.breakpoints[j + 1] - mesh.breakpoints[j];
    for (int k = 0; k <= m; ++k) loc.col(k) = X.segment<3>(3 * (j * m + k));
    for (int i = 0; i < m; ++i) {
      Eigen::Vector3d u = Eigen::Vector3d::Zero();
      for (int k = 0; k <= m; ++k) u += T.val(i, k) * loc.col(k);
      const Eigen::Matrix3d A = prob.ode.df_du(u, sigma);
      const int row0 = 3 * (j * m + i);
      for (int k = 0; k <= m; ++k) {
        const int col0 = 3 * (j * m + k);
        const double dv = T.der(i, k) / h;
        const double vv = T.val(i, k);
        for (int r = 0; r < 3; ++r) {
          for (int cc = 0; cc < 3; ++cc) {
            double entry = -vv * A(r, cc);
            if (r == cc) entry += dv;
            if (entry != 0.0) trip.emplace_back(row0 + r, col0 + cc, entry);
          }
        }
      }
      // scalar columns by central differences of f
      for (int q = 0; q < p; ++q) {
        const double hq = 1e-7 * (1.0 + std::abs(sigma[q]));
        Eigen::VectorXd sp = sigma, sm = sigma;
        sp[q] += hq;
        sm[q] -= hq;
        const Eigen::Vector3d dfd = (prob.ode.f(u, sp) - prob.ode.f(u, sm)) / (2.0 * hq);
        for (int r = 0; r < 3; ++r) {
          if (dfd[r] != 0.0) trip.emplace_back(row0 + r, 3 * nn + q, -dfd[r]);
        }
      }
    }
  }

  const Eigen::Vector3d uL = X.segment<3>(0);
  const Eigen::Vector3d uR = X.segment<3>(3 * (nn - 1));
  for (int b = 0; b < nbc; ++b) {
    const int row = 3 * N * m + b;
    const auto& g = prob.bcs[b].g;
    for (int d = 0; d < 3; ++d) {
      const double hd = 1e-7 * (1.0 + std::abs(uL[d]));
      Eigen::Vector3d up = uL, um = uL;
      up[d] += hd;
      um[d] -= hd;
      const double dg = (g(up, uR, sigma) - g(um, uR, sigma)) / (2.0 * hd);
      if (dg != 0.0) trip.emplace_back(row, d, dg);
    }
    for (int d = 0; d < 3; ++d) {
      const double hd = 1e-7 * (1.0 + std::abs(uR[d]));
      Eigen::Vector3d up = uR, um = uR;
      up[d] += hd;
      um[d] -= hd;
      const double dg = (g(uL, up, sigma) - g(uL, um, sigma)) / (2.0 * hd);
      if (dg != 0.0) trip.emplace_back(row, 3 * (nn - 1) + d, dg);
    }
    for (int q = 0; q < p; ++q) {
      const double hq = 1e-7 * (1.0 + std::abs(sigma[q]));
      Eigen::VectorXd sp = sigma, sm = sigma;
      sp[q] += hq;
      sm[q] -= hq;
      const double dg = (g(uL, uR, sp) - g(uL, uR, sm)) / (2.0 * hq);
      if (dg != 0.0) trip.emplace_back(row, 3 * nn + q, dg);
    }
  }

  SpMat J(nrows, ncols);
  J.setFromTriplets(trip.begin(), trip.end());
  return J;
}

struct NewtonOutcome {
  int iterations = 0;
  double residual_norm = 0.0;
};

NewtonOutcome newton(const BvpProblem& prob, OrbitSegment* seg, const SolveOptions& opts) {
  Eigen::VectorXd X = pack(*seg);
  Eigen::VectorXd R = assemble_residual(prob, seg->mesh, X);
  if (!R.allFinite()) {
    throw NumericalError(ErrorCode::NewtonDiverged, "initial residual is not finite");
  }
  double rnorm = R.lpNorm<Eigen::Infinity>();
  NewtonOutcome out;
  for (int it = 0; it < opts.max_newton; ++it) {
    if (rnorm <= opts.tol_resid && it >= opts.min_newton) {
      out.iterations = it;
      out.residual_norm = rnorm;
      unpack(X, seg);
      seg->residual_norm = rnorm;
      return out;
    }
    SpMat J = assemble_jacobian(prob, seg->mesh, X);
    Eigen::SparseLU<SpMat> lu;
    lu.compute(J);
    if (lu.info() != Eigen::Success) {
      throw NumericalError(ErrorCode::SingularJacobian,
                           "rank-deficient collocation linearization");
    }
    const Eigen::VectorXd step = lu.solve(-R);
    if (!step.allFinite()) {
      throw NumericalError(ErrorCode::SingularJacobian, "linear solve produced non-finite step");
    }
    double lambda = 1.0;
    bool accepted = false;
    while (lambda >= opts.min_damping) {
      const Eigen::VectorXd Xt = X + lambda * step;
      const Eigen::VectorXd Rt = assemble_residual(prob, seg->mesh, Xt);
      if (Rt.allFinite()) {
        const double rt = Rt.lpNorm<Eigen::Infinity>();
        if (rt < rnorm * (1.0 - 1e-4 * lambda) || rt <= opts.tol_resid) {
          X = Xt;
          R = Rt;
          rnorm = rt;
          accepted = true;
          break;
        }
      }
      lambda *= 0.5;
    }
    if (!accepted && it == 0 && rnorm < 1e-4) {
      // Near-converged guess on a strongly curved solution surface: the
      // quadratic remainder of the full step exceeds the (tiny) current
      // residual at every damping level. Take the full step once and let the
      // monotone iteration continue from there.
      const Eigen::VectorXd Xt = X + step;
      const Eigen::VectorXd Rt = assemble_residual(prob, seg->mesh, Xt);
      if (Rt.allFinite()) {
        X = Xt;
        R = Rt;
        rnorm = Rt.lpNorm<Eigen::Infinity>();
        accepted = true;
      }
    }
    if (!accepted) {
      throw NumericalError(ErrorCode::NewtonDiverged,
                           "damped Newton stalled at residual " + std::to_string(rnorm));
    }
  }
  if (rnorm <= opts.tol_resid) {
    out.iterations = opts.max_newton;
    out.residual_norm = rnorm;
    unpack(X, seg);
    seg->residual_norm = rnorm;
    return out;
  }
  throw NumericalError(ErrorCode::NewtonDiverged,
                       "no convergence after max Newton iterations (residual " +
                           std::to_string(rnorm) + ")");
}

// Scaled (m+1)-st derivative density per interval; shared by adapt and the
// error indicators.
Eigen::VectorXd derivative_density(const OrbitSegment& seg) {
  const Mesh& mesh = seg.mesh;
  const int m = mesh.degree;
  const int N = mesh.n_intervals();

  Eigen::Vector3d scale;
  for (int d = 0; d < 3; ++d) {
    scale[d] = 1.0 + seg.coeffs.row(d).cwiseAbs().maxCoeff();
  }

  // Constant m-th derivative of each local polynomial via finite differences.
  Eigen::Matrix3Xd dm(3, N);
  std::vector<double> binom(m + 1);
  binom[0] = 1.0;
  for (int k = 1; k <= m; ++k) binom[k] = binom[k - 1] * double(m - k + 1) / k;
  for (int j = 0; j < N; ++j) {
    const double h = mesh.breakpoints[j + 1] - mesh.breakpoints[j];
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (int k = 0; k <= m; ++k) {
      const double sign = ((m - k) % 2 == 0) ? 1.0 : -1.0;
      acc += sign * binom[k] * seg.coeffs.col(j * m + k);
    }
    dm.col(j) = acc / std::pow(h / m, m);
  }

  Eigen::VectorXd density(N);
  for (int j = 0; j < N; ++j) {
    double c = 0.0;
    const double hj = mesh.breakpoints[j + 1] - mesh.breakpoints[j];
    if (j > 0) {
      const double gap = 0.5 * (hj + mesh.breakpoints[j] - mesh.breakpoints[j - 1]);
      for (int d = 0; d < 3; ++d) {
        c = std::max(c, std::abs(dm(d, j) - dm(d, j - 1)) / (gap * scale[d]));
      }
    }
    if (j + 1 < N) {
      const double gap = 0.5 * (hj + mesh.breakpoints[j + 2] - mesh.breakpoints[j + 1]);
      for (int d = 0; d < 3; ++d) {
        c = std::max(c, std::abs(dm(d, j + 1) - dm(d, j)) / (gap * scale[d]));
      }
    }
    density[j] = c;
  }
  return density;
}

Mesh redistribute(const OrbitSegment& seg, int n_intervals) {
  const Mesh& mesh = seg.mesh;
  const int m = mesh.degree;
  const int N = mesh.n_intervals();
  Eigen::VectorXd c = derivative_density(seg);
  const double cmax = c.maxCoeff();
  Eigen::VectorXd w(N);
  for (int j = 0; j < N; ++j) {
    w[j] = std::pow(std::max(c[j], std::max(cmax, 1e-300) * 1e-6), 1.0 / (m + 1));
  }
  // Invert the piecewise-linear CDF of the density to equal quantiles.
  std::vector<double> cdf(N + 1, 0.0);
  for (int j = 0; j < N; ++j) {
    cdf[j + 1] = cdf[j] + w[j] * (mesh.breakpoints[j + 1] - mesh.breakpoints[j]);
  }
  Mesh out;
  out.degree = m;
  out.breakpoints.resize(n_intervals + 1);
  out.breakpoints.front() = 0.0;
  out.breakpoints.back() = 1.0;
  int j = 0;
  for (int i = 1; i < n_intervals; ++i) {
    const double target = cdf[N] * double(i) / n_intervals;
    while (j + 1 < N && cdf[j + 1] < target) ++j;
    const double frac = (target - cdf[j]) / std::max(cdf[j + 1] - cdf[j], 1e-300);
    out.breakpoints[i] =
        mesh.breakpoints[j] + frac * (mesh.breakpoints[j + 1] - mesh.breakpoints[j]);
  }
  // Guard monotonicity against degenerate densities.
  for (int i = 1; i <= n_intervals; ++i) {
    out.breakpoints[i] = std::max(out.breakpoints[i],
                                  out.breakpoints[i - 1] + 1e-12);
  }
  out.breakpoints.back() = 1.0;
  return out;
}

}  // namespace

Mesh Mesh::uniform(int n_intervals, int degree) {
  Mesh m;
  m.degree = degree;
  m.breakpoints.resize(n_intervals + 1);
  for (int i = 0; i <= n_intervals; ++i) m.breakpoints[i] = double(i) / n_intervals;
  m.validate();
  return m;
}

void Mesh::validate() const {
  if (degree < 2 || degree > 7) throw ConfigError("collocation degree must be in [2,7]");
  if (n_intervals() < 4) throw ConfigError("mesh needs at least 4 intervals");
  if (breakpoints.front() != 0.0 || breakpoints.back() != 1.0) {
    throw ConfigError("mesh breakpoints must span [0,1]");
  }
  for (size_t i = 1; i < breakpoints.size(); ++i) {
    if (!(breakpoints[i] > breakpoints[i - 1])) {
      throw ConfigError("mesh breakpoints must be strictly increasing");
    }
  }
}

void BvpProblem::validate() const {
  if (!ode.f || !ode.df_du) throw ConfigError("BvpProblem needs f and df_du");
  if (static_cast<int>(bcs.size()) != 3 + n_scalars) {
    std::ostringstream os;
    os << "ill-posed BVP: " << bcs.size() << " boundary conditions for state dim 3 and "
       << n_scalars << " free scalars (need " << 3 + n_scalars << ")";
    throw ConfigError(os.str());
  }
}

Eigen::Vector3d OrbitSegment::evaluate(double t) const {
  if (t < -1e-12 || t > 1.0 + 1e-12) throw ConfigError("evaluate: t outside [0,1]");
  const int m = mesh.degree;
  const int j = find_interval(mesh.breakpoints, t);
  const double h = mesh.breakpoints[j + 1] - mesh.breakpoints[j];
  const double tau = (t - mesh.breakpoints[j]) / h;
  Eigen::VectorXd val;
  lagrange_basis(tables(m).local_nodes, tau, &val, nullptr);
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  for (int k = 0; k <= m; ++k) out += val[k] * coeffs.col(j * m + k);
  return out;
}

Eigen::Vector3d OrbitSegment::derivative(double t) const {
  if (t < -1e-12 || t > 1.0 + 1e-12) throw ConfigError("derivative: t outside [0,1]");
  const int m = mesh.degree;
  const int j = find_interval(mesh.breakpoints, t);
  const double h = mesh.breakpoints[j + 1] - mesh.breakpoints[j];
  const double tau = (t - mesh.breakpoints[j]) / h;
  Eigen::VectorXd der;
  lagrange_basis(tables(m).local_nodes, tau, nullptr, &der);
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  for (int k = 0; k <= m; ++k) out += der[k] * coeffs.col(j * m + k);
  return out / h;
}

Eigen::VectorXd residual(const BvpProblem& problem, const OrbitSegment& seg) {
  problem.validate();
  return assemble_residual(problem, seg.mesh, pack(seg));
}

Eigen::VectorXd solution_sensitivity(const BvpProblem& problem, const OrbitSegment& at,
                                     const Eigen::VectorXd& minus_dR) {
  problem.validate();
  const Eigen::VectorXd X = pack(at);
  SpMat J = assemble_jacobian(problem, at.mesh, X);
  Eigen::SparseLU<SpMat> lu;
  lu.compute(J);
  if (lu.info() != Eigen::Success) {
    throw NumericalError(ErrorCode::SingularJacobian, "singular Jacobian in sensitivity solve");
  }
  return lu.solve(minus_dR);
}

Eigen::VectorXd error_indicators(const OrbitSegment& seg) {
  const int m = seg.mesh.degree;
  const int N = seg.mesh.n_intervals();
  Eigen::VectorXd c = derivative_density(seg);
  Eigen::VectorXd E(N);
  for (int j = 0; j < N; ++j) {
    const double h = seg.mesh.breakpoints[j + 1] - seg.mesh.breakpoints[j];
    E[j] = std::pow(h, m + 1) * c[j];
  }
  return E;
}

Mesh adapt(const OrbitSegment& seg) { return redistribute(seg, seg.mesh.n_intervals()); }

OrbitSegment interpolate(const OrbitSegment& seg, const Mesh& mesh) {
  mesh.validate();
  OrbitSegment out;
  out.mesh = mesh;
  out.Z = seg.Z;
  out.scalars = seg.scalars;
  out.bc_data = seg.bc_data;
  const int m = mesh.degree;
  const int N = mesh.n_intervals();
  out.coeffs.resize(3, mesh.n_nodes());
  for (int j = 0; j < N; ++j) {
    const double h = mesh.breakpoints[j + 1] - mesh.breakpoints[j];
    for (int k = (j == 0 ? 0 : 1); k <= m; ++k) {
      const double t = mesh.breakpoints[j] + h * double(k) / m;
      out.coeffs.col(j * m + k) = seg.evaluate(std::min(t, 1.0));
    }
  }
  out.coeffs.col(0) = seg.evaluate(0.0);
  return out;
}

SolveResult solve(const BvpProblem& problem, const OrbitSegment& guess,
                  const SolveOptions& opts) {
  problem.validate();
  guess.mesh.validate();
  if (static_cast<int>(guess.scalars.size()) != problem.n_scalars) {
    throw ConfigError("guess scalar count does not match problem n_scalars");
  }

  SolveResult res;
  res.segment = guess;
  NewtonOutcome nw = newton(problem, &res.segment, opts);
  res.newton_iterations = nw.iterations;
  res.residual_norm = nw.residual_norm;

  for (int pass = 0; pass < opts.adapt_passes; ++pass) {
    const Eigen::VectorXd E = error_indicators(res.segment);
    const double emax = E.maxCoeff();
    const double emin = std::max(E.minCoeff(), 1e-300);
    const bool unbalanced = emax / emin > opts.equidist_factor;
    const bool needs_growth = opts.allow_growth && opts.growth_defect_target > 0.0 &&
                              emax > opts.growth_defect_target;
    if (!unbalanced && !needs_growth) break;

    int n_new = res.segment.mesh.n_intervals();
    if (needs_growth) {
      if (n_new >= opts.max_intervals) {
        throw NumericalError(ErrorCode::MeshExhausted,
                             "mesh adaptation exceeded max intervals");
      }
      n_new = std::min(opts.max_intervals, n_new + n_new / 2 + 1);
    }
    const Mesh refined = redistribute(res.segment, n_new);
    OrbitSegment next = interpolate(res.segment, refined);
    nw = newton(problem, &next, opts);
    res.segment = next;
    res.newton_iterations += nw.iterations;
    res.residual_norm = nw.residual_norm;
    res.adapt_passes_used = pass + 1;
  }
  return res;
}

double certify(const BvpProblem& problem, const OrbitSegment& seg, int oversample) {
  problem.validate();
  const int m = seg.mesh.degree;
  const int N = seg.mesh.n_intervals();
  const int K = oversample * m;
  double worst = 0.0;
  for (int j = 0; j < N; ++j) {
    const double a = seg.mesh.breakpoints[j];
    const double h = seg.mesh.breakpoints[j + 1] - a;
    for (int q = 0; q < K; ++q) {
      const double t = a + h * (q + 0.5) / K;
      const Eigen::Vector3d u = seg.evaluate(t);
      const Eigen::Vector3d F = problem.ode.f(u, seg.scalars);
      const Eigen::Vector3d defect = seg.derivative(t) - F;
      worst = std::max(worst, defect.lpNorm<Eigen::Infinity>() /
                                  (1.0 + F.lpNorm<Eigen::Infinity>()));
    }
  }
  return worst;
}

std::string segment_to_json_text(const OrbitSegment& seg) {
  nlohmann::json j;
  j["mesh"]["breakpoints"] = seg.mesh.breakpoints;
  j["mesh"]["degree"] = seg.mesh.degree;
  j["Z"] = seg.Z;
  j["scalars"] = std::vector<double>(seg.scalars.begin(), seg.scalars.end());
  j["bc_data"] = {{"eps", seg.bc_data.eps},
                  {"theta", seg.bc_data.theta},
                  {"equilibrium", seg.bc_data.equilibrium}};
  j["residual_norm"] = seg.residual_norm;
  std::vector<std::vector<double>> rows(3);
  for (int d = 0; d < 3; ++d) {
    rows[d].assign(seg.coeffs.row(d).begin(), seg.coeffs.row(d).end());
  }
  j["coeffs"] = rows;
  return j.dump();
}

OrbitSegment segment_from_json_text(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  OrbitSegment seg;
  seg.mesh.breakpoints = j["mesh"]["breakpoints"].get<std::vector<double>>();
  seg.mesh.degree = j["mesh"]["degree"].get<int>();
  seg.mesh.validate();
  seg.Z = j["Z"].get<double>();
  const auto sc = j["scalars"].get<std::vector<double>>();
  seg.scalars = Eigen::Map<const Eigen::VectorXd>(sc.data(), sc.size());
  seg.bc_data.eps = j["bc_data"]["eps"].get<double>();
  seg.bc_data.theta = j["bc_data"]["theta"].get<double>();
  seg.bc_data.equilibrium = j["bc_data"]["equilibrium"].get<int>();
  seg.residual_norm = j["residual_norm"].get<double>();
  const auto rows = j["coeffs"].get<std::vector<std::vector<double>>>();
  seg.coeffs.resize(3, seg.mesh.n_nodes());
  for (int d = 0; d < 3; ++d) {
    if (static_cast<int>(rows[d].size()) != seg.mesh.n_nodes()) {
      throw ConfigError("segment JSON: coefficient count does not match mesh");
    }
    for (int q = 0; q < seg.mesh.n_nodes(); ++q) seg.coeffs(d, q) = rows[d][q];
  }
  return seg;
}

}  // namespace tipping::collocation
