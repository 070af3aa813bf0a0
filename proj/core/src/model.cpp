#include "tippingrd/model.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace tipping {

namespace {

constexpr double kAlphaRuleDiffusionSplit = 4.5e-3;
constexpr double kLn2 = 0.6931471805599453094;

void require_finite(double x, const char* name) {
  if (!std::isfinite(x)) {
    throw ConfigError(std::string("non-finite input: ") + name);
  }
}

double log_cosh(double x) {
  x = std::abs(x);
  return x + std::log1p(std::exp(-2.0 * x)) - kLn2;
}

double log_sinh(double x) {
  // x > 0
  return x + std::log1p(-std::exp(-2.0 * x)) - kLn2;
}

}  // namespace

std::string to_string(ReactionKind kind) {
  return kind == ReactionKind::Allee ? "allee" : "logistic";
}

ReactionKind reaction_kind_from_string(const std::string& name) {
  if (name == "allee" || name == "Allee") return ReactionKind::Allee;
  if (name == "logistic" || name == "Logistic") return ReactionKind::Logistic;
  throw ConfigError("unknown reaction kind: '" + name + "' (expected allee|logistic)");
}

ModelSpec ModelSpec::allee() {
  ModelSpec s;
  s.kind = ReactionKind::Allee;
  s.beta = 0.45;
  s.gamma = 1.0;
  s.lambda = s.standard_lambda();
  return s;
}

ModelSpec ModelSpec::logistic() {
  ModelSpec s;
  s.kind = ReactionKind::Logistic;
  s.beta = 5.0;
  s.gamma = 1.0;
  s.D = 0.4;
  s.lambda = s.standard_lambda();
  return s;
}

double ModelSpec::standard_lambda() const {
  return kind == ReactionKind::Allee ? 4.0 * std::sqrt(beta * gamma) : 2.0 * beta;
}

bool ModelSpec::lambda_is_standard(double rel_tol) const {
  if (lambda == 0.0) return true;  // "use convention"
  const double std_l = standard_lambda();
  return std::abs(lambda - std_l) <= rel_tol * std::max(1.0, std::abs(std_l));
}

ModelSpec ModelSpec::with(const std::string& param, double value) const {
  ModelSpec out = *this;
  if (param == "L") out.L = value;
  else if (param == "c") out.c = value;
  else if (param == "D") out.D = value;
  else if (param == "beta") { out.beta = value; out.lambda = 0.0; }
  else if (param == "gamma") { out.gamma = value; out.lambda = 0.0; }
  else if (param == "a") out.a = value;
  else throw ConfigError("unknown continuable parameter: " + param);
  return out;
}

double ModelSpec::get(const std::string& param) const {
  if (param == "L") return L;
  if (param == "c") return c;
  if (param == "D") return D;
  if (param == "beta") return beta;
  if (param == "gamma") return gamma;
  if (param == "a") return a;
  throw ConfigError("unknown parameter: " + param);
}

void ModelSpec::validate() const {
  for (auto [v, n] : {std::pair{D, "D"}, {beta, "beta"}, {gamma, "gamma"},
                      {lambda, "lambda"}, {a, "a"}, {L, "L"}, {c, "c"}}) {
    require_finite(v, n);
  }
  if (D <= 0.0) throw ConfigError("D must be positive");
  if (beta < 0.0) throw ConfigError("beta must be nonnegative");
  if (gamma < 0.0) throw ConfigError("gamma must be nonnegative");
  if (a <= 0.0) throw ConfigError("a must be positive");
  if (L <= 0.0) throw ConfigError("L must be positive");
  if (c < 0.0) throw ConfigError("c must be nonnegative");
}

DimensionlessParams nondimensionalize(const ModelSpec& spec) {
  spec.validate();
  DimensionlessParams p;
  p.beta_t = std::sqrt(spec.beta / (spec.a * spec.a * spec.D));
  p.L_t = spec.a * spec.L;
  p.c_t = spec.c / (spec.a * spec.D);
  return p;
}

double habitat_z(double z, double L_t) {
  require_finite(z, "z");
  if (L_t <= 0.0) throw ConfigError("habitat length must be positive");
  const double log_norm = log_sinh(L_t) - std::log(2.0 * std::tanh(0.5 * L_t));
  return std::exp(log_norm - log_cosh(z + 0.5 * L_t) - log_cosh(z - 0.5 * L_t));
}

double habitat_z_deriv(double z, double L_t) {
  return -habitat_z(z, L_t) * (std::tanh(z + 0.5 * L_t) + std::tanh(z - 0.5 * L_t));
}

double habitat_xi(double xi, double L, double a) {
  require_finite(xi, "xi");
  if (L <= 0.0 || a <= 0.0) throw ConfigError("habitat_xi requires L > 0 and a > 0");
  return habitat_z(a * xi, a * L);
}

double compactify(double z, double alpha) { return std::tanh(0.5 * alpha * z); }

double decompactify(double s, double alpha) {
  if (std::abs(s) >= 1.0) throw ConfigError("decompactify requires |s| < 1");
  return (std::log1p(s) - std::log1p(-s)) / alpha;
}

double reaction(double U, double H, const DimensionlessParams& p, ReactionKind kind) {
  require_finite(U, "U");
  require_finite(H, "H");
  const double bt = p.beta_t;
  if (kind == ReactionKind::Allee) {
    return U * (-bt * bt + 4.0 * bt * H * U - U * U);
  }
  return U * (bt * bt * (2.0 * H - 1.0) - U);
}

double reaction_dU(double U, double H, const DimensionlessParams& p, ReactionKind kind) {
  const double bt = p.beta_t;
  if (kind == ReactionKind::Allee) {
    return -bt * bt + 8.0 * bt * H * U - 3.0 * U * U;
  }
  return bt * bt * (2.0 * H - 1.0) - 2.0 * U;
}

double reaction_dH(double U, double H, const DimensionlessParams& p, ReactionKind kind) {
  (void)H;
  const double bt = p.beta_t;
  if (kind == ReactionKind::Allee) return 4.0 * bt * U * U;
  return 2.0 * bt * bt * U;
}

double reaction_physical(double U, double H, const ModelSpec& spec) {
  const double lambda = spec.lambda > 0.0 ? spec.lambda : spec.standard_lambda();
  if (spec.kind == ReactionKind::Allee) {
    return -spec.beta * U + lambda * H * U * U - spec.gamma * U * U * U;
  }
  return -spec.beta * U + lambda * H * U - spec.gamma * U * U;
}

double u_physical_from_dimensionless(double u_cal, const ModelSpec& spec) {
  const double a2D = spec.a * spec.a * spec.D;
  if (spec.kind == ReactionKind::Allee) return u_cal / std::sqrt(spec.gamma / a2D);
  return u_cal / (spec.gamma / a2D);
}

double u_dimensionless_from_physical(double u_phys, const ModelSpec& spec) {
  const double a2D = spec.a * spec.a * spec.D;
  if (spec.kind == ReactionKind::Allee) return u_phys * std::sqrt(spec.gamma / a2D);
  return u_phys * (spec.gamma / a2D);
}

double select_alpha(const ModelSpec& spec) {
  spec.validate();
  if (spec.D <= kAlphaRuleDiffusionSplit) return 1.0;
  const DimensionlessParams p = nondimensionalize(spec);
  const double l2 = 0.5 * (-p.c_t + std::sqrt(p.c_t * p.c_t + 4.0 * p.beta_t * p.beta_t));
  const double alpha = 0.5 * l2;
  if (!(alpha > 0.0 && alpha <= 2.0 && alpha < std::min(2.0, l2))) {
    std::ostringstream os;
    os << "alpha selection rule gave inadmissible alpha = " << alpha
       << " (l2 = " << l2 << "); no C1 compactification with a normal slow direction";
    throw NumericalError(ErrorCode::DegenerateEquilibrium, os.str());
  }
  return alpha;
}

CompactifiedSystem CompactifiedSystem::from_spec(const ModelSpec& spec) {
  if (!spec.lambda_is_standard()) {
    throw ConfigError(
        "dimensionless reduction assumes lambda = 4 sqrt(beta gamma) (Allee) or "
        "2 beta (logistic); generalize the reaction term before overriding lambda");
  }
  CompactifiedSystem sys;
  sys.params = nondimensionalize(spec);
  sys.alpha = select_alpha(spec);
  sys.kind = spec.kind;
  return sys;
}

double CompactifiedSystem::habitat_s(double s) const {
  if (std::abs(s) > 1.0) throw ConfigError("habitat_s requires |s| <= 1");
  if (std::abs(s) == 1.0) return 0.0;  // h+- = 0 exactly
  return habitat_z(decompactify(s, alpha), params.L_t);
}

double CompactifiedSystem::habitat_s_deriv(double s) const {
  if (std::abs(s) > 1.0) throw ConfigError("habitat_s_deriv requires |s| <= 1");
  if (std::abs(s) == 1.0) {
    if (alpha < 2.0) return 0.0;
    // alpha = rho = 2: finite one-sided limit -+ (cosh(L~) + 1)
    return s > 0.0 ? -(std::cosh(params.L_t) + 1.0) : (std::cosh(params.L_t) + 1.0);
  }
  const double z = decompactify(s, alpha);
  const double Lt = params.L_t;
  // dH/ds = H'(z) * 2/(alpha (1-s^2)); H/(1-s^2) is formed in log space since
  // both factors underflow near |s| = 1.
  const double log_norm = log_sinh(Lt) - std::log(2.0 * std::tanh(0.5 * Lt));
  const double log_ratio = log_norm - log_cosh(z + 0.5 * Lt) - log_cosh(z - 0.5 * Lt)
                           - std::log1p(s) - std::log1p(-s);
  const double tsum = std::tanh(z + 0.5 * Lt) + std::tanh(z - 0.5 * Lt);
  return -2.0 / alpha * tsum * std::exp(log_ratio);
}

Eigen::Vector3d CompactifiedSystem::rhs(const Eigen::Vector3d& state) const {
  const double U = state[0], V = state[1], s = state[2];
  // Newton trial iterates may transiently leave |s| <= 1; the habitat extends
  // C1-continuously by 0 past the invariant planes.
  const double H = std::abs(s) >= 1.0 ? 0.0 : habitat_s(s);
  Eigen::Vector3d out;
  out[0] = V;
  out[1] = -params.c_t * V - reaction(U, H, params, kind);
  out[2] = 0.5 * alpha * (1.0 - s * s);
  return out;
}

Eigen::Matrix3d CompactifiedSystem::jacobian(const Eigen::Vector3d& state) const {
  const double U = state[0], s = state[2];
  const bool outside = std::abs(s) >= 1.0;
  const double H = outside ? 0.0 : habitat_s(s);
  const double dH = outside ? 0.0 : habitat_s_deriv(s);
  Eigen::Matrix3d J = Eigen::Matrix3d::Zero();
  J(0, 1) = 1.0;
  J(1, 0) = -reaction_dU(U, H, params, kind);
  J(1, 1) = -params.c_t;
  J(1, 2) = -reaction_dH(U, H, params, kind) * dH;
  J(2, 2) = -alpha * s;
  return J;
}

Eigen::Vector3d orient_eigenvector(Eigen::Vector3d v) {
  constexpr double tol = 1e-14;
  double pick = 0.0;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(v[i]) > tol) {
      pick = v[i];
      break;
    }
  }
  if (pick < 0.0) v = -v;
  return v;
}

std::pair<EquilibriumData, EquilibriumData> equilibria(const CompactifiedSystem& sys) {
  const double bt = sys.params.beta_t;
  const double ct = sys.params.c_t;
  if (bt <= 0.0) {
    throw NumericalError(ErrorCode::DegenerateEquilibrium,
                         "beta_t = 0 gives a zero eigenvalue at the extinction equilibria");
  }
  const double disc = std::sqrt(ct * ct + 4.0 * bt * bt);
  const double l1 = 0.5 * (-ct - disc);
  const double l2 = 0.5 * (-ct + disc);

  auto planar_vec = [](double l) {
    return orient_eigenvector(Eigen::Vector3d(1.0, l, 0.0).normalized());
  };
  const Eigen::Vector3d v1 = planar_vec(l1);
  const Eigen::Vector3d v2 = planar_vec(l2);
  const Eigen::Vector3d v3 = orient_eigenvector(Eigen::Vector3d(0.0, 0.0, 1.0));

  EquilibriumData minus;
  minus.point = Eigen::Vector3d(0.0, 0.0, -1.0);
  minus.eigenvalues = Eigen::Vector3d(l1, l2, sys.alpha);
  minus.eigenvectors.col(0) = v1;
  minus.eigenvectors.col(1) = v2;
  minus.eigenvectors.col(2) = v3;
  minus.side = Side::Minus;
  minus.unstable_dim = 2;
  minus.stable_dim = 1;

  EquilibriumData plus;
  plus.point = Eigen::Vector3d(0.0, 0.0, 1.0);
  plus.eigenvalues = Eigen::Vector3d(l1, l2, -sys.alpha);
  plus.eigenvectors = minus.eigenvectors;
  plus.side = Side::Plus;
  plus.unstable_dim = 1;
  plus.stable_dim = 2;

  return {minus, plus};
}

ModelSpec model_spec_from_json_text(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ReactionKind kind = ReactionKind::Allee;
  if (j.contains("kind")) kind = reaction_kind_from_string(j["kind"].get<std::string>());
  ModelSpec spec = kind == ReactionKind::Allee ? ModelSpec::allee() : ModelSpec::logistic();
  auto read = [&](const char* key, double& out) {
    if (j.contains(key)) out = j[key].get<double>();
  };
  read("D", spec.D);
  read("beta", spec.beta);
  read("gamma", spec.gamma);
  read("a", spec.a);
  read("L", spec.L);
  read("c", spec.c);
  if (j.contains("lambda")) {
    spec.lambda = j["lambda"].get<double>();
  } else {
    spec.lambda = spec.standard_lambda();
  }
  spec.validate();
  return spec;
}

std::string model_spec_to_json_text(const ModelSpec& spec) {
  nlohmann::json j;
  j["D"] = spec.D;
  j["beta"] = spec.beta;
  j["gamma"] = spec.gamma;
  j["lambda"] = spec.lambda > 0.0 ? spec.lambda : spec.standard_lambda();
  j["a"] = spec.a;
  j["L"] = spec.L;
  j["c"] = spec.c;
  j["kind"] = to_string(spec.kind);
  return j.dump(2);
}

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NewtonDiverged: return "NewtonDiverged";
    case ErrorCode::SingularJacobian: return "SingularJacobian";
    case ErrorCode::MeshExhausted: return "MeshExhausted";
    case ErrorCode::StepFailure: return "StepFailure";
    case ErrorCode::StopConditionNever: return "StopConditionNever";
    case ErrorCode::SingularGapJacobian: return "SingularGapJacobian";
    case ErrorCode::BracketNotFound: return "BracketNotFound";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::BoundaryContaminated: return "BoundaryContaminated";
    case ErrorCode::CurveLeftDomain: return "CurveLeftDomain";
    case ErrorCode::DegenerateEquilibrium: return "DegenerateEquilibrium";
    case ErrorCode::Inconclusive: return "Inconclusive";
  }
  return "Unknown";
}

}  // namespace tipping
