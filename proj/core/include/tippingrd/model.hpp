#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>

#include "tippingrd/errors.hpp"

namespace tipping {

enum class ReactionKind { Allee, Logistic };

std::string to_string(ReactionKind kind);
ReactionKind reaction_kind_from_string(const std::string& name);

// Physical model: density dynamics u_t = D u_xx + f(u, H(x - ct)) on the line,
// with a tanh-profile habitat patch of length L drifting at speed c.
struct ModelSpec {
  double D = 0.8;        // diffusion
  double beta = 0.45;    // linear death rate
  double gamma = 1.0;    // nonlinear death rate
  double lambda = 0.0;   // birth rate; 0 means "use the standard convention"
  double a = 5.0;        // habitat slope
  double L = 5.0;        // habitat length
  double c = 0.0;        // habitat speed
  ReactionKind kind = ReactionKind::Allee;

  static ModelSpec allee();     // table defaults: beta=0.45, gamma=1, a=5
  static ModelSpec logistic();  // table defaults: beta=5, gamma=1, a=5

  // lambda = 4 sqrt(beta gamma) (Allee) or 2 beta (logistic). The dimensionless
  // reduction below hardcodes these; overriding lambda is rejected there.
  double standard_lambda() const;
  bool lambda_is_standard(double rel_tol = 1e-12) const;

  ModelSpec with(const std::string& param, double value) const;
  double get(const std::string& param) const;

  void validate() const;  // throws ConfigError
};

struct DimensionlessParams {
  double beta_t = 0.0;  // sqrt(beta / (a^2 D))
  double L_t = 0.0;     // a L
  double c_t = 0.0;     // c / (a D)
};

DimensionlessParams nondimensionalize(const ModelSpec& spec);

// --- habitat function -------------------------------------------------------

// H(xi) = [tanh(a(xi+L/2)) - tanh(a(xi-L/2))] / (2 tanh(aL/2)), in (0,1].
double habitat_xi(double xi, double L, double a);

// Dimensionless habitat H~(z) with z = a xi, L~ = a L. Evaluated in log space
// via H~(z) = sinh(L~) / (2 tanh(L~/2) cosh(z+L~/2) cosh(z-L~/2)), which is
// free of the tanh-difference cancellation in the tails.
double habitat_z(double z, double L_t);
double habitat_z_deriv(double z, double L_t);  // dH~/dz

// Compactification s = tanh(alpha z / 2) and its inverse.
double compactify(double z, double alpha);
double decompactify(double s, double alpha);  // (1/alpha) ln((1+s)/(1-s))

// --- dimensionless reaction terms -------------------------------------------

// Allee:    U (-bt^2 + 4 bt H U - U^2)
// Logistic: U (bt^2 (2H - 1) - U)
double reaction(double U, double H, const DimensionlessParams& p, ReactionKind kind);
double reaction_dU(double U, double H, const DimensionlessParams& p, ReactionKind kind);
double reaction_dH(double U, double H, const DimensionlessParams& p, ReactionKind kind);

// Physical-units reaction for the PDE simulator.
double reaction_physical(double U, double H, const ModelSpec& spec);

// Amplitude rescaling between the physical U and the dimensionless state.
double u_physical_from_dimensionless(double u_cal, const ModelSpec& spec);
double u_dimensionless_from_physical(double u_phys, const ModelSpec& spec);

// --- compactified autonomous system -----------------------------------------

// State (U, V, s) with U' = V, V' = -c~ V - f(U, H~_a(s)), s' = (alpha/2)(1-s^2)
// on R^2 x [-1,1]. The planes s = -1 and s = +1 are invariant and carry the
// extinction equilibria p- = (0,0,-1) and p+ = (0,0,+1).
struct CompactifiedSystem {
  DimensionlessParams params;
  double alpha = 1.0;
  double rho = 2.0;  // exponential decay coefficient of H~
  ReactionKind kind = ReactionKind::Allee;

  static CompactifiedSystem from_spec(const ModelSpec& spec);

  double habitat_s(double s) const;        // 0 exactly at s = +-1
  double habitat_s_deriv(double s) const;  // dH/ds; one-sided C1 limit at +-1

  Eigen::Vector3d rhs(const Eigen::Vector3d& state) const;
  Eigen::Matrix3d jacobian(const Eigen::Vector3d& state) const;
};

// alpha = l2-/2 if D > 4.5e-3, else 1 (boundary value assigned to the 1 arm).
double select_alpha(const ModelSpec& spec);

// --- equilibria of the limit systems ----------------------------------------

enum class Side { Minus, Plus };

struct EquilibriumData {
  Eigen::Vector3d point;
  Eigen::Vector3d eigenvalues;   // (l1, l2, l3), l1 < 0 < l2, l3 = +-alpha
  Eigen::Matrix3d eigenvectors;  // unit columns v1, v2, v3
  Side side = Side::Minus;
  int unstable_dim = 0;
  int stable_dim = 0;
};

// Orientation: nonnegative U component, falling back to V, then s.
Eigen::Vector3d orient_eigenvector(Eigen::Vector3d v);

std::pair<EquilibriumData, EquilibriumData> equilibria(const CompactifiedSystem& sys);

// --- JSON -------------------------------------------------------------------

ModelSpec model_spec_from_json_text(const std::string& text);
std::string model_spec_to_json_text(const ModelSpec& spec);

}  // namespace tipping
