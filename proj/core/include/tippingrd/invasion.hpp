#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "tippingrd/model.hpp"

namespace tipping::invasion {

// Equilibria of the homogeneous (H = 1) dimensionless Allee front system:
// extinction, Allee threshold, carrying capacity.
struct FrontEquilibria {
  double U0 = 0.0;
  double U1 = 0.0;  // (2 - sqrt(3)) beta_t
  double U2 = 0.0;  // (2 + sqrt(3)) beta_t
};

FrontEquilibria allee_front_equilibria(double beta_t);

// Signed distance between W^u(U2) and W^s(U0) on the section U = (U0 + U2)/2,
// measured in V. Negative when the unstable manifold passes below.
double splitting_function(double c_t, double beta_t);

// Dimensionless invasion speed of the Allee front by bisection of the
// splitting function. Throws BracketNotFound when no sign change exists.
double allee_c_inv_dimensionless(double beta_t, double tol = 1e-12);

double allee_c_inv(const ModelSpec& spec);       // physical units, c = a D c~
double logistic_c_inv(const ModelSpec& spec);    // exactly 2 sqrt(beta D)
double c_inv(const ModelSpec& spec);             // dispatch on kind

// Phase-portrait material for the homogeneous front system: the two manifold
// trajectories at a given speed.
struct FrontManifolds {
  std::vector<Eigen::Vector3d> unstable;  // (z, U, V) from U2
  std::vector<Eigen::Vector3d> stable;    // (z, U, V) into U0
};
FrontManifolds front_manifolds(double c_t, double beta_t, double z_span = 80.0);

std::string c_inv_curve_csv(const ModelSpec& base, const std::vector<double>& Ds);

}  // namespace tipping::invasion
