#pragma once

#include "safehc/hermitian_sweep.hpp"

#include <string>
#include <vector>

namespace safehc {

/// All 2n wavenumbers of D(k, omega, s) q = 0 from the companion pencil
/// A z = k B z, A = [[0, I], [-K1 + omega^2 M, -i K2]], B = diag(I, K3),
/// solved densely. Throws when n > 3000 or K3(s) is singular.
std::vector<cplx> linearized_spectrum(const SystemMatrices& mats, double omega, double s);

enum class LambKind { Symmetric, Antisymmetric, ShearHorizontal };
struct LambRoot {
  double k = 0.0;
  LambKind kind = LambKind::Symmetric;
  int order = 0;  // 0 for the fundamental mode of each kind
};

/// Positive real wavenumbers of a free isotropic plate of the given
/// thickness at angular frequency omega, in any consistent unit system.
std::vector<LambRoot> rayleigh_lamb_roots(double thickness, double c_l, double c_t, double omega);
/// Same, taking the bulk speeds from a lossless isotropic tensor.
std::vector<LambRoot> rayleigh_lamb_roots(double thickness, const MaterialTensor& iso, double omega);

/// Exhaustive minimum-cost permutation; result[i] is the column of row i.
/// Throws for more than 8 rows.
std::vector<int> brute_force_assignment(const Eigen::MatrixXd& cost);
double assignment_cost(const Eigen::MatrixXd& cost, const std::vector<int>& perm);

/// Two-dof system whose stiffness eigenvalues a +- b sqrt(1 - 4 s^2) meet at
/// s = 0.5, rotated by `angle` radians; K2 = 0, K3 = M = I.
struct ExceptionalPointPencil {
  SystemMatrices mats;
  double omega = 0.0;
  std::vector<AnchorSolution> anchors;  // both s = 0 roots with k > 0
};
ExceptionalPointPencil exceptional_point_pencil(double angle, double a = 1.0, double b = 0.5,
                                                double omega = std::sqrt(3.0));

}  // namespace safehc
