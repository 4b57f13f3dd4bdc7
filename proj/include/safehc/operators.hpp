#pragma once

#include "safehc/discretization.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <optional>
#include <vector>

namespace safehc {

using SparseC = Eigen::SparseMatrix<cplx>;

/// D(k, omega, s) = K1(s) + i k K2(s) + k^2 K3(s) - omega^2 M with K_j(s) = K_j' + i s K_j''.
SparseC dynamic_matrix(const SystemMatrices& mats, cplx k, double omega, double s);
/// dD/dk = i K2(s) + 2 k K3(s)
SparseC dk_matrix(const SystemMatrices& mats, cplx k, double s);
/// dD/ds = i (K1'' + i k K2'' + k^2 K3''); independent of s.
SparseC ds_matrix(const SystemMatrices& mats, cplx k);
/// Hermitian stiffness K(k) = K1' + i k K2' + k^2 K3' at real k.
SparseC hermitian_stiffness(const SystemMatrices& mats, double k);

Eigen::VectorXcd apply_dynamic(const SystemMatrices& mats, cplx k, double omega, double s,
                               const Eigen::VectorXcd& q);
/// ||K1(s)|| + |k| ||K2(s)|| + |k|^2 ||K3(s)|| + omega^2 ||M|| (Frobenius); residual scale.
double operator_scale(const SystemMatrices& mats, cplx k, double omega, double s);

/// LU factorization of a banded complex matrix.
class BandedLU {
 public:
  /// Returns false when an exactly zero pivot is met.
  bool factor(const SparseC& a, int bandwidth);
  void solve_in_place(Eigen::VectorXcd& b, bool adjoint = false) const;
  int size() const { return n_; }

 private:
  int n_ = 0;
  int kl_ = 0;
  std::vector<cplx> ab_;
  std::vector<int> ipiv_;
};

/// Solves with the bordered matrix J = [[D, b], [c^H, 0]] through a banded
/// factorization of D and block elimination, followed by one step of
/// iterative refinement. Falls back to a dense factorization of J when D has
/// an exactly zero pivot.
class BorderedSolver {
 public:
  /// Returns false when J is numerically singular.
  bool factor(const SparseC& d, int bandwidth, const Eigen::VectorXcd& b,
              const Eigen::VectorXcd& c);
  Eigen::VectorXcd solve(const Eigen::VectorXcd& rhs) const;
  Eigen::VectorXcd solve_adjoint(const Eigen::VectorXcd& rhs) const;
  /// Estimate of the 1-norm condition number of J.
  double condition_estimate() const;
  Eigen::VectorXcd apply(const Eigen::VectorXcd& x) const;
  Eigen::VectorXcd apply_adjoint(const Eigen::VectorXcd& x) const;

 private:
  Eigen::VectorXcd raw_solve(const Eigen::VectorXcd& rhs) const;
  Eigen::VectorXcd raw_solve_adjoint(const Eigen::VectorXcd& rhs) const;

  SparseC d_;
  Eigen::VectorXcd b_, c_;
  BandedLU lu_;
  Eigen::VectorXcd db_, dc_;  // D^{-1} b, D^{-H} c
  cplx schur_ = 0.0, schur_adj_ = 0.0;
  std::optional<Eigen::PartialPivLU<Eigen::MatrixXcd>> dense_;
};

}  // namespace safehc
