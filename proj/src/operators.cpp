#include "safehc/operators.hpp"

#include "lapack.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace safehc {
namespace {

const cplx kI(0.0, 1.0);

// Linear combination of matrices that all share the pattern of mats.k1_re.
SparseC combine(const SystemMatrices& mats, cplx c1r, cplx c1i, cplx c2r, cplx c2i, cplx c3r,
                cplx c3i, cplx cm) {
  const auto& p = mats.k1_re;
  SparseC out(p.rows(), p.cols());
  out.resizeNonZeros(p.nonZeros());
  std::copy(p.outerIndexPtr(), p.outerIndexPtr() + p.outerSize() + 1, out.outerIndexPtr());
  std::copy(p.innerIndexPtr(), p.innerIndexPtr() + p.nonZeros(), out.innerIndexPtr());
  const double* v[7] = {mats.k1_re.valuePtr(), mats.k1_im.valuePtr(), mats.k2_re.valuePtr(),
                        mats.k2_im.valuePtr(), mats.k3_re.valuePtr(), mats.k3_im.valuePtr(),
                        mats.m.valuePtr()};
  const cplx c[7] = {c1r, c1i, c2r, c2i, c3r, c3i, cm};
  cplx* o = out.valuePtr();
  const Eigen::Index nnz = p.nonZeros();
  for (Eigen::Index e = 0; e < nnz; ++e) {
    cplx acc = 0.0;
    for (int m = 0; m < 7; ++m)
      if (c[m] != 0.0) acc += c[m] * v[m][e];
    o[e] = acc;
  }
  return out;
}

}  // namespace

SparseC dynamic_matrix(const SystemMatrices& mats, cplx k, double omega, double s) {
  const cplx is = kI * s;
  return combine(mats, 1.0, is, kI * k, kI * k * is, k * k, k * k * is, -omega * omega);
}

SparseC dk_matrix(const SystemMatrices& mats, cplx k, double s) {
  const cplx is = kI * s;
  return combine(mats, 0.0, 0.0, kI, kI * is, 2.0 * k, 2.0 * k * is, 0.0);
}

SparseC ds_matrix(const SystemMatrices& mats, cplx k) {
  return combine(mats, 0.0, kI, 0.0, kI * kI * k, 0.0, kI * k * k, 0.0);
}

SparseC hermitian_stiffness(const SystemMatrices& mats, double k) {
  return combine(mats, 1.0, 0.0, kI * k, 0.0, k * k, 0.0, 0.0);
}

Eigen::VectorXcd apply_dynamic(const SystemMatrices& mats, cplx k, double omega, double s,
                               const Eigen::VectorXcd& q) {
  return dynamic_matrix(mats, k, omega, s) * q;
}

double operator_scale(const SystemMatrices& mats, cplx k, double omega, double s) {
  const double k1 = std::hypot(mats.k1_re.norm(), s * mats.k1_im.norm());
  const double k2 = std::hypot(mats.k2_re.norm(), s * mats.k2_im.norm());
  const double k3 = std::hypot(mats.k3_re.norm(), s * mats.k3_im.norm());
  return k1 + std::abs(k) * k2 + std::norm(k) * k3 + omega * omega * mats.m.norm();
}

bool BandedLU::factor(const SparseC& a, int bandwidth) {
  n_ = static_cast<int>(a.rows());
  kl_ = std::max(bandwidth, 0);
  const int ldab = 3 * kl_ + 1;
  ab_.assign(static_cast<std::size_t>(ldab) * n_, cplx(0.0));
  for (int j = 0; j < a.outerSize(); ++j)
    for (SparseC::InnerIterator it(a, j); it; ++it) {
      const int i = static_cast<int>(it.row());
      if (std::abs(i - j) > kl_) throw std::logic_error("matrix entry outside the declared band");
      ab_[static_cast<std::size_t>(2 * kl_ + i - j) + static_cast<std::size_t>(j) * ldab] =
          it.value();
    }
  ipiv_.assign(n_, 0);
  const lapack_int info =
      LAPACKE_zgbtrf(LAPACK_COL_MAJOR, n_, n_, kl_, kl_, ab_.data(), ldab, ipiv_.data());
  if (info < 0) throw std::runtime_error("zgbtrf: invalid argument");
  return info == 0;
}

void BandedLU::solve_in_place(Eigen::VectorXcd& b, bool adjoint) const {
  const lapack_int info = LAPACKE_zgbtrs(LAPACK_COL_MAJOR, adjoint ? 'C' : 'N', n_, kl_, kl_, 1,
                                         ab_.data(), 3 * kl_ + 1, ipiv_.data(), b.data(), n_);
  if (info != 0) throw std::runtime_error("zgbtrs failed");
}

bool BorderedSolver::factor(const SparseC& d, int bandwidth, const Eigen::VectorXcd& b,
                            const Eigen::VectorXcd& c) {
  d_ = d;
  b_ = b;
  c_ = c;
  dense_.reset();
  const int n = static_cast<int>(d.rows());
  if (lu_.factor(d, bandwidth)) {
    db_ = b;
    lu_.solve_in_place(db_);
    dc_ = c;
    lu_.solve_in_place(dc_, true);
    schur_ = c.dot(db_);       // c^H D^{-1} b
    schur_adj_ = b.dot(dc_);   // b^H D^{-H} c
    if (std::isfinite(std::abs(schur_)) && std::abs(schur_) > 0.0 && db_.allFinite() &&
        dc_.allFinite())
      return true;
  }
  Eigen::MatrixXcd j = Eigen::MatrixXcd::Zero(n + 1, n + 1);
  j.topLeftCorner(n, n) = Eigen::MatrixXcd(d);
  j.topRightCorner(n, 1) = b;
  j.bottomLeftCorner(1, n) = c.adjoint();
  dense_.emplace(j);
  const double det_scale = dense_->matrixLU().diagonal().cwiseAbs().minCoeff();
  return std::isfinite(det_scale) && det_scale > 0.0;
}

Eigen::VectorXcd BorderedSolver::apply(const Eigen::VectorXcd& x) const {
  const int n = static_cast<int>(d_.rows());
  Eigen::VectorXcd y(n + 1);
  y.head(n) = d_ * x.head(n) + b_ * x(n);
  y(n) = c_.dot(x.head(n));
  return y;
}

Eigen::VectorXcd BorderedSolver::apply_adjoint(const Eigen::VectorXcd& x) const {
  const int n = static_cast<int>(d_.rows());
  Eigen::VectorXcd y(n + 1);
  y.head(n) = d_.adjoint() * x.head(n) + c_ * x(n);
  y(n) = b_.dot(x.head(n));
  return y;
}

Eigen::VectorXcd BorderedSolver::raw_solve(const Eigen::VectorXcd& rhs) const {
  if (dense_) return dense_->solve(rhs);
  const int n = static_cast<int>(d_.rows());
  Eigen::VectorXcd x1 = rhs.head(n);
  lu_.solve_in_place(x1);
  const cplx xi = (c_.dot(x1) - rhs(n)) / schur_;
  Eigen::VectorXcd out(n + 1);
  out.head(n) = x1 - xi * db_;
  out(n) = xi;
  return out;
}

Eigen::VectorXcd BorderedSolver::raw_solve_adjoint(const Eigen::VectorXcd& rhs) const {
  if (dense_) return dense_->adjoint().solve(rhs);
  const int n = static_cast<int>(d_.rows());
  Eigen::VectorXcd y1 = rhs.head(n);
  lu_.solve_in_place(y1, true);
  const cplx xi = (b_.dot(y1) - rhs(n)) / schur_adj_;
  Eigen::VectorXcd out(n + 1);
  out.head(n) = y1 - xi * dc_;
  out(n) = xi;
  return out;
}

Eigen::VectorXcd BorderedSolver::solve(const Eigen::VectorXcd& rhs) const {
  Eigen::VectorXcd x = raw_solve(rhs);
  x += raw_solve(rhs - apply(x));
  return x;
}

Eigen::VectorXcd BorderedSolver::solve_adjoint(const Eigen::VectorXcd& rhs) const {
  Eigen::VectorXcd x = raw_solve_adjoint(rhs);
  x += raw_solve_adjoint(rhs - apply_adjoint(x));
  return x;
}

double BorderedSolver::condition_estimate() const {
  // 1-norm estimate on the equilibrated R J C, R = diag(r, rho), C = diag(r, gamma),
  // r_i = 1 / sqrt(row sum of |D|)
  const int n = static_cast<int>(d_.rows());
  Eigen::VectorXd rows = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < d_.outerSize(); ++j)
    for (SparseC::InnerIterator it(d_, j); it; ++it) rows(it.row()) += std::abs(it.value());
  Eigen::VectorXd r(n);
  for (int i = 0; i < n; ++i) r(i) = rows(i) > 0.0 ? 1.0 / std::sqrt(rows(i)) : 1.0;
  Eigen::VectorXd col = Eigen::VectorXd::Zero(n + 1);
  for (int j = 0; j < d_.outerSize(); ++j)
    for (SparseC::InnerIterator it(d_, j); it; ++it) col(j) += r(it.row()) * std::abs(it.value()) * r(j);
  const double dnorm = std::max(col.head(n).maxCoeff(), std::numeric_limits<double>::min());
  const double bnorm = r.cwiseProduct(b_.cwiseAbs()).sum();
  const double cnorm = r.cwiseProduct(c_.cwiseAbs()).sum();
  const double gamma = bnorm > 0.0 ? dnorm / bnorm : 1.0;
  const double rho = cnorm > 0.0 ? dnorm / cnorm : 1.0;
  for (int j = 0; j < n; ++j) col(j) += rho * std::abs(c_(j)) * r(j);
  col(n) = gamma * bnorm;
  const double jnorm = col.maxCoeff();

  const lapack_int m = n + 1;
  Eigen::VectorXcd v(m), x = Eigen::VectorXcd::Zero(m);
  double est = 0.0;
  lapack_int kase = 0;
  lapack_int isave[3] = {0, 0, 0};
  for (int guard = 0; guard < 20; ++guard) {
    LAPACKE_zlacn2(m, v.data(), x.data(), &est, &kase, isave);
    if (kase == 0) break;
    if (kase == 1) {  // (R J C)^{-1} = C^{-1} J^{-1} R^{-1}
      x.head(n).array() /= r.array();
      x(n) /= rho;
      x = solve(x);
      x.head(n).array() /= r.array();
      x(n) /= gamma;
    } else {  // (R J C)^{-H} = R^{-1} J^{-H} C^{-1}
      x.head(n).array() /= r.array();
      x(n) /= gamma;
      x = solve_adjoint(x);
      x.head(n).array() /= r.array();
      x(n) /= rho;
    }
    if (!x.allFinite()) return std::numeric_limits<double>::infinity();
  }
  return jnorm * est;
}

}  // namespace safehc
