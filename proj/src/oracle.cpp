#include "safehc/oracle.hpp"

#include "lapack.hpp"
#include "safehc/operators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace safehc {
namespace {

// cos(x h / 2) and sin(x h / 2) / x as functions of x^2 (real for either sign).
void even_parts(double x2, double h, double& c, double& s) {
  if (x2 >= 0.0) {
    const double x = std::sqrt(x2);
    c = std::cos(0.5 * x * h);
    s = x > 0.0 ? std::sin(0.5 * x * h) / x : 0.5 * h;
  } else {
    const double x = std::sqrt(-x2);
    c = std::cosh(0.5 * x * h);
    s = std::sinh(0.5 * x * h) / x;
  }
}

double lamb_function(double k, double omega, double h, double cl, double ct, bool symmetric) {
  const double p2 = omega * omega / (cl * cl) - k * k;
  const double q2 = omega * omega / (ct * ct) - k * k;
  double cp, sp, cq, sq;
  even_parts(p2, h, cp, sp);
  even_parts(q2, h, cq, sq);
  const double t = (q2 - k * k) * (q2 - k * k);
  // the odd factor q (symmetric) or p (antisymmetric) is divided out
  if (symmetric) return t * cp * sq + 4.0 * k * k * p2 * sp * cq;
  return t * sp * cq + 4.0 * k * k * q2 * cp * sq;
}

}  // namespace

std::vector<cplx> linearized_spectrum(const SystemMatrices& mats, double omega, double s) {
  const int n = mats.n;
  if (n > 3000) throw std::invalid_argument("linearized_spectrum: system too large for a dense solve");
  const cplx is(0.0, s);
  const Eigen::MatrixXcd k1 = Eigen::MatrixXd(mats.k1_re).cast<cplx>() + is * Eigen::MatrixXd(mats.k1_im).cast<cplx>();
  const Eigen::MatrixXcd k2 = Eigen::MatrixXd(mats.k2_re).cast<cplx>() + is * Eigen::MatrixXd(mats.k2_im).cast<cplx>();
  const Eigen::MatrixXcd k3 = Eigen::MatrixXd(mats.k3_re).cast<cplx>() + is * Eigen::MatrixXd(mats.k3_im).cast<cplx>();
  const Eigen::MatrixXcd m = Eigen::MatrixXd(mats.m).cast<cplx>();
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(k3);
  if (!(lu.rcond() > 1e-14)) throw std::runtime_error("linearized_spectrum: K3 is singular");
  // B^{-1} A = [[0, I], [K3^{-1}(-K1 + omega^2 M), -K3^{-1} i K2]]
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(2 * n, 2 * n);
  a.topRightCorner(n, n).setIdentity();
  a.bottomLeftCorner(n, n) = lu.solve(-k1 + omega * omega * m);
  a.bottomRightCorner(n, n) = lu.solve(-cplx(0.0, 1.0) * k2);
  std::vector<cplx> w(2 * n);
  cplx vl = 0.0, vr = 0.0;
  lapack_int ilo = 0, ihi = 0;
  double abnrm = 0.0;
  std::vector<double> scale(2 * n), rconde(2 * n), rcondv(2 * n);
  const lapack_int info = LAPACKE_zgeevx(LAPACK_COL_MAJOR, 'B', 'N', 'N', 'N', 2 * n, a.data(), 2 * n,
                                         w.data(), &vl, 1, &vr, 1, &ilo, &ihi, scale.data(), &abnrm,
                                         rconde.data(), rcondv.data());
  if (info != 0) throw std::runtime_error("linearized_spectrum: zgeevx failed");
  return w;
}

std::vector<LambRoot> rayleigh_lamb_roots(double h, double cl, double ct, double omega) {
  std::vector<LambRoot> out;
  if (!(omega > 0.0 && h > 0.0 && cl > ct && ct > 0.0)) return out;
  // flexural asymptote bounds the slowest (A0) wavenumber
  const double nu = (cl * cl - 2.0 * ct * ct) / (2.0 * (cl * cl - ct * ct));
  const double e_over_rho = 2.0 * ct * ct * (1.0 + nu);
  const double k_flex = std::pow(12.0 * (1.0 - nu * nu) * omega * omega / (e_over_rho * h * h), 0.25);
  const double k_max = 1.5 * std::max(k_flex, omega / (0.8 * ct));
  const int grid = 40000;
  for (int kind = 0; kind < 2; ++kind) {
    const bool sym = kind == 0;
    std::vector<double> roots;
    double k0 = k_max * 1e-9;
    double f0 = lamb_function(k0, omega, h, cl, ct, sym);
    for (int i = 1; i <= grid; ++i) {
      const double k1 = k_max * i / grid;
      const double f1 = lamb_function(k1, omega, h, cl, ct, sym);
      if (f0 == 0.0) roots.push_back(k0);
      else if (f0 * f1 < 0.0) {
        double lo = k0, hi = k1, flo = f0;
        for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
          const double mid = 0.5 * (lo + hi);
          const double fm = lamb_function(mid, omega, h, cl, ct, sym);
          if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
          } else {
            hi = mid;
          }
        }
        roots.push_back(0.5 * (lo + hi));
      }
      k0 = k1;
      f0 = f1;
    }
    // descending k is ascending mode order at fixed frequency
    std::sort(roots.rbegin(), roots.rend());
    for (std::size_t i = 0; i < roots.size(); ++i)
      out.push_back({roots[i], sym ? LambKind::Symmetric : LambKind::Antisymmetric, static_cast<int>(i)});
  }
  for (int order = 0;; ++order) {
    const double kc = order * M_PI / h;
    const double k2 = omega * omega / (ct * ct) - kc * kc;
    if (k2 <= 0.0) break;
    out.push_back({std::sqrt(k2), LambKind::ShearHorizontal, order});
  }
  return out;
}

std::vector<LambRoot> rayleigh_lamb_roots(double thickness, const MaterialTensor& iso, double omega) {
  const double cl = std::sqrt(iso.c_real(0, 0) / iso.density);
  const double ct = std::sqrt(iso.c_real(3, 3) / iso.density);
  return rayleigh_lamb_roots(thickness, cl, ct, omega);
}

double assignment_cost(const Eigen::MatrixXd& cost, const std::vector<int>& perm) {
  double c = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) c += cost(static_cast<Eigen::Index>(i), perm[i]);
  return c;
}

std::vector<int> brute_force_assignment(const Eigen::MatrixXd& cost) {
  const int m = static_cast<int>(cost.rows());
  if (cost.cols() != m) throw std::invalid_argument("cost matrix must be square");
  if (m > 8) throw std::invalid_argument("brute-force assignment is limited to 8 rows");
  std::vector<int> perm(m), best;
  std::iota(perm.begin(), perm.end(), 0);
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    const double c = assignment_cost(cost, perm);
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

ExceptionalPointPencil exceptional_point_pencil(double angle, double a, double b, double omega) {
  ExceptionalPointPencil out;
  Eigen::Matrix2d q;
  q << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  Eigen::Matrix2d k1r, k1i;
  k1r << a, b, b, a;
  k1i << 2.0 * b, 0.0, 0.0, -2.0 * b;
  k1r = q * k1r * q.transpose();
  k1i = q * k1i * q.transpose();
  auto sparse = [](const Eigen::Matrix2d& d) {
    std::vector<Eigen::Triplet<double>> t;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) t.emplace_back(i, j, d(i, j));
    SystemMatrices::Sparse s(2, 2);
    s.setFromTriplets(t.begin(), t.end());
    return s;
  };
  SystemMatrices& m = out.mats;
  m.k1_re = sparse(k1r);
  m.k1_im = sparse(k1i);
  m.k2_re = sparse(Eigen::Matrix2d::Zero());
  m.k2_im = sparse(Eigen::Matrix2d::Zero());
  m.k3_re = sparse(Eigen::Matrix2d::Identity());
  m.k3_im = sparse(Eigen::Matrix2d::Zero());
  m.m = sparse(Eigen::Matrix2d::Identity());
  m.n = 2;
  m.bandwidth = 1;
  m.total_mass = 2.0;
  out.omega = omega;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(k1r);
  for (int i = 0; i < 2; ++i) {
    const double k2 = omega * omega - es.eigenvalues()(i);
    if (k2 <= 0.0) continue;
    AnchorSolution s;
    s.k_hat = std::sqrt(k2);
    s.omega_hat = omega;
    s.eigenvector = es.eigenvectors().col(i).cast<cplx>();
    s.branch_label = i;
    out.anchors.push_back(s);
  }
  return out;
}

}  // namespace safehc
