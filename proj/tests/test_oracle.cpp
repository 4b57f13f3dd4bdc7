#include "safehc/oracle.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace safehc;
using namespace safehc::testing;

TEST(Oracle, ScalarCompanionRootsMatchQuadraticFormula) {
  SystemMatrices m;
  m.k1_re = one_by_one(2.0);
  m.k1_im = one_by_one(0.5);
  m.k2_re = one_by_one(0.3);
  m.k2_im = one_by_one(0.1);
  m.k3_re = one_by_one(1.5);
  m.k3_im = one_by_one(0.2);
  m.m = one_by_one(1.0);
  m.n = 1;
  const double w = 2.0, s = 0.7;
  const cplx i(0.0, 1.0);
  const cplx a = 1.5 + i * s * 0.2, b = i * (0.3 + i * s * 0.1), c = 2.0 + i * s * 0.5 - w * w;
  const cplx disc = std::sqrt(b * b - 4.0 * a * c);
  std::vector<cplx> expect = {(-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a)};
  const auto got = linearized_spectrum(m, w, s);
  ASSERT_EQ(got.size(), 2u);
  for (const auto& e : expect) {
    double best = 1e300;
    for (const auto& g : got) best = std::min(best, std::abs(g - e));
    EXPECT_LT(best, 1e-12);
  }
}

TEST(Oracle, AnchorsAppearInTheSpectrum) {
  const Plate p("aluminium_elastic", 2, 4);
  const ModeSet s = solve_at_k(p.mats, 0.8, 3);
  for (int j = 0; j < 3; ++j) {
    const auto spec = linearized_spectrum(p.mats, s.omega[j], 0.0);
    double best = 1e300;
    for (const auto& z : spec) best = std::min(best, std::abs(z - 0.8));
    EXPECT_LT(best, 1e-9);
    // lossless spectrum is closed under k -> -conj(k)
    for (const auto& z : spec) {
      if (std::abs(z) > 1e3) continue;
      double m = 1e300;
      for (const auto& y : spec) m = std::min(m, std::abs(y + std::conj(z)));
      EXPECT_LT(m, 1e-7 * std::max(1.0, std::abs(z)));
    }
  }
}

TEST(Oracle, LowFrequencyLimit) {
  const double cl = 2.0, ct = 1.0, h = 1.0, w = 1e-3;
  const auto roots = rayleigh_lamb_roots(h, cl, ct, w);
  ASSERT_EQ(roots.size(), 3u);
  // S0 at the plate velocity
  const double nu = (cl * cl - 2 * ct * ct) / (2 * (cl * cl - ct * ct));
  const double e_rho = 2 * ct * ct * (1 + nu);
  const double c_plate = std::sqrt(e_rho / (1 - nu * nu));
  for (const auto& r : roots)
    if (r.kind == LambKind::Symmetric) EXPECT_NEAR(w / r.k, c_plate, 5e-3 * c_plate);
}

TEST(Oracle, ShearHorizontalCutoffs) {
  const double ct = 1.0, h = 2.0;
  for (int n = 1; n <= 3; ++n) {
    const double wc = n * M_PI * ct / h;
    int below = 0, above = 0;
    for (const auto& r : rayleigh_lamb_roots(h, 2.0, ct, wc * (1 - 1e-6)))
      below += r.kind == LambKind::ShearHorizontal;
    for (const auto& r : rayleigh_lamb_roots(h, 2.0, ct, wc * (1 + 1e-6)))
      above += r.kind == LambKind::ShearHorizontal;
    EXPECT_EQ(above, below + 1);
  }
}

TEST(Oracle, BruteForceAssignment) {
  Eigen::MatrixXd id = Eigen::MatrixXd::Ones(4, 4) - Eigen::MatrixXd::Identity(4, 4);
  EXPECT_EQ(brute_force_assignment(id), (std::vector<int>{0, 1, 2, 3}));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u;
  Eigen::MatrixXd c(5, 5);
  for (int i = 0; i < 25; ++i) c(i / 5, i % 5) = u(rng);
  const auto base = brute_force_assignment(c);
  EXPECT_DOUBLE_EQ(assignment_cost(c, base), assignment_cost(c, hungarian(c)));
  // row permutation composes with the assignment
  const std::vector<int> perm = {2, 0, 4, 1, 3};
  Eigen::MatrixXd pc(5, 5);
  for (int i = 0; i < 5; ++i) pc.row(i) = c.row(perm[i]);
  const auto moved = brute_force_assignment(pc);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(moved[i], base[perm[i]]);
  EXPECT_THROW(brute_force_assignment(Eigen::MatrixXd::Zero(9, 9)), std::invalid_argument);
}

TEST(Oracle, ExceptionalPointPencilIsDefectiveAtHalf) {
  const auto ep = exceptional_point_pencil(0.3);
  const auto spec = linearized_spectrum(ep.mats, ep.omega, 0.5);
  // k^2 = omega^2 - a, double root
  std::vector<cplx> sq;
  for (const auto& z : spec) sq.push_back(z * z);
  for (const auto& z : sq) EXPECT_NEAR(std::abs(z - cplx(2.0, 0.0)), 0.0, 1e-6);
}
