#include "safehc/hermitian_sweep.hpp"
#include "safehc/oracle.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace safehc;
using namespace safehc::testing;

TEST(HermitianSweep, FreePlateHasThreeRigidModesAtZeroWavenumber) {
  const Plate p;
  const ModeSet s = solve_at_k(p.mats, 0.0, 5);
  // omega^2 is what the eigensolver returns; its rounding is ~1e-14
  for (int j = 0; j < 3; ++j) EXPECT_LT(s.omega[j] * s.omega[j], 1e-11);
  EXPECT_GT(s.omega[3], 0.1);
}

TEST(HermitianSweep, PlateModesMatchRayleighLamb) {
  const Plate p;
  const ModeSet s = solve_at_k(p.mats, 1.0, 3);
  // analytic frequencies at k = 1 by bisection on the roots in k
  for (int j = 0; j < 3; ++j) {
    const double w = s.omega[j];
    double best = 1e300;
    for (const auto& r : rayleigh_lamb_roots(p.h, p.cl, p.ct, w)) best = std::min(best, std::abs(r.k - 1.0));
    EXPECT_LT(best, 1e-3) << "mode " << j << " at omega " << w;
  }
}

TEST(HermitianSweep, SolveIsDeterministic) {
  const Plate p("aluminium_elastic", 2, 4);
  const ModeSet a = solve_at_k(p.mats, 0.7, 6);
  const ModeSet b = solve_at_k(p.mats, 0.7, 6);
  EXPECT_EQ(a.omega, b.omega);
  EXPECT_EQ((a.vectors - b.vectors).cwiseAbs().maxCoeff(), 0.0);
}

TEST(HermitianSweep, MacProperties) {
  const Plate p("aluminium_elastic", 2, 4);
  const ModeSet s = solve_at_k(p.mats, 0.7, 4);
  const Eigen::VectorXcd q = s.vectors.col(1);
  EXPECT_NEAR(mac(q, q, p.mats.m), 1.0, 1e-14);
  EXPECT_NEAR(mac(q, cplx(2.0, 3.0) * q, p.mats.m), 1.0, 1e-14);
  EXPECT_LT(mac(s.vectors.col(0), s.vectors.col(2), p.mats.m), 1e-20);
}

TEST(HermitianSweep, HungarianMatchesBruteForce) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const int m = 1 + t % 6;
    Eigen::MatrixXd c(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) c(i, j) = u(rng);
    EXPECT_DOUBLE_EQ(assignment_cost(c, hungarian(c)), assignment_cost(c, brute_force_assignment(c)));
  }
}

TEST(HermitianSweep, AssignmentRecoversIdentityAndTransposition) {
  const Plate p("aluminium_elastic", 2, 4);
  const ModeSet s = solve_at_k(p.mats, 0.7, 5);
  EXPECT_EQ(assign_modes(s.vectors, s.vectors, p.mats.m), (std::vector<int>{0, 1, 2, 3, 4}));
  Eigen::MatrixXcd swapped = s.vectors;
  swapped.col(1).swap(swapped.col(3));
  EXPECT_EQ(assign_modes(s.vectors, swapped, p.mats.m), (std::vector<int>{0, 3, 2, 1, 4}));
}

TEST(HermitianSweep, IntervalErrorLimits) {
  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(3, 3);
  EXPECT_DOUBLE_EQ(interval_error(id, {0, 1, 2}), 0.0);
  Eigen::MatrixXd amb = id;
  amb(0, 0) = amb(0, 1) = amb(1, 0) = amb(1, 1) = 0.5;
  EXPECT_DOUBLE_EQ(interval_error(amb, {0, 1, 2}), 1.0);
}

TEST(HermitianSweep, ClassifiesFamiliesOnSymmetricPlate) {
  const Plate p;
  const ModeSet s = solve_at_k(p.mats, 0.5, 3);
  std::vector<WaveFamily> fam;
  for (int j = 0; j < 3; ++j) fam.push_back(classify_family(s.vectors.col(j), p.mesh));
  // lowest three at small k: A0, SH0, S0
  EXPECT_EQ(fam[0], WaveFamily::A);
  EXPECT_EQ(fam[1], WaveFamily::SH);
  EXPECT_EQ(fam[2], WaveFamily::S);
}

TEST(HermitianSweep, UnsymmetricLayupHasNoFamily) {
  const auto lib = MaterialLibrary::builtin();
  const Mesh mesh = build_laminate_mesh(laminate("hernando", {0, 90, 45}), 1, 4);
  const auto mats = assemble(mesh, lib, Normalization{1e-3, 3000.0});
  const ModeSet s = solve_at_k(mats, 0.5, 2);
  EXPECT_EQ(classify_family(s.vectors.col(0), mesh), WaveFamily::None);
}

TEST(HermitianSweep, AdaptiveSweepOnPlate) {
  const Plate p("aluminium_elastic", 2, 4);
  SweepOptions opt;
  opt.k_max = 3.0;
  opt.omega_max = 3.0;
  const SweepResult a = adaptive_sweep(p.mats, p.mesh, opt);
  EXPECT_GE(a.points.size(), 31u);
  for (std::size_t i = 0; i < a.interval_errors.size(); ++i)
    if (!a.interval_stuck[i]) {
      EXPECT_LE(a.interval_errors[i], opt.eps_bar);
    }
  for (std::size_t i = 1; i < a.points.size(); ++i) EXPECT_GT(a.points[i].k_hat, a.points[i - 1].k_hat);
  // artifacts round-trip
  const SweepResult b = SweepResult::from_artifacts(a.to_json_text(), a.eigvec_sidecar());
  EXPECT_EQ(b.to_json_text(), a.to_json_text());
  const auto s1 = a.solution(0, 10), s2 = b.solution(0, 10);
  EXPECT_EQ((s1.eigenvector - s2.eigenvector).cwiseAbs().maxCoeff(), 0.0);
}
