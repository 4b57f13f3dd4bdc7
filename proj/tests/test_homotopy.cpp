#include "safehc/homotopy.hpp"
#include "safehc/oracle.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace safehc;
using namespace safehc::testing;

namespace {

ExtendedState toy_state(cplx k, double s) {
  ExtendedState st;
  st.q = Eigen::VectorXcd::Ones(1);
  st.q_ref = st.q;
  st.k = k;
  st.s = s;
  return st;
}

const cplx kToyRoot = std::sqrt(cplx(1.0, 1.0));

}  // namespace

TEST(Homotopy, ScalarResidual) {
  const auto m = scalar_toy();
  EXPECT_EQ(residual(toy_state(1.0, 0.0), m, 0.0).norm(), 0.0);
  const auto r = residual(toy_state(1.0, 1.0), m, 0.0);
  EXPECT_NEAR(std::abs(r(0) - cplx(0.0, -1.0)), 0.0, 1e-15);
  EXPECT_EQ(r(1), cplx(0.0));
}

TEST(Homotopy, ConstraintRowIgnoresOrthogonalPerturbation) {
  const Plate p("aluminium_elastic", 2, 3);
  const ModeSet s = solve_at_k(p.mats, 1.0, 2);
  ExtendedState st;
  st.q = s.vectors.col(0) / s.vectors.col(0).norm();
  st.q_ref = st.q;
  st.k = 1.0;
  const auto r0 = residual(st, p.mats, s.omega[0]);
  EXPECT_LT(r0.norm(), 1e-10);
  Eigen::VectorXcd d = Eigen::VectorXcd::Random(p.mats.n);
  d -= st.q_ref * st.q_ref.dot(d);
  st.q += 1e-3 * d;
  EXPECT_NEAR(std::abs(residual(st, p.mats, s.omega[0])(p.mats.n)), 0.0, 1e-15);
}

TEST(Homotopy, ScalarJacobians) {
  const auto m = scalar_toy();
  const auto j = jacobian_y(toy_state(1.0, 0.0), m, 0.0);
  EXPECT_NEAR(std::abs(j(0, 0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(j(0, 1) - 2.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(j(1, 0) - 1.0), 0.0, 1e-15);
  EXPECT_EQ(j(1, 1), cplx(0.0));
  const auto js = jacobian_s(toy_state(1.0, 0.3), m, 0.0);
  EXPECT_NEAR(std::abs(js(0) - cplx(0.0, -1.0)), 0.0, 1e-15);
  EXPECT_EQ(js(1), cplx(0.0));
  EXPECT_EQ((jacobian_s(toy_state(1.0, 0.2), m, 0.0) - jacobian_s(toy_state(1.0, 0.8), m, 0.0)).norm(), 0.0);
}

TEST(Homotopy, JacobianMatchesFiniteDifferences) {
  const Plate p("aluminium", 2, 3);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int t = 0; t < 3; ++t) {
    ExtendedState st;
    st.q.resize(p.mats.n);
    st.q_ref.resize(p.mats.n);
    for (int i = 0; i < p.mats.n; ++i) {
      st.q(i) = cplx(g(rng), g(rng));
      st.q_ref(i) = cplx(g(rng), g(rng));
    }
    st.k = cplx(0.8 + 0.1 * t, 0.01);
    st.s = 0.3 * t;
    const double w = 1.3;
    Eigen::VectorXcd dy(p.mats.n + 1);
    for (int i = 0; i <= p.mats.n; ++i) dy(i) = cplx(g(rng), g(rng));
    const auto j = jacobian_y(st, p.mats, w);
    double prev = 0.0;
    for (double h : {1e-3, 1e-4}) {
      ExtendedState st2 = st;
      st2.q += h * dy.head(p.mats.n);
      st2.k += h * dy(p.mats.n);
      const double err = (residual(st2, p.mats, w) - residual(st, p.mats, w) - h * (j * dy)).norm();
      if (prev > 0.0) {
        EXPECT_NEAR(prev / err, 100.0, 5.0);  // quadratic remainder
      }
      prev = err;
    }
  }
}

TEST(Homotopy, LosslessTangentIsZero) {
  const Plate p("aluminium_elastic", 2, 3);
  const ModeSet s = solve_at_k(p.mats, 1.0, 2);
  ExtendedState st;
  st.q = s.vectors.col(0) / s.vectors.col(0).norm();
  st.q_ref = st.q;
  st.k = 1.0;
  StepPolicy pol;
  const auto jsv = jacobian_s(st, p.mats, s.omega[0]);
  EXPECT_EQ(jsv.norm(), 0.0);
  const Tangent t = tangent(st, p.mats, s.omega[0], pol);
  ASSERT_TRUE(t.ok);
  EXPECT_EQ(t.dy_ds.norm(), 0.0);
}

TEST(Homotopy, ScalarTangentAndNewton) {
  const auto m = scalar_toy();
  StepPolicy pol;
  const Tangent t = tangent(toy_state(1.0, 0.0), m, 0.0, pol);
  ASSERT_TRUE(t.ok);
  EXPECT_NEAR(std::abs(t.dy_ds(1) - cplx(0.0, 0.5)), 0.0, 1e-12);
  const auto exact = newton_correct(toy_state(1.0, 0.0), m, 0.0, pol);
  EXPECT_TRUE(exact.converged);
  EXPECT_EQ(exact.iterations, 0);
  const auto r = newton_correct(toy_state(1.0, 1.0), m, 0.0, pol);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 5);
  EXPECT_LT(std::abs(r.state.k - kToyRoot), 1e-12);
}

TEST(Homotopy, ScalarPathReachesClosedForm) {
  const auto m = scalar_toy();
  StepPolicy pol;
  const auto path = track(toy_state(1.0, 0.0), m, 0.0, pol, 0.01);
  ASSERT_EQ(path.status, PathStatus::Converged);
  ASSERT_TRUE(path.endpoint.has_value());
  EXPECT_LT(std::abs(path.endpoint->k - kToyRoot), 1e-10);
  EXPECT_EQ(path.endpoint->s, 1.0);
  for (const auto& smp : path.samples) EXPECT_LE(smp.residual, 1e-10);
}

TEST(Homotopy, LosslessPathIsIdentity) {
  const Plate p("aluminium_elastic", 2, 3);
  const ModeSet s = solve_at_k(p.mats, 1.0, 2);
  AnchorSolution a;
  a.k_hat = 1.0;
  a.omega_hat = s.omega[1];
  a.eigenvector = s.vectors.col(1);
  StepPolicy pol;
  const ExtendedState st = calibrate(a, p.mats, pol);
  const auto path = track(st, p.mats, a.omega_hat, pol, 0.01);
  ASSERT_EQ(path.status, PathStatus::Converged);
  EXPECT_EQ(path.samples.size(), 2u);
  EXPECT_EQ(path.endpoint->k, st.k);
  EXPECT_EQ((path.endpoint->q - st.q).norm(), 0.0);
}

TEST(Homotopy, CalibrationAbsorbsFrequencyPerturbation) {
  const Plate p("aluminium", 2, 3);
  const ModeSet s = solve_at_k(p.mats, 1.0, 2);
  AnchorSolution a;
  a.k_hat = 1.0;
  a.omega_hat = s.omega[0];
  a.eigenvector = s.vectors.col(0);
  StepPolicy pol;
  const ExtendedState exact = calibrate(a, p.mats, pol);
  EXPECT_LT(std::abs(exact.k - 1.0), 1e-10);
  a.omega_hat *= 1.0 + 1e-8;
  const ExtendedState st = calibrate(a, p.mats, pol);
  EXPECT_LT(residual(st, p.mats, a.omega_hat).norm(), 1e-12 * operator_scale(p.mats, st.k, a.omega_hat, 0.0));
  EXPECT_GT(std::abs(st.k - 1.0), 1e-10);
}

TEST(Homotopy, ExceptionalPointIsNeverCrossed) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, M_PI);
  StepPolicy pol;
  for (int t = 0; t < 10; ++t) {
    const auto ep = exceptional_point_pencil(u(rng));
    ASSERT_EQ(ep.anchors.size(), 2u);
    for (const auto& a : ep.anchors) {
      const auto path = track(calibrate(a, ep.mats, pol), ep.mats, ep.omega, pol, 0.01);
      EXPECT_TRUE(path.status == PathStatus::EPProximity || path.status == PathStatus::StepUnderflow)
          << status_name(path.status);
      EXPECT_FALSE(path.endpoint.has_value());
    }
  }
}

TEST(Homotopy, StepSizeRules) {
  StepPolicy pol;
  EXPECT_DOUBLE_EQ(min_initial_step(0.0252, pol), 2.52e-3);
  EXPECT_DOUBLE_EQ(min_initial_step(0.0867, pol), 8.67e-3);
  EXPECT_DOUBLE_EQ(min_initial_step(6.22e-3, pol), 1e-3);
  EXPECT_DOUBLE_EQ(min_initial_step(1.01e-2, pol), 1.01e-3);
  EXPECT_DOUBLE_EQ(min_initial_step(4.29e-4, pol), 1e-3);
  // no reference gap: the minimum step everywhere
  EXPECT_DOUBLE_EQ(initial_step(std::nullopt, std::nullopt, 0.05, pol), 5e-3);
  EXPECT_DOUBLE_EQ(initial_step(0.01, 0.1, 0.05, pol), 5e-3);
  EXPECT_DOUBLE_EQ(initial_step(0.2, 0.1, 0.05, pol), 1e-2);
  EXPECT_DOUBLE_EQ(initial_step(10.0, 0.1, 0.02, pol), 1e-2);
}

TEST(Homotopy, SingleBranchHasNoReferenceGap) {
  SweepResult sw;
  sw.n_modes = 1;
  sw.omega_max = 10.0;
  for (int i = 1; i <= 5; ++i) {
    SweepPoint pt;
    pt.k_hat = 0.1 * i;
    pt.omega = {pt.k_hat};
    pt.vectors = Eigen::VectorXcd::Ones(1);
    pt.family = {WaveFamily::None};
    sw.points.push_back(pt);
  }
  sw.branches = {{0, 1, 2, 3, 4}};
  KeySet keys;
  keys.retained = sw.branches;
  const GapInfo g = reference_gap(sw, keys);
  EXPECT_FALSE(g.reference.has_value());
  EXPECT_FALSE(g.veering.has_value());
}

TEST(Homotopy, ParallelBranchesGiveConstantGap) {
  // omega = k and omega = k - g: the wavenumber gap at fixed frequency is g
  const double g = 0.3;
  SweepResult sw;
  sw.n_modes = 2;
  sw.omega_max = 10.0;
  for (int i = 0; i <= 30; ++i) {
    SweepPoint pt;
    pt.k_hat = 0.5 + 0.1 * i;
    pt.omega = {pt.k_hat - g, pt.k_hat};
    pt.vectors = Eigen::MatrixXcd::Identity(2, 2);
    pt.family = {WaveFamily::None, WaveFamily::None};
    sw.points.push_back(pt);
  }
  sw.branches.assign(2, {});
  for (int i = 0; i <= 30; ++i) sw.branches[0].push_back(i), sw.branches[1].push_back(i);
  KeySet keys;
  keys.retained = sw.branches;
  const GapInfo info = reference_gap(sw, keys);
  ASSERT_TRUE(info.quantile5.has_value());
  EXPECT_NEAR(*info.quantile5, g, 1e-12);
  EXPECT_FALSE(info.veering.has_value());  // no strict local minimum
  EXPECT_NEAR(*info.reference, g, 1e-12);
}

TEST(Homotopy, NoKeyPointsNoJobs) {
  SweepResult sw;
  sw.n_modes = 0;
  KeySet keys;
  GapInfo gaps;
  StepPolicy pol;
  EXPECT_TRUE(transport_jobs(keys, sw, gaps, pol).empty());
}
