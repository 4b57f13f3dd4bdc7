#include "safehc/keypoints.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace safehc;
using namespace safehc::testing;

namespace {

SweepResult plate_sweep() {
  static const SweepResult sw = [] {
    const Plate p("aluminium_elastic", 2, 4);
    SweepOptions opt;
    opt.k_max = 4.0;
    opt.omega_max = 4.0;
    return adaptive_sweep(p.mats, p.mesh, opt);
  }();
  return sw;
}

}  // namespace

TEST(Keypoints, ZeroThresholdsKeepEverything) {
  const Plate p("aluminium_elastic", 2, 4);
  const SweepResult sw = plate_sweep();
  const KeySet k = filter_keypoints(sw, 0.0, 0.0, p.mats.m);
  EXPECT_DOUBLE_EQ(k.retention_fraction, 1.0);
  EXPECT_EQ(k.count(), sw.solution_count());
}

TEST(Keypoints, StraightBranchKeepsOnlyEndpoints) {
  SweepResult sw;
  sw.n_modes = 1;
  sw.omega_max = 100.0;
  SystemMatrices::Sparse m(2, 2);
  m.setIdentity();
  Eigen::VectorXcd q(2);
  q << 1.0, 0.0;
  for (int i = 0; i <= 20; ++i) {
    SweepPoint pt;
    pt.k_hat = 0.1 * i;
    pt.omega = {0.5 + 2.0 * pt.k_hat};
    pt.vectors = q;
    pt.family = {WaveFamily::None};
    sw.points.push_back(pt);
  }
  sw.branches = {{}};
  for (int i = 0; i <= 20; ++i) sw.branches[0].push_back(i);
  const KeySet k = filter_keypoints(sw, 0.01, 0.001, m);
  EXPECT_EQ(k.retained[0], (std::vector<int>{0, 20}));
}

TEST(Keypoints, RetentionSurfaceIsMonotone) {
  const Plate p("aluminium_elastic", 2, 4);
  const SweepResult sw = plate_sweep();
  const std::vector<double> z = {0.0, 0.001, 0.01, 0.05}, g = {0.0, 1e-4, 1e-3, 1e-2};
  const Eigen::MatrixXd r = retention_surface(sw, z, g, p.mats.m, 2);
  EXPECT_DOUBLE_EQ(r(0, 0), 1.0);
  for (int i = 0; i < r.rows(); ++i)
    for (int j = 0; j < r.cols(); ++j) {
      if (i > 0) EXPECT_LE(r(i, j), r(i - 1, j));
      if (j > 0) EXPECT_LE(r(i, j), r(i, j - 1));
    }
}

TEST(Keypoints, JsonRoundTrip) {
  const Plate p("aluminium_elastic", 2, 4);
  const SweepResult sw = plate_sweep();
  const KeySet k = filter_keypoints(sw, 0.01, 0.001, p.mats.m);
  const KeySet back = KeySet::from_json_text(k.to_json_text(), sw.n_modes);
  EXPECT_EQ(back.retained, k.retained);
  EXPECT_EQ(back.to_json_text(), k.to_json_text());
}

TEST(Keypoints, InterpolationErrorHasFloor) {
  EXPECT_DOUBLE_EQ(interpolation_error(1.1, 1.0), interpolation_error(2.1, 2.0) * 2.0);
  EXPECT_TRUE(std::isfinite(interpolation_error(1e-3, 0.0)));
}
