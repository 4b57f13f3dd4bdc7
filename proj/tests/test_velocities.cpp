#include "safehc/operators.hpp"
#include "safehc/velocities.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace safehc;
using namespace safehc::testing;

namespace {

// SH0 is the mode whose frequency equals k c_t.
int sh0_index(const Plate& p, const ModeSet& s, double k) {
  for (int j = 0; j < static_cast<int>(s.omega.size()); ++j)
    if (std::abs(s.omega[j] - k * p.ct) < 1e-6 * s.omega[j]) return j;
  return -1;
}

}  // namespace

TEST(Velocities, ShearHorizontalFundamentalTravelsAtShearSpeed) {
  // normalize with the shear speed so that SH0 moves at unit speed
  const MaterialLibrary lib = MaterialLibrary::builtin();
  const auto& al = lib.at("aluminium_elastic");
  const Plate p("aluminium_elastic", 4, 5, std::sqrt(al.c_real(3, 3) / al.density));
  const double k = 1.2;
  const ModeSet s = solve_at_k(p.mats, k, 4);
  const int j = sh0_index(p, s, k);
  ASSERT_GE(j, 0);
  const ModePoint pt = evaluate_point(p.mesh, p.lib, p.mats, k, s.omega[j], 0.0, s.vectors.col(j));
  EXPECT_NEAR(pt.vg.real(), 1.0, 5e-3);
  EXPECT_NEAR(pt.ve, 1.0, 5e-3);
  EXPECT_NEAR(pt.vp, 1.0, 5e-3);
}

TEST(Velocities, HermitianLeftVectorIsTheRightVector) {
  const Plate p("aluminium_elastic", 2, 4);
  const ModeSet s = solve_at_k(p.mats, 0.9, 3);
  for (int j = 0; j < 3; ++j) {
    const Eigen::VectorXcd q = s.vectors.col(j);
    const LeftVector l = left_eigenvector(p.mats, 0.9, s.omega[j], 0.0, q);
    ASSERT_TRUE(l.converged);
    EXPECT_NEAR(std::abs(l.vector.dot(q)) / q.norm(), 1.0, 1e-9);
    const ModePoint pt = evaluate_point(p.mesh, p.lib, p.mats, 0.9, s.omega[j], 0.0, q);
    EXPECT_LT(std::abs(pt.vg - pt.ve) / pt.ve, 1e-6);
  }
}

TEST(Velocities, LossyLeftVectorMirrorsTheNegativeWavenumber) {
  const Plate p("aluminium", 2, 4);
  const ModeSet s = solve_at_k(p.mats, 0.9, 2);
  AnchorSolution a;
  a.k_hat = 0.9;
  a.omega_hat = s.omega[1];
  a.eigenvector = s.vectors.col(1);
  StepPolicy pol;
  const auto path = track(calibrate(a, p.mats, pol), p.mats, a.omega_hat, pol, 0.01);
  ASSERT_TRUE(path.endpoint.has_value());
  const auto& e = *path.endpoint;
  const LeftVector l = left_eigenvector(p.mats, e.k, a.omega_hat, 1.0, e.q);
  ASSERT_TRUE(l.converged);
  const SparseC d = dynamic_matrix(p.mats, e.k, a.omega_hat, 1.0);
  EXPECT_LE((d.adjoint() * l.vector).norm(), 1e-9 * d.norm());
  // D(k)^T = D(-k): conj(q_L) is a right null vector at -k
  const Eigen::VectorXcd mirror = apply_dynamic(p.mats, -e.k, a.omega_hat, 1.0, l.vector.conjugate());
  EXPECT_LE(mirror.norm(), 1e-9 * d.norm());
}

TEST(Velocities, EmptyInputGivesEmptyDataset) {
  const Plate p("aluminium_elastic", 1, 2);
  const DispersionDataset ds = build_dataset({}, p.mesh, p.lib, p.mats);
  EXPECT_TRUE(ds.branches.empty());
  EXPECT_EQ(ds.point_count(), 0);
}

TEST(Velocities, CsvAndJsonExports) {
  DispersionBranch b;
  b.label = 3;
  ModePoint pt;
  pt.omega_hat = 1.5;
  pt.k = cplx(2.0, -1e-3);
  pt.vp = 0.75;
  pt.attenuation = -1e-3;
  pt.vg = cplx(0.5, 1e-4);
  pt.ve = 0.49;
  pt.flags = kTypeIISuspect | kLabelSwapped;
  pt.family = WaveFamily::S;
  pt.branch_label = 3;
  b.points = {pt};
  const std::string csv = branch_csv(b);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "omega_hat,k_re,k_im,vp,attenuation,vg_re,vg_im,ve,flags");
  EXPECT_NE(csv.find("TypeIISuspect|LabelSwapped"), std::string::npos);
  DispersionDataset ds;
  ds.branches = {b};
  ds.provenance["mesh_hash"] = "x";
  const auto back = dataset_from_json_text(dataset_json_text(ds));
  EXPECT_EQ(dataset_json_text(back), dataset_json_text(ds));
  EXPECT_EQ(back.branches[0].points[0].k, pt.k);
  EXPECT_EQ(plot_scripts(ds, "d").size(), 4u);
}
