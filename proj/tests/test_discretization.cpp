#include "safehc/discretization.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace safehc;
using namespace safehc::testing;

TEST(Discretization, GllRuleIntegratesPolynomials) {
  for (int p = 1; p <= 8; ++p) {
    const GllRule r = gll_rule(p);
    ASSERT_EQ(static_cast<int>(r.x.size()), p + 1);
    double w = 0.0, x2 = 0.0;
    for (int i = 0; i <= p; ++i) {
      w += r.w[i];
      x2 += r.w[i] * r.x[i] * r.x[i];
    }
    EXPECT_NEAR(w, 2.0, 1e-13);
    if (p >= 2) EXPECT_NEAR(x2, 2.0 / 3.0, 1e-13);
  }
}

TEST(Discretization, MinimalMesh) {
  const Mesh m = build_laminate_mesh(plate_spec(), 1, 1);
  EXPECT_EQ(m.nodes.size(), 2u);
  EXPECT_EQ(m.dof_count(), 6);
}

TEST(Discretization, NodeCountFormula) {
  std::vector<double> angles(16, 0.0);
  const Mesh m = build_laminate_mesh(laminate("hernando", angles), 1, 4);
  // direct enumeration of distinct node heights
  std::vector<double> z;
  for (const auto& n : m.nodes) z.push_back(n.y());
  std::sort(z.begin(), z.end());
  z.erase(std::unique(z.begin(), z.end(), [](double a, double b) { return std::abs(a - b) < 1e-15; }), z.end());
  EXPECT_EQ(static_cast<int>(z.size()), 16 * 4 + 1);
  EXPECT_EQ(m.dof_count(), 195);
}

TEST(Discretization, LosslessMaterialGivesRealMatrices) {
  const Plate p("aluminium_elastic", 1, 3);
  EXPECT_EQ(p.mats.k1_im.norm(), 0.0);
  EXPECT_EQ(p.mats.k2_im.norm(), 0.0);
  EXPECT_EQ(p.mats.k3_im.norm(), 0.0);
  EXPECT_TRUE(p.mats.lossless());
}

TEST(Discretization, OperatorSymmetryOnSymmetricLaminate) {
  const auto lib = MaterialLibrary::builtin();
  std::vector<double> a = {0, 90, 45, -45, 0, 90, 45, -45};
  a.insert(a.end(), a.rbegin(), a.rend());
  const Mesh mesh = build_laminate_mesh(laminate("hernando", a), 2, 5);
  const auto m = assemble(mesh, lib, Normalization{2e-3, 3000.0});
  EXPECT_EQ(m.n, 483);
  const double s = m.k1_re.norm();
  EXPECT_LE((m.k1_re - SystemMatrices::Sparse(m.k1_re.transpose())).norm(), 1e-12 * s);
  EXPECT_LE((m.k2_re + SystemMatrices::Sparse(m.k2_re.transpose())).norm(), 1e-12 * s);
  EXPECT_LE((m.k3_re - SystemMatrices::Sparse(m.k3_re.transpose())).norm(), 1e-12 * s);
  EXPECT_LE((m.m - SystemMatrices::Sparse(m.m.transpose())).norm(), 1e-12 * m.m.norm());
}

TEST(Discretization, AssemblyIsAdditiveOverElements) {
  const auto lib = MaterialLibrary::builtin();
  const Mesh two = build_laminate_mesh(laminate("hernando", {0, 45}), 1, 3);
  const auto whole = assemble(two, lib, Normalization{1e-3, 3000.0});
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(whole.n, whole.n);
  for (std::size_t e = 0; e < two.elements.size(); ++e) {
    Mesh one = two;
    one.elements = {two.elements[e]};
    // unused nodes contribute empty rows
    const auto part = assemble(one, lib, Normalization{1e-3, 3000.0});
    sum += Eigen::MatrixXd(part.k1_re);
  }
  EXPECT_LT((sum - Eigen::MatrixXd(whole.k1_re)).cwiseAbs().maxCoeff(), 1e-12 * sum.cwiseAbs().maxCoeff());
}

TEST(Discretization, MeshJsonRoundTrip) {
  const Mesh m = build_lbar_mesh(30e-3, 20e-3, 2e-3, 1, 4, 3, "aluminium");
  const Mesh back = Mesh::from_json_text(m.to_json_text());
  EXPECT_EQ(back.to_json_text(), m.to_json_text());
  EXPECT_FALSE(back.is_laminate());
}

TEST(Discretization, RigidTranslationIsStressFree) {
  const Plate p("aluminium_elastic", 2, 3);
  Eigen::VectorXcd q = Eigen::VectorXcd::Zero(p.mats.n);
  for (int i = 0; i < p.mats.n; i += 3) q(i + 2) = 1.0;
  for (const auto& f : reconstruct_fields(p.mesh, p.lib, p.mats, 0.0, 0.0, q, 0.0))
    EXPECT_LT(f.stress.norm(), 1e-12);
}

TEST(Discretization, PropagatingModeCarriesPositiveFlux) {
  const Plate p("aluminium_elastic", 2, 5);
  const ModeSet modes = solve_at_k(p.mats, 1.0, 6);
  for (int j = 0; j < 6; ++j) {
    double flux = 0.0;
    for (const auto& f : reconstruct_fields(p.mesh, p.lib, p.mats, 1.0, modes.omega[j], modes.vectors.col(j), 0.0))
      flux += f.weight * f.axial_flux;
    EXPECT_GT(flux, 0.0) << "mode " << j;
  }
}
