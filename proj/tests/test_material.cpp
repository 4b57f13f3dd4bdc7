#include "safehc/material.hpp"

#include <gtest/gtest.h>

using namespace safehc;

namespace {

// Rank-4 rotation about the 3 axis with explicit index loops.
Voigt rotate_by_tensor(const Voigt& c, double deg) {
  const int vo[3][3] = {{0, 5, 4}, {5, 1, 3}, {4, 3, 2}};
  const double t = deg * M_PI / 180.0;
  double r[3][3] = {{std::cos(t), -std::sin(t), 0}, {std::sin(t), std::cos(t), 0}, {0, 0, 1}};
  double full[3][3][3][3], out[3][3][3][3] = {};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) full[i][j][k][l] = c(vo[i][j], vo[k][l]);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l)
          for (int p = 0; p < 3; ++p)
            for (int q = 0; q < 3; ++q)
              for (int m = 0; m < 3; ++m)
                for (int n = 0; n < 3; ++n)
                  out[i][j][k][l] += r[i][p] * r[j][q] * r[k][m] * r[l][n] * full[p][q][m][n];
  Voigt v;
  const int pairs[6][2] = {{0, 0}, {1, 1}, {2, 2}, {1, 2}, {0, 2}, {0, 1}};
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b) v(a, b) = out[pairs[a][0]][pairs[a][1]][pairs[b][0]][pairs[b][1]];
  return v;
}

}  // namespace

TEST(Material, ZeroRotationIsIdentity) {
  const auto lib = MaterialLibrary::builtin();
  const Voigt c = lib.at("hernando").c_real;
  EXPECT_EQ((rotate_stiffness(c, 0.0) - c).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Material, IsotropicTensorIsRotationInvariant) {
  const auto lib = MaterialLibrary::builtin();
  const Voigt c = lib.at("aluminium_elastic").c_real;
  EXPECT_LT((rotate_stiffness(c, 37.0) - c).cwiseAbs().maxCoeff(), 1e-9 * c.cwiseAbs().maxCoeff());
}

TEST(Material, QuarterTurnMatchesTensorRotation) {
  const auto lib = MaterialLibrary::builtin();
  const Voigt c = lib.at("hernando").c_real;
  const Voigt r = rotate_stiffness(c, 90.0);
  EXPECT_NEAR(r(0, 0), c(1, 1), 1e-6 * c(0, 0));
  EXPECT_NEAR(r(1, 1), c(0, 0), 1e-6 * c(0, 0));
  EXPECT_NEAR(r(3, 3), c(4, 4), 1e-6 * c(0, 0));
  EXPECT_NEAR(r(4, 4), c(3, 3), 1e-6 * c(0, 0));
  for (double deg : {90.0, 30.0, -45.0, 15.0})
    EXPECT_LT((rotate_stiffness(c, deg) - rotate_by_tensor(c, deg)).cwiseAbs().maxCoeff(),
              1e-9 * c.cwiseAbs().maxCoeff());
}

TEST(Material, HomotopyStiffnessEndpoints) {
  const auto lib = MaterialLibrary::builtin();
  const auto& h = lib.at("hernando");
  const VoigtC c0 = homotopy_stiffness(h, 0.0);
  EXPECT_EQ(c0.imag().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((c0.real() - h.c_real).cwiseAbs().maxCoeff(), 0.0);
  const auto& c = lib.at("castaings");
  const VoigtC half = homotopy_stiffness(c, 0.5);
  EXPECT_NEAR(half(0, 0).real(), 125e9, 1e-3);
  EXPECT_NEAR(half(0, 0).imag(), 1.25e9, 1e-3);
}

TEST(Material, EffectiveLossFactor) {
  const auto lib = MaterialLibrary::builtin();
  EXPECT_EQ(effective_loss_factor(lib.at("aluminium_elastic")), 0.0);
  EXPECT_NEAR(effective_loss_factor(lib.at("castaings")), 0.02, 1e-3);
  EXPECT_NEAR(effective_loss_factor(lib.at("castaings_eta0.05")), 0.05, 1e-9);
  EXPECT_NEAR(effective_loss_factor(lib.at("hernando")), 0.003, 1e-3);
}

TEST(Material, LibraryRoundTrip) {
  const auto lib = MaterialLibrary::builtin();
  const auto back = MaterialLibrary::from_json_text(lib.to_json_text());
  for (const auto& n : lib.names()) {
    ASSERT_TRUE(back.contains(n));
    EXPECT_LT((back.at(n).c_real - lib.at(n).c_real).cwiseAbs().maxCoeff(), 1e-3);
    EXPECT_LT((back.at(n).c_imag - lib.at(n).c_imag).cwiseAbs().maxCoeff(), 1e-3);
  }
}

TEST(Material, RejectsBadDensity) {
  EXPECT_THROW(MaterialLibrary::from_json_text(R"([{"name":"x","density":-1,"isotropic":{"E_GPa":70,"nu":0.3}}])"),
               MaterialError);
}
