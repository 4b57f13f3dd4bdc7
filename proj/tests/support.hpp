#pragma once

#include "safehc/discretization.hpp"
#include "safehc/hermitian_sweep.hpp"

#include <cmath>
#include <vector>

namespace safehc::testing {

inline SystemMatrices::Sparse one_by_one(double v) {
  std::vector<Eigen::Triplet<double>> t{{0, 0, v}};
  SystemMatrices::Sparse s(1, 1);
  s.setFromTriplets(t.begin(), t.end());
  return s;
}

// n = 1 system d(k, s) = k^2 - (1 + i s) at omega = 0.
inline SystemMatrices scalar_toy() {
  SystemMatrices m;
  m.k1_re = one_by_one(-1.0);
  m.k1_im = one_by_one(-1.0);
  m.k2_re = one_by_one(0.0);
  m.k2_im = one_by_one(0.0);
  m.k3_re = one_by_one(1.0);
  m.k3_im = one_by_one(0.0);
  m.m = one_by_one(1.0);
  m.n = 1;
  m.bandwidth = 0;
  m.total_mass = 1.0;
  return m;
}

inline LaminateSpec plate_spec(const std::string& material = "aluminium_elastic", double thickness = 1e-3) {
  LaminateSpec spec;
  spec.plies.push_back({material, 0.0, thickness});
  return spec;
}

// 1 mm aluminium plate normalized by half its thickness.
struct Plate {
  MaterialLibrary lib = MaterialLibrary::builtin();
  Mesh mesh;
  SystemMatrices mats;
  double h = 2.0;   // dimensionless thickness
  double cl = 0.0;  // bulk speeds in units of the normalization speed
  double ct = 0.0;
  explicit Plate(const std::string& material = "aluminium_elastic", int elems = 4, int order = 5,
                 double char_speed = 3000.0) {
    mesh = build_laminate_mesh(plate_spec(material), elems, order);
    mats = assemble(mesh, lib, Normalization{0.5e-3, char_speed});
    const auto& m = lib.at(material);
    cl = std::sqrt(m.c_real(0, 0) / m.density) / char_speed;
    ct = std::sqrt(m.c_real(3, 3) / m.density) / char_speed;
  }
};

inline LaminateSpec laminate(const std::string& material, const std::vector<double>& angles,
                             double ply = 0.25e-3) {
  LaminateSpec spec;
  for (double a : angles) spec.plies.push_back({material, a, ply});
  return spec;
}

}  // namespace safehc::testing
