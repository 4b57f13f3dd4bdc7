#pragma once

#include "safehc/material.hpp"

#include <Eigen/Sparse>

#include <array>
#include <string>
#include <vector>

namespace safehc {

struct MeshError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ElementKind { LineGLL, Quad9 };

struct Element {
  ElementKind kind = ElementKind::LineGLL;
  int order = 1;           // polynomial order for LineGLL; 2 for Quad9
  std::vector<int> nodes;  // LineGLL: ordered along z; Quad9: corners ccw, mid-edges, centre
  std::string material;
  double angle_deg = 0.0;  // in-plane rotation of the material frame relative to x
};

/// Cross-section mesh. Node coordinates are (y, z) in metres; the wave
/// travels along x. 1-D laminate meshes place every node at y = 0.
struct Mesh {
  std::vector<Eigen::Vector2d> nodes;
  std::vector<Element> elements;
  /// Through-thickness extent for laminate meshes (z_min, z_max); used for
  /// mid-plane symmetry classification.
  double z_min = 0.0;
  double z_max = 0.0;
  bool symmetric_layup = false;

  int dof_count() const { return 3 * static_cast<int>(nodes.size()); }
  bool is_laminate() const;
  void validate(double char_length) const;

  std::string to_json_text() const;
  static Mesh from_json_text(const std::string& text);
};

/// Gauss-Lobatto-Legendre abscissae on [-1, 1] (ascending) and weights.
struct GllRule {
  std::vector<double> x;
  std::vector<double> w;
  /// d[i][j] = derivative of the j-th Lagrange basis at x[i]
  std::vector<std::vector<double>> d;
};
GllRule gll_rule(int order);

Mesh build_laminate_mesh(const LaminateSpec& spec, int elems_per_ply, int order);

/// Structured quad9 mesh of an L-shaped section: a vertical leg of width
/// `thickness` and height `long_leg`, and a horizontal leg of height
/// `thickness` and width `short_leg`, sharing the corner square. Node
/// numbering is reordered for a small bandwidth.
Mesh build_lbar_mesh(double long_leg, double short_leg, double thickness, int elems_thick,
                     int elems_long, int elems_short, const std::string& material);

/// Quad9 mesh of a rectangle [0, width] x [0, height].
Mesh build_rect_mesh(double width, double height, int nx, int ny, const std::string& material);

/// Dimensionless SAFE matrices. Every matrix shares one sparsity pattern.
struct SystemMatrices {
  using Sparse = Eigen::SparseMatrix<double>;
  Sparse k1_re, k1_im, k2_re, k2_im, k3_re, k3_im, m;
  int n = 0;
  int bandwidth = 0;  // max |i - j| over the pattern
  Normalization normalization;
  double density_ref = 1.0;      // kg/m^3
  double max_bulk_speed = 0.0;   // fastest bulk wave over constituents, units of c_T
  double total_mass = 0.0;       // dimensionless trace of the translational mass

  bool lossless() const;
};

SystemMatrices assemble(const Mesh& mesh, const MaterialLibrary& materials,
                        const Normalization& norm, int jobs = 1);

/// Per-element evaluation data at one quadrature point (dimensionless).
struct QuadraturePoint {
  Eigen::Vector2d point;        // physical (y, z)
  double weight = 0.0;          // quadrature weight x |J| (dimensionless area)
  std::vector<int> dofs;        // global dofs of the element
  Eigen::MatrixXd n;            // 3 x ndof shape functions
  Eigen::MatrixXd b0;           // 6 x ndof
  Eigen::MatrixXd b1;           // 6 x ndof
  const MaterialTensor* material = nullptr;
  double angle_deg = 0.0;
};

/// Visits every quadrature point of the mesh with the same rule that
/// assemble() uses.
std::vector<QuadraturePoint> quadrature_points(const Mesh& mesh, const MaterialLibrary& materials,
                                               const Normalization& norm);

struct FieldSample {
  Eigen::Vector2d point;
  double weight = 0.0;
  Eigen::Matrix<cplx, 6, 1> stress;
  Eigen::Matrix<cplx, 3, 1> velocity;
  double kinetic_density = 0.0;
  double strain_density = 0.0;
  double axial_flux = 0.0;
};

/// Stress, velocity and time-averaged energy densities at every quadrature
/// point for the mode (k, omega, q) of the homotopy state s. All quantities
/// are dimensionless (stress in rho_ref c_T^2, velocity in c_T).
std::vector<FieldSample> reconstruct_fields(const Mesh& mesh, const MaterialLibrary& materials,
                                            const SystemMatrices& mats, cplx k, double omega,
                                            const Eigen::VectorXcd& q, double s);

}  // namespace safehc
