#pragma once

#include <Eigen/Core>

#include <array>
#include <complex>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace safehc {

using cplx = std::complex<double>;
using Voigt = Eigen::Matrix<double, 6, 6>;
using VoigtC = Eigen::Matrix<cplx, 6, 6>;

// Voigt ordering throughout: (11, 22, 33, 23, 13, 12).

struct MaterialError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Hysteretic material: storage part c_real, loss part c_imag (both Pa).
struct MaterialTensor {
  std::string name;
  Voigt c_real = Voigt::Zero();
  Voigt c_imag = Voigt::Zero();
  double density = 0.0;

  /// Throws MaterialError if symmetry, positive definiteness or density fails.
  void validate() const;
  VoigtC complex_stiffness() const;
};

struct Ply {
  std::string material;
  double angle_deg = 0.0;
  double thickness = 0.0;  // m
};

struct LaminateSpec {
  std::vector<Ply> plies;
  double propagation_angle_deg = 0.0;

  double total_thickness() const;
  /// True when the ply sequence mirrors about the mid-plane.
  bool is_symmetric() const;
};

struct Normalization {
  double char_length = 1.0;  // a, m
  double char_speed = 3000.0;  // c_T, m/s
};

/// Bond transformation of a Voigt stiffness for a rotation about the
/// through-thickness (3) axis.
VoigtC rotate_stiffness(const VoigtC& c, double angle_deg);
Voigt rotate_stiffness(const Voigt& c, double angle_deg);

/// C' + i s C''. Rejects s outside [0, 1]; continuation overshoot goes
/// through homotopy_stiffness_unclamped.
VoigtC homotopy_stiffness(const MaterialTensor& m, double s);
VoigtC homotopy_stiffness_unclamped(const MaterialTensor& m, double s);

/// ||C''||_F / ||C'||_F
double effective_loss_factor(const MaterialTensor& m);

/// Isotropic material with complex Lame constants lambda(1 + i eta_lambda),
/// mu(1 + i eta_mu).
MaterialTensor isotropic_material(std::string name, double youngs_modulus, double poisson,
                                  double density, double eta_lambda = 0.0,
                                  double eta_mu = 0.0);

/// Orthotropic material from the nine engineering constants given in GPa
/// (C11 C12 C13 C22 C23 C33 C44 C55 C66), real and imaginary parts.
MaterialTensor orthotropic_material(std::string name, const std::array<cplx, 9>& c_gpa,
                                    double density);

/// Copy of m with C'' uniformly scaled so that effective_loss_factor == eta.
MaterialTensor scaled_loss(const MaterialTensor& m, double eta, std::string new_name);

class MaterialLibrary {
 public:
  void add(MaterialTensor m);
  bool contains(const std::string& name) const { return materials_.count(name) > 0; }
  const MaterialTensor& at(const std::string& name) const;
  std::vector<std::string> names() const;

  /// Hernando, Castaings, aluminium, and "castaings_eta0.05".
  static MaterialLibrary builtin();
  /// Parse a JSON material library document (see README for the schema).
  static MaterialLibrary from_json_text(const std::string& text);
  std::string to_json_text() const;

 private:
  std::map<std::string, MaterialTensor> materials_;
};

}  // namespace safehc
