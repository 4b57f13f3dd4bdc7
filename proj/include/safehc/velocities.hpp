#pragma once

#include "safehc/homotopy.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace safehc {

enum PointFlag : std::uint32_t {
  kTypeIISuspect = 1u << 0,
  kLabelSwapped = 1u << 1,
};
std::string flags_text(std::uint32_t flags);

struct ModePoint {
  double omega_hat = 0.0;
  cplx k = 0.0;
  double vp = 0.0;           // omega / Re k, units of c_T
  double attenuation = 0.0;  // Im k
  cplx vg = 0.0;             // spectral group velocity
  double ve = 0.0;           // energy flux velocity
  int branch_label = -1;
  WaveFamily family = WaveFamily::None;
  std::uint32_t flags = 0;
};

struct DispersionBranch {
  int label = -1;
  std::vector<ModePoint> points;  // ascending omega_hat
};

struct DispersionDataset {
  std::vector<DispersionBranch> branches;  // ascending label
  std::map<std::string, std::string> provenance;
  std::map<std::string, std::string> statuses;  // summary counts per path status

  int point_count() const;
  const DispersionBranch* branch(int label) const;
};

struct LeftVector {
  Eigen::VectorXcd vector;  // unit norm
  double residual = 0.0;    // ||D^H q_L|| / ||D||
  bool converged = false;
};

/// Left null vector of D(k, omega, s) by inverse iteration on D^H seeded with
/// the right vector.
LeftVector left_eigenvector(const SystemMatrices& mats, cplx k, double omega, double s,
                            const Eigen::VectorXcd& q_right);

/// -(q_L^H dD/dk q) / (q_L^H dD/domega q); throws std::domain_error when the
/// denominator vanishes.
cplx group_velocity(const SystemMatrices& mats, cplx k, double omega, double s,
                    const Eigen::VectorXcd& q, const Eigen::VectorXcd& q_left);

/// Cross-section integral of the axial power flux over the stored energy.
double energy_velocity(const Mesh& mesh, const MaterialLibrary& materials,
                       const SystemMatrices& mats, cplx k, double omega, double s,
                       const Eigen::VectorXcd& q);

/// Velocities of one converged eigentriple.
ModePoint evaluate_point(const Mesh& mesh, const MaterialLibrary& materials,
                         const SystemMatrices& mats, cplx k, double omega, double s,
                         const Eigen::VectorXcd& q);

/// Converged endpoints grouped by branch label and sorted by frequency.
DispersionDataset build_dataset(const std::vector<HomotopyPath>& paths, const Mesh& mesh,
                                const MaterialLibrary& materials, const SystemMatrices& mats,
                                int jobs = 1);

/// Header omega_hat,k_re,k_im,vp,attenuation,vg_re,vg_im,ve,flags
std::string branch_csv(const DispersionBranch& branch);
std::string dataset_json_text(const DispersionDataset& ds);
DispersionDataset dataset_from_json_text(const std::string& text);

/// gnuplot scripts: name -> script text. The scripts read the branch CSVs
/// from `dataset_dir`.
std::map<std::string, std::string> plot_scripts(const DispersionDataset& ds,
                                                const std::string& dataset_dir);

/// Fixed-format double used in every export.
std::string format_double(double v);

}  // namespace safehc
