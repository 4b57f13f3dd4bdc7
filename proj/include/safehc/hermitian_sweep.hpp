#pragma once

#include "safehc/discretization.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace safehc {

enum class WaveFamily { A, S, SH, None };
std::string family_name(WaveFamily f);
WaveFamily family_from_name(const std::string& s);

struct AnchorSolution {
  double k_hat = 0.0;
  double omega_hat = 0.0;
  Eigen::VectorXcd eigenvector;  // M-normalized
  int branch_label = -1;
  int grid_index = -1;
  WaveFamily wave_family = WaveFamily::None;
};

struct ModeSet {
  std::vector<double> omega;  // ascending
  Eigen::MatrixXcd vectors;   // one M-orthonormal column per mode
};

/// Lowest n_modes eigenpairs of (K(k), M) at s = 0.
ModeSet solve_at_k(const SystemMatrices& mats, double k_hat, int n_modes);
/// Every eigenpair with omega <= omega_cap.
ModeSet solve_below(const SystemMatrices& mats, double k_hat, double omega_cap);

/// |q1^H M q2|^2 / ((q1^H M q1)(q2^H M q2))
double mac(const Eigen::VectorXcd& q1, const Eigen::VectorXcd& q2,
           const SystemMatrices::Sparse& m);
/// MAC between every column of a (rows) and every column of b (columns).
Eigen::MatrixXd mac_matrix(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b,
                           const SystemMatrices::Sparse& m);

/// Minimum-cost perfect matching on a square cost matrix; result[i] is the
/// column assigned to row i.
std::vector<int> hungarian(const Eigen::MatrixXd& cost);
/// Matching of prev columns to next columns minimizing sum(1 - MAC);
/// result[i] is the column of next matched to column i of prev.
std::vector<int> assign_modes(const Eigen::MatrixXcd& prev, const Eigen::MatrixXcd& next,
                              const SystemMatrices::Sparse& m);

/// 1 - min over considered labels j of (MAC(j, j) - max_{m != j} MAC(j, m)),
/// clamped to [0, 2]. The MAC matrix is indexed by label on both sides.
double interval_error(const Eigen::MatrixXd& mac_by_label, const std::vector<int>& considered);
/// Same measure for two label-ordered eigenvector sets (all labels considered).
double interval_error(const Eigen::MatrixXcd& prev, const Eigen::MatrixXcd& next,
                      const SystemMatrices::Sparse& m);

/// A/S/SH by mid-plane parity for symmetric laminate meshes, None otherwise.
WaveFamily classify_family(const Eigen::VectorXcd& q, const Mesh& mesh);

struct SweepOptions {
  double k_min = 0.0;
  double k_max = 10.0;
  double points_per_unit = 10.0;
  double eps_bar = 0.05;
  double dk_min = 1e-3;
  double omega_max = 0.0;     // dimensionless frequency cap
  double cap_margin = 0.05;   // modes up to omega_max (1 + margin) are solved
  int guard_modes = 2;
  double degeneracy_tol = 1e-8;
  int max_rounds = 64;
  int jobs = 1;
};

struct SweepPoint {
  double k_hat = 0.0;
  std::vector<double> omega;      // indexed by label
  Eigen::MatrixXcd vectors;       // column j = label j
  std::vector<WaveFamily> family; // indexed by label
};

struct SweepResult {
  std::vector<SweepPoint> points;  // ascending k
  int n_modes = 0;
  int guard_modes = 0;
  double omega_max = 0.0;
  double eps_bar = 0.0;
  double dk_min = 0.0;
  std::vector<double> interval_errors;  // one per adjacent pair
  std::vector<char> interval_stuck;     // eps > eps_bar at width <= dk_min
  int refinement_rounds = 0;
  /// Per label: grid indices where omega <= omega_max.
  std::vector<std::vector<int>> branches;

  std::vector<double> grid() const;
  int solution_count() const;
  AnchorSolution solution(int label, int grid_index) const;

  std::string to_json_text() const;
  /// Binary sidecar: one JSON header line, then for every (label, grid index)
  /// of `branches` the eigenvector as little-endian float64 re/im pairs.
  std::string eigvec_sidecar() const;
  /// Inverse of to_json_text() + eigvec_sidecar(); eigenvectors above the
  /// frequency cap are not stored and come back as zero columns.
  static SweepResult from_artifacts(const std::string& json_text, const std::string& sidecar);
};

SweepResult adaptive_sweep(const SystemMatrices& mats, const Mesh& mesh, const SweepOptions& opt);

/// Recomputes labels by chaining optimal assignments from the first point.
void relabel(std::vector<SweepPoint>& points, const SystemMatrices::Sparse& m);

}  // namespace safehc
