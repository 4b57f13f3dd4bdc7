#pragma once

#include "safehc/hermitian_sweep.hpp"
#include "safehc/keypoints.hpp"
#include "safehc/operators.hpp"

#include <optional>
#include <string>
#include <vector>

namespace safehc {

/// Unknowns y = (q, k) at homotopy parameter s, with the normalization
/// reference q_ref.
struct ExtendedState {
  Eigen::VectorXcd q;
  cplx k = 0.0;
  double s = 0.0;
  Eigen::VectorXcd q_ref;
};

struct StepPolicy {
  double ds_init_max = 0.01;
  double ds_init_floor = 1e-3;  // lower bound of the smallest initial step
  double tau_bar = 0.99;
  double growth = 1.1;
  double shrink = 0.5;
  double ds_floor = 1e-7;
  int max_newton = 8;
  double newton_tol = 1e-10;
  int max_steps = 20000;
  /// Bordered Jacobian condition estimate that signals a nearby exceptional point.
  double condition_limit = 6.7108864e7;  // 1 / sqrt(machine epsilon)

  void validate() const;
};

enum class PathStatus { Converged, EPProximity, StepUnderflow, MaxSteps };
std::string status_name(PathStatus s);

struct PathSample {
  double s = 0.0;
  cplx k = 0.0;
  double residual = 0.0;
};

struct StepStats {
  double initial_step = 0.0;
  double min_step = 0.0;
  int steps = 0;
  int newton_iterations = 0;
  int rejections = 0;
  double max_condition = 0.0;
};

struct HomotopyPath {
  double omega_hat = 0.0;
  int branch_label = -1;
  int grid_index = -1;
  WaveFamily family = WaveFamily::None;
  double k_anchor = 0.0;
  std::vector<PathSample> samples;
  std::optional<ExtendedState> endpoint;  // present only when Converged
  ExtendedState last_good;
  PathStatus status = PathStatus::MaxSteps;
  StepStats stats;
};

/// G(y, s) = [D(k, s) q; q_ref^H q - 1]
Eigen::VectorXcd residual(const ExtendedState& st, const SystemMatrices& mats, double omega);
/// dG/dy = [[D, (i K2(s) + 2 k K3(s)) q], [q_ref^H, 0]] (dense; for checks)
Eigen::MatrixXcd jacobian_y(const ExtendedState& st, const SystemMatrices& mats, double omega);
/// dG/ds = [i (K1'' + i k K2'' + k^2 K3'') q; 0]
Eigen::VectorXcd jacobian_s(const ExtendedState& st, const SystemMatrices& mats, double omega);

struct Tangent {
  Eigen::VectorXcd dy_ds;  // (dq/ds, dk/ds), size n + 1
  Eigen::VectorXcd unit;   // (dq/ds, dk/ds, 1) / norm, size n + 2
  double condition = 0.0;
  bool ok = false;         // false: singular or condition above the limit
};
Tangent tangent(const ExtendedState& st, const SystemMatrices& mats, double omega,
                const StepPolicy& policy);

struct NewtonResult {
  ExtendedState state;
  int iterations = 0;
  bool converged = false;
  bool singular = false;
  double residual = 0.0;
};
NewtonResult newton_correct(const ExtendedState& guess, const SystemMatrices& mats, double omega,
                            const StepPolicy& policy);

/// Smallest initial step max(floor, 0.1 dl_veering).
double min_initial_step(double dl_veering, const StepPolicy& policy);
/// min[ds_min min(max(1, 2^(beta - 1)), 10), ds_init_max], beta = dl / dl_bar.
double initial_step(std::optional<double> dl, std::optional<double> dl_bar, double dl_veering,
                    const StepPolicy& policy);

struct GapInfo {
  std::optional<double> reference;  // dl_bar
  std::optional<double> veering;    // smallest local minimum along the key points of a branch, away from cutoffs
  std::optional<double> quantile5;  // 5% quantile of the key-point gaps
  /// gap[label][grid index]: wavenumber distance at fixed frequency to the
  /// nearest other branch of the same family; absent where there is none
  std::vector<std::vector<std::optional<double>>> gap;
};
GapInfo reference_gap(const SweepResult& sweep, const KeySet& keys);

/// Newton correction at s = 0 with omega fixed; q_ref is the anchor vector
/// scaled to unit length.
ExtendedState calibrate(const AnchorSolution& anchor, const SystemMatrices& mats,
                        const StepPolicy& policy);

HomotopyPath track(const ExtendedState& start, const SystemMatrices& mats, double omega,
                   const StepPolicy& policy, double ds_init);

struct TransportJob {
  AnchorSolution anchor;
  double ds_init = 0.0;
};

/// Key points of the sweep as transport jobs ordered by (label, k); anchors at
/// k = 0 or omega = 0 are returned in `skipped` (double roots of the
/// wavenumber problem).
std::vector<TransportJob> transport_jobs(const KeySet& keys, const SweepResult& sweep,
                                         const GapInfo& gaps, const StepPolicy& policy,
                                         std::vector<AnchorSolution>* skipped = nullptr);

std::vector<HomotopyPath> transport_all(const std::vector<TransportJob>& jobs,
                                        const SystemMatrices& mats, const StepPolicy& policy,
                                        int threads);

/// Anchors of `label` at exactly omega: every crossing of the branch with the
/// target frequency, refined by Newton at s = 0.
std::vector<AnchorSolution> anchors_at_frequency(const SweepResult& sweep, int label,
                                                 double omega, const SystemMatrices& mats,
                                                 const StepPolicy& policy);

std::string paths_to_json_text(const std::vector<HomotopyPath>& paths);

}  // namespace safehc
