#pragma once

#include "safehc/hermitian_sweep.hpp"

#include <string>
#include <vector>

namespace safehc {

struct KeySet {
  /// Per label: retained grid indices (a subset of SweepResult::branches).
  std::vector<std::vector<int>> retained;
  double zeta_bar = 0.0;
  double gamma_bar = 0.0;
  double retention_fraction = 1.0;

  int count() const;
  std::string to_json_text() const;
  static KeySet from_json_text(const std::string& text, int n_labels);
};

/// Relative interpolation error with a floor on the reference magnitude.
double interpolation_error(double interpolated, double exact);

/// Greedy left-to-right thinning of every branch; a gap is extended while the
/// MAC to the last kept point exceeds 1 - zeta_bar and every skipped point is
/// reproduced by linear interpolation in k to within gamma_bar.
KeySet filter_keypoints(const SweepResult& sweep, double zeta_bar, double gamma_bar,
                        const SystemMatrices::Sparse& m);

/// Retention fraction for every (zeta, gamma) pair; rows follow zetas.
Eigen::MatrixXd retention_surface(const SweepResult& sweep, const std::vector<double>& zetas,
                                  const std::vector<double>& gammas,
                                  const SystemMatrices::Sparse& m, int jobs = 1);

}  // namespace safehc
