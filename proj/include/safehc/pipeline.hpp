#pragma once

#include "safehc/diagnostics.hpp"
#include "safehc/keypoints.hpp"
#include "safehc/velocities.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace safehc {

/// Schema violation; `field` is the dotted path of the offending entry.
struct ConfigError : std::runtime_error {
  ConfigError(std::string field_, const std::string& what)
      : std::runtime_error(field_ + ": " + what), field(std::move(field_)) {}
  std::string field;
};

/// Failure inside one pipeline stage.
struct StageError : std::runtime_error {
  StageError(std::string stage_, const std::string& what)
      : std::runtime_error(stage_ + ": " + what), stage(std::move(stage_)) {}
  std::string stage;
};

struct VerifySettings {
  int frequencies = 5;          // sampled endpoint frequencies for the dense cross-check
  /// Frequencies below this fraction of omega_max are not sampled by the
  /// oracle or velocity checks: near the rigid-body limit the dense eigenvalues
  /// are only good to ~1e-7 and vg divides eigenvector round-off by omega.
  double min_omega_fraction = 0.01;
  double match_tol = 1e-8;      // relative endpoint-to-eigenvalue distance
  double lamb_tol = 5e-3;       // relative wavenumber error against the analytic plate roots
  double velocity_tol = 1e-6;   // |vg - ve| / |ve| on lossless anchors
  int velocity_samples = 200;   // anchors checked for the lossless velocity identity
  double residual_tol = 1e-10;  // every accepted continuation sample
};

struct PipelineConfig {
  MaterialLibrary library;
  std::optional<LaminateSpec> laminate;
  int elems_per_ply = 2;
  int order = 5;
  Mesh mesh;  // built from the laminate section or read from the mesh section
  Normalization norm{1.0, 3000.0};
  SweepOptions sweep;
  double zeta_bar = 0.01;
  double gamma_bar = 0.001;
  StepPolicy policy;
  DiagnosticThresholds diagnostics;
  std::vector<int> swap_events;  // indices into the detected events, applied in order
  VerifySettings verify;
  int jobs = 8;
  std::filesystem::path output_dir = "out";
  /// Hash of the settings that determine the stage outputs (jobs and
  /// output_dir excluded); guards single-stage runs against stale artifacts.
  std::string fingerprint;
};

/// Parses and validates a configuration document. Relative file references
/// resolve against `base_dir`. Throws ConfigError.
PipelineConfig parse_config(const std::string& json_text,
                            const std::filesystem::path& base_dir = ".");
PipelineConfig load_config(const std::filesystem::path& path);

enum class Stage { Sweep, Filter, Transport, Post, Diagnose, Verify, All };
Stage stage_from_name(const std::string& name);
std::string stage_name(Stage s);

struct VerifyCheck {
  std::string name;
  bool passed = true;
  bool vacuous = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  std::string json_text;
  bool passed() const;
};

/// Stage outputs are computed on demand; a stage run on its own reads the
/// artifacts of its predecessors from the output directory.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg);

  const PipelineConfig& config() const { return cfg_; }
  const SystemMatrices& matrices();
  const SweepResult& sweep();
  const KeySet& keys();
  const GapInfo& gaps();
  const std::vector<HomotopyPath>& paths();
  const std::vector<AnchorSolution>& skipped_anchors();
  const DispersionDataset& dataset();
  const std::vector<InteractionEvent>& events();
  double x_crit_used();
  VerifyReport verify();

  /// Computes `stage` (every stage for All), writes its artifacts and
  /// refreshes manifest.json. Returns the exit status: 0 on success, 3 when
  /// some path ended without converging, 4 when verify reported a failure.
  /// Throws StageError.
  int run(Stage stage, std::ostream& log);

 private:
  void write_stage(Stage s);
  void write_manifest();
  std::filesystem::path out(const std::string& rel) const;
  bool load_from_disk(Stage producer) const;
  std::optional<Stage> single_;

  PipelineConfig cfg_;
  std::optional<SystemMatrices> mats_;
  std::optional<SweepResult> sweep_;
  std::optional<KeySet> keys_;
  std::optional<GapInfo> gaps_;
  std::optional<std::vector<HomotopyPath>> paths_;
  std::vector<AnchorSolution> skipped_;
  std::optional<DispersionDataset> dataset_;
  std::optional<std::vector<InteractionEvent>> events_;
  double x_crit_used_ = 0.0;
  std::optional<VerifyReport> verify_;
};

/// 64-bit FNV-1a.
std::uint64_t content_hash(const std::string& bytes, std::uint64_t seed = 14695981039346656037ull);

/// Paths plus their endpoints; the sidecar stores each converged endpoint
/// vector (little-endian float64 re/im pairs) in path order.
std::string endpoints_sidecar(const std::vector<HomotopyPath>& paths);
std::vector<HomotopyPath> paths_from_artifacts(const std::string& json_text,
                                               const std::string& sidecar);

/// Configuration documents for the shipped fixtures, name -> file contents
/// (the L-bar entry comes with its mesh file).
std::map<std::string, std::string> fixture_files();

/// The acceptance plate: 1 mm isotropic aluminium, four order-5 elements.
PipelineConfig aluminium_plate_config();

}  // namespace safehc
