#pragma once

#include "safehc/velocities.hpp"

#include <optional>
#include <string>
#include <vector>

namespace safehc {

enum class InteractionType { TypeI, TypeIISuspect };
std::string interaction_name(InteractionType t);

struct InteractionEvent {
  int label_a = -1;
  int label_b = -1;
  double omega_lo = 0.0;
  double omega_hi = 0.0;
  double omega_min_gap = 0.0;  // frequency of the smallest real-part gap
  double omega_crossing = 0.0; // sign change of Im k_a - Im k_b nearest the closest approach (omega_min_gap if none)
  double re_gap_min = 0.0;
  double im_crossing_width = 0.0;  // infinity when Im k_a - Im k_b keeps its sign
  int im_sign_changes = 0;
  double vgve_excess = 0.0;
  double im_contrast = 0.0;    // largest |Im k_a - Im k_b| near the closest approach
  double gap_contrast = 0.0;   // re_gap_min / im_contrast
  double propagation = 0.0;    // smaller Re k / |Im k| of the pair at the closest approach
  double x_crit = 0.0;
  InteractionType classification = InteractionType::TypeI;
  std::string rationale;
};

struct DiagnosticThresholds {
  /// Real-part gap below this fraction of the local damping contrast marks
  /// the crossing as sharp: the coupling no longer dominates the loss
  /// difference, so the real parts cross instead of veering.
  double contrast_ratio = 0.2;
  /// Pairs with Re k below this multiple of |Im k| sit near a cutoff, where
  /// the velocity comparison carries no information; never flagged.
  double propagation_ratio = 5.0;
  std::optional<double> x_crit;   // absolute; default x_crit_factor * dataset median
  double x_crit_factor = 5.0;
  /// A local minimum of the real-part gap counts as an interaction when it is
  /// at most this fraction of the smaller bounding maximum.
  double approach_ratio = 0.5;
  /// Imaginary-part sign changes are counted where the real-part gap stays
  /// within this multiple of its minimum.
  double core_ratio = 2.0;
};

/// Median over every point of |Re vg - ve| / |ve|.
double median_velocity_discrepancy(const DispersionDataset& ds);

std::vector<InteractionEvent> detect_interactions(const DispersionDataset& ds,
                                                  const DiagnosticThresholds& th = {});

/// Moves every point above the crossing frequency of the event from one
/// branch to the other and toggles LabelSwapped on the moved points. Throws
/// std::invalid_argument unless the event is TypeIISuspect.
DispersionDataset swap_labels(const DispersionDataset& ds, const InteractionEvent& event);

/// Sets TypeIISuspect on the points inside the window of every suspect event.
void mark_events(DispersionDataset& ds, const std::vector<InteractionEvent>& events);

std::string events_json_text(const std::vector<InteractionEvent>& events,
                             const DiagnosticThresholds& th, double x_crit_used);

}  // namespace safehc
