#include "safehc/diagnostics.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace safehc;

namespace {

// Two branches whose real parts approach to `gap` at omega = 1 and whose
// imaginary parts cross there over a width set by `im_scale`.
DispersionDataset veering_pair(double gap, double im_scale, double vg_offset) {
  DispersionDataset ds;
  for (int b = 0; b < 2; ++b) {
    DispersionBranch br;
    br.label = b;
    for (int i = 0; i <= 200; ++i) {
      ModePoint p;
      p.omega_hat = 0.5 + 0.005 * i;
      const double x = p.omega_hat - 1.0;
      const double sep = std::sqrt(gap * gap + 0.25 * x * x);
      p.k = cplx(1.0 + p.omega_hat + (b ? sep : -sep), (b ? 1.0 : -1.0) * std::tanh(x / im_scale) * 1e-3 - 2e-3);
      p.ve = 0.5;
      p.vg = 0.5 * (1.0 + 1e-6) + (std::abs(x) < 0.02 ? vg_offset : 0.0);
      p.family = WaveFamily::S;
      p.branch_label = b;
      br.points.push_back(p);
    }
    ds.branches.push_back(br);
  }
  return ds;
}

}  // namespace

TEST(Diagnostics, ParallelBranchesHaveNoEvents) {
  DispersionDataset ds;
  for (int b = 0; b < 2; ++b) {
    DispersionBranch br;
    br.label = b;
    for (int i = 0; i <= 50; ++i) {
      ModePoint p;
      p.omega_hat = 0.1 * i;
      p.k = cplx(p.omega_hat + 2.0 * b, -1e-3);
      p.ve = 1.0;
      p.vg = 1.0;
      p.family = WaveFamily::A;
      br.points.push_back(p);
    }
    ds.branches.push_back(br);
  }
  EXPECT_TRUE(detect_interactions(ds).empty());
}

TEST(Diagnostics, BroadImaginaryCrossingIsTypeOne) {
  const auto ds = veering_pair(0.05, 0.2, 0.0);
  const auto ev = detect_interactions(ds);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].classification, InteractionType::TypeI);
  EXPECT_GT(ev[0].re_gap_min, 0.0);
  EXPECT_EQ(ev[0].im_sign_changes, 1);
  EXPECT_NEAR(ev[0].omega_crossing, 1.0, 1e-9);
  EXPECT_NEAR(ev[0].omega_min_gap, 1.0, 1e-9);
}

TEST(Diagnostics, GapBelowDampingContrastWithExcessIsSuspect) {
  const auto ds = veering_pair(1e-4, 1e-4, 0.2);
  const auto ev = detect_interactions(ds);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].classification, InteractionType::TypeIISuspect);
  // the small gap alone is not enough
  const auto quiet = detect_interactions(veering_pair(1e-4, 1e-4, 0.0));
  ASSERT_EQ(quiet.size(), 1u);
  EXPECT_EQ(quiet[0].classification, InteractionType::TypeI);
}

TEST(Diagnostics, SwapIsAnInvolution) {
  auto ds = veering_pair(1e-4, 1e-4, 0.2);
  DispersionBranch other;
  other.label = 7;
  ModePoint far;
  far.omega_hat = 3.0;
  far.k = cplx(9.0, -1e-3);
  far.ve = 1.0;
  far.vg = 1.0;
  other.points = {far};
  ds.branches.push_back(other);
  const auto ev = detect_interactions(ds);
  ASSERT_FALSE(ev.empty());
  const auto once = swap_labels(ds, ev[0]);
  const auto twice = swap_labels(once, ev[0]);
  EXPECT_EQ(dataset_json_text(twice), dataset_json_text(ds));
  // only points above the crossing move, and they carry the flag
  for (const auto& p : once.branches[0].points) {
    EXPECT_EQ(p.omega_hat > ev[0].omega_crossing, (p.flags & kLabelSwapped) != 0);
  }
  EXPECT_EQ(dataset_json_text({{once.branches[2]}, {}, {}}), dataset_json_text({{ds.branches[2]}, {}, {}}));
  // (omega, k) multiset is preserved
  std::multiset<std::pair<double, double>> a, b;
  for (const auto& br : ds.branches)
    for (const auto& p : br.points) a.insert({p.omega_hat, p.k.real()});
  for (const auto& br : once.branches)
    for (const auto& p : br.points) b.insert({p.omega_hat, p.k.real()});
  EXPECT_EQ(a, b);
}

TEST(Diagnostics, SwapRefusesTypeOneEvents) {
  const auto ds = veering_pair(0.05, 0.2, 0.0);
  const auto ev = detect_interactions(ds);
  ASSERT_FALSE(ev.empty());
  EXPECT_THROW(swap_labels(ds, ev[0]), std::invalid_argument);
}

TEST(Diagnostics, ReportListsEvents) {
  const auto ds = veering_pair(1e-4, 1e-4, 0.2);
  const auto ev = detect_interactions(ds);
  const std::string j = events_json_text(ev, {}, 0.1);
  EXPECT_NE(j.find("TypeIISuspect"), std::string::npos);
  EXPECT_NE(j.find("rationale"), std::string::npos);
  auto marked = ds;
  mark_events(marked, ev);
  int flagged = 0;
  for (const auto& b : marked.branches)
    for (const auto& p : b.points) flagged += (p.flags & kTypeIISuspect) != 0;
  EXPECT_GT(flagged, 0);
}
