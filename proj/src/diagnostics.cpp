#include "safehc/diagnostics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace safehc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double discrepancy(const ModePoint& p) {
  return std::abs(p.vg.real() - p.ve) / std::max(std::abs(p.ve), 1e-300);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Piecewise-linear sample of one branch quantity at omega (inside the range).
double sample(const std::vector<ModePoint>& pts, double omega, double (*f)(const ModePoint&)) {
  auto it = std::lower_bound(pts.begin(), pts.end(), omega,
                             [](const ModePoint& p, double w) { return p.omega_hat < w; });
  if (it == pts.begin()) return f(*it);
  if (it == pts.end()) return f(pts.back());
  const ModePoint& b = *it;
  const ModePoint& a = *(it - 1);
  if (b.omega_hat == a.omega_hat) return f(b);
  const double t = (omega - a.omega_hat) / (b.omega_hat - a.omega_hat);
  return f(a) + t * (f(b) - f(a));
}

double re_k(const ModePoint& p) { return p.k.real(); }
double im_k(const ModePoint& p) { return p.k.imag(); }

WaveFamily branch_family(const DispersionBranch& b) {
  std::map<WaveFamily, int> votes;
  for (const auto& p : b.points) ++votes[p.family == WaveFamily::SH ? WaveFamily::S : p.family];
  WaveFamily best = WaveFamily::None;
  int n = -1;
  for (const auto& [f, c] : votes)
    if (c > n) {
      best = f;
      n = c;
    }
  return best;
}

// Frequency where the linear interpolant of d crosses level, searching from
// index lo to hi; first crossing when forward.
double level_crossing(const std::vector<double>& w, const std::vector<double>& d, double level,
                      int lo, int hi, bool forward) {
  if (forward) {
    for (int i = lo; i < hi; ++i)
      if ((d[i] - level) * (d[i + 1] - level) <= 0.0 && d[i] != d[i + 1])
        return w[i] + (level - d[i]) / (d[i + 1] - d[i]) * (w[i + 1] - w[i]);
  } else {
    for (int i = hi; i > lo; --i)
      if ((d[i - 1] - level) * (d[i] - level) <= 0.0 && d[i] != d[i - 1])
        return w[i - 1] + (level - d[i - 1]) / (d[i] - d[i - 1]) * (w[i] - w[i - 1]);
  }
  return w[forward ? lo : hi];
}

}  // namespace

std::string interaction_name(InteractionType t) {
  return t == InteractionType::TypeIISuspect ? "TypeIISuspect" : "TypeI";
}

double median_velocity_discrepancy(const DispersionDataset& ds) {
  std::vector<double> all;
  for (const auto& b : ds.branches)
    for (const auto& p : b.points) all.push_back(discrepancy(p));
  return median(all);
}

std::vector<InteractionEvent> detect_interactions(const DispersionDataset& ds,
                                                  const DiagnosticThresholds& th) {
  std::vector<InteractionEvent> events;
  const double x_crit = th.x_crit.value_or(th.x_crit_factor * median_velocity_discrepancy(ds));
  const int nb = static_cast<int>(ds.branches.size());
  for (int ia = 0; ia < nb; ++ia)
    for (int ib = ia + 1; ib < nb; ++ib) {
      const auto& A = ds.branches[ia];
      const auto& B = ds.branches[ib];
      if (A.points.size() < 2 || B.points.size() < 2) continue;
      if (branch_family(A) != branch_family(B)) continue;
      const double lo = std::max(A.points.front().omega_hat, B.points.front().omega_hat);
      const double hi = std::min(A.points.back().omega_hat, B.points.back().omega_hat);
      if (!(hi > lo)) continue;
      std::vector<double> w;
      for (const auto* br : {&A, &B})
        for (const auto& p : br->points)
          if (p.omega_hat >= lo && p.omega_hat <= hi) w.push_back(p.omega_hat);
      std::sort(w.begin(), w.end());
      w.erase(std::unique(w.begin(), w.end()), w.end());
      const int n = static_cast<int>(w.size());
      if (n < 3) continue;
      std::vector<double> g(n), d(n), ra(n), rb(n);
      for (int i = 0; i < n; ++i) {
        g[i] = std::abs(sample(A.points, w[i], re_k) - sample(B.points, w[i], re_k));
        d[i] = sample(A.points, w[i], im_k) - sample(B.points, w[i], im_k);
        ra[i] = sample(A.points, w[i], discrepancy);
        rb[i] = sample(B.points, w[i], discrepancy);
      }
      for (int i = 1; i + 1 < n; ++i) {
        if (!(g[i] < g[i - 1] && g[i] <= g[i + 1])) continue;
        int l = i, r = i;
        while (l > 0 && g[l - 1] > g[l]) --l;
        while (r + 1 < n && g[r + 1] >= g[r]) ++r;
        if (!(g[i] <= th.approach_ratio * std::min(g[l], g[r]))) continue;
        InteractionEvent ev;
        ev.label_a = A.label;
        ev.label_b = B.label;
        ev.omega_lo = w[l];
        ev.omega_hi = w[r];
        ev.omega_min_gap = w[i];
        ev.re_gap_min = g[i];
        for (int j = l; j <= r; ++j) ev.re_gap_min = std::min(ev.re_gap_min, g[j]);
        ev.omega_crossing = w[i];
        // sign changes only count near the closest approach; far from it the
        // imaginary parts may cross for unrelated reasons
        int cl = i, cr = i;
        while (cl > l && g[cl - 1] <= th.core_ratio * g[i]) --cl;
        while (cr < r && g[cr + 1] <= th.core_ratio * g[i]) ++cr;
        cl = std::max(l, std::min(cl, i - 1));
        cr = std::min(r, std::max(cr, i + 1));
        double nearest = kInf;
        int jc = -1;
        for (int j = cl; j < cr; ++j)
          if ((d[j] > 0.0) != (d[j + 1] > 0.0)) {
            ++ev.im_sign_changes;
            const double x =
                d[j] == d[j + 1] ? w[j] : w[j] + d[j] / (d[j] - d[j + 1]) * (w[j + 1] - w[j]);
            if (std::abs(x - w[i]) < nearest) {
              nearest = std::abs(x - w[i]);
              ev.omega_crossing = x;
              jc = j;
            }
          }
        for (int j = cl; j <= cr; ++j) ev.im_contrast = std::max(ev.im_contrast, std::abs(d[j]));
        ev.gap_contrast = ev.im_contrast > 0.0 ? ev.re_gap_min / ev.im_contrast : kInf;
        if (ev.im_sign_changes > 0) {
          // swing runs between the extremes of the difference on either side
          int pl = jc, pr = jc + 1;
          for (int j = l; j <= jc; ++j)
            if (std::abs(d[j]) > std::abs(d[pl]) && (d[j] > 0.0) == (d[jc] > 0.0)) pl = j;
          for (int j = jc + 1; j <= r; ++j)
            if (std::abs(d[j]) > std::abs(d[pr]) && (d[j] > 0.0) == (d[jc + 1] > 0.0)) pr = j;
          const double d0 = d[pl], d1 = d[pr];
          const double a10 = level_crossing(w, d, d0 + 0.1 * (d1 - d0), pl, pr, true);
          const double a90 = level_crossing(w, d, d0 + 0.9 * (d1 - d0), pl, pr, false);
          ev.im_crossing_width = std::abs(a90 - a10);
        } else {
          ev.im_crossing_width = kInf;
        }
        double peak = 0.0;
        for (int j = l; j <= r; ++j) peak = std::max({peak, ra[j], rb[j]});
        std::vector<double> outside;
        for (const auto* br : {&A, &B})
          for (const auto& p : br->points)
            if (p.omega_hat < ev.omega_lo || p.omega_hat > ev.omega_hi) outside.push_back(discrepancy(p));
        ev.vgve_excess = peak - median(outside);
        ev.x_crit = x_crit;
        ev.propagation = kInf;
        for (const auto* br : {&A, &B}) {
          const double im = std::abs(sample(br->points, w[i], im_k));
          if (im > 0.0) ev.propagation = std::min(ev.propagation, sample(br->points, w[i], re_k) / im);
        }
        const bool sharp = ev.gap_contrast < th.contrast_ratio;
        const bool excess = ev.vgve_excess > ev.x_crit;
        const bool evanescent = ev.propagation < th.propagation_ratio;
        ev.classification =
            sharp && excess && !evanescent ? InteractionType::TypeIISuspect : InteractionType::TypeI;
        if (evanescent) {
          ev.rationale = "near cutoff: attenuation comparable to the real wavenumber, not classified";
        } else {
          ev.rationale = std::string(sharp ? "real gap below the damping contrast"
                                           : "real gap dominates the damping contrast") +
                         (excess ? ", vg-ve discrepancy above threshold" : ", vg-ve discrepancy within threshold");
        }
        events.push_back(ev);
      }
    }
  std::stable_sort(events.begin(), events.end(), [](const InteractionEvent& a, const InteractionEvent& b) {
    return a.omega_min_gap < b.omega_min_gap;
  });
  return events;
}

DispersionDataset swap_labels(const DispersionDataset& ds, const InteractionEvent& event) {
  if (event.classification != InteractionType::TypeIISuspect)
    throw std::invalid_argument("label swap is only defined for TypeIISuspect events");
  DispersionDataset out = ds;
  DispersionBranch* a = nullptr;
  DispersionBranch* b = nullptr;
  for (auto& br : out.branches) {
    if (br.label == event.label_a) a = &br;
    if (br.label == event.label_b) b = &br;
  }
  if (!a || !b) throw std::invalid_argument("event labels are not in the dataset");
  auto split = [&](DispersionBranch& br) {
    std::vector<ModePoint> keep, moved;
    for (auto& p : br.points) (p.omega_hat > event.omega_crossing ? moved : keep).push_back(p);
    br.points = std::move(keep);
    return moved;
  };
  auto from_a = split(*a);
  auto from_b = split(*b);
  auto take = [](DispersionBranch& br, std::vector<ModePoint>& pts) {
    for (auto& p : pts) {
      p.branch_label = br.label;
      p.flags ^= kLabelSwapped;
      br.points.push_back(p);
    }
    std::stable_sort(br.points.begin(), br.points.end(),
                     [](const ModePoint& x, const ModePoint& y) { return x.omega_hat < y.omega_hat; });
  };
  take(*a, from_b);
  take(*b, from_a);
  return out;
}

void mark_events(DispersionDataset& ds, const std::vector<InteractionEvent>& events) {
  for (const auto& ev : events) {
    if (ev.classification != InteractionType::TypeIISuspect) continue;
    for (auto& br : ds.branches) {
      if (br.label != ev.label_a && br.label != ev.label_b) continue;
      for (auto& p : br.points)
        if (p.omega_hat >= ev.omega_lo && p.omega_hat <= ev.omega_hi) p.flags |= kTypeIISuspect;
    }
  }
}

std::string events_json_text(const std::vector<InteractionEvent>& events,
                             const DiagnosticThresholds& th, double x_crit_used) {
  nlohmann::ordered_json j;
  j["contrast_ratio"] = th.contrast_ratio;
  j["propagation_ratio"] = th.propagation_ratio;
  j["x_crit"] = x_crit_used;
  j["approach_ratio"] = th.approach_ratio;
  j["core_ratio"] = th.core_ratio;
  int suspect = 0;
  for (const auto& e : events) suspect += e.classification == InteractionType::TypeIISuspect;
  j["event_count"] = events.size();
  j["type_ii_suspect_count"] = suspect;
  j["events"] = nlohmann::ordered_json::array();
  for (const auto& e : events) {
    nlohmann::ordered_json x;
    x["labels"] = {e.label_a, e.label_b};
    x["window"] = {e.omega_lo, e.omega_hi};
    x["omega_min_gap"] = e.omega_min_gap;
    x["omega_crossing"] = e.omega_crossing;
    x["re_gap_min"] = e.re_gap_min;
    x["im_crossing_width"] = std::isfinite(e.im_crossing_width) ? nlohmann::ordered_json(e.im_crossing_width)
                                                                : nlohmann::ordered_json(nullptr);
    x["im_sign_changes"] = e.im_sign_changes;
    x["vgve_excess"] = e.vgve_excess;
    x["im_contrast"] = e.im_contrast;
    x["propagation"] = std::isfinite(e.propagation) ? nlohmann::ordered_json(e.propagation) : nlohmann::ordered_json(nullptr);
    x["gap_contrast"] = std::isfinite(e.gap_contrast) ? nlohmann::ordered_json(e.gap_contrast) : nlohmann::ordered_json(nullptr);
    x["classification"] = interaction_name(e.classification);
    x["rationale"] = e.rationale;
    j["events"].push_back(x);
  }
  return j.dump(1);
}

}  // namespace safehc
