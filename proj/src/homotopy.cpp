#include "safehc/homotopy.hpp"

#include "parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace safehc {
namespace {

constexpr double kTinyOmega = 1e-8;
constexpr double kTinyK = 1e-12;
// Phase velocity (units of the normalization speed) above every bulk speed of
// the shipped materials: such points sit next to a cutoff, where the k gap
// says little about modal coupling.
constexpr double kCutoffPhaseVelocity = 5.0;

bool has_loss(const SystemMatrices& mats) {
  return !mats.lossless();
}

Eigen::VectorXcd border_column(const SystemMatrices& mats, const ExtendedState& st) {
  return dk_matrix(mats, st.k, st.s) * st.q;
}

// Factor J at st; returns false if J is singular.
bool factor_jacobian(BorderedSolver& solver, const ExtendedState& st, const SystemMatrices& mats,
                     double omega) {
  return solver.factor(dynamic_matrix(mats, st.k, omega, st.s), mats.bandwidth,
                       border_column(mats, st), st.q_ref);
}

ExtendedState with_reference(ExtendedState st) {
  st.q_ref = st.q / st.q.squaredNorm();
  return st;
}

// Extra Newton iterations at the endpoint while the residual keeps falling.
void polish(ExtendedState& st, const SystemMatrices& mats, double omega) {
  const int n = mats.n;
  double res = residual(st, mats, omega).norm();
  BorderedSolver solver;
  for (int it = 0; it < 3; ++it) {
    if (!factor_jacobian(solver, st, mats, omega)) return;
    const Eigen::VectorXcd dy = solver.solve(-residual(st, mats, omega));
    if (!dy.allFinite()) return;
    ExtendedState next = st;
    next.q += dy.head(n);
    next.k += dy(n);
    const double r = residual(next, mats, omega).norm();
    if (!(r < 0.5 * res)) return;
    st = next;
    res = r;
  }
}

}  // namespace

void StepPolicy::validate() const {
  if (!(0.0 < shrink && shrink < 1.0 && growth > 1.0))
    throw std::invalid_argument("step policy needs 0 < shrink < 1 < growth");
  if (!(0.0 < tau_bar && tau_bar < 1.0)) throw std::invalid_argument("tau_bar must be in (0, 1)");
  if (!(ds_init_max > 0.0 && ds_floor > 0.0 && ds_init_floor > 0.0))
    throw std::invalid_argument("step sizes must be positive");
  if (max_newton < 1) throw std::invalid_argument("max_newton must be >= 1");
  if (!(newton_tol > 0.0)) throw std::invalid_argument("newton_tol must be positive");
}

std::string status_name(PathStatus s) {
  switch (s) {
    case PathStatus::Converged: return "Converged";
    case PathStatus::EPProximity: return "EPProximity";
    case PathStatus::StepUnderflow: return "StepUnderflow";
    default: return "MaxSteps";
  }
}

Eigen::VectorXcd residual(const ExtendedState& st, const SystemMatrices& mats, double omega) {
  const int n = mats.n;
  Eigen::VectorXcd g(n + 1);
  g.head(n) = apply_dynamic(mats, st.k, omega, st.s, st.q);
  g(n) = st.q_ref.dot(st.q) - 1.0;
  return g;
}

Eigen::MatrixXcd jacobian_y(const ExtendedState& st, const SystemMatrices& mats, double omega) {
  const int n = mats.n;
  Eigen::MatrixXcd j = Eigen::MatrixXcd::Zero(n + 1, n + 1);
  j.topLeftCorner(n, n) = Eigen::MatrixXcd(dynamic_matrix(mats, st.k, omega, st.s));
  j.topRightCorner(n, 1) = border_column(mats, st);
  j.bottomLeftCorner(1, n) = st.q_ref.adjoint();
  return j;
}

Eigen::VectorXcd jacobian_s(const ExtendedState& st, const SystemMatrices& mats, double) {
  const int n = mats.n;
  Eigen::VectorXcd g = Eigen::VectorXcd::Zero(n + 1);
  g.head(n) = ds_matrix(mats, st.k) * st.q;
  return g;
}

Tangent tangent(const ExtendedState& st, const SystemMatrices& mats, double omega,
                const StepPolicy& policy) {
  const int n = mats.n;
  Tangent t;
  BorderedSolver solver;
  if (!factor_jacobian(solver, st, mats, omega)) {
    t.condition = std::numeric_limits<double>::infinity();
    return t;
  }
  t.condition = solver.condition_estimate();
  t.dy_ds = solver.solve(-jacobian_s(st, mats, omega));
  t.unit.resize(n + 2);
  t.unit.head(n + 1) = t.dy_ds;
  t.unit(n + 1) = 1.0;
  t.unit /= t.unit.norm();
  t.ok = t.dy_ds.allFinite() && t.condition <= policy.condition_limit;
  return t;
}

NewtonResult newton_correct(const ExtendedState& guess, const SystemMatrices& mats, double omega,
                            const StepPolicy& policy) {
  const int n = mats.n;
  NewtonResult r;
  r.state = guess;
  Eigen::VectorXcd g = residual(r.state, mats, omega);
  r.residual = g.norm();
  const double start = r.residual;
  BorderedSolver solver;
  while (r.residual > policy.newton_tol) {
    if (r.iterations >= policy.max_newton) return r;
    if (!factor_jacobian(solver, r.state, mats, omega)) {
      r.singular = true;
      return r;
    }
    const Eigen::VectorXcd dy = solver.solve(-g);
    if (!dy.allFinite()) {
      r.singular = true;
      return r;
    }
    r.state.q += dy.head(n);
    r.state.k += dy(n);
    ++r.iterations;
    g = residual(r.state, mats, omega);
    r.residual = g.norm();
    if (!std::isfinite(r.residual) || r.residual > 1e6 * std::max(start, 1.0)) return r;
  }
  r.converged = true;
  return r;
}

double min_initial_step(double dl_veering, const StepPolicy& policy) {
  return std::max(policy.ds_init_floor, 0.1 * dl_veering);
}

double initial_step(std::optional<double> dl, std::optional<double> dl_bar, double dl_veering,
                    const StepPolicy& policy) {
  const double ds_min = min_initial_step(dl_veering, policy);
  if (!dl || !dl_bar || !(*dl_bar > 0.0)) return std::min(ds_min, policy.ds_init_max);
  const double beta = *dl / *dl_bar;
  const double factor = std::min(std::max(1.0, std::pow(2.0, beta - 1.0)), 10.0);
  return std::min(ds_min * factor, policy.ds_init_max);
}

GapInfo reference_gap(const SweepResult& sweep, const KeySet& keys) {
  GapInfo info;
  const int nl = sweep.n_modes;
  const int np = static_cast<int>(sweep.points.size());
  info.gap.assign(nl, std::vector<std::optional<double>>(np));
  auto family = [&](int p, int l) {
    const auto& f = sweep.points[p].family;
    if (f.empty()) return WaveFamily::None;
    return f[l] == WaveFamily::SH ? WaveFamily::S : f[l];
  };
  // Wavenumber distance, at the solution's own frequency, to the nearest
  // crossing of that frequency by another branch of the same family.
  for (int l = 0; l < nl; ++l)
    for (int p = 0; p < np; ++p) {
      const double w = sweep.points[p].omega[l];
      const double k = sweep.points[p].k_hat;
      if (w > sweep.omega_max || w < kTinyOmega || k < kTinyK) continue;
      const WaveFamily fam = family(p, l);
      std::optional<double> best;
      for (int m = 0; m < nl; ++m) {
        if (m == l) continue;
        for (int q = 0; q + 1 < np; ++q) {
          const double w0 = sweep.points[q].omega[m], w1 = sweep.points[q + 1].omega[m];
          if (w0 == w1 || (w0 - w) * (w1 - w) > 0.0) continue;
          if (family(q, m) != fam && family(q + 1, m) != fam) continue;
          const double t = (w - w0) / (w1 - w0);
          const double kk = sweep.points[q].k_hat + t * (sweep.points[q + 1].k_hat - sweep.points[q].k_hat);
          const double d = std::abs(kk - k);
          if (!best || d < *best) best = d;
        }
      }
      info.gap[l][p] = best;
    }
  std::vector<double> all;
  for (int l = 0; l < nl && l < static_cast<int>(keys.retained.size()); ++l) {
    const auto& r = keys.retained[l];
    for (int p : r)
      if (info.gap[l][p]) all.push_back(*info.gap[l][p]);
    for (std::size_t i = 1; i + 1 < r.size(); ++i) {
      const auto& a = info.gap[l][r[i - 1]];
      const auto& b = info.gap[l][r[i]];
      const auto& c = info.gap[l][r[i + 1]];
      const SweepPoint& pt = sweep.points[r[i]];
      if (pt.omega[l] > kCutoffPhaseVelocity * pt.k_hat) continue;
      // relative slack keeps rounding noise on flat gaps from reading as a minimum
      if (a && b && c && *b < *a * (1.0 - 1e-9) && *b <= *c * (1.0 + 1e-9))
        info.veering = info.veering ? std::min(*info.veering, *b) : *b;
    }
  }
  if (!all.empty()) {
    std::sort(all.begin(), all.end());
    const double pos = 0.05 * static_cast<double>(all.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, all.size() - 1);
    info.quantile5 = all[lo] + (pos - static_cast<double>(lo)) * (all[hi] - all[lo]);
  }
  if (info.quantile5 || info.veering) {
    double ref = info.quantile5.value_or(0.0);
    if (info.veering) ref = std::max(ref, 2.0 * *info.veering);
    if (ref > 0.0) info.reference = ref;
  }
  return info;
}

ExtendedState calibrate(const AnchorSolution& anchor, const SystemMatrices& mats,
                        const StepPolicy& policy) {
  ExtendedState st;
  st.q = anchor.eigenvector / anchor.eigenvector.norm();
  st.k = anchor.k_hat;
  st.s = 0.0;
  st.q_ref = st.q;
  auto r = newton_correct(st, mats, anchor.omega_hat, policy);
  if (!r.converged)
    throw std::runtime_error("calibration did not converge for the anchor at k = " +
                             std::to_string(anchor.k_hat) + ", omega = " +
                             std::to_string(anchor.omega_hat));
  return r.state;
}

HomotopyPath track(const ExtendedState& start, const SystemMatrices& mats, double omega,
                   const StepPolicy& policy, double ds_init) {
  HomotopyPath path;
  path.omega_hat = omega;
  path.k_anchor = start.k.real();
  path.last_good = start;
  path.stats.initial_step = ds_init;
  path.stats.min_step = ds_init;
  const double r0 = residual(start, mats, omega).norm();
  path.samples.push_back({start.s, start.k, r0});

  if (!has_loss(mats)) {
    // identity homotopy: the start solves every s
    ExtendedState end = start;
    end.s = 1.0;
    path.samples.push_back({1.0, end.k, r0});
    path.endpoint = end;
    path.last_good = end;
    path.status = PathStatus::Converged;
    return path;
  }

  ExtendedState cur = start;
  Tangent tan = tangent(cur, mats, omega, policy);
  path.stats.max_condition = tan.condition;
  if (!tan.ok) {
    path.status = PathStatus::EPProximity;
    return path;
  }
  double ds = std::min(ds_init, policy.ds_init_max);
  const int n = mats.n;

  auto predict = [&](const ExtendedState& from, const Tangent& t, double step, double s_new) {
    ExtendedState g = from;
    g.q += step * t.dy_ds.head(n);
    g.k += step * t.dy_ds(n);
    g.s = s_new;
    return g;
  };

  while (true) {
    if (path.stats.steps + path.stats.rejections >= policy.max_steps) {
      path.status = PathStatus::MaxSteps;
      return path;
    }
    if (ds < policy.ds_floor) {
      path.status = PathStatus::StepUnderflow;
      return path;
    }
    path.stats.min_step = std::min(path.stats.min_step, ds);
    const double s_new = cur.s + ds;
    auto nr = newton_correct(predict(cur, tan, ds, s_new), mats, omega, policy);
    path.stats.newton_iterations += nr.iterations;
    if (!nr.converged) {
      ++path.stats.rejections;
      ds *= policy.shrink;
      continue;
    }
    ExtendedState next = with_reference(nr.state);
    Tangent tnext = tangent(next, mats, omega, policy);
    path.stats.max_condition = std::max(path.stats.max_condition, tnext.condition);
    if (!tnext.ok) {
      path.status = PathStatus::EPProximity;
      return path;
    }
    const double tau = std::abs(tan.unit.dot(tnext.unit));
    if (tau < policy.tau_bar) {
      ++path.stats.rejections;
      ds *= policy.shrink;
      continue;
    }
    cur = next;
    tan = tnext;
    ++path.stats.steps;
    path.samples.push_back({cur.s, cur.k, residual(cur, mats, omega).norm()});
    path.last_good = cur;
    if (cur.s >= 1.0) break;
    ds = std::min(ds * policy.growth, policy.ds_init_max);
  }

  if (cur.s > 1.0) {
    // backward refinement onto s = 1
    const double back = 1.0 - cur.s;
    auto nr = newton_correct(predict(cur, tan, back, 1.0), mats, omega, policy);
    path.stats.newton_iterations += nr.iterations;
    if (!nr.converged) {
      path.status = PathStatus::StepUnderflow;
      return path;
    }
    cur = with_reference(nr.state);
    cur.s = 1.0;
    ++path.stats.steps;
    path.samples.push_back({cur.s, cur.k, residual(cur, mats, omega).norm()});
    path.last_good = cur;
  }
  polish(cur, mats, omega);
  path.samples.back().k = cur.k;
  path.samples.back().residual = residual(cur, mats, omega).norm();
  path.last_good = cur;
  path.endpoint = cur;
  path.status = PathStatus::Converged;
  return path;
}

std::vector<TransportJob> transport_jobs(const KeySet& keys, const SweepResult& sweep,
                                         const GapInfo& gaps, const StepPolicy& policy,
                                         std::vector<AnchorSolution>* skipped) {
  std::vector<TransportJob> jobs;
  const double veer = gaps.veering.value_or(0.0);
  for (std::size_t l = 0; l < keys.retained.size(); ++l)
    for (int p : keys.retained[l]) {
      AnchorSolution a = sweep.solution(static_cast<int>(l), p);
      if (std::abs(a.k_hat) < kTinyK || a.omega_hat < kTinyOmega) {
        if (skipped) skipped->push_back(std::move(a));
        continue;
      }
      const auto& g = gaps.gap.empty() ? std::optional<double>() : gaps.gap[l][p];
      TransportJob j;
      j.ds_init = initial_step(g, gaps.reference, veer, policy);
      j.anchor = std::move(a);
      jobs.push_back(std::move(j));
    }
  return jobs;
}

std::vector<HomotopyPath> transport_all(const std::vector<TransportJob>& jobs,
                                        const SystemMatrices& mats, const StepPolicy& policy,
                                        int threads) {
  std::vector<HomotopyPath> out(jobs.size());
  detail::parallel_for(static_cast<int>(jobs.size()), threads, [&](int i) {
    const auto& job = jobs[i];
    HomotopyPath path;
    try {
      const ExtendedState start = calibrate(job.anchor, mats, policy);
      path = track(start, mats, job.anchor.omega_hat, policy, job.ds_init);
    } catch (const std::runtime_error&) {
      // an anchor that cannot be calibrated sits on a singular Jacobian
      path.omega_hat = job.anchor.omega_hat;
      path.k_anchor = job.anchor.k_hat;
      path.status = PathStatus::EPProximity;
      path.stats.initial_step = job.ds_init;
    }
    path.branch_label = job.anchor.branch_label;
    path.grid_index = job.anchor.grid_index;
    path.family = job.anchor.wave_family;
    out[i] = std::move(path);
  });
  return out;
}

std::vector<AnchorSolution> anchors_at_frequency(const SweepResult& sweep, int label,
                                                 double omega, const SystemMatrices& mats,
                                                 const StepPolicy& policy) {
  std::vector<AnchorSolution> out;
  const auto& br = sweep.branches.at(label);
  for (std::size_t i = 0; i + 1 < br.size(); ++i) {
    const int pa = br[i], pb = br[i + 1];
    if (pb != pa + 1) continue;
    const double wa = sweep.points[pa].omega[label], wb = sweep.points[pb].omega[label];
    if (!((wa - omega) * (wb - omega) <= 0.0) || wa == wb) continue;
    if (wb == omega && i + 2 < br.size()) continue;  // counted by the next interval
    const double t = (omega - wa) / (wb - wa);
    const double ka = sweep.points[pa].k_hat, kb = sweep.points[pb].k_hat;
    const int near = t < 0.5 ? pa : pb;
    ExtendedState st;
    st.q = sweep.points[near].vectors.col(label);
    st.q /= st.q.norm();
    st.q_ref = st.q;
    st.k = ka + t * (kb - ka);
    st.s = 0.0;
    auto r = newton_correct(st, mats, omega, policy);
    if (!r.converged) continue;
    AnchorSolution a;
    a.k_hat = r.state.k.real();
    a.omega_hat = omega;
    Eigen::VectorXcd q = r.state.q;
    const double mn = std::sqrt(q.dot(mats.m * q).real());
    a.eigenvector = q / mn;
    a.branch_label = label;
    a.wave_family = sweep.points[near].family.empty() ? WaveFamily::None
                                                        : sweep.points[near].family[label];
    // reject convergence onto a neighbouring branch
    if (mac(a.eigenvector, sweep.points[near].vectors.col(label), mats.m) < 0.5) continue;
    if (std::abs(a.k_hat) < kTinyK) continue;
    out.push_back(std::move(a));
  }
  return out;
}

std::string paths_to_json_text(const std::vector<HomotopyPath>& paths) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : paths) {
    nlohmann::json j;
    j["omega_hat"] = p.omega_hat;
    j["branch_label"] = p.branch_label;
    j["grid_index"] = p.grid_index;
    j["family"] = family_name(p.family);
    j["k_anchor"] = p.k_anchor;
    j["status"] = status_name(p.status);
    j["initial_step"] = p.stats.initial_step;
    j["min_step"] = p.stats.min_step;
    j["steps"] = p.stats.steps;
    j["newton_iterations"] = p.stats.newton_iterations;
    j["rejections"] = p.stats.rejections;
    j["max_condition"] = p.stats.max_condition;
    nlohmann::json s = nlohmann::json::array();
    for (const auto& x : p.samples) s.push_back({x.s, x.k.real(), x.k.imag(), x.residual});
    j["samples"] = s;
    arr.push_back(j);
  }
  return arr.dump(1);
}

}  // namespace safehc
