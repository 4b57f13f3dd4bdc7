#include "safehc/hermitian_sweep.hpp"

#include "lapack.hpp"
#include "parallel.hpp"
#include "safehc/operators.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <stdexcept>

namespace safehc {
namespace {

int sparse_bandwidth(const SystemMatrices::Sparse& a) {
  int bw = 0;
  for (int j = 0; j < a.outerSize(); ++j)
    for (SystemMatrices::Sparse::InnerIterator it(a, j); it; ++it)
      if (it.value() != 0.0) bw = std::max(bw, static_cast<int>(std::abs(it.row() - j)));
  return bw;
}

// Upper band storage (LAPACK 'U', column major).
std::vector<cplx> upper_band(const SparseC& a, int kd) {
  const int n = static_cast<int>(a.rows());
  std::vector<cplx> ab(static_cast<std::size_t>(kd + 1) * n, cplx(0.0));
  for (int j = 0; j < a.outerSize(); ++j)
    for (SparseC::InnerIterator it(a, j); it; ++it) {
      const int i = static_cast<int>(it.row());
      if (i <= j && j - i <= kd) ab[static_cast<std::size_t>(kd + i - j) + static_cast<std::size_t>(j) * (kd + 1)] = it.value();
    }
  return ab;
}

void fix_phase(Eigen::Ref<Eigen::VectorXcd> v) {
  Eigen::Index imax = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    // strict comparison with a relative tie margin keeps the choice stable
    const double a = std::abs(v(i));
    if (a > best * (1.0 + 1e-12)) {
      best = a;
      imax = i;
    }
  }
  if (best > 0.0) v *= std::conj(v(imax)) / best;
}

ModeSet hermitian_solve(const SystemMatrices& mats, double k_hat, char range, int n_modes,
                        double omega_cap, bool vectors = true) {
  const int n = mats.n;
  const SparseC kmat = hermitian_stiffness(mats, k_hat);
  const int ka = std::max(mats.bandwidth, 0);
  const int kb = std::min(sparse_bandwidth(mats.m), ka);
  std::vector<cplx> ab = upper_band(kmat, ka);
  const SparseC mc = mats.m.cast<cplx>();
  std::vector<cplx> bb = upper_band(mc, kb);
  std::vector<cplx> q(vectors ? static_cast<std::size_t>(n) * n : 1);
  std::vector<double> w(n);
  const int max_cols = range == 'I' ? n_modes : n;
  std::vector<cplx> z(vectors ? static_cast<std::size_t>(n) * std::max(max_cols, 1) : 1);
  std::vector<lapack_int> ifail(n);
  lapack_int m_found = 0;
  const double abstol = 2.0 * LAPACKE_dlamch('S');
  const double vu = omega_cap * omega_cap;
  const lapack_int info = LAPACKE_zhbgvx(
      LAPACK_COL_MAJOR, vectors ? 'V' : 'N', range, 'U', n, ka, kb, ab.data(), ka + 1, bb.data(),
      kb + 1, q.data(), n, -1.0, vu, 1, std::max(n_modes, 1), abstol, &m_found, w.data(), z.data(),
      n, ifail.data());
  if (info != 0)
    throw std::runtime_error("Hermitian eigensolver failed at k = " + std::to_string(k_hat) +
                             " (info " + std::to_string(info) + ")");
  ModeSet out;
  out.omega.resize(m_found);
  out.vectors.resize(vectors ? n : 0, vectors ? m_found : 0);
  double lam_max = 1.0;
  for (int i = 0; i < m_found; ++i) lam_max = std::max(lam_max, std::abs(w[i]));
  for (int i = 0; i < m_found; ++i) {
    if (w[i] < -1e-10 * lam_max)
      throw std::runtime_error("negative eigenvalue " + std::to_string(w[i]) +
                               " of the Hermitian pencil (assembly defect)");
    out.omega[i] = std::sqrt(std::max(w[i], 0.0));
    if (!vectors) continue;
    out.vectors.col(i) = Eigen::Map<Eigen::VectorXcd>(z.data() + static_cast<std::size_t>(i) * n, n);
    fix_phase(out.vectors.col(i));
  }
  return out;
}

// Degenerate clusters: index ranges of nearly equal omega^2.
std::vector<std::vector<int>> clusters(const std::vector<double>& omega, double tol) {
  double lam_max = 0.0;
  for (double w : omega) lam_max = std::max(lam_max, w * w);
  std::vector<int> order(omega.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return omega[a] < omega[b]; });
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  for (std::size_t t = 0; t < order.size(); ++t) {
    if (!cur.empty()) {
      const double gap = omega[order[t]] * omega[order[t]] - omega[cur.back()] * omega[cur.back()];
      if (gap > tol * std::max(lam_max, 1e-300)) {
        if (cur.size() > 1) out.push_back(cur);
        cur.clear();
      }
    }
    cur.push_back(order[t]);
  }
  if (cur.size() > 1) out.push_back(cur);
  return out;
}

// Rotate the basis of each degenerate cluster of `pt` toward reference vectors.
void align_clusters(SweepPoint& pt, const Eigen::MatrixXcd& reference,
                    const SystemMatrices::Sparse& m, double tol) {
  for (const auto& g : clusters(pt.omega, tol)) {
    const int gs = static_cast<int>(g.size());
    Eigen::MatrixXcd qg(pt.vectors.rows(), gs);
    for (int i = 0; i < gs; ++i) qg.col(i) = pt.vectors.col(g[i]);
    const Eigen::MatrixXcd c = qg.adjoint() * (m * reference);  // gs x N
    std::vector<int> cols(c.cols());
    for (int j = 0; j < c.cols(); ++j) cols[j] = j;
    std::stable_sort(cols.begin(), cols.end(),
                     [&](int a, int b) { return c.col(a).norm() > c.col(b).norm(); });
    if (static_cast<int>(cols.size()) < gs) continue;
    std::vector<int> sel(cols.begin(), cols.begin() + gs);
    std::sort(sel.begin(), sel.end());
    Eigen::MatrixXcd wsel(gs, gs);
    for (int i = 0; i < gs; ++i) wsel.col(i) = c.col(sel[i]);
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(wsel, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::MatrixXcd rot = svd.matrixU() * svd.matrixV().adjoint();
    const Eigen::MatrixXcd rotated = qg * rot;
    for (int i = 0; i < gs; ++i) {
      pt.vectors.col(g[i]) = rotated.col(i);
      fix_phase(pt.vectors.col(g[i]));
    }
  }
}

void permute_point(SweepPoint& pt, const std::vector<int>& src) {
  // new column i takes old column src[i]
  SweepPoint out;
  out.k_hat = pt.k_hat;
  out.vectors.resize(pt.vectors.rows(), pt.vectors.cols());
  for (std::size_t i = 0; i < src.size(); ++i) {
    out.omega.push_back(pt.omega[src[i]]);
    out.vectors.col(i) = pt.vectors.col(src[i]);
    if (!pt.family.empty()) out.family.push_back(pt.family[src[i]]);
  }
  pt = std::move(out);
}

double considered_error(const SweepPoint& a, const SweepPoint& b, const SystemMatrices::Sparse& m,
                        double cap) {
  const Eigen::MatrixXd macs = mac_matrix(a.vectors, b.vectors, m);
  std::vector<int> considered;
  for (std::size_t j = 0; j < a.omega.size(); ++j)
    if (a.omega[j] <= cap || b.omega[j] <= cap) considered.push_back(static_cast<int>(j));
  return interval_error(macs, considered);
}

}  // namespace

std::string family_name(WaveFamily f) {
  switch (f) {
    case WaveFamily::A: return "A";
    case WaveFamily::S: return "S";
    case WaveFamily::SH: return "SH";
    default: return "none";
  }
}

WaveFamily family_from_name(const std::string& s) {
  if (s == "A") return WaveFamily::A;
  if (s == "S") return WaveFamily::S;
  if (s == "SH") return WaveFamily::SH;
  return WaveFamily::None;
}

ModeSet solve_at_k(const SystemMatrices& mats, double k_hat, int n_modes) {
  if (n_modes < 1 || n_modes > mats.n) throw std::invalid_argument("n_modes out of range");
  return hermitian_solve(mats, k_hat, 'I', n_modes, 0.0);
}

ModeSet solve_below(const SystemMatrices& mats, double k_hat, double omega_cap) {
  return hermitian_solve(mats, k_hat, 'V', 0, omega_cap);
}

double mac(const Eigen::VectorXcd& q1, const Eigen::VectorXcd& q2,
           const SystemMatrices::Sparse& m) {
  if (q1.norm() == 0.0 || q2.norm() == 0.0) throw std::invalid_argument("MAC of a zero vector");
  const Eigen::VectorXcd m2 = m * q2;
  const Eigen::VectorXcd m1 = m * q1;
  const double num = std::norm(q1.dot(m2));
  const double den = q1.dot(m1).real() * q2.dot(m2).real();
  return std::clamp(num / den, 0.0, 1.0);
}

Eigen::MatrixXd mac_matrix(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b,
                           const SystemMatrices::Sparse& m) {
  const Eigen::MatrixXcd mb = m * b;
  const Eigen::MatrixXcd ma = m * a;
  const Eigen::MatrixXcd cross = a.adjoint() * mb;
  Eigen::MatrixXd out(a.cols(), b.cols());
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    const double na = a.col(i).dot(ma.col(i)).real();
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      const double nb = b.col(j).dot(mb.col(j)).real();
      out(i, j) = std::clamp(std::norm(cross(i, j)) / (na * nb), 0.0, 1.0);
    }
  }
  return out;
}

std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
  // Shortest augmenting path with potentials, O(n^3).
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw std::invalid_argument("cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j)
        if (!used[j]) {
          const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
          if (cur < minv[j]) {
            minv[j] = cur;
            way[j] = j0;
          }
          if (minv[j] < delta) {
            delta = minv[j];
            j1 = j;
          }
        }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> out(n);
  for (int j = 1; j <= n; ++j) out[p[j] - 1] = j - 1;
  return out;
}

std::vector<int> assign_modes(const Eigen::MatrixXcd& prev, const Eigen::MatrixXcd& next,
                              const SystemMatrices::Sparse& m) {
  if (prev.cols() != next.cols()) throw std::invalid_argument("mode lists differ in length");
  const Eigen::MatrixXd macs = mac_matrix(prev, next, m);
  return hungarian(Eigen::MatrixXd::Ones(macs.rows(), macs.cols()) - macs);
}

double interval_error(const Eigen::MatrixXd& macs, const std::vector<int>& considered) {
  double min_margin = 1.0;
  for (int j : considered) {
    double off = 0.0;
    for (Eigen::Index mcol = 0; mcol < macs.cols(); ++mcol)
      if (mcol != j) off = std::max(off, macs(j, mcol));
    min_margin = std::min(min_margin, macs(j, j) - off);
  }
  return std::clamp(1.0 - min_margin, 0.0, 2.0);
}

double interval_error(const Eigen::MatrixXcd& prev, const Eigen::MatrixXcd& next,
                      const SystemMatrices::Sparse& m) {
  std::vector<int> all(prev.cols());
  for (std::size_t j = 0; j < all.size(); ++j) all[j] = static_cast<int>(j);
  return interval_error(mac_matrix(prev, next, m), all);
}

WaveFamily classify_family(const Eigen::VectorXcd& q, const Mesh& mesh) {
  if (!mesh.is_laminate() || !mesh.symmetric_layup) return WaveFamily::None;
  const double mid = 0.5 * (mesh.z_min + mesh.z_max);
  const double tol = 1e-9 * std::max(1e-300, mesh.z_max - mesh.z_min);
  const int nn = static_cast<int>(mesh.nodes.size());
  std::vector<int> order(nn);
  for (int i = 0; i < nn; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return mesh.nodes[a].y() < mesh.nodes[b].y(); });
  double sym = 0.0, anti = 0.0, u2 = 0.0, total = 0.0;
  for (int t = 0; t < nn; ++t) {
    const int i = order[t], j = order[nn - 1 - t];
    if (std::abs((mesh.nodes[i].y() - mid) + (mesh.nodes[j].y() - mid)) > tol)
      return WaveFamily::None;
    const cplx a1 = q(3 * i), a2 = q(3 * i + 1), a3 = q(3 * i + 2);
    const cplx b1 = q(3 * j), b2 = q(3 * j + 1), b3 = q(3 * j + 2);
    // S: in-plane even, normal odd; A: the opposite
    sym += std::norm(a1 + b1) + std::norm(a2 + b2) + std::norm(a3 - b3);
    anti += std::norm(a1 - b1) + std::norm(a2 - b2) + std::norm(a3 + b3);
    u2 += std::norm(a2);
    total += std::norm(a1) + std::norm(a2) + std::norm(a3);
  }
  if (anti > sym) return WaveFamily::A;
  return (u2 > 0.5 * total) ? WaveFamily::SH : WaveFamily::S;
}

void relabel(std::vector<SweepPoint>& points, const SystemMatrices::Sparse& m) {
  for (std::size_t p = 1; p < points.size(); ++p) {
    const auto perm = assign_modes(points[p - 1].vectors, points[p].vectors, m);
    permute_point(points[p], perm);
  }
}

std::vector<double> SweepResult::grid() const {
  std::vector<double> g;
  for (const auto& p : points) g.push_back(p.k_hat);
  return g;
}

int SweepResult::solution_count() const {
  int c = 0;
  for (const auto& b : branches) c += static_cast<int>(b.size());
  return c;
}

AnchorSolution SweepResult::solution(int label, int grid_index) const {
  const auto& pt = points.at(grid_index);
  AnchorSolution s;
  s.k_hat = pt.k_hat;
  s.omega_hat = pt.omega.at(label);
  s.eigenvector = pt.vectors.col(label);
  s.branch_label = label;
  s.grid_index = grid_index;
  s.wave_family = pt.family.empty() ? WaveFamily::None : pt.family[label];
  return s;
}

SweepResult adaptive_sweep(const SystemMatrices& mats, const Mesh& mesh, const SweepOptions& opt) {
  if (!(opt.k_max > opt.k_min)) throw std::invalid_argument("empty wavenumber range");
  if (!(opt.omega_max > 0.0)) throw std::invalid_argument("omega_max must be positive");
  const int n0 =
      std::max(2, static_cast<int>(std::lround((opt.k_max - opt.k_min) * opt.points_per_unit)) + 1);
  const double solve_cap = opt.omega_max * (1.0 + opt.cap_margin);

  std::vector<double> ks(n0);
  for (int i = 0; i < n0; ++i) ks[i] = opt.k_min + (opt.k_max - opt.k_min) * i / (n0 - 1);

  std::vector<int> counts(n0);
  detail::parallel_for(n0, opt.jobs, [&](int i) {
    counts[i] = static_cast<int>(hermitian_solve(mats, ks[i], 'V', 0, solve_cap, false).omega.size());
  });
  SweepResult res;
  res.n_modes = std::min(mats.n, *std::max_element(counts.begin(), counts.end()) + opt.guard_modes);
  res.guard_modes = opt.guard_modes;
  res.omega_max = opt.omega_max;
  res.eps_bar = opt.eps_bar;
  res.dk_min = opt.dk_min;

  auto solve_points = [&](const std::vector<double>& kv) {
    std::vector<SweepPoint> pts(kv.size());
    detail::parallel_for(static_cast<int>(kv.size()), opt.jobs, [&](int i) {
      auto ms = solve_at_k(mats, kv[i], res.n_modes);
      pts[i].k_hat = kv[i];
      pts[i].omega = std::move(ms.omega);
      pts[i].vectors = std::move(ms.vectors);
    });
    return pts;
  };

  auto finalize_labels = [&](std::vector<SweepPoint>& pts) {
    // Degenerate clusters are oriented toward their left neighbour (the first
    // point toward its right neighbour) before the assignment chain.
    if (pts.size() > 1) align_clusters(pts[0], pts[1].vectors, mats.m, opt.degeneracy_tol);
    for (std::size_t p = 1; p < pts.size(); ++p) {
      align_clusters(pts[p], pts[p - 1].vectors, mats.m, opt.degeneracy_tol);
      const auto perm = assign_modes(pts[p - 1].vectors, pts[p].vectors, mats.m);
      permute_point(pts[p], perm);
    }
  };

  res.points = solve_points(ks);
  finalize_labels(res.points);

  auto compute_errors = [&]() {
    const std::size_t ni = res.points.size() - 1;
    res.interval_errors.assign(ni, 0.0);
    detail::parallel_for(static_cast<int>(ni), opt.jobs, [&](int i) {
      res.interval_errors[i] =
          considered_error(res.points[i], res.points[i + 1], mats.m, opt.omega_max);
    });
  };
  compute_errors();

  for (int round = 0; round < opt.max_rounds; ++round) {
    std::vector<double> mids;
    for (std::size_t i = 0; i + 1 < res.points.size(); ++i) {
      const double w = res.points[i + 1].k_hat - res.points[i].k_hat;
      if (res.interval_errors[i] > opt.eps_bar && w > opt.dk_min)
        mids.push_back(0.5 * (res.points[i].k_hat + res.points[i + 1].k_hat));
    }
    if (mids.empty()) break;
    auto fresh = solve_points(mids);
    std::vector<SweepPoint> merged;
    merged.reserve(res.points.size() + fresh.size());
    std::size_t a = 0, b = 0;
    while (a < res.points.size() || b < fresh.size()) {
      if (b >= fresh.size() || (a < res.points.size() && res.points[a].k_hat < fresh[b].k_hat))
        merged.push_back(std::move(res.points[a++]));
      else
        merged.push_back(std::move(fresh[b++]));
    }
    res.points = std::move(merged);
    finalize_labels(res.points);
    compute_errors();
    res.refinement_rounds = round + 1;
  }

  res.interval_stuck.assign(res.interval_errors.size(), 0);
  for (std::size_t i = 0; i < res.interval_errors.size(); ++i)
    res.interval_stuck[i] = res.interval_errors[i] > opt.eps_bar ? 1 : 0;

  for (auto& pt : res.points) {
    pt.family.resize(res.n_modes);
    for (int j = 0; j < res.n_modes; ++j) pt.family[j] = classify_family(pt.vectors.col(j), mesh);
  }
  res.branches.assign(res.n_modes, {});
  for (int j = 0; j < res.n_modes; ++j)
    for (std::size_t p = 0; p < res.points.size(); ++p)
      if (res.points[p].omega[j] <= opt.omega_max) res.branches[j].push_back(static_cast<int>(p));
  return res;
}

std::string SweepResult::to_json_text() const {
  nlohmann::json j;
  j["grid"] = grid();
  j["n_modes"] = n_modes;
  j["guard_modes"] = guard_modes;
  j["omega_max"] = omega_max;
  j["eps_bar"] = eps_bar;
  j["dk_min"] = dk_min;
  j["refinement_rounds"] = refinement_rounds;
  j["interval_errors"] = interval_errors;
  std::vector<int> stuck;
  for (std::size_t i = 0; i < interval_stuck.size(); ++i)
    if (interval_stuck[i]) stuck.push_back(static_cast<int>(i));
  j["stuck_intervals"] = stuck;
  j["solution_count"] = solution_count();
  j["branches"] = nlohmann::json::array();
  for (int l = 0; l < static_cast<int>(branches.size()); ++l) {
    if (branches[l].empty()) continue;
    std::vector<double> k, w;
    std::vector<std::string> fam;
    for (int p : branches[l]) {
      k.push_back(points[p].k_hat);
      w.push_back(points[p].omega[l]);
      fam.push_back(family_name(points[p].family.empty() ? WaveFamily::None : points[p].family[l]));
    }
    j["branches"].push_back({{"label", l}, {"grid_index", branches[l]}, {"k_hat", k},
                             {"omega_hat", w}, {"family", fam}});
  }
  j["points"] = nlohmann::json::array();
  for (const auto& pt : points) {
    std::vector<std::string> fam;
    for (auto f : pt.family) fam.push_back(family_name(f));
    j["points"].push_back({{"k_hat", pt.k_hat}, {"omega_hat", pt.omega}, {"family", fam}});
  }
  return j.dump(1);
}

SweepResult SweepResult::from_artifacts(const std::string& json_text, const std::string& sidecar) {
  const auto j = nlohmann::json::parse(json_text);
  SweepResult r;
  r.n_modes = j.at("n_modes").get<int>();
  r.guard_modes = j.at("guard_modes").get<int>();
  r.omega_max = j.at("omega_max").get<double>();
  r.eps_bar = j.at("eps_bar").get<double>();
  r.dk_min = j.at("dk_min").get<double>();
  r.refinement_rounds = j.at("refinement_rounds").get<int>();
  r.interval_errors = j.at("interval_errors").get<std::vector<double>>();
  r.interval_stuck.assign(r.interval_errors.size(), 0);
  for (int i : j.at("stuck_intervals").get<std::vector<int>>()) r.interval_stuck.at(i) = 1;
  const auto nl = sidecar.find('\n');
  if (nl == std::string::npos) throw std::runtime_error("eigenvector sidecar has no header");
  const auto h = nlohmann::json::parse(sidecar.substr(0, nl));
  const int n = h.at("n").get<int>();
  for (const auto& jp : j.at("points")) {
    SweepPoint pt;
    pt.k_hat = jp.at("k_hat").get<double>();
    pt.omega = jp.at("omega_hat").get<std::vector<double>>();
    for (const auto& f : jp.at("family")) pt.family.push_back(family_from_name(f.get<std::string>()));
    pt.vectors = Eigen::MatrixXcd::Zero(n, r.n_modes);
    r.points.push_back(std::move(pt));
  }
  r.branches.assign(r.n_modes, {});
  for (const auto& jb : j.at("branches"))
    r.branches.at(jb.at("label").get<int>()) = jb.at("grid_index").get<std::vector<int>>();
  const auto rows = h.at("rows");
  const std::size_t row_bytes = 2 * static_cast<std::size_t>(n) * sizeof(double);
  if (sidecar.size() != nl + 1 + rows.size() * row_bytes)
    throw std::runtime_error("eigenvector sidecar size does not match its header");
  std::vector<double> buf(2 * static_cast<std::size_t>(n));
  for (std::size_t r_i = 0; r_i < rows.size(); ++r_i) {
    const int l = rows[r_i].at(0).get<int>(), p = rows[r_i].at(1).get<int>();
    std::memcpy(buf.data(), sidecar.data() + nl + 1 + r_i * row_bytes, row_bytes);
    for (int i = 0; i < n; ++i) r.points.at(p).vectors(i, l) = cplx(buf[2 * i], buf[2 * i + 1]);
  }
  return r;
}

std::string SweepResult::eigvec_sidecar() const {
  const int n = points.empty() ? 0 : static_cast<int>(points[0].vectors.rows());
  nlohmann::json h;
  h["n"] = n;
  h["count"] = solution_count();
  h["layout"] = "float64 little-endian, re/im interleaved, one row per (label, grid_index)";
  nlohmann::json order = nlohmann::json::array();
  for (int l = 0; l < static_cast<int>(branches.size()); ++l)
    for (int p : branches[l]) order.push_back({l, p});
  h["rows"] = order;
  std::string out = h.dump() + "\n";
  std::vector<double> buf(2 * static_cast<std::size_t>(n));
  for (int l = 0; l < static_cast<int>(branches.size()); ++l)
    for (int p : branches[l]) {
      for (int i = 0; i < n; ++i) {
        buf[2 * i] = points[p].vectors(i, l).real();
        buf[2 * i + 1] = points[p].vectors(i, l).imag();
      }
      // host is little-endian on every supported platform
      out.append(reinterpret_cast<const char*>(buf.data()), buf.size() * sizeof(double));
    }
  return out;
}

}  // namespace safehc
