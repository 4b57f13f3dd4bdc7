#include "safehc/velocities.hpp"

#include "parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace safehc {

std::string format_double(double v) {
  if (v == 0.0) return "0";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string flags_text(std::uint32_t flags) {
  std::string out;
  if (flags & kTypeIISuspect) out += "TypeIISuspect";
  if (flags & kLabelSwapped) out += out.empty() ? "LabelSwapped" : "|LabelSwapped";
  return out;
}

int DispersionDataset::point_count() const {
  int c = 0;
  for (const auto& b : branches) c += static_cast<int>(b.points.size());
  return c;
}

const DispersionBranch* DispersionDataset::branch(int label) const {
  for (const auto& b : branches)
    if (b.label == label) return &b;
  return nullptr;
}

LeftVector left_eigenvector(const SystemMatrices& mats, cplx k, double omega, double s,
                            const Eigen::VectorXcd& q_right) {
  SparseC d = dynamic_matrix(mats, k, omega, s);
  const double dnorm = std::max(d.norm(), std::numeric_limits<double>::min());
  BandedLU lu;
  if (!lu.factor(d, mats.bandwidth)) {
    // exact zero pivot: the null vector is still the dominant inverse direction
    SparseC shifted = d;
    for (int i = 0; i < mats.n; ++i) shifted.coeffRef(i, i) += 1e-14 * dnorm;
    if (!lu.factor(shifted, mats.bandwidth)) throw std::runtime_error("left eigenvector: singular shift");
  }
  LeftVector out;
  Eigen::VectorXcd x = q_right / q_right.norm();
  for (int it = 0; it < 3; ++it) {
    lu.solve_in_place(x, true);
    const double nx = x.norm();
    if (!std::isfinite(nx) || nx == 0.0) break;
    x /= nx;
    out.vector = x;
    out.residual = (d.adjoint() * x).norm() / dnorm;
    if (out.residual <= 1e-12) {
      out.converged = true;
      break;
    }
  }
  if (!out.converged && out.vector.size() == mats.n && out.residual <= 1e-9) out.converged = true;
  if (out.vector.size() != mats.n) out.vector = q_right / q_right.norm();
  return out;
}

cplx group_velocity(const SystemMatrices& mats, cplx k, double omega, double s,
                    const Eigen::VectorXcd& q, const Eigen::VectorXcd& q_left) {
  const cplx num = q_left.dot(dk_matrix(mats, k, s) * q);
  const cplx den = -2.0 * omega * q_left.dot(mats.m.cast<cplx>() * q);
  const double scale = q_left.norm() * q.norm() * 2.0 * omega * mats.m.norm();
  if (!(std::abs(den) > 1e-14 * scale) || !std::isfinite(std::abs(den)))
    throw std::domain_error("group velocity: vanishing frequency derivative");
  return -num / den;
}

double energy_velocity(const Mesh& mesh, const MaterialLibrary& materials,
                       const SystemMatrices& mats, cplx k, double omega, double s,
                       const Eigen::VectorXcd& q) {
  double flux = 0.0, energy = 0.0;
  for (const auto& f : reconstruct_fields(mesh, materials, mats, k, omega, q, s)) {
    flux += f.weight * f.axial_flux;
    energy += f.weight * (f.kinetic_density + f.strain_density);
  }
  if (!(energy > 0.0)) throw std::domain_error("energy velocity: zero stored energy");
  return flux / energy;
}

ModePoint evaluate_point(const Mesh& mesh, const MaterialLibrary& materials,
                         const SystemMatrices& mats, cplx k, double omega, double s,
                         const Eigen::VectorXcd& q) {
  ModePoint p;
  p.omega_hat = omega;
  p.k = k;
  p.vp = omega / k.real();
  p.attenuation = k.imag();
  const LeftVector left = left_eigenvector(mats, k, omega, s, q);
  if (!left.converged) p.flags |= kTypeIISuspect;
  try {
    p.vg = group_velocity(mats, k, omega, s, q, left.vector);
  } catch (const std::domain_error&) {
    p.vg = 0.0;
    p.flags |= kTypeIISuspect;
  }
  p.ve = energy_velocity(mesh, materials, mats, k, omega, s, q);
  return p;
}

DispersionDataset build_dataset(const std::vector<HomotopyPath>& paths, const Mesh& mesh,
                                const MaterialLibrary& materials, const SystemMatrices& mats,
                                int jobs) {
  DispersionDataset ds;
  std::vector<int> idx;
  std::map<std::string, int> counts;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    ++counts[status_name(paths[i].status)];
    if (paths[i].status == PathStatus::Converged && paths[i].endpoint) idx.push_back(static_cast<int>(i));
  }
  for (const auto& [name, c] : counts) ds.statuses[name] = std::to_string(c);
  std::vector<ModePoint> pts(idx.size());
  detail::parallel_for(static_cast<int>(idx.size()), jobs, [&](int i) {
    const auto& path = paths[idx[i]];
    const auto& e = *path.endpoint;
    ModePoint p = evaluate_point(mesh, materials, mats, e.k, path.omega_hat, e.s, e.q);
    p.branch_label = path.branch_label;
    p.family = path.family;
    pts[i] = p;
  });
  std::map<int, DispersionBranch> by_label;
  for (const auto& p : pts) {
    auto& b = by_label[p.branch_label];
    b.label = p.branch_label;
    b.points.push_back(p);
  }
  for (auto& [label, b] : by_label) {
    std::stable_sort(b.points.begin(), b.points.end(),
                     [](const ModePoint& a, const ModePoint& c) { return a.omega_hat < c.omega_hat; });
    ds.branches.push_back(std::move(b));
  }
  return ds;
}

std::string branch_csv(const DispersionBranch& branch) {
  std::ostringstream os;
  os << "omega_hat,k_re,k_im,vp,attenuation,vg_re,vg_im,ve,flags\n";
  for (const auto& p : branch.points)
    os << format_double(p.omega_hat) << ',' << format_double(p.k.real()) << ','
       << format_double(p.k.imag()) << ',' << format_double(p.vp) << ','
       << format_double(p.attenuation) << ',' << format_double(p.vg.real()) << ','
       << format_double(p.vg.imag()) << ',' << format_double(p.ve) << ',' << flags_text(p.flags)
       << '\n';
  return os.str();
}

std::string dataset_json_text(const DispersionDataset& ds) {
  nlohmann::ordered_json j;
  j["provenance"] = ds.provenance;
  j["statuses"] = ds.statuses;
  j["branches"] = nlohmann::ordered_json::array();
  for (const auto& b : ds.branches) {
    nlohmann::ordered_json jb;
    jb["label"] = b.label;
    nlohmann::ordered_json pts = nlohmann::ordered_json::array();
    for (const auto& p : b.points)
      pts.push_back({p.omega_hat, p.k.real(), p.k.imag(), p.vg.real(), p.vg.imag(), p.ve,
                     family_name(p.family), p.flags});
    jb["points"] = pts;
    j["branches"].push_back(jb);
  }
  return j.dump(1);
}

DispersionDataset dataset_from_json_text(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  DispersionDataset ds;
  ds.provenance = j.at("provenance").get<std::map<std::string, std::string>>();
  ds.statuses = j.at("statuses").get<std::map<std::string, std::string>>();
  for (const auto& jb : j.at("branches")) {
    DispersionBranch b;
    b.label = jb.at("label").get<int>();
    for (const auto& a : jb.at("points")) {
      ModePoint p;
      p.omega_hat = a.at(0).get<double>();
      p.k = cplx(a.at(1).get<double>(), a.at(2).get<double>());
      p.vg = cplx(a.at(3).get<double>(), a.at(4).get<double>());
      p.ve = a.at(5).get<double>();
      p.family = family_from_name(a.at(6).get<std::string>());
      p.flags = a.at(7).get<std::uint32_t>();
      p.vp = p.omega_hat / p.k.real();
      p.attenuation = p.k.imag();
      p.branch_label = b.label;
      b.points.push_back(p);
    }
    ds.branches.push_back(std::move(b));
  }
  return ds;
}

std::map<std::string, std::string> plot_scripts(const DispersionDataset& ds,
                                                const std::string& dataset_dir) {
  struct Panel {
    const char* name;
    const char* ylabel;
    int column;
  };
  const Panel panels[] = {{"re_k", "Re k a", 2},
                          {"im_k", "Im k a", 3},
                          {"phase_velocity", "v_p / c_T", 4},
                          {"energy_velocity", "v_e / c_T", 8}};
  std::map<std::string, std::string> out;
  for (const auto& panel : panels) {
    std::ostringstream os;
    os << "set datafile separator ','\n"
       << "set key off\n"
       << "set xlabel 'omega a / c_T'\n"
       << "set ylabel '" << panel.ylabel << "'\n";
    if (ds.branches.empty()) {
      os << "plot NaN\n";
    } else {
      os << "plot ";
      for (std::size_t i = 0; i < ds.branches.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "branch_%02d.csv", ds.branches[i].label);
        os << (i ? ", \\\n     " : "") << "'" << dataset_dir << "/" << name << "' every ::1 using 1:"
           << panel.column << " with linespoints pt 7 ps 0.4";
      }
      os << "\n";
    }
    out[std::string(panel.name) + ".gp"] = os.str();
  }
  return out;
}

}  // namespace safehc
