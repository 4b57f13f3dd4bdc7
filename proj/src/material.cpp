#include "safehc/material.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <numbers>

namespace safehc {
namespace {

constexpr double kGPa = 1e9;

Eigen::Matrix<double, 6, 6> bond_matrix(double angle_deg) {
  const double t = angle_deg * std::numbers::pi / 180.0;
  Eigen::Matrix3d a;
  a << std::cos(t), -std::sin(t), 0.0,
       std::sin(t), std::cos(t), 0.0,
       0.0, 0.0, 1.0;
  Eigen::Matrix<double, 6, 6> m;
  // Voigt pairs (11, 22, 33, 23, 13, 12)
  static constexpr int pi_[6] = {0, 1, 2, 1, 0, 0};
  static constexpr int pj_[6] = {0, 1, 2, 2, 2, 1};
  for (int r = 0; r < 6; ++r) {
    const int i = pi_[r], j = pj_[r];
    for (int c = 0; c < 6; ++c) {
      const int k = pi_[c], l = pj_[c];
      if (c < 3)
        m(r, c) = a(i, k) * a(j, l);
      else
        m(r, c) = a(i, k) * a(j, l) + a(i, l) * a(j, k);
    }
  }
  return m;
}

template <class M>
M symmetrize_upper(const std::vector<double>& upper, double scale) {
  if (upper.size() != 21) throw MaterialError("stiffness needs 21 upper-triangle values");
  M c = M::Zero();
  int idx = 0;
  for (int i = 0; i < 6; ++i)
    for (int j = i; j < 6; ++j) {
      c(i, j) = upper[idx] * scale;
      c(j, i) = upper[idx] * scale;
      ++idx;
    }
  return c;
}

std::vector<double> upper_of(const Voigt& c, double scale) {
  std::vector<double> out;
  for (int i = 0; i < 6; ++i)
    for (int j = i; j < 6; ++j) out.push_back(c(i, j) / scale);
  return out;
}

}  // namespace

void MaterialTensor::validate() const {
  if (!(density > 0.0)) throw MaterialError(name + ": density must be positive");
  const double scale = std::max(c_real.norm(), 1.0);
  if ((c_real - c_real.transpose()).norm() > 1e-12 * scale)
    throw MaterialError(name + ": C' is not symmetric");
  if ((c_imag - c_imag.transpose()).norm() > 1e-12 * scale)
    throw MaterialError(name + ": C'' is not symmetric");
  Eigen::LLT<Voigt> llt(c_real);
  if (llt.info() != Eigen::Success) throw MaterialError(name + ": C' is not positive definite");
  if (!std::isfinite(effective_loss_factor(*this)))
    throw MaterialError(name + ": loss factor is not finite");
}

VoigtC MaterialTensor::complex_stiffness() const {
  return c_real.cast<cplx>() + cplx(0.0, 1.0) * c_imag.cast<cplx>();
}

double LaminateSpec::total_thickness() const {
  double t = 0.0;
  for (const auto& p : plies) t += p.thickness;
  return t;
}

bool LaminateSpec::is_symmetric() const {
  const std::size_t n = plies.size();
  if (n == 0) return false;
  for (std::size_t i = 0; i < n / 2; ++i) {
    const Ply& a = plies[i];
    const Ply& b = plies[n - 1 - i];
    if (a.material != b.material || a.angle_deg != b.angle_deg ||
        std::abs(a.thickness - b.thickness) > 1e-15 * std::max(a.thickness, 1.0))
      return false;
  }
  return true;
}

VoigtC rotate_stiffness(const VoigtC& c, double angle_deg) {
  if (angle_deg == 0.0) return c;
  const auto m = bond_matrix(angle_deg).cast<cplx>();
  VoigtC r = m * c * m.transpose();
  return 0.5 * (r + r.transpose());
}

Voigt rotate_stiffness(const Voigt& c, double angle_deg) {
  if (angle_deg == 0.0) return c;
  const auto m = bond_matrix(angle_deg);
  Voigt r = m * c * m.transpose();
  return 0.5 * (r + r.transpose());
}

VoigtC homotopy_stiffness_unclamped(const MaterialTensor& m, double s) {
  return m.c_real.cast<cplx>() + cplx(0.0, s) * m.c_imag.cast<cplx>();
}

VoigtC homotopy_stiffness(const MaterialTensor& m, double s) {
  if (!(s >= 0.0 && s <= 1.0))
    throw std::invalid_argument("homotopy parameter outside [0, 1]");
  return homotopy_stiffness_unclamped(m, s);
}

double effective_loss_factor(const MaterialTensor& m) {
  return m.c_imag.norm() / m.c_real.norm();
}

MaterialTensor isotropic_material(std::string name, double e, double nu, double density,
                                  double eta_lambda, double eta_mu) {
  const double lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
  const double mu = e / (2.0 * (1.0 + nu));
  auto fill = [](double lam, double shear) {
    Voigt c = Voigt::Zero();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) c(i, j) = lam;
    for (int i = 0; i < 3; ++i) c(i, i) += 2.0 * shear;
    for (int i = 3; i < 6; ++i) c(i, i) = shear;
    return c;
  };
  MaterialTensor m;
  m.name = std::move(name);
  m.density = density;
  m.c_real = fill(lambda, mu);
  m.c_imag = fill(lambda * eta_lambda, mu * eta_mu);
  return m;
}

MaterialTensor orthotropic_material(std::string name, const std::array<cplx, 9>& c,
                                    double density) {
  Eigen::Matrix<cplx, 6, 6> v = Eigen::Matrix<cplx, 6, 6>::Zero();
  v(0, 0) = c[0];
  v(0, 1) = v(1, 0) = c[1];
  v(0, 2) = v(2, 0) = c[2];
  v(1, 1) = c[3];
  v(1, 2) = v(2, 1) = c[4];
  v(2, 2) = c[5];
  v(3, 3) = c[6];
  v(4, 4) = c[7];
  v(5, 5) = c[8];
  MaterialTensor m;
  m.name = std::move(name);
  m.density = density;
  m.c_real = v.real() * kGPa;
  m.c_imag = v.imag() * kGPa;
  return m;
}

MaterialTensor scaled_loss(const MaterialTensor& m, double eta, std::string new_name) {
  const double current = effective_loss_factor(m);
  if (current <= 0.0) throw MaterialError(m.name + ": cannot rescale a lossless material");
  MaterialTensor out = m;
  out.name = std::move(new_name);
  out.c_imag *= eta / current;
  return out;
}

void MaterialLibrary::add(MaterialTensor m) {
  m.validate();
  std::string key = m.name;
  materials_[key] = std::move(m);
}

const MaterialTensor& MaterialLibrary::at(const std::string& name) const {
  auto it = materials_.find(name);
  if (it == materials_.end()) throw MaterialError("unknown material '" + name + "'");
  return it->second;
}

std::vector<std::string> MaterialLibrary::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : materials_) out.push_back(k);
  return out;
}

MaterialLibrary MaterialLibrary::builtin() {
  MaterialLibrary lib;
  using C = cplx;
  lib.add(orthotropic_material(
      "hernando",
      {C(132, 0.4), C(6.9, 0.001), C(5.9, 0.016), C(12.3, 0.037), C(5.5, 0.021), C(12.1, 0.043),
       C(3.32, 0.009), C(6.21, 0.015), C(6.15, 0.02)},
      1500.0));
  auto castaings = orthotropic_material(
      "castaings",
      {C(125, 2.5), C(6.3, 0.126), C(5.4, 0.108), C(14, 0.28), C(7.1, 0.142), C(14, 0.28),
       C(3.45, 0.069), C(5.4, 0.108), C(5.4, 0.108)},
      1500.0);
  lib.add(scaled_loss(castaings, 0.05, "castaings_eta0.05"));
  lib.add(std::move(castaings));
  lib.add(isotropic_material("aluminium", 70e9, 0.33, 2700.0, 1e-4, 1e-3));
  lib.add(isotropic_material("aluminium_elastic", 70e9, 0.33, 2700.0, 0.0, 0.0));
  return lib;
}

MaterialLibrary MaterialLibrary::from_json_text(const std::string& text) {
  MaterialLibrary lib;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw MaterialError(std::string("material library: ") + e.what());
  }
  const auto& list = doc.contains("materials") ? doc.at("materials") : doc;
  if (!list.is_array()) throw MaterialError("material library: expected an array of records");
  for (const auto& rec : list) {
    if (!rec.contains("name") || !rec.contains("density"))
      throw MaterialError("material record needs 'name' and 'density'");
    const std::string name = rec.at("name").get<std::string>();
    const double density = rec.at("density").get<double>();
    if (rec.contains("isotropic")) {
      const auto& iso = rec.at("isotropic");
      lib.add(isotropic_material(name, iso.at("E_GPa").get<double>() * kGPa,
                                 iso.at("nu").get<double>(), density,
                                 iso.value("eta_lambda", 0.0), iso.value("eta_mu", 0.0)));
      continue;
    }
    if (!rec.contains("c_real")) throw MaterialError(name + ": needs c_real or isotropic");
    MaterialTensor m;
    m.name = name;
    m.density = density;
    m.c_real = symmetrize_upper<Voigt>(rec.at("c_real").get<std::vector<double>>(), kGPa);
    if (rec.contains("c_imag"))
      m.c_imag = symmetrize_upper<Voigt>(rec.at("c_imag").get<std::vector<double>>(), kGPa);
    lib.add(std::move(m));
  }
  return lib;
}

std::string MaterialLibrary::to_json_text() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [name, m] : materials_) {
    list.push_back({{"name", name},
                    {"density", m.density},
                    {"c_real", upper_of(m.c_real, kGPa)},
                    {"c_imag", upper_of(m.c_imag, kGPa)}});
  }
  return nlohmann::json{{"materials", list}}.dump(2);
}

}  // namespace safehc
