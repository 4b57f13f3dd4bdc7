#include "safehc/keypoints.hpp"

#include "parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace safehc {
namespace {

struct BranchView {
  std::vector<double> k, w;
  std::vector<const Eigen::MatrixXcd*> vec;
  int label = 0;
};

std::vector<int> thin_branch(const BranchView& b, double zeta_bar, double gamma_bar,
                             const SystemMatrices::Sparse& m) {
  const int n = static_cast<int>(b.k.size());
  std::vector<int> keep;
  if (n == 0) return keep;
  keep.push_back(0);
  int last = 0;
  auto segment_ok = [&](int a, int e) {
    if (e == a + 1) return true;
    if (!(mac(b.vec[a]->col(b.label), b.vec[e]->col(b.label), m) > 1.0 - zeta_bar)) return false;
    for (int i = a + 1; i < e; ++i) {
      const double t = (b.k[i] - b.k[a]) / (b.k[e] - b.k[a]);
      const double wi = b.w[a] + t * (b.w[e] - b.w[a]);
      if (interpolation_error(wi, b.w[i]) > gamma_bar) return false;
    }
    return true;
  };
  int e = 1;
  while (e < n) {
    if (segment_ok(last, e)) {
      ++e;
      continue;
    }
    last = e - 1;
    keep.push_back(last);
  }
  if (keep.back() != n - 1) keep.push_back(n - 1);
  return keep;
}

BranchView view(const SweepResult& sweep, int label) {
  BranchView b;
  b.label = label;
  for (int p : sweep.branches[label]) {
    b.k.push_back(sweep.points[p].k_hat);
    b.w.push_back(sweep.points[p].omega[label]);
    b.vec.push_back(&sweep.points[p].vectors);
  }
  return b;
}

}  // namespace

double interpolation_error(double interpolated, double exact) {
  return std::abs(interpolated - exact) / std::max(std::abs(exact), 1e-6);
}

int KeySet::count() const {
  int c = 0;
  for (const auto& r : retained) c += static_cast<int>(r.size());
  return c;
}

KeySet filter_keypoints(const SweepResult& sweep, double zeta_bar, double gamma_bar,
                        const SystemMatrices::Sparse& m) {
  KeySet ks;
  ks.zeta_bar = zeta_bar;
  ks.gamma_bar = gamma_bar;
  ks.retained.resize(sweep.branches.size());
  int total = 0;
  for (std::size_t l = 0; l < sweep.branches.size(); ++l) {
    const auto b = view(sweep, static_cast<int>(l));
    total += static_cast<int>(b.k.size());
    for (int pos : thin_branch(b, zeta_bar, gamma_bar, m))
      ks.retained[l].push_back(sweep.branches[l][pos]);
  }
  ks.retention_fraction = total > 0 ? static_cast<double>(ks.count()) / total : 1.0;
  return ks;
}

Eigen::MatrixXd retention_surface(const SweepResult& sweep, const std::vector<double>& zetas,
                                  const std::vector<double>& gammas,
                                  const SystemMatrices::Sparse& m, int jobs) {
  Eigen::MatrixXd out(zetas.size(), gammas.size());
  const int cells = static_cast<int>(zetas.size() * gammas.size());
  detail::parallel_for(cells, jobs, [&](int c) {
    const int i = c / static_cast<int>(gammas.size());
    const int j = c % static_cast<int>(gammas.size());
    out(i, j) = filter_keypoints(sweep, zetas[i], gammas[j], m).retention_fraction;
  });
  return out;
}

std::string KeySet::to_json_text() const {
  nlohmann::json j;
  j["zeta_bar"] = zeta_bar;
  j["gamma_bar"] = gamma_bar;
  j["retention_fraction"] = retention_fraction;
  j["count"] = count();
  j["retained"] = nlohmann::json::array();
  for (std::size_t l = 0; l < retained.size(); ++l)
    if (!retained[l].empty()) j["retained"].push_back({{"label", l}, {"grid_index", retained[l]}});
  return j.dump(1);
}

KeySet KeySet::from_json_text(const std::string& text, int n_labels) {
  const auto j = nlohmann::json::parse(text);
  KeySet k;
  k.zeta_bar = j.at("zeta_bar").get<double>();
  k.gamma_bar = j.at("gamma_bar").get<double>();
  k.retention_fraction = j.at("retention_fraction").get<double>();
  k.retained.assign(n_labels, {});
  for (const auto& r : j.at("retained"))
    k.retained.at(r.at("label").get<std::size_t>()) = r.at("grid_index").get<std::vector<int>>();
  return k;
}

}  // namespace safehc
