#include "safehc/discretization.hpp"

#include "safehc/operators.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <thread>

namespace safehc {
namespace {

// Column offsets of (u1, u2, u3) in the strain operators.
void fill_b(double n, double dy, double dz, int a, Eigen::MatrixXd& b0, Eigen::MatrixXd& b1) {
  const int c = 3 * a;
  // d/dy: eps22 <- u2, gamma23 <- u3, gamma12 <- u1
  b0(1, c + 1) += dy;
  b0(3, c + 2) += dy;
  b0(5, c + 0) += dy;
  // d/dz: eps33 <- u3, gamma23 <- u2, gamma13 <- u1
  b0(2, c + 2) += dz;
  b0(3, c + 1) += dz;
  b0(4, c + 0) += dz;
  // d/dx -> i k: eps11 <- u1, gamma13 <- u3, gamma12 <- u2
  b1(0, c + 0) = n;
  b1(4, c + 2) = n;
  b1(5, c + 1) = n;
}

double legendre(int n, double x, double* prev = nullptr) {
  double p0 = 1.0, p1 = x;
  if (n == 0) {
    if (prev) *prev = 0.0;
    return 1.0;
  }
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  if (prev) *prev = p0;
  return p1;
}

// Quadratic Lagrange basis on {-1, 0, 1} and derivative.
double lag2(int i, double x) {
  switch (i) {
    case 0: return 0.5 * x * (x - 1.0);
    case 1: return 1.0 - x * x;
    default: return 0.5 * x * (x + 1.0);
  }
}
double dlag2(int i, double x) {
  switch (i) {
    case 0: return x - 0.5;
    case 1: return -2.0 * x;
    default: return x + 0.5;
  }
}
constexpr int kQ9a[9] = {0, 2, 2, 0, 1, 2, 1, 0, 1};
constexpr int kQ9b[9] = {0, 0, 2, 2, 0, 1, 2, 1, 1};

// Cuthill-McKee reordering over node adjacency; returns new index of every node.
std::vector<int> cuthill_mckee(int n_nodes, const std::vector<Element>& elements) {
  std::vector<std::vector<int>> adj(n_nodes);
  for (const auto& e : elements)
    for (int a : e.nodes)
      for (int b : e.nodes)
        if (a != b) adj[a].push_back(b);
  for (auto& v : adj) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  std::vector<int> order;
  std::vector<char> seen(n_nodes, 0);
  while (static_cast<int>(order.size()) < n_nodes) {
    int start = -1;
    for (int i = 0; i < n_nodes; ++i)
      if (!seen[i] && (start < 0 || adj[i].size() < adj[start].size())) start = i;
    std::deque<int> queue{start};
    seen[start] = 1;
    while (!queue.empty()) {
      const int v = queue.front();
      queue.pop_front();
      order.push_back(v);
      std::vector<int> next;
      for (int w : adj[v])
        if (!seen[w]) {
          seen[w] = 1;
          next.push_back(w);
        }
      std::stable_sort(next.begin(), next.end(),
                       [&](int a, int b) { return adj[a].size() < adj[b].size(); });
      queue.insert(queue.end(), next.begin(), next.end());
    }
  }
  std::reverse(order.begin(), order.end());
  std::vector<int> new_index(n_nodes);
  for (int i = 0; i < n_nodes; ++i) new_index[order[i]] = i;
  return new_index;
}

void renumber(Mesh& mesh, const std::vector<int>& new_index) {
  std::vector<Eigen::Vector2d> nodes(mesh.nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) nodes[new_index[i]] = mesh.nodes[i];
  mesh.nodes = std::move(nodes);
  for (auto& e : mesh.elements)
    for (int& v : e.nodes) v = new_index[v];
}

double fastest_bulk_speed(const MaterialTensor& m) {
  // Christoffel tensor maximum over a direction grid on the sphere.
  auto voigt = [](int i, int j) {
    if (i == j) return i;
    const int lo = std::min(i, j), hi = std::max(i, j);
    if (lo == 1 && hi == 2) return 3;
    if (lo == 0 && hi == 2) return 4;
    return 5;
  };
  double best = 0.0;
  const int nt = 24, np = 48;
  for (int it = 0; it <= nt; ++it) {
    const double th = std::numbers::pi * it / nt;
    for (int ip = 0; ip < np; ++ip) {
      const double ph = 2.0 * std::numbers::pi * ip / np;
      const double nvec[3] = {std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph),
                              std::cos(th)};
      Eigen::Matrix3d g = Eigen::Matrix3d::Zero();
      for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k)
          for (int j = 0; j < 3; ++j)
            for (int l = 0; l < 3; ++l)
              g(i, k) += m.c_real(voigt(i, j), voigt(k, l)) * nvec[j] * nvec[l];
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(g, Eigen::EigenvaluesOnly);
      best = std::max(best, es.eigenvalues().maxCoeff());
    }
  }
  return std::sqrt(best / m.density);
}

}  // namespace

bool Mesh::is_laminate() const {
  return !elements.empty() && std::all_of(elements.begin(), elements.end(), [](const Element& e) {
    return e.kind == ElementKind::LineGLL;
  });
}

void Mesh::validate(double char_length) const {
  const int nn = static_cast<int>(nodes.size());
  if (elements.empty()) throw MeshError("mesh has no elements");
  for (const auto& e : elements) {
    for (int v : e.nodes)
      if (v < 0 || v >= nn) throw MeshError("element node index out of range");
    if (e.kind == ElementKind::LineGLL) {
      if (e.order < 1) throw MeshError("GLL element order must be >= 1");
      if (static_cast<int>(e.nodes.size()) != e.order + 1)
        throw MeshError("GLL element node count does not match its order");
      const auto rule = gll_rule(e.order);
      const double za = nodes[e.nodes.front()].y(), zb = nodes[e.nodes.back()].y();
      for (int i = 0; i <= e.order; ++i) {
        const double expect = za + 0.5 * (rule.x[i] + 1.0) * (zb - za);
        if (std::abs(nodes[e.nodes[i]].y() - expect) > 1e-9 * std::abs(zb - za))
          throw MeshError("GLL element nodes are not at Gauss-Lobatto-Legendre abscissae");
      }
    } else if (e.nodes.size() != 9) {
      throw MeshError("quad9 element needs nine nodes");
    }
  }
  std::vector<int> idx(nn);
  for (int i = 0; i < nn; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    return nodes[a].x() < nodes[b].x() || (nodes[a].x() == nodes[b].x() && nodes[a].y() < nodes[b].y());
  });
  const double tol = 1e-12 * char_length;
  for (int i = 0; i < nn; ++i)
    for (int j = i + 1; j < nn && nodes[idx[j]].x() - nodes[idx[i]].x() <= tol; ++j)
      if ((nodes[idx[i]] - nodes[idx[j]]).norm() <= tol) throw MeshError("duplicate nodes");
}

GllRule gll_rule(int p) {
  if (p < 1) throw MeshError("GLL order must be >= 1");
  GllRule r;
  r.x.resize(p + 1);
  r.w.resize(p + 1);
  for (int i = 0; i <= p; ++i) {
    double x = -std::cos(std::numbers::pi * i / p);
    for (int it = 0; it < 100; ++it) {
      double pm1 = 0.0;
      const double pn = legendre(p, x, &pm1);
      const double dx = (x * pn - pm1) / ((p + 1) * pn);
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    if (i == 0) x = -1.0;
    if (i == p) x = 1.0;
    r.x[i] = x;
  }
  std::vector<double> pn(p + 1);
  for (int i = 0; i <= p; ++i) {
    pn[i] = legendre(p, r.x[i]);
    r.w[i] = 2.0 / (p * (p + 1.0) * pn[i] * pn[i]);
  }
  r.d.assign(p + 1, std::vector<double>(p + 1, 0.0));
  for (int i = 0; i <= p; ++i)
    for (int j = 0; j <= p; ++j)
      if (i != j) r.d[i][j] = pn[i] / (pn[j] * (r.x[i] - r.x[j]));
  r.d[0][0] = -p * (p + 1.0) / 4.0;
  r.d[p][p] = p * (p + 1.0) / 4.0;
  return r;
}

Mesh build_laminate_mesh(const LaminateSpec& spec, int elems_per_ply, int order) {
  if (spec.plies.empty()) throw MeshError("empty layup");
  if (elems_per_ply < 1 || order < 1) throw MeshError("elements per ply and order must be >= 1");
  for (const auto& p : spec.plies)
    if (!(p.thickness > 0.0)) throw MeshError("ply thickness must be positive");
  const auto rule = gll_rule(order);
  Mesh mesh;
  const double h = spec.total_thickness();
  double z = -0.5 * h;
  mesh.z_min = -0.5 * h;
  mesh.z_max = 0.5 * h;
  mesh.symmetric_layup = spec.is_symmetric();
  mesh.nodes.push_back({0.0, z});
  for (const auto& ply : spec.plies) {
    const double le = ply.thickness / elems_per_ply;
    for (int e = 0; e < elems_per_ply; ++e) {
      Element el;
      el.kind = ElementKind::LineGLL;
      el.order = order;
      el.material = ply.material;
      el.angle_deg = ply.angle_deg - spec.propagation_angle_deg;
      el.nodes.push_back(static_cast<int>(mesh.nodes.size()) - 1);
      for (int i = 1; i <= order; ++i) {
        const double zi = (i == order) ? z + le : z + 0.5 * (rule.x[i] + 1.0) * le;
        el.nodes.push_back(static_cast<int>(mesh.nodes.size()));
        mesh.nodes.push_back({0.0, zi});
      }
      z += le;
      mesh.elements.push_back(std::move(el));
    }
  }
  return mesh;
}

Mesh build_rect_mesh(double width, double height, int nx, int ny, const std::string& material) {
  Mesh mesh;
  const int cols = 2 * nx + 1, rows = 2 * ny + 1;
  for (int j = 0; j < rows; ++j)
    for (int i = 0; i < cols; ++i)
      mesh.nodes.push_back({width * i / (cols - 1.0), height * j / (rows - 1.0)});
  auto id = [&](int i, int j) { return j * cols + i; };
  for (int ey = 0; ey < ny; ++ey)
    for (int ex = 0; ex < nx; ++ex) {
      const int i = 2 * ex, j = 2 * ey;
      Element el;
      el.kind = ElementKind::Quad9;
      el.order = 2;
      el.material = material;
      el.nodes = {id(i, j),         id(i + 2, j),     id(i + 2, j + 2), id(i, j + 2),
                  id(i + 1, j),     id(i + 2, j + 1), id(i + 1, j + 2), id(i, j + 1),
                  id(i + 1, j + 1)};
      mesh.elements.push_back(std::move(el));
    }
  renumber(mesh, cuthill_mckee(static_cast<int>(mesh.nodes.size()), mesh.elements));
  return mesh;
}

Mesh build_lbar_mesh(double long_leg, double short_leg, double t, int et, int el_long,
                     int el_short, const std::string& material) {
  if (!(long_leg > t && short_leg > t && t > 0.0)) throw MeshError("invalid L-bar dimensions");
  // Grid lines in y and z; cells outside the L are skipped.
  std::vector<double> ys, zs;
  auto spread = [](std::vector<double>& v, double a, double b, int n, bool skip_first) {
    for (int i = skip_first ? 1 : 0; i <= 2 * n; ++i) v.push_back(a + (b - a) * i / (2.0 * n));
  };
  spread(ys, 0.0, t, et, false);
  spread(ys, t, short_leg, el_short, true);
  spread(zs, 0.0, t, et, false);
  spread(zs, t, long_leg, el_long, true);
  const int cols = static_cast<int>(ys.size()), rows = static_cast<int>(zs.size());
  const int ncell_y = (cols - 1) / 2, ncell_z = (rows - 1) / 2;
  auto inside = [&](int cy, int cz) { return cy < et || cz < et; };
  std::vector<int> id(cols * rows, -1);
  Mesh mesh;
  auto node = [&](int i, int j) {
    int& v = id[j * cols + i];
    if (v < 0) {
      v = static_cast<int>(mesh.nodes.size());
      mesh.nodes.push_back({ys[i], zs[j]});
    }
    return v;
  };
  for (int cz = 0; cz < ncell_z; ++cz)
    for (int cy = 0; cy < ncell_y; ++cy) {
      if (!inside(cy, cz)) continue;
      const int i = 2 * cy, j = 2 * cz;
      Element e;
      e.kind = ElementKind::Quad9;
      e.order = 2;
      e.material = material;
      e.nodes = {node(i, j),         node(i + 2, j),     node(i + 2, j + 2), node(i, j + 2),
                 node(i + 1, j),     node(i + 2, j + 1), node(i + 1, j + 2), node(i, j + 1),
                 node(i + 1, j + 1)};
      mesh.elements.push_back(std::move(e));
    }
  renumber(mesh, cuthill_mckee(static_cast<int>(mesh.nodes.size()), mesh.elements));
  return mesh;
}

std::vector<QuadraturePoint> quadrature_points(const Mesh& mesh, const MaterialLibrary& materials,
                                               const Normalization& norm) {
  std::vector<QuadraturePoint> out;
  const double a = norm.char_length;
  for (const auto& e : mesh.elements) {
    const MaterialTensor* mat = &materials.at(e.material);
    std::vector<int> dofs;
    for (int v : e.nodes)
      for (int c = 0; c < 3; ++c) dofs.push_back(3 * v + c);
    const int nd = static_cast<int>(dofs.size());
    const int nen = static_cast<int>(e.nodes.size());
    if (e.kind == ElementKind::LineGLL) {
      const auto rule = gll_rule(e.order);
      const double za = mesh.nodes[e.nodes.front()].y() / a;
      const double zb = mesh.nodes[e.nodes.back()].y() / a;
      const double jac = 0.5 * (zb - za);
      if (!(jac > 0.0)) throw MeshError("degenerate line element");
      for (int i = 0; i < nen; ++i) {
        QuadraturePoint qp;
        qp.point = mesh.nodes[e.nodes[i]];
        qp.weight = rule.w[i] * jac;
        qp.dofs = dofs;
        qp.n = Eigen::MatrixXd::Zero(3, nd);
        qp.b0 = Eigen::MatrixXd::Zero(6, nd);
        qp.b1 = Eigen::MatrixXd::Zero(6, nd);
        for (int j = 0; j < nen; ++j) {
          const double nj = (i == j) ? 1.0 : 0.0;
          for (int c = 0; c < 3; ++c) qp.n(c, 3 * j + c) = nj;
          fill_b(nj, 0.0, rule.d[i][j] / jac, j, qp.b0, qp.b1);
        }
        qp.material = mat;
        qp.angle_deg = e.angle_deg;
        out.push_back(std::move(qp));
      }
    } else {
      static const double gp[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
      static const double gw[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
      for (int ia = 0; ia < 3; ++ia)
        for (int ib = 0; ib < 3; ++ib) {
          const double xi = gp[ia], eta = gp[ib];
          Eigen::Matrix<double, 9, 1> nvals;
          Eigen::Matrix<double, 9, 2> dnat;
          for (int k = 0; k < 9; ++k) {
            nvals(k) = lag2(kQ9a[k], xi) * lag2(kQ9b[k], eta);
            dnat(k, 0) = dlag2(kQ9a[k], xi) * lag2(kQ9b[k], eta);
            dnat(k, 1) = lag2(kQ9a[k], xi) * dlag2(kQ9b[k], eta);
          }
          Eigen::Matrix2d jac = Eigen::Matrix2d::Zero();  // [dy/dxi dy/deta; dz/dxi dz/deta]
          Eigen::Vector2d pt = Eigen::Vector2d::Zero();
          for (int k = 0; k < 9; ++k) {
            const Eigen::Vector2d xk = mesh.nodes[e.nodes[k]];
            pt += nvals(k) * xk;
            jac.col(0) += dnat(k, 0) * xk / a;
            jac.col(1) += dnat(k, 1) * xk / a;
          }
          const double det = jac.determinant();
          if (!(std::abs(det) > 1e-14)) throw MeshError("singular element Jacobian");
          const Eigen::Matrix2d jinv_t = jac.inverse().transpose();
          QuadraturePoint qp;
          qp.point = pt;
          qp.weight = gw[ia] * gw[ib] * std::abs(det);
          qp.dofs = dofs;
          qp.n = Eigen::MatrixXd::Zero(3, nd);
          qp.b0 = Eigen::MatrixXd::Zero(6, nd);
          qp.b1 = Eigen::MatrixXd::Zero(6, nd);
          for (int k = 0; k < 9; ++k) {
            const Eigen::Vector2d g = jinv_t * dnat.row(k).transpose();
            for (int c = 0; c < 3; ++c) qp.n(c, 3 * k + c) = nvals(k);
            fill_b(nvals(k), g(0), g(1), k, qp.b0, qp.b1);
          }
          qp.material = mat;
          qp.angle_deg = e.angle_deg;
          out.push_back(std::move(qp));
        }
    }
  }
  return out;
}

bool SystemMatrices::lossless() const {
  return k1_im.norm() == 0.0 && k2_im.norm() == 0.0 && k3_im.norm() == 0.0;
}

SystemMatrices assemble(const Mesh& mesh, const MaterialLibrary& materials,
                        const Normalization& norm, int jobs) {
  if (!(norm.char_length > 0.0 && norm.char_speed > 0.0))
    throw MeshError("normalization constants must be positive");
  mesh.validate(norm.char_length);
  for (const auto& e : mesh.elements)
    if (!materials.contains(e.material))
      throw MeshError("element references unknown material '" + e.material + "'");

  SystemMatrices out;
  out.normalization = norm;
  out.n = mesh.dof_count();
  double rho_ref = 0.0;
  for (const auto& e : mesh.elements) {
    const auto& m = materials.at(e.material);
    rho_ref = std::max(rho_ref, m.density);
    out.max_bulk_speed = std::max(out.max_bulk_speed, fastest_bulk_speed(m) / norm.char_speed);
  }
  out.density_ref = rho_ref;
  const double c_ref = rho_ref * norm.char_speed * norm.char_speed;

  const auto qps = quadrature_points(mesh, materials, norm);
  // Group quadrature points by element (they are emitted element by element).
  std::vector<std::size_t> starts{0};
  for (std::size_t i = 1; i < qps.size(); ++i)
    if (qps[i].dofs != qps[i - 1].dofs) starts.push_back(i);
  starts.push_back(qps.size());
  const std::size_t n_el = starts.size() - 1;

  using Trip = Eigen::Triplet<double>;
  struct Buffers {
    std::array<std::vector<Trip>, 7> t;
    double mass = 0.0;
  };
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(n_el)));
  std::vector<Buffers> buf(jobs);
  auto work = [&](int tid) {
    auto& b = buf[tid];
    const std::size_t lo = n_el * tid / jobs, hi = n_el * (tid + 1) / jobs;
    for (std::size_t el = lo; el < hi; ++el) {
      const auto& first = qps[starts[el]];
      const int nd = static_cast<int>(first.dofs.size());
      std::array<Eigen::MatrixXd, 7> ke;
      for (auto& m : ke) m = Eigen::MatrixXd::Zero(nd, nd);
      for (std::size_t iq = starts[el]; iq < starts[el + 1]; ++iq) {
        const auto& qp = qps[iq];
        const Voigt cr = rotate_stiffness(qp.material->c_real, qp.angle_deg) / c_ref;
        const Voigt ci = rotate_stiffness(qp.material->c_imag, qp.angle_deg) / c_ref;
        const double w = qp.weight;
        const Eigen::MatrixXd cb0r = cr * qp.b0, cb1r = cr * qp.b1;
        const Eigen::MatrixXd cb0i = ci * qp.b0, cb1i = ci * qp.b1;
        ke[0] += w * qp.b0.transpose() * cb0r;
        ke[1] += w * qp.b0.transpose() * cb0i;
        ke[2] += w * (qp.b0.transpose() * cb1r - qp.b1.transpose() * cb0r);
        ke[3] += w * (qp.b0.transpose() * cb1i - qp.b1.transpose() * cb0i);
        ke[4] += w * qp.b1.transpose() * cb1r;
        ke[5] += w * qp.b1.transpose() * cb1i;
        ke[6] += w * (qp.material->density / rho_ref) * qp.n.transpose() * qp.n;
        b.mass += w * qp.material->density / rho_ref;
      }
      for (int i = 0; i < nd; ++i)
        for (int j = 0; j < nd; ++j)
          for (int m = 0; m < 7; ++m) b.t[m].emplace_back(first.dofs[i], first.dofs[j], ke[m](i, j));
    }
  };
  if (jobs == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(work, t);
  }
  std::array<std::vector<Trip>, 7> all;
  for (auto& b : buf) {
    out.total_mass += b.mass;
    for (int m = 0; m < 7; ++m) all[m].insert(all[m].end(), b.t[m].begin(), b.t[m].end());
  }
  SystemMatrices::Sparse* targets[7] = {&out.k1_re, &out.k1_im, &out.k2_re, &out.k2_im,
                                         &out.k3_re, &out.k3_im, &out.m};
  for (int m = 0; m < 7; ++m) {
    targets[m]->resize(out.n, out.n);
    targets[m]->setFromTriplets(all[m].begin(), all[m].end());
    targets[m]->makeCompressed();
  }
  // Exact structural symmetry / skew-symmetry of the element sums.
  auto sym = [](SystemMatrices::Sparse& a, double sign) {
    SystemMatrices::Sparse t = a.transpose();
    a = 0.5 * (a + sign * t);
  };
  sym(out.k1_re, 1.0);
  sym(out.k1_im, 1.0);
  sym(out.k3_re, 1.0);
  sym(out.k3_im, 1.0);
  sym(out.m, 1.0);
  sym(out.k2_re, -1.0);
  sym(out.k2_im, -1.0);
  int bw = 0;
  for (int k = 0; k < out.k1_re.outerSize(); ++k)
    for (SystemMatrices::Sparse::InnerIterator it(out.k1_re, k); it; ++it)
      bw = std::max(bw, static_cast<int>(std::abs(it.row() - it.col())));
  for (int k = 0; k < out.m.outerSize(); ++k)
    for (SystemMatrices::Sparse::InnerIterator it(out.m, k); it; ++it)
      bw = std::max(bw, static_cast<int>(std::abs(it.row() - it.col())));
  out.bandwidth = bw;
  return out;
}

std::vector<FieldSample> reconstruct_fields(const Mesh& mesh, const MaterialLibrary& materials,
                                            const SystemMatrices& mats, cplx k, double omega,
                                            const Eigen::VectorXcd& q, double s) {
  if (q.size() != mats.n) throw MeshError("eigenvector size does not match the mesh");
  const double scale = operator_scale(mats, k, omega, s);
  const double res = apply_dynamic(mats, k, omega, s, q).norm();
  if (res > 1e-6 * scale * q.norm())
    throw MeshError("eigenpair residual too large for field reconstruction");
  const double c_ref = mats.density_ref * mats.normalization.char_speed *
                       mats.normalization.char_speed;
  const cplx iu(0.0, 1.0);
  std::vector<FieldSample> out;
  for (const auto& qp : quadrature_points(mesh, materials, mats.normalization)) {
    Eigen::VectorXcd ue(qp.dofs.size());
    for (std::size_t i = 0; i < qp.dofs.size(); ++i) ue(i) = q(qp.dofs[i]);
    const VoigtC c = rotate_stiffness(homotopy_stiffness_unclamped(*qp.material, s), qp.angle_deg) /
                     c_ref;
    const Eigen::Matrix<cplx, 3, 1> u = qp.n.cast<cplx>() * ue;
    const Eigen::Matrix<cplx, 6, 1> eps = qp.b0.cast<cplx>() * ue + iu * k * (qp.b1.cast<cplx>() * ue);
    FieldSample f;
    f.point = qp.point;
    f.weight = qp.weight;
    f.stress = c * eps;
    f.velocity = -iu * omega * u;
    const double rho = qp.material->density / mats.density_ref;
    // traction on the x-face: (sigma11, sigma12, sigma13)
    const cplx flux = f.stress(0) * std::conj(f.velocity(0)) + f.stress(5) * std::conj(f.velocity(1)) +
                      f.stress(4) * std::conj(f.velocity(2));
    f.axial_flux = -0.5 * flux.real();
    f.kinetic_density = 0.25 * rho * f.velocity.squaredNorm();
    f.strain_density = 0.25 * (eps.adjoint() * c * eps)(0, 0).real();
    out.push_back(std::move(f));
  }
  return out;
}

std::string Mesh::to_json_text() const {
  nlohmann::json j;
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : nodes) j["nodes"].push_back({n.x(), n.y()});
  j["elements"] = nlohmann::json::array();
  for (const auto& e : elements)
    j["elements"].push_back({{"kind", e.kind == ElementKind::LineGLL ? "line_gll" : "quad9"},
                             {"order", e.order},
                             {"nodes", e.nodes},
                             {"material", e.material},
                             {"angle_deg", e.angle_deg}});
  j["z_min"] = z_min;
  j["z_max"] = z_max;
  j["symmetric_layup"] = symmetric_layup;
  return j.dump(1);
}

Mesh Mesh::from_json_text(const std::string& text) {
  Mesh mesh;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    for (const auto& n : j.at("nodes")) mesh.nodes.push_back({n.at(0).get<double>(), n.at(1).get<double>()});
    for (const auto& e : j.at("elements")) {
      Element el;
      const auto kind = e.at("kind").get<std::string>();
      if (kind == "line_gll")
        el.kind = ElementKind::LineGLL;
      else if (kind == "quad9")
        el.kind = ElementKind::Quad9;
      else
        throw MeshError("unknown element kind '" + kind + "'");
      el.order = e.value("order", el.kind == ElementKind::Quad9 ? 2 : 1);
      el.nodes = e.at("nodes").get<std::vector<int>>();
      el.material = e.at("material").get<std::string>();
      el.angle_deg = e.value("angle_deg", 0.0);
      mesh.elements.push_back(std::move(el));
    }
    mesh.z_min = j.value("z_min", 0.0);
    mesh.z_max = j.value("z_max", 0.0);
    mesh.symmetric_layup = j.value("symmetric_layup", false);
  } catch (const nlohmann::json::exception& e) {
    throw MeshError(std::string("mesh document: ") + e.what());
  }
  return mesh;
}

}  // namespace safehc
