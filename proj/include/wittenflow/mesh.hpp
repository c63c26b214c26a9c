#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "wittenflow/core.hpp"
#include "wittenflow/surface.hpp"

namespace wittenflow {

// Closed oriented triangulation of a model surface. Edges are stored once
// with a canonical orientation (tail < head by vertex index); triangles are
// oriented consistently with the surface orientation (outward normal on the
// sphere, the standard chart orientation on the torus).
struct TriMesh {
  SurfaceKind kind = SurfaceKind::FlatTorusUnitSquare;
  int level = 0;       // subdivision level (sphere) or grid size N (torus)
  double mesh_size_h = 0.0;

  std::vector<Vec3> vertices;
  std::vector<std::array<int, 2>> edges;      // (tail, head)
  std::vector<std::array<int, 3>> triangles;  // oriented vertex triples

  // triangle t, corner c -> edge index and +1/-1 if the directed boundary
  // edge (v_c -> v_{c+1}) agrees with the canonical edge orientation
  std::vector<std::array<int, 3>> tri_edge;
  std::vector<std::array<int, 3>> tri_edge_sign;

  std::vector<double> tri_area;
  std::vector<Vec3> tri_corner0;  // local lift of each triangle (torus wrap)
  std::vector<Vec3> tri_corner1;
  std::vector<Vec3> tri_corner2;

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_edges() const { return static_cast<int>(edges.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  int euler_characteristic() const { return num_vertices() - num_edges() + num_triangles(); }

  bool is_torus() const { return kind == SurfaceKind::FlatTorusUnitSquare; }

  // Chart displacement from a to b, unwrapped to the nearest image on the
  // torus; plain difference on the sphere.
  Vec3 displacement(const Vec3& a, const Vec3& b) const {
    Vec3 d = b - a;
    if (is_torus()) {
      for (int i = 0; i < 2; ++i) {
        if (d[i] > 0.5) d[i] -= 1.0;
        if (d[i] <= -0.5) d[i] += 1.0;
      }
    }
    return d;
  }

  double distance(const Vec3& a, const Vec3& b) const { return displacement(a, b).norm(); }
};

namespace detail {

inline std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}

inline void finalize_mesh(TriMesh& mesh) {
  std::unordered_map<std::uint64_t, int> edge_index;
  edge_index.reserve(mesh.triangles.size() * 2);
  for (const auto& tri : mesh.triangles) {
    for (int c = 0; c < 3; ++c) {
      int a = tri[c], b = tri[(c + 1) % 3];
      std::uint64_t key = edge_key(a, b);
      if (edge_index.find(key) == edge_index.end()) {
        int id = static_cast<int>(mesh.edges.size());
        edge_index.emplace(key, id);
        mesh.edges.push_back({std::min(a, b), std::max(a, b)});
      }
    }
  }

  mesh.tri_edge.resize(mesh.triangles.size());
  mesh.tri_edge_sign.resize(mesh.triangles.size());
  std::vector<int> edge_use(mesh.edges.size(), 0);
  std::vector<int> edge_orient_sum(mesh.edges.size(), 0);
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int c = 0; c < 3; ++c) {
      int a = tri[c], b = tri[(c + 1) % 3];
      int e = edge_index.at(edge_key(a, b));
      mesh.tri_edge[t][c] = e;
      int sign = (mesh.edges[e][0] == a && mesh.edges[e][1] == b) ? 1 : -1;
      mesh.tri_edge_sign[t][c] = sign;
      edge_use[e] += 1;
      edge_orient_sum[e] += sign;
    }
  }
  for (size_t e = 0; e < mesh.edges.size(); ++e) {
    if (edge_use[e] != 2 || edge_orient_sum[e] != 0)
      throw MeshError("mesh is not a closed oriented surface");
  }

  mesh.tri_area.resize(mesh.triangles.size());
  mesh.tri_corner0.resize(mesh.triangles.size());
  mesh.tri_corner1.resize(mesh.triangles.size());
  mesh.tri_corner2.resize(mesh.triangles.size());
  double hmax = 0.0;
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    Vec3 p0 = mesh.vertices[tri[0]];
    Vec3 p1 = p0 + mesh.displacement(p0, mesh.vertices[tri[1]]);
    Vec3 p2 = p0 + mesh.displacement(p0, mesh.vertices[tri[2]]);
    mesh.tri_corner0[t] = p0;
    mesh.tri_corner1[t] = p1;
    mesh.tri_corner2[t] = p2;
    double area = 0.5 * ((p1 - p0).cross(p2 - p0)).norm();
    mesh.tri_area[t] = area;
    hmax = std::max({hmax, (p1 - p0).norm(), (p2 - p1).norm(), (p0 - p2).norm()});
  }
  mesh.mesh_size_h = hmax;
}

}  // namespace detail

// Icosphere (sphere) or offset-row grid (torus). `level` is the subdivision
// depth on the sphere and the grid size N on the torus. The torus grid uses
// acute isoceles triangles (rows shifted by half a cell) so that every
// cotangent weight is strictly positive; N must be even for periodicity.
inline TriMesh build_mesh(const MorseModel& model, int level) {
  if (level < 0) throw ConfigError("mesh level must be nonnegative");
  TriMesh mesh;
  mesh.kind = model.kind;
  mesh.level = level;

  if (model.is_sphere()) {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> verts = {
        {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
    for (auto& v : verts) v.normalize();
    std::vector<std::array<int, 3>> faces = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

    for (int l = 0; l < level; ++l) {
      std::map<std::pair<int, int>, int> midpoint;
      auto mid = [&](int a, int b) {
        auto key = std::minmax(a, b);
        auto it = midpoint.find(key);
        if (it != midpoint.end()) return it->second;
        Vec3 m = (verts[a] + verts[b]).normalized();
        int id = static_cast<int>(verts.size());
        verts.push_back(m);
        midpoint.emplace(key, id);
        return id;
      };
      std::vector<std::array<int, 3>> next;
      next.reserve(faces.size() * 4);
      for (const auto& f : faces) {
        int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
        next.push_back({f[0], ab, ca});
        next.push_back({f[1], bc, ab});
        next.push_back({f[2], ca, bc});
        next.push_back({ab, bc, ca});
      }
      faces = std::move(next);
    }
    mesh.vertices = std::move(verts);
    mesh.triangles = std::move(faces);
  } else if (model.is_torus()) {
    int n = level;
    if (n < 2 || n % 2 != 0) throw ConfigError("torus grid size must be even and >= 2");
    mesh.level = n;
    mesh.vertices.resize(static_cast<size_t>(n) * n);
    auto vid = [n](int i, int j) { return ((j % n + n) % n) * n + ((i % n + n) % n); };
    // The whole chart is translated by a fixed generic offset so that mesh
    // lines and quadrature nodes never sit exactly on the separatrices of
    // the symmetric model functions (axis-aligned critical lines otherwise
    // coincide with vertex rows and symmetric node cancellations).
    const double off_x = 0.2137, off_y = 0.1593;
    for (int j = 0; j < n; ++j) {
      double off = ((j % 2 == 0) ? 0.0 : 0.5) + off_x;
      for (int i = 0; i < n; ++i) {
        mesh.vertices[vid(i, j)] =
            Vec3(std::fmod((i + off) / n, 1.0), std::fmod((j + off_y) / n, 1.0), 0.0);
      }
    }
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        if (j % 2 == 0) {
          mesh.triangles.push_back({vid(i, j), vid(i + 1, j), vid(i, j + 1)});
          mesh.triangles.push_back({vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)});
        } else {
          mesh.triangles.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)});
          mesh.triangles.push_back({vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)});
        }
      }
    }
  } else {
    throw ConfigError("build_mesh: unsupported model kind");
  }

  detail::finalize_mesh(mesh);
  return mesh;
}

// Symmetric 6-point triangle rule, exact for polynomials of degree 4.
struct QuadratureRule {
  static constexpr int kNumPoints = 6;
  std::array<std::array<double, 3>, 6> bary;
  std::array<double, 6> weight;  // sums to 1
  QuadratureRule() {
    const double a1 = 0.445948490915965, w1 = 0.223381589678011;
    const double a2 = 0.091576213509771, w2 = 0.109951743655322;
    bary = {{{a1, a1, 1 - 2 * a1},
             {a1, 1 - 2 * a1, a1},
             {1 - 2 * a1, a1, a1},
             {a2, a2, 1 - 2 * a2},
             {a2, 1 - 2 * a2, a2},
             {1 - 2 * a2, a2, a2}}};
    weight = {w1, w1, w1, w2, w2, w2};
  }
};

inline const QuadratureRule& quadrature_rule() {
  static const QuadratureRule rule;
  return rule;
}

// Quadrature node on the surface for triangle t, local point q.
inline Vec3 quadrature_point(const TriMesh& mesh, const MorseModel& model, int t, int q) {
  const auto& rule = quadrature_rule();
  Vec3 p = rule.bary[q][0] * mesh.tri_corner0[t] + rule.bary[q][1] * mesh.tri_corner1[t] +
           rule.bary[q][2] * mesh.tri_corner2[t];
  if (model.is_sphere()) return p.normalized();
  return model.canonical_point(p);
}

// Riemannian-area-weighted quadrature of a scalar density. `region_mask` is
// an optional per-triangle weight in [0,1].
inline double integrate_form(const TriMesh& mesh, const MorseModel& model,
                             const std::function<double(const Vec3&)>& integrand,
                             const std::vector<double>* region_mask = nullptr) {
  const auto& rule = quadrature_rule();
  double total = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    double m = region_mask ? (*region_mask)[t] : 1.0;
    if (m == 0.0) continue;
    double s = 0.0;
    for (int q = 0; q < QuadratureRule::kNumPoints; ++q)
      s += rule.weight[q] * integrand(quadrature_point(mesh, model, t, q));
    total += m * mesh.tri_area[t] * s;
  }
  return total;
}

inline double surface_area(const TriMesh& mesh) {
  double a = 0.0;
  for (double t : mesh.tri_area) a += t;
  return a;
}

// OFF-format export for external visualization (torus charts embed at z=0).
inline void export_off(const TriMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << "OFF\n" << mesh.num_vertices() << " " << mesh.num_triangles() << " " << mesh.num_edges() << "\n";
  for (const auto& v : mesh.vertices)
    out << format_full(v.x()) << " " << format_full(v.y()) << " " << format_full(v.z()) << "\n";
  for (const auto& t : mesh.triangles) out << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
}

}  // namespace wittenflow
