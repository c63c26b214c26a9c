#pragma once

#include <cmath>
#include <vector>

#include "wittenflow/core.hpp"
#include "wittenflow/mesh.hpp"
#include "wittenflow/surface.hpp"

namespace wittenflow {

// Simplicial cochain complex with diagonal Hodge stars: signed incidence
// matrices d0 (vertices -> edges) and d1 (edges -> triangles), lumped dual
// areas (star0), cotangent edge weights (star1) and inverse triangle areas
// (star2), plus per-cell representative values of the model function.
struct DecComplex {
  TriMesh mesh;
  SparseMat d0;  // E x V
  SparseMat d1;  // F x E
  VecX star0, star1, star2;
  VecX f_vert, f_edge, f_tri;
  bool barycentric_fallback = false;
  double min_cotan_weight = 0.0;

  const VecX& star(int k) const {
    if (k == 0) return star0;
    if (k == 1) return star1;
    if (k == 2) return star2;
    throw DomainError("star: degree out of range");
  }
  const VecX& f_cells(int k) const {
    if (k == 0) return f_vert;
    if (k == 1) return f_edge;
    if (k == 2) return f_tri;
    throw DomainError("f_cells: degree out of range");
  }
  int dim(int k) const {
    if (k == 0) return mesh.num_vertices();
    if (k == 1) return mesh.num_edges();
    if (k == 2) return mesh.num_triangles();
    throw DomainError("dim: degree out of range");
  }
};

inline DecComplex build_dec(const TriMesh& mesh, const MorseModel& model) {
  DecComplex dec;
  dec.mesh = mesh;
  const int nv = mesh.num_vertices(), ne = mesh.num_edges(), nf = mesh.num_triangles();

  {
    std::vector<Triplet> trips;
    trips.reserve(2 * ne);
    for (int e = 0; e < ne; ++e) {
      trips.emplace_back(e, mesh.edges[e][1], 1.0);
      trips.emplace_back(e, mesh.edges[e][0], -1.0);
    }
    dec.d0.resize(ne, nv);
    dec.d0.setFromTriplets(trips.begin(), trips.end());
  }
  {
    std::vector<Triplet> trips;
    trips.reserve(3 * nf);
    for (int t = 0; t < nf; ++t)
      for (int c = 0; c < 3; ++c)
        trips.emplace_back(t, mesh.tri_edge[t][c], double(mesh.tri_edge_sign[t][c]));
    dec.d1.resize(nf, ne);
    dec.d1.setFromTriplets(trips.begin(), trips.end());
  }

  dec.star0 = VecX::Zero(nv);
  dec.star2 = VecX::Zero(nf);
  for (int t = 0; t < nf; ++t) {
    double area = mesh.tri_area[t];
    if (area < 1e-14) throw MeshError("degenerate triangle in mesh");
    for (int c = 0; c < 3; ++c) dec.star0[mesh.triangles[t][c]] += area / 3.0;
    dec.star2[t] = 1.0 / area;
  }

  // Cotangent weights; if any weight is nonpositive the whole star1 falls
  // back to barycentric dual lengths (with a flag).
  dec.star1 = VecX::Zero(ne);
  for (int t = 0; t < nf; ++t) {
    const Vec3 p[3] = {mesh.tri_corner0[t], mesh.tri_corner1[t], mesh.tri_corner2[t]};
    for (int c = 0; c < 3; ++c) {
      // edge (c, c+1) is opposite corner c+2
      Vec3 u = p[c] - p[(c + 2) % 3];
      Vec3 v = p[(c + 1) % 3] - p[(c + 2) % 3];
      double cot = u.dot(v) / u.cross(v).norm();
      dec.star1[mesh.tri_edge[t][c]] += 0.5 * cot;
    }
  }
  dec.min_cotan_weight = dec.star1.minCoeff();
  if (dec.min_cotan_weight <= 1e-12) {
    dec.barycentric_fallback = true;
    dec.star1.setZero();
    for (int t = 0; t < nf; ++t) {
      const Vec3 p[3] = {mesh.tri_corner0[t], mesh.tri_corner1[t], mesh.tri_corner2[t]};
      Vec3 bary = (p[0] + p[1] + p[2]) / 3.0;
      for (int c = 0; c < 3; ++c) {
        Vec3 mid = 0.5 * (p[c] + p[(c + 1) % 3]);
        double len = (p[(c + 1) % 3] - p[c]).norm();
        dec.star1[mesh.tri_edge[t][c]] += (bary - mid).norm() / len;
      }
    }
  }

  dec.f_vert = VecX::Zero(nv);
  for (int v = 0; v < nv; ++v) dec.f_vert[v] = field_eval(model, mesh.vertices[v]).value;
  dec.f_edge = VecX::Zero(ne);
  for (int e = 0; e < ne; ++e)
    dec.f_edge[e] = 0.5 * (dec.f_vert[mesh.edges[e][0]] + dec.f_vert[mesh.edges[e][1]]);
  dec.f_tri = VecX::Zero(nf);
  for (int t = 0; t < nf; ++t)
    dec.f_tri[t] = (dec.f_vert[mesh.triangles[t][0]] + dec.f_vert[mesh.triangles[t][1]] +
                    dec.f_vert[mesh.triangles[t][2]]) /
                   3.0;
  return dec;
}

// Star-weighted inner product of k-cochains.
inline double star_dot(const DecComplex& dec, int k, const VecX& a, const VecX& b) {
  return a.dot(dec.star(k).cwiseProduct(b));
}

inline double star_norm(const DecComplex& dec, int k, const VecX& a) {
  return std::sqrt(std::max(0.0, star_dot(dec, k, a, a)));
}

// ---------------------------------------------------------------------------
// Whitney interpolation (used for cochain wedges)
// ---------------------------------------------------------------------------

// Per-triangle evaluation frame: orthonormal (t1, t2) in the triangle plane
// with t1 x t2 along the oriented normal, plus barycentric gradients.
struct TriangleFrame {
  Vec3 origin;
  Vec3 t1, t2;
  Eigen::Matrix<double, 3, 2> corners2d;      // columns? rows: corner positions in frame
  Eigen::Matrix<double, 3, 2> bary_grad;      // row i: gradient of barycentric phi_i
};

inline TriangleFrame triangle_frame(const TriMesh& mesh, int t) {
  TriangleFrame fr;
  Vec3 p0 = mesh.tri_corner0[t], p1 = mesh.tri_corner1[t], p2 = mesh.tri_corner2[t];
  fr.origin = p0;
  Vec3 n = (p1 - p0).cross(p2 - p0);
  fr.t1 = (p1 - p0).normalized();
  fr.t2 = n.cross(fr.t1).normalized();  // t1 x t2 points along +n
  Vec3 ps[3] = {p0, p1, p2};
  for (int i = 0; i < 3; ++i) {
    Vec3 d = ps[i] - p0;
    fr.corners2d(i, 0) = d.dot(fr.t1);
    fr.corners2d(i, 1) = d.dot(fr.t2);
  }
  // gradients of barycentric coordinates in the 2d frame
  Mat2 A;
  A.col(0) = (fr.corners2d.row(1) - fr.corners2d.row(0)).transpose();
  A.col(1) = (fr.corners2d.row(2) - fr.corners2d.row(0)).transpose();
  Mat2 Ainv = A.inverse();
  fr.bary_grad.row(1) = Ainv.row(0);
  fr.bary_grad.row(2) = Ainv.row(1);
  fr.bary_grad.row(0) = -(Ainv.row(0) + Ainv.row(1));
  return fr;
}

// Hat interpolation of a 0-cochain at barycentric coordinates.
inline double whitney0(const DecComplex& dec, const VecX& u, int t, const double* bary) {
  const auto& tri = dec.mesh.triangles[t];
  return bary[0] * u[tri[0]] + bary[1] * u[tri[1]] + bary[2] * u[tri[2]];
}

// Edge-element interpolation of a 1-cochain, returned in the frame (t1, t2):
//   W(u) = sum_edges u_e (phi_a d phi_b - phi_b d phi_a).
inline Vec2 whitney1(const DecComplex& dec, const TriangleFrame& fr, const VecX& u, int t,
                     const double* bary) {
  Vec2 w = Vec2::Zero();
  for (int c = 0; c < 3; ++c) {
    int a = c, b = (c + 1) % 3;
    double ue = u[dec.mesh.tri_edge[t][c]] * dec.mesh.tri_edge_sign[t][c];
    w += ue * (bary[a] * fr.bary_grad.row(b) - bary[b] * fr.bary_grad.row(a)).transpose();
  }
  return w;
}

// Constant-density interpolation of a 2-cochain.
inline double whitney2(const DecComplex& dec, const VecX& u, int t) {
  return u[t] * dec.star2[t];  // u / area
}

}  // namespace wittenflow
