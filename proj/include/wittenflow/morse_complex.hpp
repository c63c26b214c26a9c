#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "wittenflow/core.hpp"
#include "wittenflow/critical.hpp"
#include "wittenflow/dec.hpp"
#include "wittenflow/flow.hpp"

namespace wittenflow {

// Orientation choices for the unstable manifolds, one sign per critical
// point: minima/maxima carry a 0- or 2-dimensional orientation sign, saddles
// flip the canonical unstable eigenvector. All instanton signs are bilinear
// in these choices; homology does not depend on them.
struct OrientationData {
  std::vector<int> sign;  // indexed by critical id, each +-1

  static OrientationData canonical(const CriticalSet& crits) {
    OrientationData o;
    o.sign.assign(crits.points.size(), +1);
    return o;
  }

  static OrientationData random_redraw(const CriticalSet& crits, std::uint64_t seed) {
    OrientationData o;
    auto rng = seeded_rng(seed);
    o.sign.resize(crits.points.size());
    for (auto& s : o.sign) s = (rng() & 1u) ? +1 : -1;
    return o;
  }
};

// Signed determinant of two tangent vectors in the oriented tangent plane.
inline double oriented_det(const MorseModel& model, const Vec3& p, const Vec3& v1, const Vec3& v2) {
  Vec3 n = model.is_sphere() ? p : Vec3(0, 0, 1);
  return v1.cross(v2).dot(n);
}

// A gradient flow line between critical points of adjacent index, stored
// with f ascending along the polyline.
struct Instanton {
  int from_id = -1;  // lower index
  int to_id = -1;    // index + 1
  int branch = 0;    // seed sign of the traced eigenvector branch
  std::vector<Vec3> polyline;
  int sign = 0;      // sigma(gamma), filled by orientation_sign
};

// Flow lines from a to b with index(b) = index(a) + 1. On a surface these
// are branches of the saddle's separatrices: stable branches traced downhill
// from the saddle for (0 -> 1) pairs, unstable branches traced uphill for
// (1 -> 2) pairs.
inline std::vector<Instanton> find_instantons(const MorseModel& model, const CriticalSet& crits,
                                              int a_id, int b_id, TraceOptions opts = {}) {
  const CriticalPoint& a = crits[a_id];
  const CriticalPoint& b = crits[b_id];
  if (b.index_r != a.index_r + 1)
    throw DomainError("find_instantons: indices are not adjacent");
  std::vector<Instanton> out;
  if (a.index_r == 0) {
    for (int branch : {+1, -1}) {
      Separatrix sep = trace_separatrix(model, crits, b_id, branch, /*unstable=*/false, opts);
      if (sep.limit_id != a_id) continue;
      Instanton inst;
      inst.from_id = a_id;
      inst.to_id = b_id;
      inst.branch = branch;
      inst.polyline.assign(sep.points.rbegin(), sep.points.rend());
      out.push_back(std::move(inst));
    }
  } else if (a.index_r == 1) {
    for (int branch : {+1, -1}) {
      Separatrix sep = trace_separatrix(model, crits, a_id, branch, /*unstable=*/true, opts);
      if (sep.limit_id != b_id) continue;
      Instanton inst;
      inst.from_id = a_id;
      inst.to_id = b_id;
      inst.branch = branch;
      inst.polyline = sep.points;
      out.push_back(std::move(inst));
    }
  } else {
    throw DomainError("find_instantons: no adjacent-index pairs above index 1 on a surface");
  }
  return out;
}

// Orientation coefficient sigma(gamma_ab), defined by comparing the flow
// orientation of gamma against [W^u(a)] wedge [W^s(b)] in the coordinate
// model of transverse intersections. The saddle's stable orientation is the
// coorientation induced by its unstable choice and the surface orientation,
// so both cases reduce to sign products of eigenframe data at the saddle.
inline int orientation_sign(const MorseModel& model, const CriticalSet& crits,
                            const OrientationData& orient, const Instanton& inst) {
  const CriticalPoint& a = crits[inst.from_id];
  const CriticalPoint& b = crits[inst.to_id];
  if (a.index_r == 0) {
    // gamma is the stable branch of saddle b leaving along e = branch * c_s;
    // sigma = o_a * (+1 iff the stable coorientation points back toward b).
    LyapunovFrame fr = lyapunov_frame(model, b.position);
    const Vec3& c_s = fr.tangent[0];
    const Vec3& c_u = fr.tangent[1];
    double det = oriented_det(model, b.position, c_u, c_s);
    if (std::abs(det) < 1e-10) throw TransversalityError("orientation_sign: degenerate frame");
    int o_b_dir = orient.sign[b.id] * (det > 0 ? 1 : -1);  // tau_s = o_b_dir * c_s
    return -orient.sign[a.id] * inst.branch * o_b_dir;
  }
  // (1 -> 2): gamma is the unstable branch of saddle a leaving along
  // e = branch * c_u; sigma = o_b * sign(e . u_a) = o_b * branch * o_a.
  return orient.sign[b.id] * inst.branch * orient.sign[a.id];
}

// Integer boundary data of the Morse-Thom-Smale-Witten complex:
// boundary[k](i, j) = n_ab for the i-th index-k point a and the j-th
// index-(k+1) point b, where n_ab = (-1)^n sum_gamma sigma(gamma) and
// (-1)^n = +1 on surfaces.
struct MorseComplexData {
  std::vector<int> orientations;                    // copy of the choices used
  std::vector<std::vector<int>> index_ids;          // ids grouped by Morse index
  std::array<Eigen::MatrixXi, 2> boundary;          // degrees 0->1 and 1->2
  std::vector<Instanton> instantons;
  int instanton_sign_factor = 1;                    // the (-1)^n factor, n = 2
};

inline MorseComplexData boundary_matrix(const MorseModel& model, const CriticalSet& crits,
                                        const OrientationData& orient, TraceOptions opts = {}) {
  MorseComplexData data;
  data.orientations = orient.sign;
  data.index_ids.assign(3, {});
  for (const auto& cp : crits.points) data.index_ids[cp.index_r].push_back(cp.id);

  for (int k = 0; k < 2; ++k) {
    const auto& rows = data.index_ids[k];
    const auto& cols = data.index_ids[k + 1];
    data.boundary[k] = Eigen::MatrixXi::Zero(rows.size(), cols.size());
    for (size_t i = 0; i < rows.size(); ++i) {
      for (size_t j = 0; j < cols.size(); ++j) {
        auto insts = find_instantons(model, crits, rows[i], cols[j], opts);
        int n_ab = 0;
        for (auto& inst : insts) {
          inst.sign = orientation_sign(model, crits, orient, inst);
          n_ab += inst.sign;
          data.instantons.push_back(inst);
        }
        data.boundary[k](i, j) = data.instanton_sign_factor * n_ab;
      }
    }
  }
  return data;
}

// ---------------------------------------------------------------------------
// Integer homology via Smith normal form
// ---------------------------------------------------------------------------

using IntMat = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

// Smith normal form diagonal of an integer matrix (nonnegative, with the
// divisibility chain). Exact integer arithmetic throughout.
inline std::vector<std::int64_t> smith_normal_form(IntMat m) {
  std::vector<std::int64_t> diag;
  int r0 = 0, c0 = 0;
  while (r0 < m.rows() && c0 < m.cols()) {
    // locate smallest nonzero pivot
    int pr = -1, pc = -1;
    std::int64_t best = 0;
    for (int i = r0; i < m.rows(); ++i)
      for (int j = c0; j < m.cols(); ++j)
        if (m(i, j) != 0 && (pr < 0 || std::abs(m(i, j)) < best)) {
          best = std::abs(m(i, j));
          pr = i;
          pc = j;
        }
    if (pr < 0) break;
    m.row(r0).swap(m.row(pr));
    m.col(c0).swap(m.col(pc));

    bool clean = false;
    while (!clean) {
      clean = true;
      for (int i = r0 + 1; i < m.rows(); ++i) {
        if (m(i, c0) == 0) continue;
        std::int64_t q = m(i, c0) / m(r0, c0);
        m.row(i) -= q * m.row(r0);
        if (m(i, c0) != 0) {  // remainder became the smaller pivot
          m.row(r0).swap(m.row(i));
          clean = false;
        }
      }
      for (int j = c0 + 1; j < m.cols(); ++j) {
        if (m(r0, j) == 0) continue;
        std::int64_t q = m(r0, j) / m(r0, c0);
        m.col(j) -= q * m.col(c0);
        if (m(r0, j) != 0) {
          m.col(c0).swap(m.col(j));
          clean = false;
        }
      }
      if (clean) {
        // enforce divisibility of the remaining block
        for (int i = r0 + 1; i < m.rows() && clean; ++i)
          for (int j = c0 + 1; j < m.cols() && clean; ++j)
            if (m(i, j) % m(r0, c0) != 0) {
              m.row(r0) += m.row(i);
              clean = false;
            }
      }
    }
    diag.push_back(std::abs(m(r0, c0)));
    ++r0;
    ++c0;
  }
  return diag;
}

struct ComplexVerification {
  bool d2_zero = false;
  std::vector<int> betti;                    // b_0, b_1, b_2
  std::vector<std::int64_t> torsion;         // nontrivial torsion coefficients
};

// Checks d(k+1) d(k) = 0 in exact integer arithmetic and reports integral
// homology. The differential on degree-k generators is the transpose of
// boundary[k] (rows index the lower degree).
inline ComplexVerification verify_complex(const MorseComplexData& data) {
  ComplexVerification out;
  const auto& n01 = data.boundary[0];  // c0 x c1
  const auto& n12 = data.boundary[1];  // c1 x c2
  IntMat d0 = n01.transpose().cast<std::int64_t>();  // c1 x c0
  IntMat d1 = n12.transpose().cast<std::int64_t>();  // c2 x c1
  IntMat comp = d1 * d0;
  out.d2_zero = comp.isZero(0);

  auto rank_of = [](const IntMat& m) {
    auto diag = smith_normal_form(m);
    int r = 0;
    for (auto d : diag)
      if (d != 0) ++r;
    return r;
  };
  int c0 = static_cast<int>(n01.rows());
  int c1 = static_cast<int>(n01.cols());
  int c2 = static_cast<int>(n12.cols());
  int r0 = rank_of(d0), r1 = rank_of(d1);
  out.betti = {c0 - r0, c1 - r0 - r1, c2 - r1};

  for (const IntMat& m : {d0, d1})
    for (auto d : smith_normal_form(m))
      if (d > 1) out.torsion.push_back(d);
  return out;
}

// ---------------------------------------------------------------------------
// Discrete unstable/stable cochain representatives
// ---------------------------------------------------------------------------

// Signed edge walk following a polyline: advances the current vertex to a
// neighboring vertex whenever that neighbor is closer to the moving sample.
// Fails (refine the mesh) if the walk strays outside a 2h tube.
struct EdgeWalk {
  VecX cochain;       // +-1 per traversed edge
  int start_vertex = -1;
  int end_vertex = -1;
};

namespace detail {

inline std::vector<std::vector<int>> vertex_adjacency(const TriMesh& mesh) {
  std::vector<std::vector<int>> adj(mesh.num_vertices());
  for (int e = 0; e < mesh.num_edges(); ++e) {
    adj[mesh.edges[e][0]].push_back(e);
    adj[mesh.edges[e][1]].push_back(e);
  }
  return adj;
}

inline int nearest_vertex(const TriMesh& mesh, const Vec3& p) {
  int best = 0;
  double bd = 1e300;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    double d = mesh.distance(mesh.vertices[v], p);
    if (d < bd) {
      bd = d;
      best = v;
    }
  }
  return best;
}

}  // namespace detail

struct RefineMeshError : MeshError {
  explicit RefineMeshError(const std::string& m) : MeshError(m) {}
};

inline EdgeWalk snap_polyline_to_edges(const TriMesh& mesh, const std::vector<Vec3>& polyline) {
  EdgeWalk walk;
  walk.cochain = VecX::Zero(mesh.num_edges());
  auto adj = detail::vertex_adjacency(mesh);
  int v = detail::nearest_vertex(mesh, polyline.front());
  walk.start_vertex = v;
  const double tube = 2.0 * mesh.mesh_size_h;
  for (const Vec3& sample : polyline) {
    if (mesh.distance(mesh.vertices[v], sample) > tube)
      throw RefineMeshError("edge-path snap left its tube; refine the mesh");
    bool moved = true;
    while (moved) {
      moved = false;
      double dcur = mesh.distance(mesh.vertices[v], sample);
      int best_edge = -1, best_w = -1;
      double best_d = dcur - 1e-12;
      for (int e : adj[v]) {
        int w = mesh.edges[e][0] == v ? mesh.edges[e][1] : mesh.edges[e][0];
        double d = mesh.distance(mesh.vertices[w], sample);
        if (d < best_d) {
          best_d = d;
          best_edge = e;
          best_w = w;
        }
      }
      if (best_edge >= 0) {
        walk.cochain[best_edge] += (mesh.edges[best_edge][1] == best_w) ? 1.0 : -1.0;
        v = best_w;
        moved = true;
      }
    }
  }
  walk.end_vertex = v;
  return walk;
}

// Signed crossing cochain of an oriented curve: the de Rham representative
// of the curve current delta(x_s) dx_s, with +-1 on every mesh edge the
// curve crosses. An edge crossing with direction d at curve tangent tau
// contributes sign(det(d, tau)); paired through the diagonal Hodge star this
// reproduces the L2 pairing with the current (the weighted edge integrals
// telescope into the dual path integral of the rotated form).
inline VecX crossing_cochain(const TriMesh& mesh, const MorseModel& model,
                             const std::vector<Vec3>& curve) {
  VecX u = VecX::Zero(mesh.num_edges());
  for (int e = 0; e < mesh.num_edges(); ++e) {
    Vec3 p0 = mesh.vertices[mesh.edges[e][0]];
    Vec3 d = mesh.displacement(p0, mesh.vertices[mesh.edges[e][1]]);
    double elen = d.norm();
    for (size_t i = 0; i + 1 < curve.size(); ++i) {
      Vec3 c0 = curve[i];
      Vec3 dc = mesh.displacement(c0, curve[i + 1]);
      Vec3 gap = mesh.displacement(p0, c0);
      if (gap.norm() > elen + dc.norm() + 1e-12) continue;
      double s, t;
      bool hit;
      Vec3 x, tan_e, tan_c;
      if (model.is_torus()) {
        Vec3 c0u = p0 + gap;
        hit = [&] {
          Vec2 a0(p0.x(), p0.y()), a1(p0.x() + d.x(), p0.y() + d.y());
          Vec2 b0(c0u.x(), c0u.y()), b1(c0u.x() + dc.x(), c0u.y() + dc.y());
          Vec2 d1 = a1 - a0, d2 = b1 - b0, r = b0 - a0;
          double denom = d1.x() * d2.y() - d1.y() * d2.x();
          if (std::abs(denom) < 1e-14) return false;
          s = (r.x() * d2.y() - r.y() * d2.x()) / denom;
          t = (r.x() * d1.y() - r.y() * d1.x()) / denom;
          return s >= 0.0 && s < 1.0 && t >= 0.0 && t < 1.0;
        }();
        if (!hit) continue;
        x = model.canonical_point(p0 + s * d);
        tan_e = d;
        tan_c = dc;
      } else {
        Vec3 c = (p0 + 0.5 * d + c0 + 0.5 * dc).normalized();
        Vec3 t1, t2;
        model.tangent_basis(c, t1, t2);
        Vec2 a0((p0 - c).dot(t1), (p0 - c).dot(t2));
        Vec2 a1((p0 + d - c).dot(t1), (p0 + d - c).dot(t2));
        Vec2 b0((c0 - c).dot(t1), (c0 - c).dot(t2));
        Vec2 b1((c0 + dc - c).dot(t1), (c0 + dc - c).dot(t2));
        Vec2 d1 = a1 - a0, d2 = b1 - b0, r = b0 - a0;
        double denom = d1.x() * d2.y() - d1.y() * d2.x();
        if (std::abs(denom) < 1e-14) continue;
        s = (r.x() * d2.y() - r.y() * d2.x()) / denom;
        t = (r.x() * d1.y() - r.y() * d1.x()) / denom;
        if (!(s >= 0.0 && s < 1.0 && t >= 0.0 && t < 1.0)) continue;
        x = (p0 + s * d).normalized();
        tan_e = d;
        tan_c = dc;
      }
      double det = oriented_det(model, x, tan_e, tan_c);
      if (det > 0) u[e] += 1.0;
      else if (det < 0) u[e] -= 1.0;
    }
  }
  return u;
}

// Discrete representative of the unstable current of critical point a:
//   index 0: vertex indicator of the basin (times the orientation sign);
//   index 1: the signed crossing cochain of the unstable separatrix (the
//            star-pairing representative), plus the snapped edge walk along
//            the curve (the chain representative used for boundary checks);
//   index 2: orientation sign on the containing triangle (unit total mass).
struct UnstableCochain {
  int crit_id = -1;
  int degree = 0;
  VecX values;
  EdgeWalk walk;  // populated for saddles
};

inline int locate_triangle(const TriMesh& mesh, const Vec3& p) {
  int best = -1;
  double bd = 1e300;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    Vec3 q = (mesh.tri_corner0[t] + mesh.tri_corner1[t] + mesh.tri_corner2[t]) / 3.0;
    double d = mesh.distance(q, p);
    if (d < bd) {
      bd = d;
      best = t;
    }
  }
  return best;
}

inline UnstableCochain discrete_unstable_cochain(const MorseModel& model, const TriMesh& mesh,
                                                 const CriticalSet& crits,
                                                 const OrientationData& orient, int a_id,
                                                 TraceOptions opts = {}) {
  const CriticalPoint& a = crits[a_id];
  UnstableCochain out;
  out.crit_id = a_id;
  out.degree = a.index_r;

  if (a.index_r == 0) {
    out.values = VecX::Zero(mesh.num_vertices());
    for (int v = 0; v < mesh.num_vertices(); ++v) {
      int id = omega_limit(model, crits, mesh.vertices[v], FlowDirection::Downhill, opts.limit);
      if (id == a_id) out.values[v] = orient.sign[a_id];
    }
    return out;
  }
  if (a.index_r == 1) {
    // Full unstable curve oriented along u_a: reverse of the (-) branch, then
    // the (+) branch, where (+-) refer to the oriented eigenvector.
    int dir = orient.sign[a_id];
    Separatrix plus = trace_separatrix(model, crits, a_id, dir, true, opts);
    Separatrix minus = trace_separatrix(model, crits, a_id, -dir, true, opts);
    std::vector<Vec3> curve(minus.points.rbegin(), minus.points.rend());
    curve.insert(curve.end(), plus.points.begin(), plus.points.end());
    out.values = crossing_cochain(mesh, model, curve);
    out.walk = snap_polyline_to_edges(mesh, curve);
    return out;
  }
  out.values = VecX::Zero(mesh.num_triangles());
  out.values[locate_triangle(mesh, a.position)] = orient.sign[a_id];
  return out;
}

// Stable counterpart s_a (the dual-basis representative): basin indicators
// and separatrix walks trade roles under f -> -f.
inline UnstableCochain discrete_stable_cochain(const MorseModel& model, const TriMesh& mesh,
                                               const CriticalSet& crits,
                                               const OrientationData& orient, int a_id,
                                               TraceOptions opts = {}) {
  const CriticalPoint& a = crits[a_id];
  UnstableCochain out;
  out.crit_id = a_id;
  out.degree = 2 - a.index_r;

  if (a.index_r == 2) {  // stable set of a maximum: its uphill basin
    out.values = VecX::Zero(mesh.num_vertices());
    for (int v = 0; v < mesh.num_vertices(); ++v) {
      int id = omega_limit(model, crits, mesh.vertices[v], FlowDirection::Uphill, opts.limit);
      if (id == a_id) out.values[v] = orient.sign[a_id];
    }
    return out;
  }
  if (a.index_r == 1) {
    // Stable curve oriented by the induced coorientation tau_s:
    // det(u_a, tau_s) > 0 in the oriented tangent plane.
    LyapunovFrame fr = lyapunov_frame(model, a.position);
    double det = oriented_det(model, a.position, fr.tangent[1], fr.tangent[0]);
    int dir = orient.sign[a_id] * (det > 0 ? 1 : -1);
    Separatrix plus = trace_separatrix(model, crits, a_id, dir, false, opts);
    Separatrix minus = trace_separatrix(model, crits, a_id, -dir, false, opts);
    std::vector<Vec3> curve(minus.points.rbegin(), minus.points.rend());
    curve.insert(curve.end(), plus.points.begin(), plus.points.end());
    out.values = crossing_cochain(mesh, model, curve);
    out.walk = snap_polyline_to_edges(mesh, curve);
    return out;
  }
  out.values = VecX::Zero(mesh.num_triangles());
  out.values[locate_triangle(mesh, a.position)] = orient.sign[a_id];
  return out;
}

// Normalized duality pairing <u_a, s_a>. Degrees (0,2) and (2,0) use the
// hat/constant wedge; the saddle case is the combinatorial intersection sign
// of the two oriented curves at the saddle, which the coorientation
// convention makes +1.
inline double cochain_pairing(const MorseModel& model, const TriMesh& mesh, const CriticalSet& crits,
                              const OrientationData& orient, const UnstableCochain& u,
                              const UnstableCochain& s) {
  if (u.degree == 0 && s.degree == 2) {
    double total = 0.0;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
      if (s.values[t] == 0.0) continue;
      const auto& tri = mesh.triangles[t];
      total += s.values[t] * (u.values[tri[0]] + u.values[tri[1]] + u.values[tri[2]]) / 3.0;
    }
    return total;
  }
  if (u.degree == 2 && s.degree == 0) {
    double total = 0.0;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
      if (u.values[t] == 0.0) continue;
      const auto& tri = mesh.triangles[t];
      total += u.values[t] * (s.values[tri[0]] + s.values[tri[1]] + s.values[tri[2]]) / 3.0;
    }
    return total;
  }
  if (u.degree == 1 && s.degree == 1) {
    const CriticalPoint& a = crits[u.crit_id];
    LyapunovFrame fr = lyapunov_frame(model, a.position);
    Vec3 u_dir = double(orient.sign[a.id]) * fr.tangent[1];
    double det_frames = oriented_det(model, a.position, fr.tangent[1], fr.tangent[0]);
    Vec3 tau_s = double(orient.sign[a.id]) * (det_frames > 0 ? 1.0 : -1.0) * fr.tangent[0];
    double det = oriented_det(model, a.position, u_dir, tau_s);
    if (std::abs(det) < 1e-10) throw TransversalityError("cochain_pairing: degenerate frame");
    return det > 0 ? 1.0 : -1.0;
  }
  throw DomainError("cochain_pairing: degree mismatch");
}

}  // namespace wittenflow
