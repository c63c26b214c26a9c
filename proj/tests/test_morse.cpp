#include <catch2/catch_amalgamated.hpp>

#include "test_helpers.hpp"

using namespace wittenflow;
using Catch::Approx;

namespace {

MorseComplexData complex_of(const std::string& name, const OrientationData& orient) {
  return boundary_matrix(wf_test::model_by_name(name), wf_test::crits_of(name), orient);
}

}  // namespace

TEST_CASE("instanton counts on the torus", "[morse]") {
  const MorseModel& torus = wf_test::model_by_name("torus_cosine");
  const CriticalSet& crits = wf_test::crits_of("torus_cosine");
  int min_id = -1, max_id = -1;
  std::vector<int> saddles;
  for (const auto& cp : crits.points) {
    if (cp.index_r == 0) min_id = cp.id;
    if (cp.index_r == 1) saddles.push_back(cp.id);
    if (cp.index_r == 2) max_id = cp.id;
  }
  for (int s : saddles) {
    auto up = find_instantons(torus, crits, min_id, s);
    CHECK(up.size() == 2);
    auto down = find_instantons(torus, crits, s, max_id);
    CHECK(down.size() == 2);
    for (const auto& inst : up) {
      // polyline ascends from min to saddle
      CHECK((inst.polyline.front() - crits[min_id].position).norm() < 1e-4);
      CHECK((inst.polyline.back() - crits[s].position).norm() < 1e-4);
      double prev = -1e300;
      for (const auto& p : inst.polyline) {
        double f = field_eval(torus, p).value;
        CHECK(f >= prev - 1e-9);
        prev = f;
      }
    }
  }
  CHECK_THROWS_AS(find_instantons(torus, crits, min_id, max_id), DomainError);
}

TEST_CASE("sphere height has no adjacent-index pairs", "[morse]") {
  const CriticalSet& crits = wf_test::crits_of("sphere_height");
  OrientationData orient = OrientationData::canonical(crits);
  MorseComplexData data = complex_of("sphere_height", orient);
  CHECK(data.boundary[0].size() == 0);
  CHECK(data.boundary[1].size() == 0);
  CHECK(data.instantons.empty());
}

TEST_CASE("flipping one orientation flips the signs out of that point", "[morse][property]") {
  const MorseModel& model = wf_test::model_by_name("sphere_quadric");
  const CriticalSet& crits = wf_test::crits_of("sphere_quadric");
  OrientationData base = OrientationData::canonical(crits);
  for (const auto& cp : crits.points) {
    OrientationData flipped = base;
    flipped.sign[cp.id] = -1;
    MorseComplexData a = boundary_matrix(model, crits, base);
    MorseComplexData b = boundary_matrix(model, crits, flipped);
    for (int k = 0; k < 2; ++k) {
      const auto& rows = a.index_ids[k];
      const auto& cols = a.index_ids[k + 1];
      for (size_t i = 0; i < rows.size(); ++i) {
        for (size_t j = 0; j < cols.size(); ++j) {
          int factor = (rows[i] == cp.id || cols[j] == cp.id) ? -1 : 1;
          CHECK(b.boundary[k](i, j) == factor * a.boundary[k](i, j));
        }
      }
    }
  }
}

TEST_CASE("torus boundary vanishes by sign cancellation", "[morse]") {
  const CriticalSet& crits = wf_test::crits_of("torus_cosine");
  MorseComplexData data = complex_of("torus_cosine", OrientationData::canonical(crits));
  CHECK(data.boundary[0].isZero());
  CHECK(data.boundary[1].isZero());
  // each min -> saddle pair carries two opposite-sign instantons
  for (const auto& inst : data.instantons) CHECK(std::abs(inst.sign) == 1);
  auto ver = verify_complex(data);
  CHECK(ver.d2_zero);
  CHECK(ver.betti == std::vector<int>{1, 2, 1});
  CHECK(ver.torsion.empty());
}

TEST_CASE("bumped sphere boundary is the forced +-1 pattern", "[morse]") {
  const CriticalSet& crits = wf_test::crits_of("sphere_bumped");
  MorseComplexData data = complex_of("sphere_bumped", OrientationData::canonical(crits));
  REQUIRE(data.boundary[0].rows() == 2);
  REQUIRE(data.boundary[0].cols() == 1);
  CHECK(std::abs(data.boundary[0](0, 0)) == 1);
  CHECK(std::abs(data.boundary[0](1, 0)) == 1);
  CHECK(data.boundary[0](0, 0) == -data.boundary[0](1, 0));
  CHECK(data.boundary[1].isZero());
  auto ver = verify_complex(data);
  CHECK(ver.d2_zero);
  CHECK(ver.betti == std::vector<int>{1, 0, 1});
}

TEST_CASE("quadric sphere complex has both maps nonzero and d^2 = 0", "[morse]") {
  const CriticalSet& crits = wf_test::crits_of("sphere_quadric");
  MorseComplexData data = complex_of("sphere_quadric", OrientationData::canonical(crits));
  CHECK_FALSE(data.boundary[0].isZero());
  CHECK_FALSE(data.boundary[1].isZero());
  auto ver = verify_complex(data);
  CHECK(ver.d2_zero);
  CHECK(ver.betti == std::vector<int>{1, 0, 1});
  CHECK(ver.torsion.empty());
}

TEST_CASE("homology is invariant under random orientation redraws", "[morse][property]") {
  for (const char* name : {"torus_cosine", "sphere_bumped", "sphere_quadric"}) {
    const CriticalSet& crits = wf_test::crits_of(name);
    std::vector<int> betti_ref = verify_complex(complex_of(name, OrientationData::canonical(crits))).betti;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      MorseComplexData data = complex_of(name, OrientationData::random_redraw(crits, seed));
      auto ver = verify_complex(data);
      CHECK(ver.d2_zero);
      CHECK(ver.betti == betti_ref);
      CHECK(ver.torsion.empty());
    }
  }
}

TEST_CASE("smith normal form on known matrices", "[morse]") {
  IntMat m(2, 2);
  m << 2, 4, 6, 8;  // SNF diag (2, 4): det = -8, gcd 2
  auto d = smith_normal_form(m);
  REQUIRE(d.size() == 2);
  CHECK(d[0] == 2);
  CHECK(d[1] == 4);
  CHECK(d[1] % d[0] == 0);

  IntMat klein(1, 2);  // presentation-style row [2 0]
  klein << 2, 0;
  auto dk = smith_normal_form(klein);
  REQUIRE(dk.size() == 1);
  CHECK(dk[0] == 2);

  IntMat zero = IntMat::Zero(2, 3);
  CHECK(smith_normal_form(zero).empty());
}

TEST_CASE("instanton counts are stable under trace refinement", "[morse][property]") {
  const MorseModel& model = wf_test::model_by_name("sphere_bumped");
  const CriticalSet& crits = wf_test::crits_of("sphere_bumped");
  OrientationData orient = OrientationData::canonical(crits);
  TraceOptions coarse, fine;
  fine.ds_max = 0.5 * coarse.ds_max;
  fine.limit.ode.tol = 1e-11;
  MorseComplexData a = boundary_matrix(model, crits, orient, coarse);
  MorseComplexData b = boundary_matrix(model, crits, orient, fine);
  CHECK(a.boundary[0] == b.boundary[0]);
  CHECK(a.boundary[1] == b.boundary[1]);
  CHECK(a.instantons.size() == b.instantons.size());
}

TEST_CASE("unstable cochains: basin indicator and triangle mass", "[morse]") {
  const MorseModel& sphere = wf_test::model_by_name("sphere_height");
  const CriticalSet& crits = wf_test::crits_of("sphere_height");
  const TriMesh& mesh = wf_test::mesh_of("sphere_height", 2);
  OrientationData orient = OrientationData::canonical(crits);
  UnstableCochain u_min = discrete_unstable_cochain(sphere, mesh, crits, orient, 0);
  CHECK(u_min.degree == 0);
  // the open basin is everything except the maximum itself, which sits on a
  // mesh vertex of the icosphere
  int zeros = 0;
  for (int v = 0; v < mesh.num_vertices(); ++v)
    if (u_min.values[v] == 0.0) ++zeros;
  CHECK(zeros == 1);
  CHECK(u_min.values[detail::nearest_vertex(mesh, crits[1].position)] == 0.0);
  CHECK(u_min.values.sum() == Approx(double(mesh.num_vertices() - 1)));
  UnstableCochain u_max = discrete_unstable_cochain(sphere, mesh, crits, orient, 1);
  CHECK(u_max.degree == 2);
  CHECK(u_max.values.sum() == Approx(1.0));
  CHECK(u_max.values.cwiseAbs().sum() == Approx(1.0));
}

TEST_CASE("saddle walk winds the torus cycle", "[morse]") {
  // each saddle's unstable curve runs along one of the two fundamental
  // cycles; the generic mesh offset keeps it off the vertex rows
  const MorseModel& model = wf_test::model_by_name("torus_cosine");
  const CriticalSet& crits = wf_test::crits_of("torus_cosine");
  const TriMesh& mesh = wf_test::mesh_of("torus_cosine", 8);
  OrientationData orient = OrientationData::canonical(crits);
  for (const auto& cp : crits.points) {
    if (cp.index_r != 1) continue;
    UnstableCochain u = discrete_unstable_cochain(model, mesh, crits, orient, cp.id);
    // closed loop: chain boundary (signed endpoints) vanishes
    VecX boundary = wf_test::dec_of("torus_cosine", 8).d0.transpose() * u.walk.cochain;
    CHECK(boundary.cwiseAbs().maxCoeff() == Approx(0.0).margin(1e-12));
    // and the walk winds one of the two fundamental cycles: total signed
    // displacement along the walk is a unit lattice vector
    Vec3 total = Vec3::Zero();
    for (int e = 0; e < mesh.num_edges(); ++e) {
      if (u.walk.cochain[e] == 0.0) continue;
      total += u.walk.cochain[e] *
               mesh.displacement(mesh.vertices[mesh.edges[e][0]], mesh.vertices[mesh.edges[e][1]]);
    }
    CHECK(std::abs(std::abs(total.x()) + std::abs(total.y()) - 1.0) < 1e-9);
  }
}

TEST_CASE("discrete instanton identity for saddle-to-max rows", "[morse]") {
  // d(u_saddle) as a chain boundary equals the signed endpoint difference,
  // which matches n_ab against the maxima cochains: delta_end - delta_start
  // = sum_b (n_ab o_b) delta_b.
  const MorseModel& model = wf_test::model_by_name("sphere_quadric");
  const CriticalSet& crits = wf_test::crits_of("sphere_quadric");
  const TriMesh& mesh = wf_test::mesh_of("sphere_quadric", 2);
  OrientationData orient = OrientationData::canonical(crits);
  MorseComplexData data = boundary_matrix(model, crits, orient);
  const DecComplex& dec = wf_test::dec_of("sphere_quadric", 2);
  for (const auto& cp : crits.points) {
    if (cp.index_r != 1) continue;
    UnstableCochain u = discrete_unstable_cochain(model, mesh, crits, orient, cp.id);
    VecX boundary = dec.d0.transpose() * u.walk.cochain;  // signed endpoint indicator
    int row = -1;
    for (size_t i = 0; i < data.index_ids[1].size(); ++i)
      if (data.index_ids[1][i] == cp.id) row = static_cast<int>(i);
    for (size_t j = 0; j < data.index_ids[2].size(); ++j) {
      const CriticalPoint& b = crits[data.index_ids[2][j]];
      int vb = detail::nearest_vertex(mesh, b.position);
      int expected = data.boundary[1](row, j) * orient.sign[b.id];
      CHECK(static_cast<int>(std::lround(boundary[vb])) == expected);
    }
    // nothing else in the boundary
    CHECK(boundary.cwiseAbs().sum() ==
          Approx(std::abs(data.boundary[1].row(row).cwiseAbs().sum())).margin(1e-12));
  }
}

TEST_CASE("weak instanton identity for min-to-saddle rows", "[morse][property]") {
  // d0(u_min) and sum_b n_ab u_b represent the same current; their pairings
  // with a fixed smooth 1-form cochain converge together under refinement.
  const MorseModel& model = wf_test::model_by_name("sphere_bumped");
  const CriticalSet& crits = wf_test::crits_of("sphere_bumped");
  OrientationData orient = OrientationData::canonical(crits);
  MorseComplexData data = boundary_matrix(model, crits, orient);

  auto form_cochain = [&](const TriMesh& mesh) {
    // edge integrals of a fixed smooth 1-form (gradient of a test function
    // plus a rotational part)
    VecX w(mesh.num_edges());
    for (int e = 0; e < mesh.num_edges(); ++e) {
      Vec3 a = mesh.vertices[mesh.edges[e][0]];
      Vec3 d = mesh.displacement(a, mesh.vertices[mesh.edges[e][1]]);
      Vec3 mid = (a + 0.5 * d).normalized();
      Vec3 field = Vec3(mid.y() * mid.z(), mid.x(), -mid.y());
      field -= field.dot(mid) * mid;
      w[e] = field.dot(d);
    }
    return w;
  };

  double prev_err = -1.0;
  for (int level : {2, 3}) {
    const TriMesh& mesh = wf_test::mesh_of("sphere_bumped", level);
    const DecComplex& dec = wf_test::dec_of("sphere_bumped", level);
    VecX w = form_cochain(mesh);
    int min_id = data.index_ids[0][0];
    UnstableCochain u_min = discrete_unstable_cochain(model, mesh, crits, orient, min_id);
    VecX lhs = dec.d0 * u_min.values;
    VecX rhs = VecX::Zero(mesh.num_edges());
    for (size_t j = 0; j < data.index_ids[1].size(); ++j) {
      UnstableCochain u_b =
          discrete_unstable_cochain(model, mesh, crits, orient, data.index_ids[1][j]);
      rhs += double(data.boundary[0](0, j)) * u_b.values;
    }
    double err = std::abs(lhs.dot(dec.star1.cwiseProduct(w)) - rhs.dot(dec.star1.cwiseProduct(w)));
    if (prev_err >= 0) CHECK(err < 0.75 * prev_err + 1e-12);
    prev_err = err;
  }
}

TEST_CASE("duality pairing is normalized", "[morse]") {
  for (const char* name : {"sphere_bumped", "torus_cosine"}) {
    const MorseModel& model = wf_test::model_by_name(name);
    const CriticalSet& crits = wf_test::crits_of(name);
    const TriMesh& mesh = wf_test::mesh_of(name, name[0] == 's' ? 2 : 8);
    OrientationData orient = OrientationData::canonical(crits);
    for (const auto& cp : crits.points) {
      UnstableCochain u = discrete_unstable_cochain(model, mesh, crits, orient, cp.id);
      UnstableCochain s = discrete_stable_cochain(model, mesh, crits, orient, cp.id);
      CHECK(cochain_pairing(model, mesh, crits, orient, u, s) == Approx(1.0).margin(1e-9));
    }
  }
}
