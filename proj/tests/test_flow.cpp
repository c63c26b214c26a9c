#include <catch2/catch_amalgamated.hpp>

#include "test_helpers.hpp"

using namespace wittenflow;
using Catch::Approx;

TEST_CASE("critical points are flow equilibria", "[flow]") {
  const MorseModel& torus = wf_test::model_by_name("torus_cosine");
  const CriticalSet& crits = wf_test::crits_of("torus_cosine");
  for (const auto& cp : crits.points) {
    Vec3 moved = flow_map(torus, cp.position, 5.0, FlowDirection::Downhill);
    CHECK((moved - cp.position).norm() < 1e-8);
  }
}

TEST_CASE("sphere downhill flow matches the one-dimensional oracle", "[flow]") {
  // On f = z the flow is confined to meridians; in colatitude theta the
  // downhill equation is theta' = -sin(theta)... measured from the SOUTH
  // pole, with closed form tan(theta(t)/2) = tan(theta_0/2) e^{-t}.
  const MorseModel& sphere = wf_test::model_by_name("sphere_height");
  Vec3 x0(1, 0, 0);  // theta_0 = pi/2 from the south pole
  for (double t : {0.5, 1.0, 2.0, 5.0}) {
    Vec3 x = flow_map(sphere, x0, t, FlowDirection::Downhill);
    double theta = std::acos(-x.z());  // angle from the south pole
    double expected = 2.0 * std::atan(std::tan(kPi / 4.0) * std::exp(-t));
    CHECK(theta == Approx(expected).margin(1e-8));
    CHECK(std::abs(x.y()) < 1e-12);  // stays on the meridian
  }
  // the oracle puts the t = 5 point ~1.3e-2 from the pole; 1e-3 proximity
  // needs t ~ 7.6, so the frozen figure uses t = 8
  Vec3 x5 = flow_map(sphere, x0, 5.0, FlowDirection::Downhill);
  CHECK((x5 - Vec3(0, 0, -1)).norm() == Approx(2.0 * std::sin(std::atan(std::exp(-5.0)))).epsilon(1e-4));
  Vec3 x8 = flow_map(sphere, x0, 8.0, FlowDirection::Downhill);
  CHECK((x8 - Vec3(0, 0, -1)).norm() < 1e-3);
}

TEST_CASE("f is monotone along downhill trajectories", "[flow][property]") {
  const MorseModel& torus = wf_test::model_by_name("torus_cosine");
  auto rng = seeded_rng(5);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    Vec3 x(uni(rng), uni(rng), 0.0);
    double prev = field_eval(torus, x).value;
    for (int step = 0; step < 8; ++step) {
      x = flow_map(torus, x, 0.5, FlowDirection::Downhill);
      double cur = field_eval(torus, x).value;
      CHECK(cur <= prev + 1e-9);
      prev = cur;
    }
  }
}

TEST_CASE("omega limits on the torus", "[flow]") {
  const MorseModel& torus = wf_test::model_by_name("torus_cosine");
  const CriticalSet& crits = wf_test::crits_of("torus_cosine");
  // bulk point flows downhill to the minimum at (1/2, 1/2)
  int id = omega_limit(torus, crits, Vec3(0.3, 0.71, 0), FlowDirection::Downhill);
  CHECK(crits[id].index_r == 0);
  // a critical point is its own limit
  for (const auto& cp : crits.points)
    CHECK(omega_limit(torus, crits, cp.position, FlowDirection::Downhill) == cp.id);
  // a point seeded on a saddle's stable eigenvector limits at the saddle
  const CriticalPoint* sad = nullptr;
  for (const auto& cp : crits.points)
    if (cp.index_r == 1) sad = &cp;
  REQUIRE(sad);
  LyapunovFrame fr = lyapunov_frame(torus, sad->position);
  // downhill stable direction = uphill unstable eigenvector direction
  Vec3 seed = sad->position + 1e-8 * fr.tangent[1];
  CHECK(omega_limit(torus, crits, seed, FlowDirection::Downhill) == sad->id);
}

TEST_CASE("basin masks on the torus form a full single basin", "[flow]") {
  const MorseModel& torus = wf_test::model_by_name("torus_cosine");
  const CriticalSet& crits = wf_test::crits_of("torus_cosine");
  const TriMesh& mesh = wf_test::mesh_of("torus_cosine", 8);
  BasinMasks basins = basin_masks(torus, mesh, crits);
  REQUIRE(basins.minima_ids.size() == 1);
  CHECK(basins.unresolved_fraction < 1e-3);
  for (int t = 0; t < mesh.num_triangles(); ++t) CHECK(basins.masks[0][t] >= 5.0 / 6.0);
}

TEST_CASE("sphere height basin is everything", "[flow]") {
  const MorseModel& sphere = wf_test::model_by_name("sphere_height");
  const CriticalSet& crits = wf_test::crits_of("sphere_height");
  const TriMesh& mesh = wf_test::mesh_of("sphere_height", 1);
  BasinMasks basins = basin_masks(sphere, mesh, crits);
  REQUIRE(basins.minima_ids.size() == 1);
  for (int t = 0; t < mesh.num_triangles(); ++t) CHECK(basins.masks[0][t] == Approx(1.0));
}

TEST_CASE("bumped sphere basins partition the area", "[flow][property]") {
  const MorseModel& model = wf_test::model_by_name("sphere_bumped");
  const CriticalSet& crits = wf_test::crits_of("sphere_bumped");
  const TriMesh& mesh = wf_test::mesh_of("sphere_bumped", 2);
  BasinMasks basins = basin_masks(model, mesh, crits);
  REQUIRE(basins.minima_ids.size() == 2);
  CHECK(basins.unresolved_fraction < 1e-3);
  double a0 = 0, a1 = 0, total = surface_area(mesh);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    a0 += basins.masks[0][t] * mesh.tri_area[t];
    a1 += basins.masks[1][t] * mesh.tri_area[t];
    CHECK(basins.masks[0][t] + basins.masks[1][t] <= 1.0 + 1e-12);
  }
  CHECK(a0 > 0.1 * total);
  CHECK(a1 > 0.1 * total);
  CHECK(a0 + a1 == Approx(total).epsilon(1e-3));
}

TEST_CASE("correlation at time zero and conservation", "[flow]") {
  const MorseModel& torus = wf_test::model_by_name("torus_cosine");
  const TriMesh& mesh = wf_test::mesh_of("torus_cosine", 8);
  auto psi1 = [](const Vec3& p) { return std::cos(kTwoPi * p.x()); };
  auto one = [](const Vec3&) { return 1.0; };

  CorrelationSeries series = correlation(torus, mesh, psi1, one, {0.0, 0.5, 1.0});
  double c0 = integrate_form(mesh, torus, [&](const Vec3& p) { return psi1(p) * one(p); });
  CHECK(series.values[0] == Approx(c0).margin(1e-12));
  CHECK(std::abs(series.values[0]) < 1e-10);  // symmetry kills it

  // psi1 == 1 is conserved exactly along the whole grid
  CorrelationSeries conserved = correlation(torus, mesh, one, one, {0.0, 1.0, 2.0, 4.0});
  for (double v : conserved.values) CHECK(v == Approx(1.0).margin(1e-10));
}

TEST_CASE("torus correlation approaches the predicted limit", "[flow]") {
  const MorseModel& torus = wf_test::model_by_name("torus_cosine");
  const CriticalSet& crits = wf_test::crits_of("torus_cosine");
  const TriMesh& mesh = wf_test::mesh_of("torus_cosine", 8);
  auto psi1 = [](const Vec3& p) { return std::cos(kTwoPi * p.x()); };
  auto one = [](const Vec3&) { return 1.0; };
  std::vector<double> t_grid;
  for (double t = 0.0; t <= 8.0 + 1e-12; t += 0.5) t_grid.push_back(t);
  CorrelationSeries series = correlation(torus, mesh, psi1, one, t_grid);
  BasinMasks basins = basin_masks(torus, mesh, crits);
  double limit = correlation_limit_prediction(torus, mesh, crits, basins, psi1, one);
  CHECK(limit == Approx(-1.0).margin(1e-9));  // psi1(min) * area
  CHECK(std::abs(series.values.back() - limit) < 1e-3);
}

TEST_CASE("limit prediction with psi1 == 1 is the psi2 integral", "[flow]") {
  const MorseModel& model = wf_test::model_by_name("sphere_bumped");
  const CriticalSet& crits = wf_test::crits_of("sphere_bumped");
  const TriMesh& mesh = wf_test::mesh_of("sphere_bumped", 2);
  BasinMasks basins = basin_masks(model, mesh, crits);
  auto one = [](const Vec3&) { return 1.0; };
  auto psi2 = [](const Vec3& p) { return 1.0 + 0.2 * p.z(); };
  double pred = correlation_limit_prediction(model, mesh, crits, basins, one, psi2);
  double direct = integrate_form(mesh, model, psi2);
  // node-level masks partition up to the unresolved fraction
  CHECK(pred == Approx(direct).epsilon(1e-3));
}

TEST_CASE("decay rate fit on synthetic data", "[flow]") {
  CorrelationSeries series;
  for (double t = 0.0; t <= 10.0; t += 0.1) {
    series.t_grid.push_back(t);
    series.values.push_back(0.7 + 3.0 * std::exp(-2.0 * t));
  }
  DecayFit fit = decay_rate_fit(series, 0.7, 2.0);
  CHECK(fit.status == FitStatus::Fitted);
  CHECK(fit.rate == Approx(2.0).margin(1e-6));
  CHECK(fit.relative_gap_deviation < 1e-6);
}

TEST_CASE("decay rate fit flags flat and oscillatory series", "[flow]") {
  CorrelationSeries flat;
  for (double t = 0.0; t <= 5.0; t += 0.1) {
    flat.t_grid.push_back(t);
    flat.values.push_back(0.3);
  }
  CHECK(decay_rate_fit(flat, 0.3, 1.0).status == FitStatus::AlreadyConverged);

  CorrelationSeries osc;
  for (double t = 0.0; t <= 20.0; t += 0.1) {
    osc.t_grid.push_back(t);
    osc.values.push_back(1e-3 * std::abs(std::sin(3.0 * t)));
  }
  CHECK_THROWS_AS(decay_rate_fit(osc, 0.0, 1.0), FitWindowError);
}

TEST_CASE("torus decay rate matches the spectral gap", "[flow]") {
  // the rate-carrying pair: psi1 has a nonzero derivative at the minimum and
  // psi2 breaks the x -> 1-x symmetry, so the gap mode couples pointwise
  const MorseModel& torus = wf_test::model_by_name("torus_cosine");
  const CriticalSet& crits = wf_test::crits_of("torus_cosine");
  const TriMesh& mesh = wf_test::mesh_of("torus_cosine", 8);
  auto psi1 = [](const Vec3& p) { return std::sin(kTwoPi * p.x()); };
  auto one = [](const Vec3& p) { return 1.0 + 0.5 * std::sin(kTwoPi * p.x()); };
  std::vector<double> t_grid;
  for (double t = 0.0; t <= 8.0 + 1e-12; t += 0.1) t_grid.push_back(t);
  CorrelationSeries series = correlation(torus, mesh, psi1, one, t_grid);
  BasinMasks basins = basin_masks(torus, mesh, crits);
  double limit = correlation_limit_prediction(torus, mesh, crits, basins, psi1, one);
  double gap = spectral_gap(crits, 0);
  DecayFit fit = decay_rate_fit(series, limit, gap);
  CHECK(fit.status == FitStatus::Fitted);
  CHECK(fit.relative_gap_deviation < 0.15);
}

TEST_CASE("separatrix tracing finds the expected limits", "[flow]") {
  const MorseModel& torus = wf_test::model_by_name("torus_cosine");
  const CriticalSet& crits = wf_test::crits_of("torus_cosine");
  for (const auto& cp : crits.points) {
    if (cp.index_r != 1) continue;
    for (int branch : {+1, -1}) {
      Separatrix up = trace_separatrix(torus, crits, cp.id, branch, true);
      CHECK(crits[up.limit_id].index_r == 2);  // unstable branches reach the max
      Separatrix down = trace_separatrix(torus, crits, cp.id, branch, false);
      CHECK(crits[down.limit_id].index_r == 0);
      // f is monotone along the polyline
      double prev = -1e300;
      for (const auto& p : up.points) {
        double f = field_eval(torus, p).value;
        CHECK(f >= prev - 1e-9);
        prev = f;
      }
    }
  }
}
