#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wittenflow/core.hpp"
#include "wittenflow/critical.hpp"
#include "wittenflow/mesh.hpp"
#include "wittenflow/surface.hpp"

namespace wittenflow {

struct OdeOptions {
  double tol = 1e-10;        // local error tolerance (abs and rel)
  double dt_init = 1e-2;
  double dt_min = 1e-13;
  double dt_max = 1.0;
  double ds_max = 0.0;       // optional cap on geometric step length (0 = off)
};

namespace detail {

// Dormand-Prince 5(4) step on the surface; the state is re-projected after
// every accepted step (sphere: normalize; torus: wrap).
class GradientFlowIntegrator {
 public:
  GradientFlowIntegrator(const MorseModel& model, FlowDirection dir, OdeOptions opts = {})
      : model_(model), sign_(dir == FlowDirection::Uphill ? 1.0 : -1.0), opts_(opts) {}

  Vec3 velocity(const Vec3& p) const { return sign_ * intrinsic_gradient(model_, p); }

  // Advances (t, p) by up to t_target - t. Invokes `watch` after every
  // accepted step; if watch returns false, integration stops early.
  void advance(double& t, Vec3& p, double t_target,
               const std::function<bool(double, const Vec3&)>& watch = nullptr) {
    static const double c2 = 1. / 5, c3 = 3. / 10, c4 = 4. / 5, c5 = 8. / 9;
    static const double a21 = 1. / 5;
    static const double a31 = 3. / 40, a32 = 9. / 40;
    static const double a41 = 44. / 45, a42 = -56. / 15, a43 = 32. / 9;
    static const double a51 = 19372. / 6561, a52 = -25360. / 2187, a53 = 64448. / 6561,
                        a54 = -212. / 729;
    static const double a61 = 9017. / 3168, a62 = -355. / 33, a63 = 46732. / 5247,
                        a64 = 49. / 176, a65 = -5103. / 18656;
    static const double b1 = 35. / 384, b3 = 500. / 1113, b4 = 125. / 192, b5 = -2187. / 6784,
                        b6 = 11. / 84;
    static const double e1 = 71. / 57600, e3 = -71. / 16695, e4 = 71. / 1920,
                        e5 = -17253. / 339200, e6 = 22. / 525, e7 = -1. / 40;

    double dt = std::min(opts_.dt_init, opts_.dt_max);
    while (t < t_target) {
      dt = std::min(dt, t_target - t);
      if (opts_.ds_max > 0.0) {
        double speed = velocity(p).norm();
        if (speed > 0.0) dt = std::min(dt, opts_.ds_max / speed);
      }
      Vec3 k1 = velocity(p);
      Vec3 k2 = velocity(project(p + dt * a21 * k1));
      Vec3 k3 = velocity(project(p + dt * (a31 * k1 + a32 * k2)));
      Vec3 k4 = velocity(project(p + dt * (a41 * k1 + a42 * k2 + a43 * k3)));
      Vec3 k5 = velocity(project(p + dt * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)));
      Vec3 k6 = velocity(project(p + dt * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)));
      Vec3 incr = b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6;
      Vec3 pnew = project(p + dt * incr);
      Vec3 k7 = velocity(pnew);
      Vec3 errv = dt * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
      double err = errv.norm() / (opts_.tol * (1.0 + p.norm()));
      (void)c2; (void)c3; (void)c4; (void)c5;

      if (err <= 1.0) {
        t += dt;
        p = pnew;
        if (watch && !watch(t, p)) return;
        double grow = (err > 1e-30) ? 0.9 * std::pow(err, -0.2) : 5.0;
        dt = std::min(opts_.dt_max, dt * std::min(5.0, grow));
      } else {
        dt *= std::max(0.2, 0.9 * std::pow(err, -0.25));
        if (dt < opts_.dt_min)
          throw IntegrationError("gradient flow step size underflow");
      }
    }
  }

  Vec3 project(const Vec3& p) const {
    if (model_.is_sphere()) return p.normalized();
    return model_.canonical_point(p);
  }

 private:
  const MorseModel& model_;
  double sign_;
  OdeOptions opts_;
};

}  // namespace detail

// Flow a point for time t along +-grad f with adaptive RK45.
inline Vec3 flow_map(const MorseModel& model, const Vec3& x0, double t, FlowDirection dir,
                     OdeOptions opts = {}) {
  if (t < 0) throw DomainError("flow_map: negative time");
  Vec3 p = model.canonical_point(x0);
  detail::GradientFlowIntegrator integ(model, dir, opts);
  double tcur = 0.0;
  integ.advance(tcur, p, t);
  return p;
}

struct OmegaLimitOptions {
  double grad_tol = 1e-8;
  double dist_tol = 1e-4;
  double t_budget = 400.0;
  OdeOptions ode;
};

// Forward limit of the flow from x0: integrates until |grad f| < grad_tol
// and the state is within dist_tol of a known critical point. Exceeding the
// time budget raises IntegrationError ("unresolved limit").
inline int omega_limit(const MorseModel& model, const CriticalSet& crits, const Vec3& x0,
                       FlowDirection dir, OmegaLimitOptions opts = {}) {
  Vec3 p = model.canonical_point(x0);
  auto chart_dist = [&](const Vec3& a, const Vec3& b) {
    Vec3 d = b - a;
    if (model.is_torus()) {
      for (int i = 0; i < 2; ++i) {
        if (d[i] > 0.5) d[i] -= 1.0;
        if (d[i] <= -0.5) d[i] += 1.0;
      }
    }
    return d.norm();
  };

  auto locate = [&](const Vec3& q) -> int {
    if (intrinsic_gradient(model, q).norm() >= opts.grad_tol) return -1;
    for (const auto& cp : crits.points)
      if (chart_dist(q, cp.position) < opts.dist_tol) return cp.id;
    return -1;
  };

  int hit = locate(p);
  if (hit >= 0) return hit;

  detail::GradientFlowIntegrator integ(model, dir, opts.ode);
  double t = 0.0;
  int found = -1;
  while (t < opts.t_budget) {
    double chunk = std::min(opts.t_budget, t + 5.0);
    integ.advance(t, p, chunk, [&](double, const Vec3& q) {
      int id = locate(q);
      if (id >= 0) {
        found = id;
        return false;
      }
      return true;
    });
    if (found >= 0) return found;
  }
  throw IntegrationError("omega_limit: time budget exceeded (unresolved limit)");
}

// ---------------------------------------------------------------------------
// Separatrix tracing
// ---------------------------------------------------------------------------

struct Separatrix {
  int saddle_id = -1;
  int branch = +1;              // seed offset sign along the eigenvector
  bool unstable = true;         // unstable (uphill) or stable (downhill) curve
  std::vector<Vec3> points;     // from just outside the saddle to the limit point
  int limit_id = -1;
};

struct TraceOptions {
  double seed_offset = 1e-6;
  double ds_max = 5e-3;         // polyline resolution
  OmegaLimitOptions limit;
};

// Traces one branch of the stable/unstable curve of a saddle. The polyline
// starts at the saddle and ends at the limiting critical point (both
// endpoints appended exactly).
inline Separatrix trace_separatrix(const MorseModel& model, const CriticalSet& crits,
                                   int saddle_id, int branch_sign, bool unstable,
                                   TraceOptions opts = {}) {
  const CriticalPoint& sad = crits[saddle_id];
  LyapunovFrame fr = lyapunov_frame(model, sad.position);
  // chi sorted ascending: [0] stable (negative), [1] unstable (positive).
  const Vec3& dir_vec = unstable ? fr.tangent[1] : fr.tangent[0];
  Vec3 p = sad.position + opts.seed_offset * branch_sign * dir_vec;
  p = model.is_sphere() ? Vec3(p.normalized()) : model.canonical_point(p);

  Separatrix sep;
  sep.saddle_id = saddle_id;
  sep.branch = branch_sign;
  sep.unstable = unstable;
  sep.points.push_back(sad.position);
  sep.points.push_back(p);

  FlowDirection fdir = unstable ? FlowDirection::Uphill : FlowDirection::Downhill;
  OdeOptions ode = opts.limit.ode;
  ode.ds_max = opts.ds_max;
  detail::GradientFlowIntegrator integ(model, fdir, ode);

  auto chart_dist = [&](const Vec3& a, const Vec3& b) {
    Vec3 d = b - a;
    if (model.is_torus()) {
      for (int i = 0; i < 2; ++i) {
        if (d[i] > 0.5) d[i] -= 1.0;
        if (d[i] <= -0.5) d[i] += 1.0;
      }
    }
    return d.norm();
  };

  double t = 0.0;
  int found = -1;
  while (t < opts.limit.t_budget && found < 0) {
    double chunk = t + 5.0;
    integ.advance(t, p, chunk, [&](double, const Vec3& q) {
      sep.points.push_back(q);
      if (intrinsic_gradient(model, q).norm() < opts.limit.grad_tol) {
        for (const auto& cp : crits.points) {
          if (cp.id == saddle_id) continue;
          if (chart_dist(q, cp.position) < opts.limit.dist_tol) {
            found = cp.id;
            return false;
          }
        }
      }
      return true;
    });
  }
  if (found < 0) throw IntegrationError("separatrix trace did not resolve its limit");
  sep.limit_id = found;
  sep.points.push_back(crits[found].position);
  return sep;
}

// ---------------------------------------------------------------------------
// Smale transversality check
// ---------------------------------------------------------------------------

struct SmaleSuspect {
  int saddle_from = -1;
  int saddle_near = -1;
  double distance = 0.0;
  std::string note;
};

struct SmaleReport {
  bool ok = true;
  std::vector<SmaleSuspect> suspects;
};

// On surfaces transversality can only fail through saddle-saddle
// connections, so the checker traces every unstable separatrix forward and
// flags passes near other saddles; it also verifies that each branch limits
// at a critical point with strictly larger f (ascending convention).
inline SmaleReport check_smale_transversality(const MorseModel& model, const CriticalSet& crits,
                                              double tolerance = 1e-3, TraceOptions trace = {}) {
  SmaleReport report;
  for (const auto& sad : crits.points) {
    if (sad.index_r != 1) continue;
    for (int branch : {+1, -1}) {
      Separatrix sep;
      try {
        sep = trace_separatrix(model, crits, sad.id, branch, /*unstable=*/true, trace);
      } catch (const IntegrationError&) {
        report.suspects.push_back({sad.id, -1, 0.0, "unstable branch did not resolve"});
        report.ok = false;
        continue;
      }
      auto chart_dist = [&](const Vec3& a, const Vec3& b) {
        Vec3 d = b - a;
        if (model.is_torus()) {
          for (int i = 0; i < 2; ++i) {
            if (d[i] > 0.5) d[i] -= 1.0;
            if (d[i] <= -0.5) d[i] += 1.0;
          }
        }
        return d.norm();
      };
      for (const auto& other : crits.points) {
        if (other.index_r != 1 || other.id == sad.id) continue;
        double dmin = 1e300;
        for (size_t i = 2; i + 1 < sep.points.size(); ++i)  // skip seed and endpoint
          dmin = std::min(dmin, chart_dist(sep.points[i], other.position));
        if (dmin < tolerance) {
          report.suspects.push_back({sad.id, other.id, dmin, "unstable branch passes near another saddle"});
          report.ok = false;
        }
      }
      if (sep.limit_id >= 0 && crits[sep.limit_id].f_value <= sad.f_value) {
        report.suspects.push_back(
            {sad.id, sep.limit_id, 0.0, "unstable branch limit does not increase f"});
        report.ok = false;
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Basin classification
// ---------------------------------------------------------------------------

struct BasinMasks {
  std::vector<int> minima_ids;                     // order of the masks below
  std::vector<std::vector<double>> masks;          // per minimum, per triangle in [0,1]
  std::vector<std::array<int, 6>> node_assignment; // per triangle, per quadrature node:
                                                   // index into minima_ids, or -1 unresolved
  double unresolved_fraction = 0.0;
};

// Classifies every quadrature node by the downhill limit of the flow.
// Triangle masks are node fractions; unresolved nodes above 0.1% abort.
inline BasinMasks basin_masks(const MorseModel& model, const TriMesh& mesh, const CriticalSet& crits,
                              OmegaLimitOptions opts = {}) {
  BasinMasks out;
  for (const auto& cp : crits.points)
    if (cp.index_r == 0) out.minima_ids.push_back(cp.id);
  out.masks.assign(out.minima_ids.size(), std::vector<double>(mesh.num_triangles(), 0.0));
  out.node_assignment.assign(mesh.num_triangles(), {-1, -1, -1, -1, -1, -1});

  const int total = mesh.num_triangles() * QuadratureRule::kNumPoints;
  std::vector<int> limits(total, -1);
  parallel_for(total, [&](int idx) {
    int t = idx / QuadratureRule::kNumPoints, q = idx % QuadratureRule::kNumPoints;
    Vec3 x = quadrature_point(mesh, model, t, q);
    try {
      limits[idx] = omega_limit(model, crits, x, FlowDirection::Downhill, opts);
    } catch (const IntegrationError&) {
      limits[idx] = -1;
    }
  });

  long unresolved = 0;
  for (int idx = 0; idx < total; ++idx) {
    int t = idx / QuadratureRule::kNumPoints, q = idx % QuadratureRule::kNumPoints;
    auto it = std::find(out.minima_ids.begin(), out.minima_ids.end(), limits[idx]);
    if (limits[idx] < 0 || it == out.minima_ids.end()) {
      ++unresolved;  // failed, or landed on a measure-zero separatrix start
      continue;
    }
    int m = static_cast<int>(it - out.minima_ids.begin());
    out.node_assignment[t][q] = m;
    out.masks[m][t] += 1.0 / QuadratureRule::kNumPoints;
  }
  out.unresolved_fraction = double(unresolved) / double(total);
  if (out.unresolved_fraction > 1e-3)
    throw IntegrationError("basin classification left more than 0.1% nodes unresolved");
  return out;
}

// ---------------------------------------------------------------------------
// Correlation functions
// ---------------------------------------------------------------------------

struct CorrelationSeries {
  std::vector<double> t_grid;
  std::vector<double> values;
  std::function<double(const Vec3&)> psi1;  // 0-form
  std::function<double(const Vec3&)> psi2;  // 2-form density
  double limit_prediction = 0.0;
  double fitted_rate = 0.0;
};

// C(t) = integral of psi1(flow_downhill^t(x)) psi2(x) dA(x), evaluated by
// flowing the quadrature nodes once through the increasing t grid.
inline CorrelationSeries correlation(const MorseModel& model, const TriMesh& mesh,
                                     const std::function<double(const Vec3&)>& psi1,
                                     const std::function<double(const Vec3&)>& psi2,
                                     const std::vector<double>& t_grid, OdeOptions ode = {}) {
  for (size_t i = 1; i < t_grid.size(); ++i)
    if (t_grid[i] <= t_grid[i - 1]) throw DomainError("correlation: t_grid must increase");
  if (t_grid.empty() || t_grid.front() < 0) throw DomainError("correlation: bad t_grid");

  CorrelationSeries series;
  series.t_grid = t_grid;
  series.values.assign(t_grid.size(), 0.0);
  series.psi1 = psi1;
  series.psi2 = psi2;

  const auto& rule = quadrature_rule();
  const int total = mesh.num_triangles() * QuadratureRule::kNumPoints;
  // one trajectory per quadrature node, continued through the whole grid;
  // per-node buffers keep the reduction order fixed for any worker count
  std::vector<double> node_values(static_cast<size_t>(total) * t_grid.size(), 0.0);
  std::vector<char> node_ok(total, 1);
  parallel_for(total, [&](int idx) {
    int t = idx / QuadratureRule::kNumPoints, q = idx % QuadratureRule::kNumPoints;
    Vec3 x0 = quadrature_point(mesh, model, t, q);
    double w = mesh.tri_area[t] * rule.weight[q] * psi2(x0);
    detail::GradientFlowIntegrator integ(model, FlowDirection::Downhill, ode);
    Vec3 p = x0;
    double tcur = 0.0;
    for (size_t k = 0; k < t_grid.size(); ++k) {
      if (t_grid[k] > tcur) {
        try {
          integ.advance(tcur, p, t_grid[k]);
        } catch (const IntegrationError&) {
          node_ok[idx] = 0;
          break;
        }
      }
      node_values[idx * t_grid.size() + k] = w * psi1(p);
    }
  });

  long failures = 0;
  for (int idx = 0; idx < total; ++idx) {
    if (!node_ok[idx]) {
      ++failures;
      continue;
    }
    for (size_t k = 0; k < t_grid.size(); ++k)
      series.values[k] += node_values[idx * t_grid.size() + k];
  }
  if (failures > 0 && double(failures) / double(total) > 1e-3)
    throw IntegrationError("correlation: more than 0.1% node trajectories failed");
  return series;
}

// Predicted infinite-time limit: sum over minima of psi1(a) times the basin
// quadrature of psi2. Node-level assignments are used when available so the
// prediction matches the t -> infinity limit of `correlation` exactly.
inline double correlation_limit_prediction(const MorseModel& model, const TriMesh& mesh,
                                           const CriticalSet& crits, const BasinMasks& basins,
                                           const std::function<double(const Vec3&)>& psi1,
                                           const std::function<double(const Vec3&)>& psi2) {
  const auto& rule = quadrature_rule();
  double total = 0.0;
  for (size_t m = 0; m < basins.minima_ids.size(); ++m) {
    const CriticalPoint& cp = crits[basins.minima_ids[m]];
    double v1 = psi1(cp.position);
    double integral = 0.0;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
      for (int q = 0; q < QuadratureRule::kNumPoints; ++q) {
        if (basins.node_assignment[t][q] != static_cast<int>(m)) continue;
        integral += mesh.tri_area[t] * rule.weight[q] * psi2(quadrature_point(mesh, model, t, q));
      }
    }
    total += v1 * integral;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Decay-rate fitting
// ---------------------------------------------------------------------------

enum class FitStatus { Fitted, AlreadyConverged };

struct DecayFit {
  FitStatus status = FitStatus::Fitted;
  double rate = 0.0;
  double relative_gap_deviation = 0.0;
  double window_lo = 0.0, window_hi = 0.0;
  int window_points = 0;
};

struct FitWindowError : NumericalError {
  explicit FitWindowError(const std::string& m) : NumericalError(m) {}
};

// Least-squares slope of log|C(t) - limit| over the band where the residual
// sits between 1e-8 and 1e-2 of its peak.
inline DecayFit decay_rate_fit(const CorrelationSeries& series, double limit, double gap_prediction) {
  const size_t n = series.t_grid.size();
  std::vector<double> resid(n);
  double scale = 0.0;
  for (size_t i = 0; i < n; ++i) {
    resid[i] = std::abs(series.values[i] - limit);
    scale = std::max(scale, resid[i]);
  }
  DecayFit fit;
  if (scale < 1e-12 * (1.0 + std::abs(limit))) {
    fit.status = FitStatus::AlreadyConverged;
    return fit;
  }

  std::vector<size_t> window;
  for (size_t i = 0; i < n; ++i)
    if (resid[i] >= 1e-8 * scale && resid[i] <= 1e-2 * scale) window.push_back(i);
  if (window.size() < 3) throw FitWindowError("decay fit: residual band holds fewer than 3 samples");

  int violations = 0;
  for (size_t k = 1; k < window.size(); ++k)
    if (resid[window[k]] > resid[window[k - 1]] * 1.05 + 1e-12 * scale) ++violations;
  if (violations > static_cast<int>(window.size()) / 5)
    throw FitWindowError("decay fit: residual is non-monotonic in the fit band (oscillatory floor)");

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i : window) {
    double x = series.t_grid[i], y = std::log(resid[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  double m = window.size();
  double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  fit.rate = -slope;
  fit.relative_gap_deviation =
      std::abs(gap_prediction) > 0 ? std::abs(fit.rate - std::abs(gap_prediction)) / std::abs(gap_prediction) : 0.0;
  fit.window_lo = series.t_grid[window.front()];
  fit.window_hi = series.t_grid[window.back()];
  fit.window_points = static_cast<int>(window.size());
  return fit;
}

}  // namespace wittenflow
