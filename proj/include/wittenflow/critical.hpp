#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "wittenflow/core.hpp"
#include "wittenflow/surface.hpp"

namespace wittenflow {

// Critical point of the model function with its Lyapunov exponents, i.e. the
// eigenvalues chi_1 <= chi_2 of the metric-raised intrinsic Hessian. The
// Morse index is the number of negative exponents; the unstable manifold of
// the ascending gradient flow has dimension 2 - index.
struct CriticalPoint {
  int id = -1;
  Vec3 position = Vec3::Zero();
  int index_r = 0;
  Vec2 lyapunov = Vec2::Zero();  // sorted ascending
  double f_value = 0.0;
};

struct CriticalSet {
  std::vector<CriticalPoint> points;
  std::vector<std::string> warnings;

  const CriticalPoint& operator[](int id) const { return points.at(id); }
  int size() const { return static_cast<int>(points.size()); }
};

// Tangent-frame eigen-decomposition at a critical point: Lyapunov exponents
// and the corresponding unit tangent eigenvectors, sign-canonicalized so that
// repeated runs give identical frames.
struct LyapunovFrame {
  Vec2 chi;                      // ascending
  std::array<Vec3, 2> tangent;   // eigenvectors in ambient/chart coordinates
};

inline Vec3 canonicalize_sign(const Vec3& v) {
  for (int i = 0; i < 3; ++i) {
    if (std::abs(v[i]) > 1e-12) return v[i] > 0 ? v : Vec3(-v);
  }
  return v;
}

inline LyapunovFrame lyapunov_frame(const MorseModel& model, const Vec3& position) {
  FieldEval fe = field_eval(model, position);
  Vec3 t1, t2;
  model.tangent_basis(position, t1, t2);
  Mat2 h;
  h(0, 0) = t1.dot(fe.hessian * t1);
  h(0, 1) = t1.dot(fe.hessian * t2);
  h(1, 0) = h(0, 1);
  h(1, 1) = t2.dot(fe.hessian * t2);
  Eigen::SelfAdjointEigenSolver<Mat2> es(h);
  LyapunovFrame fr;
  fr.chi = es.eigenvalues();
  for (int i = 0; i < 2; ++i) {
    Vec2 v = es.eigenvectors().col(i);
    fr.tangent[i] = canonicalize_sign((v[0] * t1 + v[1] * t2).normalized());
  }
  return fr;
}

namespace detail {

// Newton iteration for grad f = 0 in the tangent frame, with retraction back
// to the surface. A singular Hessian (degenerate critical set) falls back to
// a damped Gauss-Newton step so the iteration still lands on the critical
// set, where the Lyapunov check can report the Morse violation.
inline bool newton_refine(const MorseModel& model, Vec3& p, int max_iter, double grad_tol) {
  for (int it = 0; it < max_iter; ++it) {
    FieldEval fe = field_eval(model, p);
    Vec3 t1, t2;
    model.tangent_basis(p, t1, t2);
    Vec2 g(t1.dot(fe.gradient), t2.dot(fe.gradient));
    if (g.norm() < grad_tol) return true;
    Mat2 h;
    h(0, 0) = t1.dot(fe.hessian * t1);
    h(0, 1) = t1.dot(fe.hessian * t2);
    h(1, 0) = h(0, 1);
    h(1, 1) = t2.dot(fe.hessian * t2);
    double det = h(0, 0) * h(1, 1) - h(0, 1) * h(1, 0);
    Vec2 step;
    if (std::abs(det) > 1e-12 * (1.0 + h.squaredNorm())) {
      step = -h.inverse() * g;
    } else {
      double mu = 1e-8 + 1e-6 * h.norm();
      step = -(h.transpose() * h + mu * Mat2::Identity()).inverse() * (h.transpose() * g);
      if (step.norm() < 1e-15) return false;
    }
    if (step.norm() > 0.5) step *= 0.5 / step.norm();  // trust region
    p = p + step[0] * t1 + step[1] * t2;
    p = model.is_sphere() ? Vec3(p.normalized()) : model.canonical_point(p);
  }
  FieldEval fe = field_eval(model, p);
  return fe.gradient.norm() < grad_tol;
}

}  // namespace detail

// Newton iteration from a uniform seed grid, deduplicated within 1e-6.
// Every returned point satisfies |grad f| < 1e-10; a degenerate Hessian
// (|chi| < 1e-8) raises MorseViolation.
inline CriticalSet find_critical_points(const MorseModel& model, int seed_grid_density = 32) {
  CriticalSet out;
  std::vector<Vec3> seeds;
  const int n = seed_grid_density;
  if (model.is_torus()) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) seeds.emplace_back((i + 0.5) / n, (j + 0.5) / n, 0.0);
  } else if (model.is_sphere()) {
    for (int i = 0; i < n; ++i) {
      double theta = kPi * (i + 0.5) / n;
      for (int j = 0; j < n; ++j) {
        double phi = kTwoPi * (j + 0.5) / n;
        seeds.emplace_back(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                           std::cos(theta));
      }
    }
  } else {
    throw ConfigError("find_critical_points: unsupported model kind");
  }

  auto chart_distance = [&](const Vec3& a, const Vec3& b) {
    if (!model.is_torus()) return (a - b).norm();
    Vec3 d = b - a;
    for (int i = 0; i < 2; ++i) {
      if (d[i] > 0.5) d[i] -= 1.0;
      if (d[i] <= -0.5) d[i] += 1.0;
    }
    return d.norm();
  };

  std::vector<Vec3> found;
  int failed_seeds = 0;
  for (Vec3 p : seeds) {
    if (!detail::newton_refine(model, p, 50, 1e-12)) {
      ++failed_seeds;
      continue;
    }
    bool dup = false;
    for (const Vec3& q : found) {
      if (chart_distance(p, q) < 1e-6) {
        dup = true;
        break;
      }
    }
    if (!dup) found.push_back(p);
  }

  // Deterministic ordering: ascending f value, then lexicographic position.
  std::sort(found.begin(), found.end(), [&](const Vec3& a, const Vec3& b) {
    double fa = field_eval(model, a).value, fb = field_eval(model, b).value;
    if (std::abs(fa - fb) > 1e-12) return fa < fb;
    if (std::abs(a.x() - b.x()) > 1e-9) return a.x() < b.x();
    if (std::abs(a.y() - b.y()) > 1e-9) return a.y() < b.y();
    return a.z() < b.z();
  });

  for (const Vec3& p : found) {
    FieldEval fe = field_eval(model, p);
    if (fe.gradient.norm() >= 1e-10) continue;  // not converged to spec tolerance
    LyapunovFrame fr = lyapunov_frame(model, p);
    if (std::abs(fr.chi[0]) < 1e-8 || std::abs(fr.chi[1]) < 1e-8)
      throw MorseViolation("degenerate Hessian at a critical point (model is not Morse)");
    CriticalPoint cp;
    cp.id = static_cast<int>(out.points.size());
    cp.position = p;
    cp.lyapunov = fr.chi;
    cp.index_r = (fr.chi[0] < 0 ? 1 : 0) + (fr.chi[1] < 0 ? 1 : 0);
    cp.f_value = fe.value;
    out.points.push_back(cp);
  }

  // Warn only when non-convergence is widespread or the index sum fails to
  // account for the Euler characteristic; isolated Newton failures from
  // indefinite-Hessian regions are normal.
  if (2 * failed_seeds > static_cast<int>(seeds.size()))
    out.warnings.push_back("newton failed from " + std::to_string(failed_seeds) +
                           " seeds; possible missed critical point");
  int euler_expected = model.is_sphere() ? 2 : 0;
  int euler = 0;
  for (const auto& cp : out.points) euler += (cp.index_r % 2 == 0) ? 1 : -1;
  if (euler != euler_expected)
    out.warnings.push_back("Poincare-Hopf mismatch; possible missed critical point");
  return out;
}

inline int morse_index(const CriticalPoint& cp) { return cp.index_r; }

// c_k = number of critical points of index k, k = 0..2.
inline std::vector<int> critical_counts(const CriticalSet& crits) {
  std::vector<int> c(3, 0);
  for (const auto& cp : crits.points) c.at(cp.index_r) += 1;
  return c;
}

}  // namespace wittenflow
