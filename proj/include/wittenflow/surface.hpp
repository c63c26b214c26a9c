#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>

#include "wittenflow/core.hpp"

namespace wittenflow {

enum class SurfaceKind { UnitSphereEmbedded, FlatTorusUnitSquare, ChartParameterized };

enum class FlowDirection { Uphill, Downhill };

// A smooth scalar field given by exact ambient evaluators. On the sphere the
// argument is a point of R^3; on the torus it is a chart point (x, y, 0) and
// the z components of grad/hess are ignored.
struct ScalarField {
  std::function<double(const Vec3&)> value;
  std::function<Vec3(const Vec3&)> grad;
  std::function<Mat3(const Vec3&)> hess;
};

inline ScalarField zero_field() {
  return {[](const Vec3&) { return 0.0; },
          [](const Vec3&) { return Vec3::Zero().eval(); },
          [](const Vec3&) { return Mat3::Zero().eval(); }};
}

inline ScalarField field_difference(const ScalarField& a, const ScalarField& b) {
  return {[a, b](const Vec3& p) { return a.value(p) - b.value(p); },
          [a, b](const Vec3& p) { return (a.grad(p) - b.grad(p)).eval(); },
          [a, b](const Vec3& p) { return (a.hess(p) - b.hess(p)).eval(); }};
}

inline ScalarField field_negate(const ScalarField& a) {
  return {[a](const Vec3& p) { return -a.value(p); },
          [a](const Vec3& p) { return (-a.grad(p)).eval(); },
          [a](const Vec3& p) { return (-a.hess(p)).eval(); }};
}

// Pull a field back along a fixed rotation: p -> f(R^T p).
inline ScalarField field_rotate(const ScalarField& a, const Mat3& R) {
  return {[a, R](const Vec3& p) { return a.value(R.transpose() * p); },
          [a, R](const Vec3& p) { return (R * a.grad(R.transpose() * p)).eval(); },
          [a, R](const Vec3& p) { return (R * a.hess(R.transpose() * p) * R.transpose()).eval(); }};
}

struct FieldEval {
  double value = 0.0;
  Vec3 gradient = Vec3::Zero();  // intrinsic (tangent) gradient
  Mat3 hessian = Mat3::Zero();   // intrinsic Hessian, restricted to the tangent plane
};

// A model surface together with a Morse function and metric. The metric is
// the round metric induced by the embedding for the sphere and the flat unit
// metric for the torus, so tangent frames below are orthonormal and the
// metric tensor never appears explicitly.
class MorseModel {
 public:
  SurfaceKind kind = SurfaceKind::FlatTorusUnitSquare;
  std::string function_name;
  double normalization = 1.0;  // positive scale applied to f
  ScalarField field;

  MorseModel() = default;
  MorseModel(SurfaceKind k, std::string name, ScalarField f, double norm = 1.0)
      : kind(k), function_name(std::move(name)), normalization(norm), field(std::move(f)) {
    if (normalization <= 0.0) throw ConfigError("normalization must be positive");
  }

  bool is_sphere() const { return kind == SurfaceKind::UnitSphereEmbedded; }
  bool is_torus() const { return kind == SurfaceKind::FlatTorusUnitSquare; }

  // Wraps/validates a point. Sphere points must be on the unit sphere within
  // 1e-10 (then re-normalized for downstream arithmetic); torus points wrap
  // into [0,1)^2.
  Vec3 canonical_point(const Vec3& p) const {
    if (is_sphere()) {
      double n = p.norm();
      if (std::abs(n - 1.0) > 1e-10) throw DomainError("point is off the unit sphere");
      return p / n;
    }
    if (is_torus()) {
      auto wrap = [](double x) {
        double w = x - std::floor(x);
        if (w >= 1.0) w = 0.0;  // guard against -1e-18 -> 1.0
        return w;
      };
      return Vec3(wrap(p.x()), wrap(p.y()), 0.0);
    }
    throw ConfigError("chart-parameterized models carry no canonical chart");
  }

  double f(const Vec3& p) const { return normalization * field.value(p); }

  // Deterministic orthonormal tangent basis (t1, t2) with t1 x t2 = outward
  // normal on the sphere and the standard chart frame on the torus.
  void tangent_basis(const Vec3& p, Vec3& t1, Vec3& t2) const {
    if (is_torus()) {
      t1 = Vec3(1, 0, 0);
      t2 = Vec3(0, 1, 0);
      return;
    }
    int axis = 0;
    double best = std::abs(p.x());
    if (std::abs(p.y()) < best) {
      best = std::abs(p.y());
      axis = 1;
    }
    if (std::abs(p.z()) < best) axis = 2;
    Vec3 a = Vec3::Zero();
    a[axis] = 1.0;
    t1 = (a - a.dot(p) * p).normalized();
    t2 = p.cross(t1);
  }
};

// Value, intrinsic gradient and intrinsic Hessian of the model function.
// Sphere: the gradient is projected to the tangent plane and the Hessian is
// corrected by the second fundamental form of the unit sphere,
//   Hess_M f(X,Y) = X . (D^2 f) . Y - (p . Df) <X,Y>.
inline FieldEval field_eval(const MorseModel& model, const Vec3& point) {
  Vec3 p = model.canonical_point(point);
  FieldEval out;
  out.value = model.normalization * model.field.value(p);
  Vec3 g = model.normalization * model.field.grad(p);
  Mat3 H = model.normalization * model.field.hess(p);
  if (model.is_sphere()) {
    Mat3 P = Mat3::Identity() - p * p.transpose();
    out.gradient = P * g;
    out.hessian = P * (H - p.dot(g) * Mat3::Identity()) * P;
  } else {
    out.gradient = Vec3(g.x(), g.y(), 0.0);
    out.hessian = Mat3::Zero();
    out.hessian.topLeftCorner<2, 2>() = H.topLeftCorner<2, 2>();
  }
  return out;
}

// Intrinsic gradient only (hot path for ODE integration).
inline Vec3 intrinsic_gradient(const MorseModel& model, const Vec3& p) {
  Vec3 g = model.normalization * model.field.grad(p);
  if (model.is_sphere()) return g - p.dot(g) * p;
  return Vec3(g.x(), g.y(), 0.0);
}

// ---------------------------------------------------------------------------
// Model library
// ---------------------------------------------------------------------------

// Sphere with the height function f = z. Critical points: the poles.
inline MorseModel sphere_height(double normalization = 1.0) {
  ScalarField f{[](const Vec3& p) { return p.z(); },
                [](const Vec3&) { return Vec3(0, 0, 1).eval(); },
                [](const Vec3&) { return Mat3::Zero().eval(); }};
  return MorseModel(SurfaceKind::UnitSphereEmbedded, "height", std::move(f), normalization);
}

// Sphere with f = eps (a.p) - (b.p)^2 for a fixed generic orthonormal pair
// (a, b): two minima, one saddle and one maximum, critical counts (2,1,1).
// The generic axes keep the separatrix great circle away from mesh symmetry
// lines (an axis-aligned bump would run exactly along icosphere edges).
inline MorseModel sphere_bumped(double eps = 0.5, double normalization = 1.0) {
  static const Vec3 b_axis = Vec3(0.2, 0.3, 0.9).normalized();
  static const Vec3 a_axis = b_axis.cross(Vec3(0.7, -0.5, 0.4)).normalized();
  ScalarField f{[eps](const Vec3& p) {
                  double bp = b_axis.dot(p);
                  return eps * a_axis.dot(p) - bp * bp;
                },
                [eps](const Vec3& p) { return (eps * a_axis - 2.0 * b_axis.dot(p) * b_axis).eval(); },
                [](const Vec3&) { return (-2.0 * b_axis * b_axis.transpose()).eval(); }};
  return MorseModel(SurfaceKind::UnitSphereEmbedded, "bumped", std::move(f), normalization);
}

// Sphere with the quadric f = 2 (b.p)^2 - (a.p)^2 for a fixed generic
// orthonormal pair: two minima (+-a), two saddles (+-a x b) and two maxima
// (+-b), so both boundary maps of the Morse complex are nontrivial.
inline MorseModel sphere_quadric(double normalization = 1.0) {
  static const Vec3 a_axis = Vec3(0.9, -0.1, 0.35).normalized();
  static const Vec3 b_axis = a_axis.cross(Vec3(0.2, 0.8, -0.4)).normalized();
  ScalarField f{[](const Vec3& p) {
                  double ap = a_axis.dot(p), bp = b_axis.dot(p);
                  return 2.0 * bp * bp - ap * ap;
                },
                [](const Vec3& p) {
                  return (4.0 * b_axis.dot(p) * b_axis - 2.0 * a_axis.dot(p) * a_axis).eval();
                },
                [](const Vec3&) {
                  return (4.0 * b_axis * b_axis.transpose() - 2.0 * a_axis * a_axis.transpose())
                      .eval();
                }};
  return MorseModel(SurfaceKind::UnitSphereEmbedded, "quadric", std::move(f), normalization);
}

// Flat torus with f = (cos 2 pi (x-sx) + cos 2 pi (y-sy)) / (4 pi^2). The
// 1/(4 pi^2) scale makes every Lyapunov exponent +-1.
inline MorseModel torus_cosine(double shift_x = 0.0, double shift_y = 0.0, double normalization = 1.0) {
  const double c = 1.0 / (4.0 * kPi * kPi);
  ScalarField f{[c, shift_x, shift_y](const Vec3& p) {
                  return c * (std::cos(kTwoPi * (p.x() - shift_x)) + std::cos(kTwoPi * (p.y() - shift_y)));
                },
                [c, shift_x, shift_y](const Vec3& p) {
                  return Vec3(-c * kTwoPi * std::sin(kTwoPi * (p.x() - shift_x)),
                              -c * kTwoPi * std::sin(kTwoPi * (p.y() - shift_y)), 0.0)
                      .eval();
                },
                [shift_x, shift_y](const Vec3& p) {
                  Mat3 h = Mat3::Zero();
                  h(0, 0) = -std::cos(kTwoPi * (p.x() - shift_x));
                  h(1, 1) = -std::cos(kTwoPi * (p.y() - shift_y));
                  return h;
                }};
  std::string name = "cosine";
  if (shift_x != 0.0 || shift_y != 0.0) name = "cosine-shifted";
  return MorseModel(SurfaceKind::FlatTorusUnitSquare, std::move(name), std::move(f), normalization);
}

// Degenerate configuration used by the transversality checker's known-bad
// test: f depends on x alone, so the critical set consists of two circles
// and the function is not Morse.
inline MorseModel torus_x_cosine(double normalization = 1.0) {
  const double c = 1.0 / (4.0 * kPi * kPi);
  ScalarField f{[c](const Vec3& p) { return c * std::cos(kTwoPi * p.x()); },
                [c](const Vec3& p) { return Vec3(-c * kTwoPi * std::sin(kTwoPi * p.x()), 0.0, 0.0).eval(); },
                [](const Vec3& p) {
                  Mat3 h = Mat3::Zero();
                  h(0, 0) = -std::cos(kTwoPi * p.x());
                  return h;
                }};
  return MorseModel(SurfaceKind::FlatTorusUnitSquare, "x-cosine", std::move(f), normalization);
}

inline MorseModel model_with_field(const MorseModel& base, std::string name, ScalarField f) {
  return MorseModel(base.kind, std::move(name), std::move(f), 1.0);
}

inline Mat3 rotation_z(double angle) {
  Mat3 R = Mat3::Identity();
  R(0, 0) = std::cos(angle);
  R(0, 1) = -std::sin(angle);
  R(1, 0) = std::sin(angle);
  R(1, 1) = std::cos(angle);
  return R;
}

}  // namespace wittenflow
