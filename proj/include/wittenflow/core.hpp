#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace wittenflow {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using SparseMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Error taxonomy. CLI maps these onto process exit codes:
//   ConfigError -> 2, MorseViolation -> 3, TransversalitySuspect -> 4,
//   NumericalError (and IntegrationError) -> 5.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& m) : std::runtime_error(m) {}
};
struct MorseViolation : std::runtime_error {
  explicit MorseViolation(const std::string& m) : std::runtime_error(m) {}
};
struct MeshError : std::runtime_error {
  explicit MeshError(const std::string& m) : std::runtime_error(m) {}
};
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& m) : std::runtime_error(m) {}
};
struct IntegrationError : NumericalError {
  explicit IntegrationError(const std::string& m) : NumericalError(m) {}
};
struct TransversalityError : std::runtime_error {
  explicit TransversalityError(const std::string& m) : std::runtime_error(m) {}
};
struct WindowError : std::runtime_error {
  explicit WindowError(const std::string& m) : std::runtime_error(m) {}
};
struct ConditioningError : std::runtime_error {
  explicit ConditioningError(const std::string& m) : std::runtime_error(m) {}
};

// Exact rational arithmetic for the optional exact resonance mode.
// Values stay tiny (integer combinations of small Lyapunov numerators),
// so int64 with gcd reduction is plenty.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Rational() = default;
  Rational(std::int64_t n) : num(n), den(1) {}
  Rational(std::int64_t n, std::int64_t d) : num(n), den(d) { reduce(); }

  static std::int64_t gcd(std::int64_t a, std::int64_t b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b != 0) {
      std::int64_t t = a % b;
      a = b;
      b = t;
    }
    return a == 0 ? 1 : a;
  }

  void reduce() {
    if (den == 0) throw DomainError("rational with zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    std::int64_t g = gcd(num, den);
    num /= g;
    den /= g;
  }

  Rational operator+(const Rational& o) const { return {num * o.den + o.num * den, den * o.den}; }
  Rational operator-(const Rational& o) const { return {num * o.den - o.num * den, den * o.den}; }
  Rational operator*(const Rational& o) const { return {num * o.num, den * o.den}; }
  Rational operator-() const { return {-num, den}; }
  bool operator==(const Rational& o) const { return num == o.num && den == o.den; }
  bool operator<(const Rational& o) const { return num * o.den < o.num * den; }
  bool operator<=(const Rational& o) const { return num * o.den <= o.num * den; }
  double to_double() const { return double(num) / double(den); }
  Rational abs() const { return num < 0 ? Rational{-num, den} : *this; }
};

// Deterministic RNG used everywhere randomness is needed (eigensolver
// start blocks, property-test samples, orientation redraws).
inline std::mt19937_64 seeded_rng(std::uint64_t seed) { return std::mt19937_64(0x9e3779b97f4a7c15ULL ^ seed); }

// Worker count for the embarrassingly parallel loops (trajectory bundles,
// basin classification). WITTENFLOW_THREADS is the only environment knob;
// results are bit-identical for any value because every loop writes
// per-index slots and reductions run in index order.
inline int parallel_workers() {
  const char* env = std::getenv("WITTENFLOW_THREADS");
  if (!env) return 1;
  int n = std::atoi(env);
  if (n < 1) return 1;
  unsigned hw = std::thread::hardware_concurrency();
  return std::min<int>(n, hw > 0 ? static_cast<int>(hw) : n);
}

// Runs body(i) for i in [0, n) over contiguous index blocks. The body must
// not throw (catch and record failures per index instead).
template <typename F>
void parallel_for(int n, F&& body) {
  int workers = std::min(parallel_workers(), std::max(1, n));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    int lo = w * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (int i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

// FNV-1a over a byte string; used to stamp experiment outputs.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

// Full-precision float formatting shared by every CSV/JSON writer so that
// identical configs produce byte-identical files.
inline std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.16e", v);
  return std::string(buf);
}

}  // namespace wittenflow
