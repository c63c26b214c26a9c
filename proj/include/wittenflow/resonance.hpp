#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <vector>

#include "wittenflow/core.hpp"
#include "wittenflow/critical.hpp"

namespace wittenflow {

struct CutoffError : DomainError {
  explicit CutoffError(const std::string& m) : DomainError(m) {}
};
struct PoleProximityError : DomainError {
  explicit PoleProximityError(const std::string& m) : DomainError(m) {}
};

// One witness of a resonance value: the pair (J, alpha) at a critical point.
// J is a bitmask over the Lyapunov indices {0, 1} (sorted ascending).
struct ResonanceWitness {
  int crit_id = -1;
  unsigned J_mask = 0;
  std::array<int, 2> alpha = {0, 0};
};

struct ResonanceEntry {
  double value = 0.0;          // <= 0
  int multiplicity = 0;        // == witnesses.size()
  std::vector<ResonanceWitness> witnesses;
};

// Degree-k resonances above -cutoff_lambda, sorted descending (0 first).
struct ResonanceSet {
  int degree_k = 0;
  double cutoff_lambda = 0.0;
  std::vector<ResonanceEntry> entries;

  int total_multiplicity() const {
    int m = 0;
    for (const auto& e : entries) m += e.multiplicity;
    return m;
  }

  int multiplicity_at(double value, double tol = 1e-9) const {
    for (const auto& e : entries)
      if (std::abs(e.value - value) <= tol * std::max(1.0, std::abs(value))) return e.multiplicity;
    return 0;
  }
};

namespace detail {

// Base exponent of a subset J at a critical point:
//   sum_{j in J, chi_j > 0} |chi_j| + sum_{j not in J, chi_j < 0} |chi_j|.
inline double resonance_base(const CriticalPoint& cp, unsigned J_mask) {
  double base = 0.0;
  for (int j = 0; j < 2; ++j) {
    bool in_J = (J_mask >> j) & 1u;
    double chi = cp.lyapunov[j];
    if (in_J && chi > 0) base += chi;
    if (!in_J && chi < 0) base += -chi;
  }
  return base;
}

inline void merge_entries(std::vector<std::pair<double, ResonanceWitness>>& raw, ResonanceSet& out,
                          double merge_tol) {
  // Enumeration order is lexicographic in (base, J, alpha); the merged list
  // is sorted by value, descending (closest to zero first).
  std::stable_sort(raw.begin(), raw.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (auto& [v, w] : raw) {
    if (!out.entries.empty() &&
        std::abs(out.entries.back().value - v) <= merge_tol * std::max(1.0, std::abs(v))) {
      out.entries.back().witnesses.push_back(w);
      out.entries.back().multiplicity += 1;
    } else {
      ResonanceEntry e;
      e.value = v;
      e.multiplicity = 1;
      e.witnesses.push_back(w);
      out.entries.push_back(std::move(e));
    }
  }
}

}  // namespace detail

// All pairs (J, alpha) with |J| = k and
//   value = -(base(J) + alpha . |chi|) >= -cutoff,
// one witness each; coinciding values merge (tolerance 1e-9 relative).
inline ResonanceSet local_resonances(const CriticalPoint& cp, int k, double cutoff,
                                     long entry_limit = 1000000, double merge_tol = 1e-9) {
  if (cutoff <= 0) throw DomainError("local_resonances: cutoff must be positive");
  if (k < 0 || k > 2) throw DomainError("local_resonances: degree out of range");
  const double a0 = std::abs(cp.lyapunov[0]);
  const double a1 = std::abs(cp.lyapunov[1]);

  std::vector<std::pair<double, ResonanceWitness>> raw;
  std::vector<unsigned> subsets;
  for (unsigned m = 0; m < 4; ++m)
    if (__builtin_popcount(m) == k) subsets.push_back(m);

  long count = 0;
  for (unsigned J : subsets) {
    double base = detail::resonance_base(cp, J);
    if (base > cutoff) continue;
    for (int al0 = 0; base + al0 * a0 <= cutoff; ++al0) {
      for (int al1 = 0; base + al0 * a0 + al1 * a1 <= cutoff; ++al1) {
        if (++count > entry_limit)
          throw CutoffError("local_resonances: enumeration exceeds the entry limit; cutoff too large");
        ResonanceWitness w;
        w.crit_id = cp.id;
        w.J_mask = J;
        w.alpha = {al0, al1};
        raw.emplace_back(-(base + al0 * a0 + al1 * a1), w);
      }
    }
  }

  ResonanceSet out;
  out.degree_k = k;
  out.cutoff_lambda = cutoff;
  detail::merge_entries(raw, out, merge_tol);
  return out;
}

// Multiset union over all critical points; multiplicities add.
inline ResonanceSet global_resonances(const CriticalSet& crits, int k, double cutoff,
                                      long entry_limit = 1000000, double merge_tol = 1e-9) {
  if (crits.points.empty()) throw DomainError("global_resonances: no critical points");
  std::vector<std::pair<double, ResonanceWitness>> raw;
  for (const auto& cp : crits.points) {
    ResonanceSet local = local_resonances(cp, k, cutoff, entry_limit, merge_tol);
    for (const auto& e : local.entries)
      for (const auto& w : e.witnesses) raw.emplace_back(e.value, w);
    if (static_cast<long>(raw.size()) > entry_limit)
      throw CutoffError("global_resonances: enumeration exceeds the entry limit");
  }
  ResonanceSet out;
  out.degree_k = k;
  out.cutoff_lambda = cutoff;
  detail::merge_entries(raw, out, merge_tol);
  return out;
}

// Multiplicity of the zero resonance; equals the number of critical points
// of index k.
inline int kernel_multiplicity(const CriticalSet& crits, int k) {
  double min_chi = 1e300;
  for (const auto& cp : crits.points)
    min_chi = std::min({min_chi, std::abs(cp.lyapunov[0]), std::abs(cp.lyapunov[1])});
  ResonanceSet rs = global_resonances(crits, k, 0.5 * min_chi);
  return rs.multiplicity_at(0.0);
}

// Largest strictly negative resonance of degree k.
inline double spectral_gap(const CriticalSet& crits, int k) {
  double cutoff = 1.0;
  for (const auto& cp : crits.points)
    cutoff = std::max({cutoff, std::abs(cp.lyapunov[0]), std::abs(cp.lyapunov[1])});
  for (int attempt = 0; attempt < 8; ++attempt) {
    ResonanceSet rs = global_resonances(crits, k, cutoff);
    for (const auto& e : rs.entries)
      if (e.value < -1e-12) return e.value;
    cutoff *= 2.0;
  }
  throw CutoffError("spectral_gap: no nonzero resonance under the cutoff; enlarge cutoff");
}

// ---------------------------------------------------------------------------
// Dynamical Ruelle determinant
// ---------------------------------------------------------------------------

struct ZetaValue {
  std::complex<double> log_value{0.0, 0.0};
  double tail_bound = 0.0;
};

// Series form: log zeta = - sum_{l>=1} e^{-lz}/l sum_a tr/det(l, a), valid
// for Re z > 0. tr/det is expanded through the Lyapunov exponents, so no
// flow Jacobians are ever formed.
inline ZetaValue zeta_series_eval(const CriticalSet& crits, int k, std::complex<double> z,
                                  int L_max = 60) {
  if (z.real() <= 0) throw DomainError("zeta_series_eval: requires Re z > 0 (use the product form)");
  if (L_max < 1) throw DomainError("zeta_series_eval: L_max must be >= 1");

  auto term = [&](int l) {
    double total = 0.0;
    for (const auto& cp : crits.points) {
      double a0 = cp.lyapunov[0], a1 = cp.lyapunov[1];
      // trace of Lambda^k of the backward-time linearization
      double tr;
      if (k == 0) tr = 1.0;
      else if (k == 1) tr = std::exp(-double(l) * a0) + std::exp(-double(l) * a1);
      else tr = std::exp(-double(l) * (a0 + a1));
      double logdetfac = 0.0;  // e^{l sum_{chi<0} chi} prod (1-e^{-l|chi|})^{-1}
      double pref = 1.0;
      for (double chi : {a0, a1}) {
        if (chi < 0) logdetfac += double(l) * chi;
        pref /= (1.0 - std::exp(-double(l) * std::abs(chi)));
      }
      total += tr * std::exp(logdetfac) * pref;
    }
    return total;
  };

  ZetaValue out;
  std::complex<double> sum = 0.0;
  for (int l = 1; l <= L_max; ++l) sum += std::exp(-double(l) * z) / double(l) * term(l);
  out.log_value = -sum;

  // Tail: |term(l)| is bounded by its l = L_max+1 value times the geometric
  // continuation of e^{-l Re z}.
  double bound_term = term(L_max + 1 > 1 ? L_max : 1);
  double q = std::exp(-z.real());
  out.tail_bound = bound_term * std::pow(q, L_max + 1) / ((L_max + 1) * (1.0 - q));
  return out;
}

// Product form: log zeta = sum over enumerated (a, J, alpha) of
// log(1 - e^{-(z + c)}), plus a closed-form estimate of the truncated tail.
// Zeros sit exactly at z = -c.
inline ZetaValue zeta_product_eval(const CriticalSet& crits, int k, std::complex<double> z,
                                   double lambda_trunc = 40.0) {
  if (lambda_trunc < std::abs(z.real()) + 5.0)
    throw DomainError("zeta_product_eval: lambda_trunc too small for this z");
  ResonanceSet rs = global_resonances(crits, k, lambda_trunc);

  ZetaValue out;
  std::complex<double> log_sum = 0.0;
  std::complex<double> enumerated_exp = 0.0;
  for (const auto& e : rs.entries) {
    if (std::abs(z - e.value) < 1e-12)
      throw PoleProximityError("zeta_product_eval: z coincides with a resonance");
    double c = -e.value;
    log_sum += double(e.multiplicity) * std::log(1.0 - std::exp(-(z + c)));
    enumerated_exp += double(e.multiplicity) * std::exp(-(z + c));
  }

  // Full geometric alpha-sums per (a, J): sum_alpha e^{-(z+base+alpha.|chi|)}.
  std::complex<double> full_exp = 0.0;
  for (const auto& cp : crits.points) {
    double a0 = std::abs(cp.lyapunov[0]), a1 = std::abs(cp.lyapunov[1]);
    for (unsigned J = 0; J < 4; ++J) {
      if (__builtin_popcount(J) != k) continue;
      double base = detail::resonance_base(cp, J);
      full_exp += std::exp(-(z + base)) / ((1.0 - std::exp(-a0)) * (1.0 - std::exp(-a1)));
    }
  }
  std::complex<double> tail_correction = -(full_exp - enumerated_exp);
  out.log_value = log_sum + tail_correction;
  out.tail_bound = std::abs(tail_correction);
  return out;
}

// Winding number of zeta around z0 (argument principle on a circle), which
// equals the total multiplicity of resonances strictly inside the circle.
inline int zeta_winding_number(const CriticalSet& crits, int k, std::complex<double> z0,
                               double radius, int n_samples = 2048, double lambda_trunc = 40.0) {
  ResonanceSet rs = global_resonances(crits, k, lambda_trunc);
  std::complex<double> integral = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    double theta = kTwoPi * i / n_samples;
    std::complex<double> z = z0 + radius * std::complex<double>(std::cos(theta), std::sin(theta));
    std::complex<double> dz =
        radius * std::complex<double>(-std::sin(theta), std::cos(theta)) * (kTwoPi / n_samples);
    // d/dz log(1 - e^{-(z+c)}) = e^{-(z+c)} / (1 - e^{-(z+c)})
    std::complex<double> dlog = 0.0;
    for (const auto& e : rs.entries) {
      std::complex<double> w = std::exp(-(z - e.value));
      dlog += double(e.multiplicity) * w / (1.0 - w);
    }
    integral += dlog * dz;
  }
  double winding = (integral / std::complex<double>(0.0, kTwoPi)).real();
  return static_cast<int>(std::lround(winding));
}

// ---------------------------------------------------------------------------
// Exact (rational) mode
// ---------------------------------------------------------------------------

struct ExactResonanceEntry {
  Rational value;  // <= 0
  std::vector<ResonanceWitness> witnesses;
};

// Enumeration with exact rational Lyapunov exponents: merging is exact
// equality, so multiplicities carry no tolerance ambiguity. `chi` is sorted
// ascending with the usual sign conventions.
inline std::vector<ExactResonanceEntry> local_resonances_exact(const std::array<Rational, 2>& chi,
                                                               int k, const Rational& cutoff,
                                                               int crit_id = 0) {
  if (!(Rational(0) < cutoff)) throw DomainError("local_resonances_exact: cutoff must be positive");
  std::map<std::pair<std::int64_t, std::int64_t>, ExactResonanceEntry> merged;
  Rational a0 = chi[0].abs(), a1 = chi[1].abs();
  for (unsigned J = 0; J < 4; ++J) {
    if (__builtin_popcount(J) != k) continue;
    Rational base(0);
    for (int j = 0; j < 2; ++j) {
      bool in_J = (J >> j) & 1u;
      if (in_J && Rational(0) < chi[j]) base = base + chi[j];
      if (!in_J && chi[j] < Rational(0)) base = base - chi[j];
    }
    if (cutoff < base) continue;
    for (int al0 = 0;; ++al0) {
      Rational v0 = base + Rational(al0) * a0;
      if (cutoff < v0) break;
      for (int al1 = 0;; ++al1) {
        Rational v = v0 + Rational(al1) * a1;
        if (cutoff < v) break;
        Rational neg = -v;
        auto key = std::make_pair(neg.num, neg.den);
        auto& entry = merged[key];
        entry.value = neg;
        entry.witnesses.push_back({crit_id, J, {al0, al1}});
      }
    }
  }
  std::vector<ExactResonanceEntry> out;
  for (auto& [key, e] : merged) out.push_back(std::move(e));
  std::sort(out.begin(), out.end(),
            [](const ExactResonanceEntry& a, const ExactResonanceEntry& b) { return b.value < a.value; });
  return out;
}

}  // namespace wittenflow
