#pragma once

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "wittenflow/core.hpp"
#include "wittenflow/dec.hpp"

namespace wittenflow {

struct HbarResolutionError : DomainError {
  explicit HbarResolutionError(const std::string& m) : DomainError(m) {}
};

// Largest |f(c) - f(c')| over incident cell pairs; the resolution rule asks
// for hbar >= 4 times this before spectra count as resolved.
inline double max_cell_f_jump(const DecComplex& dec) {
  double m = 0.0;
  for (int e = 0; e < dec.mesh.num_edges(); ++e) {
    m = std::max(m, std::abs(dec.f_vert[dec.mesh.edges[e][0]] - dec.f_edge[e]));
    m = std::max(m, std::abs(dec.f_vert[dec.mesh.edges[e][1]] - dec.f_edge[e]));
  }
  for (int t = 0; t < dec.mesh.num_triangles(); ++t)
    for (int c = 0; c < 3; ++c)
      m = std::max(m, std::abs(dec.f_edge[dec.mesh.tri_edge[t][c]] - dec.f_tri[t]));
  return m;
}

// Twisted coboundary D_k = E_{k+1}(hbar)^{-1} d_k E_k(hbar), assembled
// entrywise as (+-1) e^{(f(c) - f(c'))/hbar} from local f differences only.
// D_{k+1} D_k = 0 to machine precision for every hbar.
inline SparseMat twisted_differential(const DecComplex& dec, double hbar, int k) {
  if (hbar <= 0) throw DomainError("twisted_differential: hbar must be positive");
  if (k < 0 || k > 1) throw DomainError("twisted_differential: degree out of range");
  const SparseMat& d = (k == 0) ? dec.d0 : dec.d1;
  const VecX& f_lo = dec.f_cells(k);
  const VecX& f_hi = dec.f_cells(k + 1);

  SparseMat D = d;
  for (int col = 0; col < D.outerSize(); ++col) {
    for (SparseMat::InnerIterator it(D, col); it; ++it) {
      double arg = (f_lo[it.col()] - f_hi[it.row()]) / hbar;
      if (std::abs(arg) > 700.0)
        throw HbarResolutionError("twisted_differential: hbar too small for this mesh");
      it.valueRef() *= std::exp(arg);
    }
  }
  return D;
}

// Witten operator W = (hbar/2)(D_k^dag D_k + D_{k-1} D_{k-1}^dag), stored in
// star^{1/2}-symmetrized coordinates; eigenvectors are mapped back to plain
// cochain coordinates on request.
struct WittenOperator {
  int degree_k = 0;
  double hbar = 0.0;
  SparseMat W_sym;
  VecX star_k;
  double scale = 0.0;       // infinity norm estimate of W
  bool under_resolved = false;
};

inline WittenOperator witten_matrix(const DecComplex& dec, double hbar, int k) {
  if (k < 0 || k > 2) throw DomainError("witten_matrix: degree out of range");
  WittenOperator op;
  op.degree_k = k;
  op.hbar = hbar;
  op.star_k = dec.star(k);
  VecX shalf = op.star_k.cwiseSqrt();
  VecX shalf_inv = shalf.cwiseInverse();

  SparseMat W(dec.dim(k), dec.dim(k));
  if (k < 2) {
    SparseMat D = twisted_differential(dec, hbar, k);
    // (hbar/2) S^{-1/2} D^T star_{k+1} D S^{-1/2}
    SparseMat Ds = D * SparseMat(shalf_inv.asDiagonal());
    SparseMat M = SparseMat(dec.star(k + 1).asDiagonal()) * Ds;
    W += SparseMat(Ds.transpose() * M);
  }
  if (k > 0) {
    SparseMat D = twisted_differential(dec, hbar, k - 1);
    // (hbar/2) S^{1/2} D star_{k-1}^{-1} D^T S^{1/2}
    SparseMat Dt = SparseMat(shalf.asDiagonal()) * D;
    SparseMat M = SparseMat(dec.star(k - 1).cwiseInverse().asDiagonal()) * SparseMat(Dt.transpose());
    W += SparseMat(Dt * M);
  }
  W *= 0.5 * hbar;
  SparseMat Wt = SparseMat(W.transpose());
  op.W_sym = 0.5 * (W + Wt);  // kill roundoff asymmetry
  op.W_sym.prune(0.0);

  double norm = 0.0;
  VecX rowsum = VecX::Zero(op.W_sym.rows());
  for (int col = 0; col < op.W_sym.outerSize(); ++col)
    for (SparseMat::InnerIterator it(op.W_sym, col); it; ++it) rowsum[it.row()] += std::abs(it.value());
  op.scale = rowsum.maxCoeff();
  op.under_resolved = hbar < 4.0 * max_cell_f_jump(dec);
  return op;
}

struct EigenPairs {
  VecX values;   // ascending
  MatX vectors;  // raw cochain coordinates, star-orthonormal columns
};

struct LowSpectrumOptions {
  double shift = 1.0;        // inverse-iteration shift offset (absolute)
  double tol_rel = 1e-10;    // residual tolerance relative to the operator scale
  int max_iterations = 500;
  int dense_threshold = 3000;
  std::uint64_t seed = 12345;
};

// m smallest eigenpairs of the Witten operator: dense below the dimension
// threshold, shift-invert block subspace iteration above. Deterministic for
// a fixed seed; residuals are checked against tol_rel * scale.
inline EigenPairs low_spectrum(const WittenOperator& op, int m, LowSpectrumOptions opts = {}) {
  const int n = static_cast<int>(op.W_sym.rows());
  if (m < 1 || m > n) throw DomainError("low_spectrum: bad eigenpair count");
  EigenPairs out;
  VecX shalf_inv = op.star_k.cwiseSqrt().cwiseInverse();

  if (n <= opts.dense_threshold) {
    MatX dense = MatX(op.W_sym);
    Eigen::SelfAdjointEigenSolver<MatX> es(dense);
    if (es.info() != Eigen::Success) throw NumericalError("dense eigensolver failed");
    out.values = es.eigenvalues().head(m);
    out.vectors = shalf_inv.asDiagonal() * es.eigenvectors().leftCols(m);
    return out;
  }

  const int p = std::min(n, m + std::max(10, m));
  SparseMat K = op.W_sym;
  for (int i = 0; i < n; ++i) K.coeffRef(i, i) += opts.shift;
  Eigen::SimplicialLDLT<SparseMat> solver;
  solver.compute(K);
  if (solver.info() != Eigen::Success)
    throw NumericalError("low_spectrum: factorization of the shifted operator failed");

  auto rng = seeded_rng(opts.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  MatX X(n, p);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < n; ++i) X(i, j) = gauss(rng);

  MatX ritz_vectors;
  VecX ritz_values;
  double resid = 1e300;
  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    MatX Y = solver.solve(X);
    Eigen::HouseholderQR<MatX> qr(Y);
    MatX Q = qr.householderQ() * MatX::Identity(n, p);
    MatX WQ = op.W_sym * Q;
    MatX B = Q.transpose() * WQ;
    B = 0.5 * (B + B.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<MatX> es(B);
    ritz_values = es.eigenvalues();
    ritz_vectors = Q * es.eigenvectors();
    // residuals of the m requested pairs
    MatX R = op.W_sym * ritz_vectors.leftCols(m) -
             ritz_vectors.leftCols(m) * ritz_values.head(m).asDiagonal();
    resid = R.colwise().norm().maxCoeff();
    if (resid <= opts.tol_rel * std::max(op.scale, 1e-300)) {
      out.values = ritz_values.head(m);
      out.vectors = shalf_inv.asDiagonal() * ritz_vectors.leftCols(m);
      return out;
    }
    X = ritz_vectors;
  }
  throw NumericalError("low_spectrum: subspace iteration did not converge");
}

// Full spectrum (dense path only; intended for coarse meshes).
inline VecX full_spectrum(const WittenOperator& op) {
  MatX dense = MatX(op.W_sym);
  Eigen::SelfAdjointEigenSolver<MatX> es(dense);
  if (es.info() != Eigen::Success) throw NumericalError("dense eigensolver failed");
  return es.eigenvalues();
}

// ---------------------------------------------------------------------------
// Spectral projectors
// ---------------------------------------------------------------------------

// Projector onto the span of eigenvectors whose -lambda lies in
// [center - halfwidth, center + halfwidth]; applications use the star inner
// product, so Pi^2 = Pi and disjoint windows give orthogonal ranges.
class SpectralProjector {
 public:
  SpectralProjector(const DecComplex& dec, int degree, const EigenPairs& eigs, double center,
                    double halfwidth)
      : star_(dec.star(degree)) {
    double lo = -center - halfwidth, hi = -center + halfwidth;  // in lambda coordinates
    std::vector<int> sel;
    for (int j = 0; j < eigs.values.size(); ++j) {
      double lam = eigs.values[j];
      if (std::abs(lam - lo) < 1e-8 || std::abs(lam - hi) < 1e-8)
        throw WindowError("spectral projector: window edge collides with an eigenvalue");
      if (lam > lo && lam < hi) sel.push_back(j);
    }
    V_.resize(eigs.vectors.rows(), sel.size());
    for (size_t i = 0; i < sel.size(); ++i) V_.col(i) = eigs.vectors.col(sel[i]);
  }

  int rank() const { return static_cast<int>(V_.cols()); }

  VecX apply(const VecX& x) const {
    if (V_.cols() == 0) return VecX::Zero(x.size());
    VecX coeff = V_.transpose() * star_.cwiseProduct(x);
    return V_ * coeff;
  }

  const MatX& basis() const { return V_; }

 private:
  VecX star_;
  MatX V_;
};

// ---------------------------------------------------------------------------
// Conjugation consistency
// ---------------------------------------------------------------------------

// A test 0-form with analytic Lie derivative along the ascending gradient
// field and analytic (geometer's, nonnegative) Laplacian.
struct TestForm {
  std::function<double(const Vec3&)> value;
  std::function<double(const Vec3&)> lie;        // (V_f . grad) u
  std::function<double(const Vec3&)> laplacian;  // Delta_g u >= 0 convention
};

// Residuals r_level of || E W E^{-1} u - (L_V u + (hbar/2) Delta u) ||_star
// / ||u||_star on a sequence of meshes; the smooth conjugation identity
// makes these decrease under refinement.
inline std::vector<double> conjugation_consistency(const MorseModel& model, double hbar,
                                                   const std::vector<int>& levels,
                                                   const TestForm& u) {
  std::vector<double> residuals;
  for (int level : levels) {
    TriMesh mesh = build_mesh(model, level);
    DecComplex dec = build_dec(mesh, model);
    const int nv = mesh.num_vertices();
    VecX uv(nv), target(nv), expf(nv);
    for (int v = 0; v < nv; ++v) {
      const Vec3& p = mesh.vertices[v];
      uv[v] = u.value(p);
      target[v] = u.lie(p) + 0.5 * hbar * u.laplacian(p);
      expf[v] = std::exp(dec.f_vert[v] / hbar);
    }
    SparseMat D = twisted_differential(dec, hbar, 0);
    // raw (unsymmetrized) Witten action on 0-cochains
    VecX w = D * expf.cwiseInverse().cwiseProduct(uv);
    w = dec.star1.cwiseProduct(w);
    w = VecX(D.transpose() * w);
    w = 0.5 * hbar * dec.star0.cwiseInverse().cwiseProduct(w);
    VecX lhs = expf.cwiseProduct(w);
    residuals.push_back(star_norm(dec, 0, VecX(lhs - target)) / star_norm(dec, 0, uv));
  }
  return residuals;
}

}  // namespace wittenflow
