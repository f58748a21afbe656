#pragma once

// Small dense complex linear algebra used at every grid point. Matrices have
// a compile-time maximum size so per-point work never touches the heap.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>

#include "gcy/errors.hpp"

namespace gcy {

using cplx = std::complex<double>;

inline constexpr int kMaxDim = 6;

using CMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;
using CVec = Eigen::Matrix<cplx, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using RVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

inline constexpr double kPi = 3.14159265358979323846;

/// Result of the generalized Hermitian eigenproblem G v = lambda A v.
/// Eigenvalues are sorted descending; columns of `vectors` satisfy
/// v_i^dagger A v_j = delta_ij.
struct GenEig {
  RVec values;
  CMat vectors;
};

inline CMat hermitian_part(const CMat& m) { return (m + m.adjoint()) * 0.5; }

/// tr(X Y) without forming the product.
inline cplx trace_product(const CMat& x, const CMat& y) {
  cplx s{0.0, 0.0};
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) s += x(i, j) * y(j, i);
  return s;
}

inline GenEig generalized_eigen(const CMat& g, const CMat& a) {
  Eigen::GeneralizedSelfAdjointEigenSolver<CMat> es(hermitian_part(g), hermitian_part(a),
                                                    Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (es.info() != Eigen::Success) throw InvalidArgument("generalized eigenproblem failed: metric not positive");
  const Eigen::Index n = g.rows();
  GenEig out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = es.eigenvalues()(n - 1 - k);
    out.vectors.col(k) = es.eigenvectors().col(n - 1 - k);
  }
  return out;
}

/// Eigenvalues only, sorted descending. Closed form for n = 2.
inline RVec generalized_eigenvalues(const CMat& g, const CMat& a) {
  const Eigen::Index n = g.rows();
  if (n == 2) {
    const double a11 = a(0, 0).real(), a22 = a(1, 1).real();
    const double g11 = g(0, 0).real(), g22 = g(1, 1).real();
    const double det_a = a11 * a22 - std::norm(a(0, 1));
    const double det_g = g11 * g22 - std::norm(g(0, 1));
    const double b = g11 * a22 + a11 * g22 - 2.0 * (g(0, 1) * std::conj(a(0, 1))).real();
    const double disc = std::sqrt(std::max(0.0, b * b - 4.0 * det_a * det_g));
    RVec out(2);
    // Stable root pair: q carries the sign of b.
    const double q = 0.5 * (b + (b >= 0 ? disc : -disc));
    double r1 = q / det_a;
    double r2 = (q != 0.0) ? det_g / q : 0.0;
    if (r1 < r2) std::swap(r1, r2);
    out(0) = r1;
    out(1) = r2;
    return out;
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<CMat> es(hermitian_part(g), hermitian_part(a),
                                                    Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
  if (es.info() != Eigen::Success) throw InvalidArgument("generalized eigenproblem failed: metric not positive");
  RVec out(n);
  for (Eigen::Index k = 0; k < n; ++k) out(k) = es.eigenvalues()(n - 1 - k);
  return out;
}

inline double real_det(const CMat& m) { return m.determinant().real(); }

/// Adjugate det(M) M^{-1}, valid for invertible M.
inline CMat adjugate(const CMat& m) { return m.inverse() * m.determinant(); }

}  // namespace gcy
