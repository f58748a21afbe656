#pragma once

// Eigenvalues of g relative to alpha, the P map on eigenvalues, the
// log-product symmetric function and its first derivatives, and the
// subsolution diagnostics built on them.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "gcy/grid_field.hpp"

namespace gcy {

/// Eigenvalues of A = alpha^{-1} g sorted descending, with alpha-orthonormal
/// eigenvectors as columns.
struct EigenPair {
  RVec lambda;
  CMat vectors;
};

inline EigenPair generalized_eigen(const CMat& g, const CMat& alpha, std::size_t point) {
  Eigen::LLT<CMat> llt(alpha);
  if (llt.info() != Eigen::Success) throw ConeViolation("generalized_eigen: alpha is not positive definite", point, 0.0);
  GenEig e = generalized_eigen(g, alpha);
  return {std::move(e.values), std::move(e.vectors)};
}

inline EigenPair generalized_eigen(const HermitianTensorField& g, const HermitianTensorField& alpha,
                                   std::size_t point) {
  require_same_grid(g.grid(), alpha.grid());
  return generalized_eigen(g.at(point), alpha.at(point), point);
}

/// mu_k = (1/(n-1)) sum_{i != k} lambda_i.
inline RVec p_map(const RVec& lambda) {
  const auto n = lambda.size();
  if (n < 2) throw InvalidArgument("p_map needs n >= 2");
  const double s = lambda.sum();
  RVec mu(n);
  for (Eigen::Index k = 0; k < n; ++k) mu(k) = (s - lambda(k)) / static_cast<double>(n - 1);
  return mu;
}

namespace detail {
inline RVec cone_mu(const RVec& lambda, const char* who) {
  const RVec mu = p_map(lambda);
  const double scale = 1.0 + mu.cwiseAbs().maxCoeff();
  Eigen::Index k;
  const double lo = mu.minCoeff(&k);
  if (lo <= 1e-12 * scale) throw ConeViolation(std::string(who) + ": P(lambda) is outside the positive cone", 0, lo);
  return mu;
}
}  // namespace detail

/// log prod_k mu_k with mu = p_map(lambda).
inline double f_log(const RVec& lambda) {
  const RVec mu = detail::cone_mu(lambda, "f_log");
  double s = 0.0;
  for (Eigen::Index k = 0; k < mu.size(); ++k) s += std::log(mu(k));
  return s;
}

/// f_k = (1/(n-1)) sum_{i != k} 1/mu_i.
inline RVec f_log_gradient(const RVec& lambda) {
  const RVec mu = detail::cone_mu(lambda, "f_log_gradient");
  const auto n = mu.size();
  const RVec inv = mu.cwiseInverse();
  const double s = inv.sum();
  RVec f(n);
  for (Eigen::Index k = 0; k < n; ++k) f(k) = (s - inv(k)) / static_cast<double>(n - 1);
  return f;
}

/// Hermitian Phi = V diag(f) V^dagger with dF = tr(Phi dg) for
/// F(g) = f_log(eigenvalues of alpha^{-1} g). Diagonal with entries f_k in an
/// alpha-orthonormal eigenframe of g.
inline CMat F_first_derivative(const CMat& g, const CMat& alpha) {
  const EigenPair e = generalized_eigen(g, alpha, 0);
  const RVec f = f_log_gradient(e.lambda);
  return hermitian_part(e.vectors * f.cast<cplx>().asDiagonal() * e.vectors.adjoint());
}

inline CMat F_first_derivative(const HermitianTensorField& g, const HermitianTensorField& alpha, std::size_t point) {
  require_same_grid(g.grid(), alpha.grid());
  return F_first_derivative(g.at(point), alpha.at(point));
}

struct SubsolutionReport {
  bool positive = true;
  double min_eigenvalue = std::numeric_limits<double>::infinity();
  std::size_t worst_point = 0;
};

/// gtilde is a subsolution at u iff it is positive definite relative to alpha
/// at every point.
inline SubsolutionReport c_subsolution_check(const HermitianTensorField& gtilde, const HermitianTensorField& alpha) {
  require_same_grid(gtilde.grid(), alpha.grid());
  SubsolutionReport r;
  const int n = gtilde.n();
  for (std::size_t p = 0; p < gtilde.grid().size(); ++p) {
    const double lo = generalized_eigenvalues(gtilde.at(p), alpha.at(p))(n - 1);
    if (lo < r.min_eigenvalue) {
      r.min_eigenvalue = lo;
      r.worst_point = p;
    }
  }
  r.positive = r.min_eigenvalue > 0.0;
  return r;
}

enum class ProbeCase { case_a, case_b, below_R, neither };

inline const char* to_string(ProbeCase c) {
  switch (c) {
    case ProbeCase::case_a: return "case_a";
    case ProbeCase::case_b: return "case_b";
    case ProbeCase::below_R: return "below_R";
    case ProbeCase::neither: return "neither";
  }
  return "?";
}

struct ProbeReport {
  ProbeCase label = ProbeCase::neither;
  double sum_f = 0.0;
  /// sum_k f_k(chi_kk - lambda_k) - kappa sum_k f_k
  double case_a_margin = 0.0;
  /// min_k f_k - kappa sum_k f_k
  double case_b_margin = 0.0;
  /// sum_k f_k >= n e^{-h/n}
  bool sum_f_lower_bound = false;
  /// sum_k f_k > kappa
  bool sum_f_above_kappa = false;
};

/// Classifies an eigenvalue vector for the a priori estimate: below_R when
/// |lambda| <= R, otherwise case_a if the subsolution direction dominates,
/// case_b if every f_k is a fixed fraction of the sum, else neither.
inline ProbeReport subsolution_dichotomy_probe(const RVec& lambda, const RVec& chi_diag, double h, double kappa,
                                               double R = 0.0) {
  if (chi_diag.size() != lambda.size()) throw InvalidArgument("probe: chi_diag has the wrong length");
  const RVec f = f_log_gradient(lambda);
  const auto n = static_cast<double>(lambda.size());
  ProbeReport r;
  r.sum_f = f.sum();
  r.case_a_margin = f.dot(chi_diag - lambda) - kappa * r.sum_f;
  r.case_b_margin = f.minCoeff() - kappa * r.sum_f;
  r.sum_f_lower_bound = r.sum_f >= n * std::exp(-h / n) * (1.0 - 1e-12);
  r.sum_f_above_kappa = r.sum_f > kappa;
  if (lambda.norm() <= R)
    r.label = ProbeCase::below_R;
  else if (r.case_a_margin > 0.0)
    r.label = ProbeCase::case_a;
  else if (r.case_b_margin > 0.0)
    r.label = ProbeCase::case_b;
  else
    r.label = ProbeCase::neither;
  return r;
}

}  // namespace gcy
