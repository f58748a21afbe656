#pragma once

// Matrix-free restarted GMRES with right preconditioning.

#include <cmath>
#include <vector>

namespace gcy {

struct KrylovResult {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

namespace detail {
inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}
inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }
}  // namespace detail

/// Solves op(x) = rhs. `op(in, out)` and `precond(in, out)` write into `out`.
/// `x` holds the initial guess on entry and the solution on exit. The
/// stopping test is on the true residual ||rhs - op(x)|| <= tol * ||rhs||,
/// or <= abs_tol when that is larger.
template <class Op, class Precond>
KrylovResult gmres(Op&& op, Precond&& precond, const std::vector<double>& rhs, std::vector<double>& x, double tol,
                   int max_iters, int restart = 30, double abs_tol = 0.0) {
  const std::size_t m = rhs.size();
  KrylovResult result;
  const double rhs_norm = detail::norm2(rhs);
  if (rhs_norm == 0.0 || rhs_norm <= abs_tol) {
    std::fill(x.begin(), x.end(), 0.0);
    result.converged = true;
    return result;
  }
  std::vector<double> r(m), w(m), z(m);
  std::vector<std::vector<double>> v(restart + 1, std::vector<double>(m));
  std::vector<std::vector<double>> h(restart + 1, std::vector<double>(restart, 0.0));
  std::vector<double> cs(restart), sn(restart), g(restart + 1), y(restart);

  // Relative tolerance measured against rhs_norm.
  tol = std::max(tol, abs_tol / rhs_norm);
  while (result.iterations < max_iters) {
    op(x, w);
    for (std::size_t i = 0; i < m; ++i) r[i] = rhs[i] - w[i];
    double beta = detail::norm2(r);
    result.relative_residual = beta / rhs_norm;
    if (result.relative_residual <= tol) {
      result.converged = true;
      return result;
    }
    for (std::size_t i = 0; i < m; ++i) v[0][i] = r[i] / beta;
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = beta;
    int k = 0;
    for (; k < restart && result.iterations < max_iters; ++k, ++result.iterations) {
      precond(v[k], z);
      op(z, w);
      for (int j = 0; j <= k; ++j) {  // modified Gram-Schmidt
        h[j][k] = detail::dot(w, v[j]);
        for (std::size_t i = 0; i < m; ++i) w[i] -= h[j][k] * v[j][i];
      }
      h[k + 1][k] = detail::norm2(w);
      if (h[k + 1][k] != 0.0)
        for (std::size_t i = 0; i < m; ++i) v[k + 1][i] = w[i] / h[k + 1][k];
      for (int j = 0; j < k; ++j) {
        const double t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
        h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
        h[j][k] = t;
      }
      const double denom = std::hypot(h[k][k], h[k + 1][k]);
      cs[k] = denom == 0.0 ? 1.0 : h[k][k] / denom;
      sn[k] = denom == 0.0 ? 0.0 : h[k + 1][k] / denom;
      h[k][k] = denom;
      h[k + 1][k] = 0.0;
      g[k + 1] = -sn[k] * g[k];
      g[k] = cs[k] * g[k];
      if (std::abs(g[k + 1]) / rhs_norm <= 0.1 * tol || h[k][k] == 0.0) {
        ++k;
        ++result.iterations;
        break;
      }
    }
    // Back substitution and update x += M (V y).
    for (int i = k - 1; i >= 0; --i) {
      double s = g[i];
      for (int j = i + 1; j < k; ++j) s -= h[i][j] * y[j];
      y[i] = h[i][i] == 0.0 ? 0.0 : s / h[i][i];
    }
    std::fill(w.begin(), w.end(), 0.0);
    for (int j = 0; j < k; ++j)
      for (std::size_t i = 0; i < m; ++i) w[i] += y[j] * v[j][i];
    precond(w, z);
    for (std::size_t i = 0; i < m; ++i) x[i] += z[i];
  }
  op(x, w);
  for (std::size_t i = 0; i < m; ++i) r[i] = rhs[i] - w[i];
  result.relative_residual = detail::norm2(r) / rhs_norm;
  result.converged = result.relative_residual <= tol;
  return result;
}

}  // namespace gcy
