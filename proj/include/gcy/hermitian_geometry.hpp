#pragma once

// Geometric operators of a Hermitian metric alpha on the torus: Chern
// connection and torsion, the P_alpha map, Hodge-star powers on
// (n-1, n-1)-forms, Chern-Ricci form, Gauduchon defect and conformal factor.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "gcy/exterior.hpp"
#include "gcy/grid_field.hpp"
#include "gcy/krylov.hpp"

namespace gcy {

// ---------------------------------------------------------------------------
// Pointwise kernels

/// P_alpha(beta) = ((tr_alpha beta) alpha - beta) / (n - 1).
inline CMat p_alpha(const CMat& beta, const CMat& alpha, const CMat& alpha_inv) {
  const auto n = static_cast<double>(alpha.rows());
  const cplx tr = trace_product(alpha_inv, beta);
  return (alpha * tr.real() - beta) / (n - 1.0);
}

inline CMat p_alpha(const CMat& beta, const CMat& alpha) { return p_alpha(beta, alpha, alpha.inverse()); }

/// Inverse of P_alpha: (tr_alpha B) alpha - (n - 1) B.
inline CMat p_alpha_inverse(const CMat& b, const CMat& alpha, const CMat& alpha_inv) {
  const auto n = static_cast<double>(alpha.rows());
  const cplx tr = trace_product(alpha_inv, b);
  return alpha * tr.real() - b * (n - 1.0);
}

inline CMat p_alpha_inverse(const CMat& b, const CMat& alpha) { return p_alpha_inverse(b, alpha, alpha.inverse()); }

namespace detail {
/// alpha V diag(d) V^dagger alpha: the tensor whose eigenvalues in the
/// alpha-orthonormal frame V are d.
inline CMat from_frame(const CMat& alpha, const CMat& v, const RVec& d) {
  CMat mid = v * d.cast<cplx>().asDiagonal() * v.adjoint();
  return hermitian_part(alpha * mid * alpha);
}
}  // namespace detail

/// (1/(n-1)!) *_alpha (h^{n-1}) as a (1,1)-tensor: eigenvalues a_i of h in an
/// alpha-orthonormal frame become prod_{k != i} a_k.
inline CMat star_power(const CMat& h, const CMat& alpha) {
  const GenEig e = generalized_eigen(h, alpha);
  const auto n = e.values.size();
  if (e.values(n - 1) <= 0.0) throw ConeViolation("star_power: h is not positive", 0, e.values(n - 1));
  RVec d(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i) = 1.0;
    for (Eigen::Index k = 0; k < n; ++k)
      if (k != i) d(i) *= e.values(k);
  }
  return detail::from_frame(alpha, e.vectors, d);
}

/// Inverse of star_power: eigenvalues nu_i map to (prod nu)^{1/(n-1)} / nu_i.
inline CMat star_power_inverse(const CMat& g, const CMat& alpha) {
  const GenEig e = generalized_eigen(g, alpha);
  const auto n = e.values.size();
  if (e.values(n - 1) <= 0.0) throw ConeViolation("star_power_inverse: G is not positive", 0, e.values(n - 1));
  double prod = 1.0;
  for (Eigen::Index i = 0; i < n; ++i) prod *= e.values(i);
  const double root = std::pow(prod, 1.0 / static_cast<double>(n - 1));
  RVec d(n);
  for (Eigen::Index i = 0; i < n; ++i) d(i) = root / e.values(i);
  return detail::from_frame(alpha, e.vectors, d);
}

// ---------------------------------------------------------------------------
// Field-level maps

template <class Fn>
HermitianTensorField map_points(const HermitianTensorField& a, const HermitianTensorField& b, Fn&& fn,
                                HermitianTensorField::Kind kind = HermitianTensorField::Kind::plain) {
  require_same_grid(a.grid(), b.grid());
  return HermitianTensorField::generate(a.grid(), [&](std::size_t p) { return fn(a.at(p), b.at(p)); }, kind);
}

inline HermitianTensorField p_alpha(const HermitianTensorField& beta, const HermitianTensorField& alpha) {
  return map_points(beta, alpha, [](const CMat& b, const CMat& a) { return p_alpha(b, a); });
}

inline HermitianTensorField p_alpha_inverse(const HermitianTensorField& b, const HermitianTensorField& alpha) {
  return map_points(b, alpha, [](const CMat& x, const CMat& a) { return p_alpha_inverse(x, a); });
}

/// Reports the worst point when the pointwise kernel leaves the positive cone.
template <class Kernel>
HermitianTensorField map_positive(const HermitianTensorField& h, const HermitianTensorField& alpha, Kernel&& kernel,
                                  const char* what) {
  require_same_grid(h.grid(), alpha.grid());
  const int n = h.n();
  double worst = HUGE_VAL;
  std::size_t worst_p = 0;
  for (std::size_t p = 0; p < h.grid().size(); ++p) {
    const RVec ev = generalized_eigenvalues(h.at(p), alpha.at(p));
    if (ev(n - 1) < worst) {
      worst = ev(n - 1);
      worst_p = p;
    }
  }
  if (worst <= 0.0) throw ConeViolation(what, worst_p, worst);
  return map_points(h, alpha, kernel, HermitianTensorField::Kind::metric);
}

inline HermitianTensorField star_power(const HermitianTensorField& h, const HermitianTensorField& alpha) {
  return map_positive(h, alpha, [](const CMat& x, const CMat& a) { return star_power(x, a); },
                      "star_power: h is not positive");
}

inline HermitianTensorField star_power_inverse(const HermitianTensorField& g, const HermitianTensorField& alpha) {
  return map_positive(g, alpha, [](const CMat& x, const CMat& a) { return star_power_inverse(x, a); },
                      "star_power_inverse: G is not positive");
}

// ---------------------------------------------------------------------------
// Connection and torsion

/// Christoffel symbols Gamma^k_{ij} = alpha^{k lbar} d_i alpha_{j lbar} of the
/// Chern connection, stored as [(p*n + k)*n + i]*n + j.
class ChristoffelField {
 public:
  ChristoffelField(GridSpec grid, CBuffer data) : grid_(grid), data_(std::make_shared<const CBuffer>(std::move(data))) {
    const std::size_t n = grid.n();
    if (data_->size() != grid.size() * n * n * n) throw InvalidArgument("christoffel field size mismatch");
  }
  const GridSpec& grid() const noexcept { return grid_; }
  cplx operator()(std::size_t p, int k, int i, int j) const {
    const int n = grid_.n();
    return (*data_)[((p * n + k) * n + i) * n + j];
  }

 private:
  GridSpec grid_;
  std::shared_ptr<const CBuffer> data_;
};

namespace detail {
/// First holomorphic derivatives d_i alpha_{j l} for all i, j, l, stored as
/// [((p*n + i)*n + j)*n + l].
inline CBuffer metric_derivatives(const HermitianTensorField& alpha) {
  const GridSpec& g = alpha.grid();
  const int n = g.n();
  CBuffer out(g.size() * n * n * n);
  auto sp = Spectral::get(g);
  for (int j = 0; j < n; ++j) {
    for (int l = 0; l < n; ++l) {
      CBuffer spec(g.size());
      for (std::size_t p = 0; p < g.size(); ++p) spec[p] = alpha.entry(p, j, l);
      sp->forward(spec);
      for (int i = 0; i < n; ++i) {
        auto d = apply_symbol(g, spec, [i](const auto& k) { return Spectral::dz_symbol(k, i); });
        for (std::size_t p = 0; p < g.size(); ++p) out[((p * n + i) * n + j) * n + l] = d[p];
      }
    }
  }
  return out;
}
}  // namespace detail

inline ChristoffelField chern_connection(const HermitianTensorField& alpha) {
  if (!alpha.is_metric()) throw InvalidArgument("chern_connection requires a metric");
  const GridSpec& g = alpha.grid();
  const int n = g.n();
  const CBuffer da = detail::metric_derivatives(alpha);
  CBuffer gamma(g.size() * n * n * n);
  for (std::size_t p = 0; p < g.size(); ++p) {
    const CMat ainv = alpha.at(p).inverse();
    for (int i = 0; i < n; ++i) {
      CMat di(n, n);
      for (int j = 0; j < n; ++j)
        for (int l = 0; l < n; ++l) di(j, l) = da[((p * n + i) * n + j) * n + l];
      const CMat prod = di * ainv;  // prod(j, k) = Gamma^k_{ij}
      for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j) gamma[((p * n + k) * n + i) * n + j] = prod(j, k);
    }
  }
  return ChristoffelField(g, std::move(gamma));
}

/// Torsion T^k_{ij} = Gamma^k_{ij} - Gamma^k_{ji} and its lowered form
/// T_{ij lbar} = T^k_{ij} alpha_{k lbar}. Only i < j is stored; the other
/// half is the negative, so antisymmetry holds exactly. A field built from a
/// constant metric is marked identically zero and stores nothing. A `full`
/// field stores all n^3 components per point without any symmetry.
class TorsionField {
 public:
  enum class Layout { antisymmetric, full };

  TorsionField(GridSpec grid, CBuffer upper, CBuffer lower, Layout layout = Layout::antisymmetric)
      : grid_(grid),
        upper_(std::make_shared<const CBuffer>(std::move(upper))),
        lower_(std::make_shared<const CBuffer>(std::move(lower))),
        layout_(layout),
        zero_(false) {
    const std::size_t n = grid.n();
    const std::size_t per = layout == Layout::full ? n * n * n : n * (n * (n - 1) / 2);
    if (upper_->size() != grid.size() * per || lower_->size() != grid.size() * per)
      throw InvalidArgument("torsion field size mismatch");
  }
  static TorsionField zero(GridSpec grid) {
    TorsionField t(grid);
    t.zero_ = true;
    return t;
  }

  const GridSpec& grid() const noexcept { return grid_; }
  bool identically_zero() const noexcept { return zero_; }
  Layout layout() const noexcept { return layout_; }

  /// T^k_{ij}.
  cplx upper(std::size_t p, int k, int i, int j) const { return get(*upper_, p, k, i, j); }
  /// T_{ij lbar}.
  cplx lower(std::size_t p, int i, int j, int l) const { return get(*lower_, p, l, i, j); }

  /// Pair index for i < j within the n(n-1)/2 block.
  static int pair_index(int n, int i, int j) { return i * n - i * (i + 1) / 2 + (j - i - 1); }

 private:
  explicit TorsionField(GridSpec grid)
      : grid_(grid),
        upper_(std::make_shared<const CBuffer>()),
        lower_(std::make_shared<const CBuffer>()),
        layout_(Layout::antisymmetric),
        zero_(true) {}

  cplx get(const CBuffer& buf, std::size_t p, int k, int i, int j) const {
    if (zero_) return {0.0, 0.0};
    const int n = grid_.n();
    if (layout_ == Layout::full) return buf[((p * n + k) * n + i) * n + j];
    if (i == j) return {0.0, 0.0};
    const int pairs = n * (n - 1) / 2;
    if (i < j) return buf[(p * n + k) * pairs + pair_index(n, i, j)];
    return -buf[(p * n + k) * pairs + pair_index(n, j, i)];
  }

  GridSpec grid_;
  std::shared_ptr<const CBuffer> upper_;
  std::shared_ptr<const CBuffer> lower_;
  Layout layout_;
  bool zero_;
};

inline bool is_constant(const HermitianTensorField& alpha) {
  if (alpha.is_constant()) return true;
  const auto e = alpha.entries();
  const std::size_t block = static_cast<std::size_t>(alpha.n() * alpha.n());
  for (std::size_t i = block; i < e.size(); ++i)
    if (e[i] != e[i % block]) return false;
  return true;
}

inline TorsionField torsion_from(const HermitianTensorField& alpha, const ChristoffelField& gamma) {
  const GridSpec& g = alpha.grid();
  const int n = g.n();
  const int pairs = n * (n - 1) / 2;
  CBuffer upper(g.size() * n * pairs), lower(g.size() * n * pairs);
  for (std::size_t p = 0; p < g.size(); ++p) {
    const CMat a = alpha.at(p);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const int q = TorsionField::pair_index(n, i, j);
        for (int k = 0; k < n; ++k) upper[(p * n + k) * pairs + q] = gamma(p, k, i, j) - gamma(p, k, j, i);
        for (int l = 0; l < n; ++l) {
          cplx s{0.0, 0.0};
          for (int k = 0; k < n; ++k) s += upper[(p * n + k) * pairs + q] * a(k, l);
          lower[(p * n + l) * pairs + q] = s;
        }
      }
  }
  return TorsionField(g, std::move(upper), std::move(lower));
}

inline TorsionField torsion(const HermitianTensorField& alpha) {
  if (!alpha.is_metric()) throw InvalidArgument("torsion requires a metric");
  if (is_constant(alpha)) return TorsionField::zero(alpha.grid());
  return torsion_from(alpha, chern_connection(alpha));
}

/// Deliberately wrong torsion: the Christoffel symbols themselves, without
/// antisymmetrization. Used as a negative control for the structural checks.
inline TorsionField connection_as_torsion(const HermitianTensorField& alpha) {
  const GridSpec& g = alpha.grid();
  const int n = g.n();
  const ChristoffelField gamma = chern_connection(alpha);
  const std::size_t per = static_cast<std::size_t>(n * n * n);
  CBuffer upper(g.size() * per), lower(g.size() * per);
  for (std::size_t p = 0; p < g.size(); ++p) {
    const CMat a = alpha.at(p);
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) upper[((p * n + k) * n + i) * n + j] = gamma(p, k, i, j);
    for (int l = 0; l < n; ++l)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          cplx s{0.0, 0.0};
          for (int k = 0; k < n; ++k) s += gamma(p, k, i, j) * a(k, l);
          lower[((p * n + l) * n + i) * n + j] = s;
        }
  }
  return TorsionField(g, std::move(upper), std::move(lower), TorsionField::Layout::full);
}

// ---------------------------------------------------------------------------
// Curvature and Gauduchon condition

inline ScalarField log_det_ratio(const HermitianTensorField& omega, const HermitianTensorField* alpha = nullptr) {
  CBuffer v(omega.grid().size());
  for (std::size_t p = 0; p < v.size(); ++p) {
    double ld = std::log(real_det(omega.at(p)));
    if (alpha != nullptr) ld -= std::log(real_det(alpha->at(p)));
    v[p] = ld;
  }
  return ScalarField::projected_real(omega.grid(), std::move(v));
}

/// Chern-Ricci form -sqrt(-1) d dbar log det(omega), as a Hermitian field.
inline HermitianTensorField chern_ricci(const HermitianTensorField& omega) {
  if (!omega.is_metric()) throw InvalidArgument("chern_ricci requires a metric");
  const auto h = hessian(log_det_ratio(omega));
  return HermitianTensorField::generate(omega.grid(), [&](std::size_t p) -> CMat { return -h.at(p); });
}

namespace detail {

/// Given the pairing coefficients C_ab of an (n-1, n-1)-form field
/// (C_ab = top coefficient of sqrt(-1) dz^a ^ dzbar^b ^ Theta), returns the
/// function d with sqrt(-1) d dbar Theta = d * alpha^n.
inline ScalarField ddbar_top(const GridSpec& g, const std::vector<CBuffer>& c, const HermitianTensorField& alpha) {
  const int n = g.n();
  auto sp = Spectral::get(g);
  CBuffer acc(g.size(), cplx(0.0, 0.0));
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      CBuffer spec = c[a * n + b];
      sp->forward(spec);
      sp->for_each_mode([&](std::size_t p, const auto& k) {
        acc[p] += spec[p] * Spectral::dz_symbol(k, a) * Spectral::dzbar_symbol(k, b);
      });
    }
  sp->backward(acc);
  const double nfact = factorial(n);
  for (std::size_t p = 0; p < g.size(); ++p) acc[p] /= nfact * real_det(alpha.at(p));
  return ScalarField::projected_real(g, std::move(acc));
}

/// Pairing coefficients of scale(p) * omega^{n-1}: C_ab = (n-1)! adj(omega)_ba.
template <class Scale>
std::vector<CBuffer> power_pairing(const HermitianTensorField& omega, Scale&& scale) {
  const GridSpec& g = omega.grid();
  const int n = g.n();
  const double f = factorial(n - 1);
  std::vector<CBuffer> c(n * n, CBuffer(g.size()));
  for (std::size_t p = 0; p < g.size(); ++p) {
    const CMat adj = adjugate(omega.at(p));
    const double s = f * scale(p);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) c[a * n + b][p] = adj(b, a) * s;
  }
  return c;
}

}  // namespace detail

/// Function d with sqrt(-1) d dbar (omega^{n-1}) = d alpha^n.
inline ScalarField gauduchon_defect_field(const HermitianTensorField& omega, const HermitianTensorField& alpha) {
  require_same_grid(omega.grid(), alpha.grid());
  if (!omega.is_metric()) throw InvalidArgument("gauduchon_defect requires a metric");
  return detail::ddbar_top(omega.grid(), detail::power_pairing(omega, [](std::size_t) { return 1.0; }), alpha);
}

/// sup |d| with sqrt(-1) d dbar (omega^{n-1}) = d alpha^n.
inline double gauduchon_defect(const HermitianTensorField& omega, const HermitianTensorField& alpha) {
  return gauduchon_defect_field(omega, alpha).sup_abs();
}

struct ConformalFactorOptions {
  double krylov_tol = 1e-13;
  /// Residual floor per point, relative to the largest coefficient of
  /// alpha^{n-1}; needed when alpha is already (nearly) Gauduchon.
  double absolute_tol = 1e-12;
  int max_iters = 400;
  int restart = 40;
  /// Nonzero seeds a random mean-zero initial iterate (used to check that
  /// the result does not depend on the starting point).
  unsigned long long seed = 0;
  double init_amplitude = 0.1;
};

/// Positive v with mean 1 and sqrt(-1) d dbar (v alpha^{n-1}) = 0. The
/// Gauduchon metric in the conformal class is v^{1/(n-1)} alpha.
///
/// Writing v = 1 + w with mean(w) = 0, w solves K w = -K(1) where
/// K v = sum_ab d_a d_bbar (v C_ab) and C are the pairing coefficients of
/// alpha^{n-1}. K maps into mean-zero functions and its kernel is spanned by
/// the positive Gauduchon factor, so the constrained problem is nonsingular.
inline ScalarField gauduchon_conformal_factor(const HermitianTensorField& alpha,
                                              const ConformalFactorOptions& opt = {}) {
  if (!alpha.is_metric()) throw InvalidArgument("gauduchon_conformal_factor requires a metric");
  const GridSpec& g = alpha.grid();
  const int n = g.n();
  const std::size_t P = g.size();
  if (is_constant(alpha)) return ScalarField::constant(g, 1.0);

  const auto coeff = detail::power_pairing(alpha, [](std::size_t) { return 1.0; });
  auto sp = Spectral::get(g);

  // Mean-coefficient symbol for the preconditioner.
  CMat mean_c = CMat::Zero(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      cplx s{0.0, 0.0};
      for (std::size_t p = 0; p < P; ++p) s += coeff[a * n + b][p];
      mean_c(a, b) = s / static_cast<double>(P);
    }

  // Iterates live in the band-limited subspace; Nyquist modes are projected
  // out before K is applied.
  CBuffer proj(P);
  auto project = [&](const std::vector<double>& v, std::vector<double>& out) {
    for (std::size_t p = 0; p < P; ++p) proj[p] = v[p];
    sp->forward(proj);
    sp->drop_nyquist(proj);
    sp->backward(proj);
    for (std::size_t p = 0; p < P; ++p) out[p] = proj[p].real();
  };
  auto apply_k = [&](const std::vector<double>& v, CBuffer& out) {
    std::fill(out.begin(), out.end(), cplx(0.0, 0.0));
    CBuffer work(P);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        for (std::size_t p = 0; p < P; ++p) work[p] = v[p] * coeff[a * n + b][p];
        sp->forward(work);
        sp->for_each_mode([&](std::size_t p, const auto& k) {
          out[p] += work[p] * Spectral::dz_symbol(k, a) * Spectral::dzbar_symbol(k, b);
        });
      }
    sp->backward(out);
  };

  // Unknown vector: P values of w plus a Lagrange slot enforcing mean(w) = 0.
  CBuffer kbuf(P);
  std::vector<double> xp(P);
  auto op = [&](const std::vector<double>& x, std::vector<double>& y) {
    project(x, xp);
    apply_k(xp, kbuf);
    double mean = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      y[p] = kbuf[p].real() + x[P];
      mean += x[p];
    }
    y[P] = mean / static_cast<double>(P);
  };
  CBuffer pbuf(P);
  auto precond = [&](const std::vector<double>& r, std::vector<double>& z) {
    double mean = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      pbuf[p] = r[p];
      mean += r[p];
    }
    mean /= static_cast<double>(P);
    sp->forward(pbuf);
    sp->for_each_mode([&](std::size_t p, const auto& k) {
      cplx s{0.0, 0.0};
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) s += mean_c(a, b) * Spectral::dz_symbol(k, a) * Spectral::dzbar_symbol(k, b);
      pbuf[p] = std::abs(s) > 0.0 ? pbuf[p] / s : cplx(0.0, 0.0);
    });
    sp->drop_nyquist(pbuf);
    sp->backward(pbuf);
    for (std::size_t p = 0; p < P; ++p) z[p] = pbuf[p].real() + r[P];
    z[P] = mean;
  };

  std::vector<double> rhs(P + 1, 0.0), x(P + 1, 0.0);
  {
    std::vector<double> ones(P, 1.0);
    apply_k(ones, kbuf);
    for (std::size_t p = 0; p < P; ++p) rhs[p] = -kbuf[p].real();
  }
  if (opt.seed != 0) {
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> dist(-opt.init_amplitude, opt.init_amplitude);
    double mean = 0.0;
    for (std::size_t p = 0; p < P; ++p) mean += (x[p] = dist(rng));
    mean /= static_cast<double>(P);
    for (std::size_t p = 0; p < P; ++p) x[p] -= mean;
  }
  double cmax = 0.0;
  for (const auto& c : coeff)
    for (const auto& v : c) cmax = std::max(cmax, std::abs(v));
  const double atol = opt.absolute_tol * cmax * std::sqrt(static_cast<double>(P + 1));
  const KrylovResult kr = gmres(op, precond, rhs, x, opt.krylov_tol, opt.max_iters, opt.restart, atol);
  project(x, xp);
  std::copy(xp.begin(), xp.end(), x.begin());
  if (!kr.converged && kr.relative_residual > 1e3 * opt.krylov_tol)
    throw NoConvergence("gauduchon_conformal_factor: Krylov solve stalled at relative residual " +
                        std::to_string(kr.relative_residual));

  CBuffer v(P);
  double mean = 0.0;
  for (std::size_t p = 0; p < P; ++p) mean += 1.0 + x[p];
  mean /= static_cast<double>(P);
  for (std::size_t p = 0; p < P; ++p) {
    const double val = (1.0 + x[p]) / mean;
    if (val <= 0.0) throw NonPositiveFactor(p, val);
    v[p] = val;
  }
  return ScalarField(g, std::move(v), Realness::real);
}

/// v^{1/(n-1)} alpha.
inline HermitianTensorField conformal_rescale(const HermitianTensorField& alpha, const ScalarField& v) {
  const double e = 1.0 / (alpha.n() - 1);
  return HermitianTensorField::generate(
      alpha.grid(), [&](std::size_t p) -> CMat { return alpha.at(p) * std::pow(v.real(p), e); },
      HermitianTensorField::Kind::metric);
}

}  // namespace gcy
