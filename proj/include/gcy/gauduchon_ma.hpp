#pragma once

// The Gauduchon Monge-Ampere operator. For a real potential u,
//   omega^{n-1} = alpha0^{n-1} + i ddbar u ^ alpha^{n-2} + c Re(i du ^ dbar alpha^{n-2})
// and gtilde = *(omega^{n-1}) / (n-1)! = chi + P_alpha(i ddbar u) + c Z, where
// chi = star_power(alpha0). The equation is
//   log(det gtilde / det alpha) = (n-1)(F + b).

#include <cmath>
#include <limits>
#include <bit>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gcy/eigen_calculus.hpp"
#include "gcy/exterior.hpp"
#include "gcy/hermitian_geometry.hpp"

namespace gcy {

/// Immutable problem data with cached derived quantities. Copies share the
/// caches.
class EquationData {
 public:
  EquationData(HermitianTensorField alpha, HermitianTensorField alpha0, ScalarField F, double coupling = 1.0)
      : shared_(build(std::move(alpha), std::move(alpha0), coupling)), F_(std::move(F)) {
    require_same_grid(F_.grid(), grid());
    if (!F_.is_real()) throw InvalidArgument("forcing F must be real");
  }

  const GridSpec& grid() const noexcept { return shared_->alpha.grid(); }
  int n() const noexcept { return grid().n(); }
  const HermitianTensorField& alpha() const noexcept { return shared_->alpha; }
  const HermitianTensorField& alpha0() const noexcept { return shared_->alpha0; }
  const ScalarField& F() const noexcept { return F_; }
  double coupling() const noexcept { return shared_->coupling; }
  /// star_power(alpha0) relative to alpha.
  const HermitianTensorField& chi_tilde() const noexcept { return shared_->chi; }
  const TorsionField& torsion() const noexcept { return shared_->torsion; }
  bool torsion_free() const noexcept { return shared_->torsion.identically_zero(); }

  CMat alpha_inverse(std::size_t p) const { return shared_->alpha_inv.at(p); }
  double det_alpha(std::size_t p) const { return std::exp(log_det_alpha(p)); }
  double log_det_alpha(std::size_t p) const { return shared_->log_det.size() == 1 ? shared_->log_det[0] : shared_->log_det[p]; }

  /// Same geometry, new forcing.
  EquationData with_forcing(ScalarField F) const {
    require_same_grid(F.grid(), grid());
    EquationData d(*this);
    d.F_ = std::move(F);
    return d;
  }

  /// Same data with a replacement torsion tensor (negative controls).
  EquationData with_torsion(TorsionField t) const {
    auto s = std::make_shared<Shared>(*shared_);
    s->torsion = std::move(t);
    EquationData d(*this);
    d.shared_ = std::move(s);
    return d;
  }

  /// sup of the Gauduchon defect of alpha.
  double alpha_gauduchon_defect() const {
    if (shared_->alpha_constant) return 0.0;
    return gauduchon_defect(alpha(), alpha());
  }

 private:
  struct Shared {
    HermitianTensorField alpha, alpha0, chi;
    TorsionField torsion;
    double coupling;
    bool alpha_constant;
    HermitianTensorField alpha_inv;
    std::vector<double> log_det;
  };

  static std::shared_ptr<const Shared> build(HermitianTensorField alpha, HermitianTensorField alpha0, double c) {
    require_same_grid(alpha.grid(), alpha0.grid());
    if (!alpha.is_metric() || !alpha0.is_metric()) throw InvalidArgument("alpha and alpha0 must be metrics");
    if (c != 1.0 && c != 2.0) throw InvalidArgument("coupling must be 1 or 2");
    const bool constant = is_constant(alpha);
    HermitianTensorField chi = (constant && is_constant(alpha0))
                                   ? HermitianTensorField::constant(alpha.grid(), star_power(alpha0.at(0), alpha.at(0)),
                                                                    HermitianTensorField::Kind::metric)
                                   : star_power(alpha0, alpha);
    TorsionField t = gcy::torsion(alpha);
    HermitianTensorField inv =
        constant ? HermitianTensorField::constant(alpha.grid(), alpha.at(0).inverse(), HermitianTensorField::Kind::metric)
                 : HermitianTensorField::generate(alpha.grid(), [&](std::size_t p) -> CMat { return alpha.at(p).inverse(); },
                                                  HermitianTensorField::Kind::metric);
    std::vector<double> log_det(constant ? 1 : alpha.grid().size());
    for (std::size_t p = 0; p < log_det.size(); ++p) log_det[p] = std::log(real_det(alpha.at(p)));
    return std::make_shared<const Shared>(Shared{std::move(alpha), std::move(alpha0), std::move(chi), std::move(t), c,
                                                 constant, std::move(inv), std::move(log_det)});
  }

  std::shared_ptr<const Shared> shared_;
  ScalarField F_;
};

namespace detail {

/// Holomorphic half Zh(v) of the gradient tensor, for a covector v standing
/// in for (u_p): Z = (Zh + Zh^dagger) / (2(n-1)). With w = alpha^{-1} v and
/// tau_j = alpha^{k lbar} conj(T_{j l kbar}),
///   Zh_{ij} = (w . tau) alpha_{ij} - v_i tau_j - sum_l w_l conj(T_{l j ibar}).
inline CMat z_holomorphic(const CVec& v, const TorsionField& t, std::size_t p, const CMat& a, const CMat& ainv) {
  const int n = static_cast<int>(v.size());
  CMat zh = CMat::Zero(n, n);
  if (t.identically_zero()) return zh;
  CVec tau = CVec::Zero(n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l) tau(j) += ainv(l, k) * std::conj(t.lower(p, j, l, k));
  const CVec w = ainv * v;
  const cplx s = (w.transpose() * tau)(0, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      cplx x = s * a(i, j) - v(i) * tau(j);
      for (int l = 0; l < n; ++l) x -= w(l) * std::conj(t.lower(p, l, j, i));
      zh(i, j) = x;
    }
  return zh;
}

/// tr(ginv Zh(e_k)) for every k, without forming Zh.
inline CVec z_trace_weights(const CMat& ginv, const TorsionField& t, std::size_t p, const CMat& a, const CMat& ainv) {
  const int n = static_cast<int>(a.rows());
  CVec tau = CVec::Zero(n), m = CVec::Zero(n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l) {
        const cplx c = std::conj(t.lower(p, j, l, k));
        tau(j) += ainv(l, k) * c;
        m(j) += ginv(l, k) * c;
      }
  const cplx tr = trace_product(ginv, a);
  return ainv.transpose() * (tau * tr - m) - ginv.transpose() * tau;
}

inline CMat z_from_holomorphic(const CMat& zh) {
  const auto n = static_cast<double>(zh.rows());
  return (zh + zh.adjoint()) / (2.0 * (n - 1.0));
}

/// Pointwise access to the ingredients of gtilde for one potential u.
class Assembler {
 public:
  Assembler(const ScalarField& u, const EquationData& d) : d_(d), n_(d.n()) {
    require_same_grid(u.grid(), d.grid());
    if (!u.is_real()) throw InvalidArgument("potential u must be real");
    hess_ = hessian_upper(u);
    if (!d.torsion_free()) {
      const CBuffer spec = spectrum(u);
      for (int j = 0; j < n_; ++j)
        grad_.push_back(apply_symbol(d.grid(), spec, [j](const auto& k) { return Spectral::dz_symbol(k, j); }));
    }
  }

  CMat hessian(std::size_t p) const { return hessian_at(hess_, n_, p); }
  CVec gradient(std::size_t p) const {
    CVec v = CVec::Zero(n_);
    for (int j = 0; j < static_cast<int>(grad_.size()); ++j) v(j) = grad_[j][p];
    return v;
  }
  CMat z(std::size_t p) const {
    if (d_.torsion_free()) return CMat::Zero(n_, n_);
    return z_from_holomorphic(z_holomorphic(gradient(p), d_.torsion(), p, d_.alpha().at(p), d_.alpha_inverse(p)));
  }
  CMat gtilde(std::size_t p) const {
    const CMat a = d_.alpha().at(p);
    CMat g = d_.chi_tilde().at(p) + p_alpha(hessian(p), a, d_.alpha_inverse(p));
    if (!d_.torsion_free()) g += d_.coupling() * z(p);
    return hermitian_part(g);
  }

 private:
  const EquationData& d_;
  int n_;
  std::vector<CBuffer> hess_;
  std::vector<CBuffer> grad_;
};

[[noreturn]] inline void throw_cone(const Assembler& as, const EquationData& d, const char* what) {
  double worst = std::numeric_limits<double>::infinity();
  std::size_t wp = 0;
  const int n = d.n();
  for (std::size_t p = 0; p < d.grid().size(); ++p) {
    const double lo = generalized_eigenvalues(as.gtilde(p), d.alpha().at(p))(n - 1);
    if (lo < worst) {
      worst = lo;
      wp = p;
    }
  }
  throw ConeViolation(what, wp, worst);
}

}  // namespace detail

/// Z_{i jbar} = (1/(n-1)!) *Re(i du ^ dbar alpha^{n-2}) from the torsion of alpha.
inline HermitianTensorField z_tensor(const ScalarField& u, const EquationData& d) {
  const detail::Assembler as(u, d);
  return HermitianTensorField::generate(d.grid(), [&](std::size_t p) { return as.z(p); });
}

/// chi + P_alpha(i ddbar u) + c Z.
inline HermitianTensorField assemble_gtilde(const ScalarField& u, const EquationData& d) {
  const detail::Assembler as(u, d);
  return HermitianTensorField::generate(d.grid(), [&](std::size_t p) { return as.gtilde(p); });
}

struct Residual {
  ScalarField value;
  double b;
};

/// log(det gtilde / det alpha) - (n-1)(F + b). Throws ConeViolation at the
/// worst point when gtilde is not positive definite somewhere.
inline Residual residual(const ScalarField& u, double b, const EquationData& d) {
  const detail::Assembler as(u, d);
  const int n = d.n();
  CBuffer r(d.grid().size());
  for (std::size_t p = 0; p < r.size(); ++p) {
    Eigen::LLT<CMat> llt(as.gtilde(p));
    if (llt.info() != Eigen::Success) detail::throw_cone(as, d, "residual: gtilde left the positive cone");
    double logdet = 0.0;
    for (int i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixLLT()(i, i).real());
    r[p] = logdet - d.log_det_alpha(p) - (n - 1) * (d.F().real(p) + b);
  }
  return {ScalarField(d.grid(), std::move(r), Realness::real), b};
}

/// Directional derivative of the residual at u:
///   L(du, db) = sum_ij Q_ji du_ij + Re(sum_p w_p du_p) - (n-1) db
/// with Q = (tr(G^{-1} alpha) alpha^{-1} - G^{-1}) / (n-1) and
/// w_p = c tr(G^{-1} Zh(e_p)) / (n-1), G = gtilde[u].
class Linearization {
 public:
  Linearization(const ScalarField& u, const EquationData& d) : grid_(d.grid()), n_(d.n()) {
    const detail::Assembler as(u, d);
    const std::size_t P = grid_.size();
    const int pairs = n_ * (n_ + 1) / 2;
    q_.assign(pairs, CBuffer(P));
    if (!d.torsion_free()) w_.assign(n_, CBuffer(P));
    mean_q_ = CMat::Zero(n_, n_);
    for (std::size_t p = 0; p < P; ++p) {
      const CMat g = as.gtilde(p);
      Eigen::LLT<CMat> llt(g);
      if (llt.info() != Eigen::Success) detail::throw_cone(as, d, "linearization: gtilde left the positive cone");
      const CMat ginv = llt.solve(CMat::Identity(n_, n_));
      const CMat a = d.alpha().at(p);
      const CMat ainv = d.alpha_inverse(p);
      const CMat q = (ainv * trace_product(ginv, a).real() - ginv) / static_cast<double>(n_ - 1);
      int c = 0;
      for (int i = 0; i < n_; ++i)
        for (int j = i; j < n_; ++j, ++c) q_[c][p] = q(j, i);
      mean_q_ += q;
      if (!w_.empty()) {
        const CVec tw = detail::z_trace_weights(ginv, d.torsion(), p, a, ainv);
        for (int k = 0; k < n_; ++k) w_[k][p] = d.coupling() * tw(k) / static_cast<double>(n_ - 1);
      }
    }
    mean_q_ = hermitian_part(mean_q_ / static_cast<double>(P));
  }

  const GridSpec& grid() const noexcept { return grid_; }
  /// Grid average of Q, the constant-coefficient part used for
  /// preconditioning.
  const CMat& mean_q() const noexcept { return mean_q_; }

  /// out[p] = L(du, db)[p] for real du given by its grid values.
  void apply(const std::vector<double>& du, double db, std::vector<double>& out) const {
    const std::size_t P = grid_.size();
    auto sp = Spectral::get(grid_);
    CBuffer spec(P), work(P);
    for (std::size_t p = 0; p < P; ++p) spec[p] = du[p];
    sp->forward(spec);
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(P), -(n_ - 1) * db);
    int c = 0;
    for (int i = 0; i < n_; ++i)
      for (int j = i; j < n_; ++j, ++c) {
        sp->for_each_mode([&](std::size_t p, const auto& k) {
          work[p] = spec[p] * Spectral::dz_symbol(k, i) * Spectral::dzbar_symbol(k, j);
        });
        sp->backward(work);
        // Q_ji H_ij + Q_ij H_ji = 2 Re(Q_ji H_ij) off the diagonal.
        const double f = i == j ? 1.0 : 2.0;
        for (std::size_t p = 0; p < P; ++p) out[p] += f * (q_[c][p] * work[p]).real();
      }
    for (int k = 0; k < static_cast<int>(w_.size()); ++k) {
      sp->for_each_mode([&](std::size_t p, const auto& kk) { work[p] = spec[p] * Spectral::dz_symbol(kk, k); });
      sp->backward(work);
      for (std::size_t p = 0; p < P; ++p) out[p] += (w_[k][p] * work[p]).real();
    }
  }

  ScalarField apply(const ScalarField& du, double db) const {
    require_same_grid(du.grid(), grid_);
    if (!du.is_real()) throw InvalidArgument("linearization direction must be real");
    std::vector<double> x(grid_.size()), y(grid_.size());
    for (std::size_t p = 0; p < x.size(); ++p) x[p] = du.real(p);
    apply(x, db, y);
    return ScalarField::from_real(grid_, y);
  }

 private:
  GridSpec grid_;
  int n_;
  std::vector<CBuffer> q_;
  std::vector<CBuffer> w_;
  CMat mean_q_;
};

inline ScalarField linearized_residual(const ScalarField& u, const EquationData& d, const ScalarField& du, double db) {
  return Linearization(u, d).apply(du, db);
}

/// The metric omega with star_power(omega) = gtilde[u].
inline HermitianTensorField omega_from_u(const ScalarField& u, const EquationData& d) {
  const detail::Assembler as(u, d);
  const int n = d.n();
  return HermitianTensorField::generate(
      d.grid(),
      [&](std::size_t p) -> CMat {
        const CMat g = as.gtilde(p);
        const CMat a = d.alpha().at(p);
        const GenEig e = generalized_eigen(g, a);
        if (e.values(n - 1) <= 0.0) detail::throw_cone(as, d, "omega_from_u: gtilde left the positive cone");
        return star_power_inverse(g, a);
      },
      HermitianTensorField::Kind::metric);
}

namespace detail {

/// Phases e^{2 pi i k.x} of every stored mode at one grid point, scaled by
/// 1/size, so that sum_k spec[k] phase[k] is the inverse transform there.
inline CBuffer point_phases(const GridSpec& g, std::size_t point) {
  const int N = g.points_per_axis();
  const int axes = g.real_axes();
  const auto x = g.multi_index(point);
  std::vector<cplx> roots(N);
  for (int j = 0; j < N; ++j) roots[j] = std::polar(1.0 / static_cast<double>(g.size()), 2.0 * kPi * j / N);
  CBuffer out(g.size());
  std::array<int, 2 * GridSpec::kMaxComplexDim> idx{};
  int e = 0;  // sum_a idx[a] x[a] mod N, maintained by the odometer
  for (std::size_t p = 0; p < g.size(); ++p) {
    out[p] = roots[e];
    for (int a = axes - 1; a >= 0; --a) {
      e = (e + x[a]) % N;
      if (++idx[a] < N) break;
      idx[a] = 0;
    }
  }
  return out;
}

/// Symbol values per stored mode.
template <class Symbol>
CBuffer symbol_table(const GridSpec& g, Symbol&& symbol) {
  CBuffer out(g.size());
  Spectral::get(g)->for_each_mode([&](std::size_t p, const auto& k) { out[p] = symbol(k); });
  return out;
}

inline cplx weighted_sum(const CBuffer& spec, const CBuffer& phase, const CBuffer* symbol = nullptr) {
  cplx acc{0.0, 0.0};
  if (symbol == nullptr)
    for (std::size_t p = 0; p < spec.size(); ++p) acc += spec[p] * phase[p];
  else
    for (std::size_t p = 0; p < spec.size(); ++p) acc += spec[p] * (*symbol)[p] * phase[p];
  return acc;
}

}  // namespace detail

/// Brute-force evaluation of (1/(n-1)!) *Re(i du ^ dbar(alpha^{n-2})) by
/// exterior algebra. The (n-2, n-1)-form dbar(alpha^{n-2}) is differentiated
/// spectrally once at construction.
class ZOracle {
 public:
  explicit ZOracle(const EquationData& d) : d_(d) {
    const GridSpec& g = d.grid();
    const int n = g.n();
    // alpha^0 = 1 has no derivative, nor does a constant alpha^{n-2}
    if (n < 3 || is_constant(d.alpha())) return;
    auto sp = Spectral::get(g);
    // Coefficient fields of alpha^{n-2}, one per monomial.
    std::map<std::uint32_t, CBuffer> power;
    for (std::size_t p = 0; p < g.size(); ++p) {
      const Form f = Form::one_one(d.alpha().at(p)).power(n - 2);
      for (std::uint32_t m = 0; m < f.dim(); ++m) {
        if (std::popcount(m) != 2 * (n - 2)) continue;
        auto it = power.find(m);
        if (it == power.end()) it = power.emplace(m, CBuffer(g.size(), cplx(0.0, 0.0))).first;
        it->second[p] = f[m];
      }
    }
    CBuffer work(g.size());
    for (auto& [m, field] : power) {
      sp->forward(field);
      for (int j = 0; j < n; ++j) {
        const std::uint32_t bit = 1u << (2 * j + 1);
        if (m & bit) continue;
        sp->for_each_mode([&](std::size_t p, const auto& k) { work[p] = field[p] * Spectral::dzbar_symbol(k, j); });
        sp->backward(work);
        // dzbar^j ^ (monomial m)
        const double sign = Form::sign(bit, m);
        auto it = dbar_.find(m | bit);
        if (it == dbar_.end()) it = dbar_.emplace(m | bit, CBuffer(g.size(), cplx(0.0, 0.0))).first;
        for (std::size_t p = 0; p < g.size(); ++p) it->second[p] += sign * work[p];
      }
    }
  }

  /// Z at `point` for the holomorphic gradient du = (u_p).
  CMat operator()(const CVec& du, std::size_t point) const {
    const int n = d_.n();
    if (n < 3) return CMat::Zero(n, n);
    Form dbar(n);
    for (const auto& [m, field] : dbar_) dbar[m] = field[point];
    const Form x = Form::one_zero(du).wedge(dbar) * cplx(0.0, 1.0);
    const Form re = x.real_part();
    return hermitian_part(hodge_star_nn(re, d_.alpha().at(point)) / factorial(n - 1));
  }

  /// Same, differentiating u at the point directly.
  CMat operator()(const ScalarField& u, std::size_t point) const {
    const CBuffer spec = detail::spectrum(u);
    const CBuffer phase = detail::point_phases(d_.grid(), point);
    CVec du(d_.n());
    for (int j = 0; j < d_.n(); ++j) {
      const CBuffer sym = detail::symbol_table(d_.grid(), [j](const auto& k) { return Spectral::dz_symbol(k, j); });
      du(j) = detail::weighted_sum(spec, phase, &sym);
    }
    return (*this)(du, point);
  }

 private:
  EquationData d_;
  std::map<std::uint32_t, CBuffer> dbar_;
};

inline CMat z_tensor_oracle(const ScalarField& u, const EquationData& d, std::size_t point) {
  return ZOracle(d)(u, point);
}

struct WCheckReport {
  /// max_{i,j} |Z^j_{i jbar}| in an alpha-orthonormal frame at the point
  double coefficient = 0.0;
  /// max_i |nabla_ibar Z^i_{i ibar}| in the same frame
  double derivative = 0.0;
  bool passed = false;
  /// Name of the first violated identity, empty when both hold.
  std::string violated;
};

/// Structural checks on the coefficient tensor Z^p_{i jbar} of
/// Z = Z^p u_p + conj(Z^p_{j ibar} u_p): Z^j_{i jbar} = 0 and
/// nabla_ibar Z^i_{i ibar} = 0 in alpha-orthonormal frames. Spectra of the
/// coefficient fields are computed once; `check` then works per point.
class WAssumptionChecker {
 public:
  explicit WAssumptionChecker(const EquationData& d) : d_(d), gamma_(chern_connection_or_flat(d)) {
    const GridSpec& g = d.grid();
    const int n = g.n();
    const std::size_t P = g.size();
    if (d.torsion_free()) return;  // Z vanishes identically
    coeff_.assign(static_cast<std::size_t>(n * n * n), CBuffer(P));
    for (std::size_t p = 0; p < P; ++p) {
      const CMat a = d.alpha().at(p), ainv = d.alpha_inverse(p);
      for (int k = 0; k < n; ++k) {
        const CMat zk = detail::z_holomorphic(CVec::Unit(n, k), d.torsion(), p, a, ainv) / (2.0 * (n - 1));
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) coeff_[index(k, i, j)][p] = zk(i, j);
      }
    }
    auto sp = Spectral::get(g);
    for (auto& c : coeff_) sp->forward(c);
    for (int q = 0; q < n; ++q)
      dzbar_.push_back(detail::symbol_table(g, [q](const auto& k) { return Spectral::dzbar_symbol(k, q); }));
  }

  WCheckReport check(std::size_t point, double tol = 1e-9) const {
    if (coeff_.empty()) return {0.0, 0.0, true, ""};
    const GridSpec& g = d_.grid();
    const int n = g.n();
    const CMat a = d_.alpha().at(point);
    Eigen::LLT<CMat> llt(a);
    const CMat L = llt.matrixL();
    const CMat Linv = L.inverse();  // E = Linv^T
    const CBuffer phase = detail::point_phases(g, point);
    auto value = [&](int k, int i, int j) { return detail::weighted_sum(coeff_[index(k, i, j)], phase); };
    auto dbar = [&](int k, int i, int j, int q) {
      return detail::weighted_sum(coeff_[index(k, i, j)], phase, &dzbar_[q]);
    };
    // Coordinate components at the point.
    std::vector<cplx> z(static_cast<std::size_t>(n * n * n));
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) z[index(k, i, j)] = value(k, i, j);
    // nabla_qbar Z^p_{i jbar} = dbar_q Z^p_{i jbar} - conj(Gamma^l_{qj}) Z^p_{i lbar}
    std::vector<cplx> dz(static_cast<std::size_t>(n * n * n * n));
    auto didx = [n](int k, int i, int j, int q) { return ((k * n + i) * n + j) * n + q; };
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          for (int q = 0; q < n; ++q) {
            cplx v = dbar(k, i, j, q);
            for (int l = 0; l < n; ++l) v -= std::conj(gamma(point, l, q, j)) * z[index(k, i, l)];
            dz[didx(k, i, j, q)] = v;
          }
    // Frame components: upper index by L_{pa}, lower (1,0) by Linv_{bi},
    // lower (0,1) by conj(Linv_{cj}).
    WCheckReport r;
    for (int a1 = 0; a1 < n; ++a1)
      for (int b1 = 0; b1 < n; ++b1) {
        // Z'^{a1}_{b1 a1bar}
        cplx s{0.0, 0.0};
        for (int k = 0; k < n; ++k)
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) s += L(k, a1) * Linv(b1, i) * std::conj(Linv(a1, j)) * z[index(k, i, j)];
        r.coefficient = std::max(r.coefficient, std::abs(s));
      }
    for (int a1 = 0; a1 < n; ++a1) {
      cplx s{0.0, 0.0};
      for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            for (int q = 0; q < n; ++q)
              s += L(k, a1) * Linv(a1, i) * std::conj(Linv(a1, j)) * std::conj(Linv(a1, q)) * dz[didx(k, i, j, q)];
      r.derivative = std::max(r.derivative, std::abs(s));
    }
    if (r.coefficient > tol)
      r.violated = "Z^j_{i jbar} = 0 (magnitude " + std::to_string(r.coefficient) + ")";
    else if (r.derivative > tol)
      r.violated = "nabla_ibar Z^i_{i ibar} = 0 (magnitude " + std::to_string(r.derivative) + ")";
    r.passed = r.violated.empty();
    return r;
  }

 private:
  int index(int k, int i, int j) const { return (k * d_.n() + i) * d_.n() + j; }
  cplx gamma(std::size_t p, int k, int i, int j) const {
    return gamma_ ? (*gamma_)(p, k, i, j) : cplx(0.0, 0.0);
  }
  static std::optional<ChristoffelField> chern_connection_or_flat(const EquationData& d) {
    if (is_constant(d.alpha())) return std::nullopt;
    return chern_connection(d.alpha());
  }

  EquationData d_;
  std::optional<ChristoffelField> gamma_;
  std::vector<CBuffer> coeff_;
  std::vector<CBuffer> dzbar_;
};

inline WCheckReport w_assumption_check(const EquationData& d, std::size_t point, double tol = 1e-9) {
  return WAssumptionChecker(d).check(point, tol);
}

/// Matrix M with M(a,b) = integral of (i dz^a ^ dzbar^b) ^ (omega^{n-1} - alpha0^{n-1}),
/// relative to the flat volume form prod_k (i dz^k ^ dzbar^k), as the grid
/// mean of (n-1)! (adj omega - adj alpha0)^T.
inline CMat aeppli_pairing_matrix(const ScalarField& u, const EquationData& d) {
  const int n = d.n();
  const detail::Assembler as(u, d);
  CMat sum = CMat::Zero(n, n);
  for (std::size_t p = 0; p < d.grid().size(); ++p) {
    const CMat a = d.alpha().at(p);
    const CMat g = as.gtilde(p);
    if (generalized_eigenvalues(g, a)(n - 1) <= 0.0)
      detail::throw_cone(as, d, "aeppli_pairing_matrix: gtilde left the positive cone");
    sum += (adjugate(star_power_inverse(g, a)) - adjugate(d.alpha0().at(p))).transpose();
  }
  return sum * (factorial(n - 1) / static_cast<double>(d.grid().size()));
}

/// Integral of (omega^{n-1} - alpha0^{n-1}) ^ psi for the constant (1,1)-form
/// psi = i psi_{ij} dz^i ^ dzbar^j.
inline double aeppli_pairing_check(const ScalarField& u, const EquationData& d, const CMat& psi) {
  const int n = d.n();
  if (psi.rows() != n || psi.cols() != n) throw InvalidArgument("psi has the wrong size");
  const CMat m = aeppli_pairing_matrix(u, d);
  cplx s{0.0, 0.0};
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) s += psi(a, b) * m(a, b);
  return s.real();
}

}  // namespace gcy
