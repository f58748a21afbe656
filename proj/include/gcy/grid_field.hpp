#pragma once

// Fields on the periodic grid and the spectral operators acting on them.
//
// Fields are immutable after construction and share their storage, so
// copying a field is cheap and concurrent reads are safe.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "gcy/errors.hpp"
#include "gcy/linalg.hpp"
#include "gcy/spectral.hpp"

namespace gcy {

enum class Realness { complex, real };

class ScalarField {
 public:
  /// A field flagged real must have |Im| <= 1e-12 sup|value|; imaginary
  /// parts are then dropped.
  ScalarField(GridSpec grid, CBuffer values, Realness realness = Realness::complex)
      : grid_(grid), real_(realness == Realness::real) {
    if (values.size() != grid.size()) throw InvalidArgument("scalar field size does not match grid");
    if (real_) {
      double sup = 0.0, sup_im = 0.0;
      for (const auto& v : values) {
        sup = std::max(sup, std::abs(v));
        sup_im = std::max(sup_im, std::abs(v.imag()));
      }
      if (sup_im > 1e-12 * sup) throw InvalidArgument("field flagged real has non-negligible imaginary part");
      for (auto& v : values) v = cplx(v.real(), 0.0);
    }
    values_ = std::make_shared<const CBuffer>(std::move(values));
  }

  /// Real field from values that are real by construction (e.g. spectral
  /// images of real fields); imaginary round-off is discarded unchecked.
  static ScalarField projected_real(const GridSpec& grid, CBuffer values) {
    for (auto& v : values) v = cplx(v.real(), 0.0);
    return ScalarField(grid, std::move(values), Realness::real);
  }

  static ScalarField constant(const GridSpec& grid, double c) {
    return ScalarField(grid, CBuffer(grid.size(), cplx(c, 0.0)), Realness::real);
  }

  /// Samples fn(coords) at every point; coords[2j] = x_{j+1}, coords[2j+1] = y_{j+1}.
  template <class Fn>
  static ScalarField sample(const GridSpec& grid, Fn&& fn, Realness realness = Realness::real) {
    CBuffer v(grid.size());
    for (std::size_t p = 0; p < grid.size(); ++p) v[p] = cplx(fn(grid.coordinates(p)));
    return ScalarField(grid, std::move(v), realness);
  }

  static ScalarField from_real(const GridSpec& grid, std::span<const double> values) {
    if (values.size() != grid.size()) throw InvalidArgument("real values size does not match grid");
    CBuffer v(grid.size());
    for (std::size_t p = 0; p < v.size(); ++p) v[p] = cplx(values[p], 0.0);
    return ScalarField(grid, std::move(v), Realness::real);
  }

  const GridSpec& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return values_->size(); }
  bool is_real() const noexcept { return real_; }
  std::span<const cplx> values() const noexcept { return {values_->data(), values_->size()}; }
  cplx operator[](std::size_t p) const { return (*values_)[p]; }
  double real(std::size_t p) const { return (*values_)[p].real(); }

  CBuffer copy_values() const { return *values_; }

  double sup_abs() const {
    double s = 0.0;
    for (const auto& v : *values_) s = std::max(s, std::abs(v));
    return s;
  }
  double max_real() const {
    double s = -HUGE_VAL;
    for (const auto& v : *values_) s = std::max(s, v.real());
    return s;
  }
  double min_real() const {
    double s = HUGE_VAL;
    for (const auto& v : *values_) s = std::min(s, v.real());
    return s;
  }
  cplx mean() const {
    cplx s{0.0, 0.0};
    for (const auto& v : *values_) s += v;
    return s / static_cast<double>(size());
  }

  ScalarField conj() const {
    CBuffer v(size());
    for (std::size_t p = 0; p < v.size(); ++p) v[p] = std::conj((*values_)[p]);
    return ScalarField(grid_, std::move(v), real_ ? Realness::real : Realness::complex);
  }

  /// a*this + b*other, keeping the real flag when both inputs are real and
  /// the scalars are real.
  ScalarField axpby(cplx a, const ScalarField& other, cplx b) const {
    if (other.grid_ != grid_) throw InvalidArgument("grid mismatch");
    CBuffer v(size());
    for (std::size_t p = 0; p < v.size(); ++p) v[p] = a * (*values_)[p] + b * other[p];
    const bool real = real_ && other.real_ && a.imag() == 0.0 && b.imag() == 0.0;
    return ScalarField(grid_, std::move(v), real ? Realness::real : Realness::complex);
  }
  ScalarField scaled(double s) const { return axpby(s, *this, 0.0); }
  ScalarField shifted(double c) const {
    CBuffer v(size());
    for (std::size_t p = 0; p < v.size(); ++p) v[p] = (*values_)[p] + c;
    return ScalarField(grid_, std::move(v), real_ ? Realness::real : Realness::complex);
  }

 private:
  GridSpec grid_;
  std::shared_ptr<const CBuffer> values_;
  bool real_;
};

/// Field of n x n Hermitian matrices h_{i jbar}, stored point-major with
/// row-major matrices: entry (i, j) at point p is entries[(p*n + i)*n + j].
class HermitianTensorField {
 public:
  enum class Kind { plain, metric };

  HermitianTensorField(GridSpec grid, CBuffer entries, Kind kind = Kind::plain) : grid_(grid), kind_(kind) {
    const int n = grid.n();
    if (entries.size() != grid.size() * n * n) throw InvalidArgument("tensor field size does not match grid");
    stride_ = static_cast<std::size_t>(n * n);
    init(std::move(entries), grid.size());
  }

  /// The same matrix at every point, stored once.
  static HermitianTensorField constant(const GridSpec& grid, const CMat& m, Kind kind = Kind::plain) {
    const int n = grid.n();
    if (m.rows() != n || m.cols() != n) throw InvalidArgument("constant tensor has the wrong size");
    CBuffer e(static_cast<std::size_t>(n * n));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) e[i * n + j] = m(i, j);
    return HermitianTensorField(grid, std::move(e), kind, ConstantTag{});
  }

 private:
  struct ConstantTag {};
  HermitianTensorField(GridSpec grid, CBuffer entries, Kind kind, ConstantTag) : grid_(grid), kind_(kind) {
    stride_ = 0;
    init(std::move(entries), 1);
  }

  void init(CBuffer entries, std::size_t stored) {
    const int n = grid_.n();
    for (std::size_t p = 0; p < stored; ++p) {
      cplx* m = entries.data() + p * n * n;
      double scale = 0.0;
      for (int k = 0; k < n * n; ++k) scale = std::max(scale, std::abs(m[k]));
      for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
          const cplx a = m[i * n + j], b = std::conj(m[j * n + i]);
          if (std::abs(a - b) > 1e-12 * std::max(scale, 1e-300) && std::abs(a - b) > 1e-300)
            throw InvalidArgument("tensor field is not Hermitian");
          const cplx avg = 0.5 * (a + b);
          m[i * n + j] = avg;
          m[j * n + i] = std::conj(avg);
        }
      }
    }
    entries_ = std::make_shared<const CBuffer>(std::move(entries));
    if (kind_ == Kind::metric) {
      for (std::size_t p = 0; p < stored; ++p) {
        Eigen::LLT<CMat> llt(at(p));
        if (llt.info() != Eigen::Success) {
          const RVec ev = generalized_eigenvalues(at(p), CMat::Identity(n, n));
          throw ConeViolation("metric is not positive definite", p, ev(n - 1));
        }
      }
    }
  }

 public:
  /// Samples fn(coords) -> CMat at every point.
  template <class Fn>
  static HermitianTensorField sample(const GridSpec& grid, Fn&& fn, Kind kind = Kind::plain) {
    const int n = grid.n();
    CBuffer e(grid.size() * n * n);
    for (std::size_t p = 0; p < grid.size(); ++p) {
      const CMat m = fn(grid.coordinates(p));
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) e[(p * n + i) * n + j] = m(i, j);
    }
    return HermitianTensorField(grid, std::move(e), kind);
  }

  /// Builds a field from per-point matrices produced by fn(p).
  template <class Fn>
  static HermitianTensorField generate(const GridSpec& grid, Fn&& fn, Kind kind = Kind::plain) {
    const int n = grid.n();
    CBuffer e(grid.size() * n * n);
    for (std::size_t p = 0; p < grid.size(); ++p) {
      const CMat m = fn(p);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) e[(p * n + i) * n + j] = m(i, j);
    }
    return HermitianTensorField(grid, std::move(e), kind);
  }

  static HermitianTensorField identity(const GridSpec& grid, double scale = 1.0) {
    const int n = grid.n();
    return constant(grid, CMat::Identity(n, n) * scale, Kind::metric);
  }

  const GridSpec& grid() const noexcept { return grid_; }
  int n() const noexcept { return grid_.n(); }
  bool is_metric() const noexcept { return kind_ == Kind::metric; }
  /// True when built by constant(); the matrix is then stored once.
  bool is_constant() const noexcept { return stride_ == 0; }
  Kind kind() const noexcept { return kind_; }

  CMat at(std::size_t p) const {
    const int n = grid_.n();
    CMat m(n, n);
    const cplx* src = entries_->data() + p * stride_;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = src[i * n + j];
    return m;
  }
  cplx entry(std::size_t p, int i, int j) const { return (*entries_)[p * stride_ + i * n() + j]; }

  /// Raw storage: n*n entries per point, or a single block when constant.
  std::span<const cplx> entries() const noexcept { return {entries_->data(), entries_->size()}; }

  /// Component (i, j) as a scalar field.
  ScalarField component(int i, int j) const {
    CBuffer v(grid_.size());
    for (std::size_t p = 0; p < v.size(); ++p) v[p] = entry(p, i, j);
    if (i == j) return ScalarField::projected_real(grid_, std::move(v));
    return ScalarField(grid_, std::move(v));
  }

  HermitianTensorField as_metric() const {
    if (is_constant()) return HermitianTensorField(grid_, *entries_, Kind::metric, ConstantTag{});
    return HermitianTensorField(grid_, *entries_, Kind::metric);
  }

  double sup_abs() const {
    double s = 0.0;
    for (const auto& v : *entries_) s = std::max(s, std::abs(v));
    return s;
  }

 private:
  GridSpec grid_;
  std::shared_ptr<const CBuffer> entries_;
  Kind kind_;
  std::size_t stride_ = 0;
};

inline void require_same_grid(const GridSpec& a, const GridSpec& b) {
  if (a != b) throw InvalidArgument("fields live on different grids");
}

inline void require_axis(const GridSpec& g, int j) {
  if (j < 0 || j >= g.n()) throw InvalidArgument("complex axis index out of range");
}

namespace detail {

inline CBuffer spectrum(const ScalarField& f) {
  CBuffer s = f.copy_values();
  Spectral::get(f.grid())->forward(s);
  return s;
}

/// Applies a Fourier multiplier to a precomputed spectrum and transforms back.
template <class Symbol>
CBuffer apply_symbol(const GridSpec& grid, const CBuffer& spec, Symbol&& symbol) {
  auto sp = Spectral::get(grid);
  CBuffer out(spec.size());
  sp->for_each_mode([&](std::size_t p, const auto& k) { out[p] = spec[p] * symbol(k); });
  sp->backward(out);
  return out;
}

}  // namespace detail

/// Removes every Fourier mode with a Nyquist index. Such modes carry no
/// derivative on that axis, so fields fed to the nonlinear operators are kept
/// band-limited.
inline ScalarField band_limit(const ScalarField& f) {
  auto sp = Spectral::get(f.grid());
  CBuffer s = f.copy_values();
  sp->forward(s);
  sp->drop_nyquist(s);
  sp->backward(s);
  if (f.is_real()) return ScalarField::projected_real(f.grid(), std::move(s));
  return ScalarField(f.grid(), std::move(s));
}

/// Spectral d/dz^j, with d/dz = (d/dx - i d/dy)/2. Axis j is zero-based.
inline ScalarField d_z(const ScalarField& f, int j) {
  require_axis(f.grid(), j);
  auto out = detail::apply_symbol(f.grid(), detail::spectrum(f), [j](const auto& k) { return Spectral::dz_symbol(k, j); });
  return ScalarField(f.grid(), std::move(out));
}

/// Spectral d/dzbar^j, with d/dzbar = (d/dx + i d/dy)/2.
inline ScalarField d_zbar(const ScalarField& f, int j) {
  require_axis(f.grid(), j);
  auto out =
      detail::apply_symbol(f.grid(), detail::spectrum(f), [j](const auto& k) { return Spectral::dzbar_symbol(k, j); });
  return ScalarField(f.grid(), std::move(out));
}

/// Complex Hessian u_{i jbar} = d_{z^i} d_{zbar^j} u of a real field.
inline HermitianTensorField hessian(const ScalarField& u) {
  if (!u.is_real()) throw InvalidArgument("hessian requires a real field");
  const GridSpec& g = u.grid();
  const int n = g.n();
  const CBuffer spec = detail::spectrum(u);
  CBuffer e(g.size() * n * n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      auto d = detail::apply_symbol(
          g, spec, [i, j](const auto& k) { return Spectral::dz_symbol(k, i) * Spectral::dzbar_symbol(k, j); });
      for (std::size_t p = 0; p < g.size(); ++p) {
        e[(p * n + i) * n + j] = d[p];
        e[(p * n + j) * n + i] = std::conj(d[p]);
      }
    }
  }
  return HermitianTensorField(g, std::move(e));
}

/// Gradient components u_p = d_{z^p} u, one field per complex direction.
inline std::vector<ScalarField> gradient(const ScalarField& u) {
  const CBuffer spec = detail::spectrum(u);
  std::vector<ScalarField> out;
  for (int j = 0; j < u.grid().n(); ++j)
    out.emplace_back(u.grid(),
                     detail::apply_symbol(u.grid(), spec, [j](const auto& k) { return Spectral::dz_symbol(k, j); }));
  return out;
}

/// Flat Laplacian sum_k d_k d_kbar u.
inline ScalarField flat_laplacian(const ScalarField& u) {
  const int n = u.grid().n();
  auto out = detail::apply_symbol(u.grid(), detail::spectrum(u), [n](const auto& k) {
    cplx s{0.0, 0.0};
    for (int j = 0; j < n; ++j) s += Spectral::dz_symbol(k, j) * Spectral::dzbar_symbol(k, j);
    return s;
  });
  if (u.is_real()) return ScalarField::projected_real(u.grid(), std::move(out));
  return ScalarField(u.grid(), std::move(out));
}

/// Integral of f against the volume form of `vol`, normalized so that the
/// flat metric gives the torus volume 1.
inline double integrate(const ScalarField& f, const HermitianTensorField& vol) {
  require_same_grid(f.grid(), vol.grid());
  if (!vol.is_metric()) throw InvalidArgument("integrate requires a metric-flagged volume");
  double s = 0.0;
  for (std::size_t p = 0; p < f.size(); ++p) s += (f[p] * real_det(vol.at(p))).real();
  return s / static_cast<double>(f.size());
}

struct SupNorms {
  double sup_u = 0.0;
  double sup_grad_sq = 0.0;  // sup alpha^{p qbar} u_p u_qbar
  double sup_hess = 0.0;     // sup largest |generalized eigenvalue| of u_{i jbar} vs alpha
};

namespace detail {

/// Upper-triangle Hessian components d_i d_jbar u for i <= j, in the order
/// (0,0), (0,1), ..., (1,1), ...; avoids materializing the full tensor.
inline std::vector<CBuffer> hessian_upper(const ScalarField& u) {
  const int n = u.grid().n();
  const CBuffer spec = spectrum(u);
  std::vector<CBuffer> out;
  out.reserve(static_cast<std::size_t>(n * (n + 1) / 2));
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      out.push_back(apply_symbol(u.grid(), spec, [i, j](const auto& k) {
        return Spectral::dz_symbol(k, i) * Spectral::dzbar_symbol(k, j);
      }));
  return out;
}

inline CMat hessian_at(const std::vector<CBuffer>& upper, int n, std::size_t p) {
  CMat m(n, n);
  int c = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j, ++c) {
      m(i, j) = upper[c][p];
      m(j, i) = std::conj(upper[c][p]);
    }
  for (int i = 0; i < n; ++i) m(i, i) = m(i, i).real();
  return m;
}

}  // namespace detail

inline SupNorms sup_norms(const ScalarField& u, const HermitianTensorField& alpha) {
  require_same_grid(u.grid(), alpha.grid());
  if (!u.is_real()) throw InvalidArgument("sup_norms requires a real field");
  const int n = u.grid().n();
  const bool flat = alpha.is_constant();
  const CMat ainv0 = alpha.at(0).inverse();
  SupNorms out;
  out.sup_u = u.sup_abs();
  {
    const auto grad = gradient(u);
    for (std::size_t p = 0; p < u.size(); ++p) {
      CVec du(n);
      for (int j = 0; j < n; ++j) du(j) = grad[j][p];
      const CMat ainv = flat ? ainv0 : CMat(alpha.at(p).inverse());
      out.sup_grad_sq = std::max(out.sup_grad_sq, (du.adjoint() * ainv * du)(0, 0).real());
    }
  }
  const auto hess = detail::hessian_upper(u);
  for (std::size_t p = 0; p < u.size(); ++p) {
    const RVec ev = generalized_eigenvalues(detail::hessian_at(hess, n, p), alpha.at(p));
    out.sup_hess = std::max({out.sup_hess, std::abs(ev(0)), std::abs(ev(n - 1))});
  }
  return out;
}

/// Band-limited interpolation onto a finer grid of the same dimension
/// (zero padding in Fourier space; the Nyquist mode of the source is dropped).
inline ScalarField prolong(const ScalarField& f, const GridSpec& fine) {
  const GridSpec& coarse = f.grid();
  if (fine.n() != coarse.n() || fine.points_per_axis() < coarse.points_per_axis())
    throw InvalidArgument("prolong needs a finer grid of the same dimension");
  const int Nc = coarse.points_per_axis(), Nf = fine.points_per_axis();
  const CBuffer spec = detail::spectrum(f);
  CBuffer out(fine.size(), cplx(0.0, 0.0));
  const int axes = coarse.real_axes();
  for (std::size_t p = 0; p < coarse.size(); ++p) {
    auto idx = coarse.multi_index(p);
    bool nyquist = false;
    for (int a = 0; a < axes; ++a) {
      if (idx[a] == Nc / 2) nyquist = true;
      const int k = idx[a] < Nc / 2 ? idx[a] : idx[a] - Nc;
      idx[a] = (k + Nf) % Nf;
    }
    if (nyquist) continue;
    out[fine.point_index(idx)] = spec[p];
  }
  const double ratio = static_cast<double>(fine.size()) / static_cast<double>(coarse.size());
  for (auto& v : out) v *= ratio;
  Spectral::get(fine)->backward(out);
  if (f.is_real()) return ScalarField::projected_real(fine, std::move(out));
  return ScalarField(fine, std::move(out));
}

}  // namespace gcy
