#pragma once

// Pointwise exterior algebra over C^n with generators dz^1, dzbar^1, ...,
// dz^n, dzbar^n. A form is a dense coefficient vector indexed by the bitmask
// of its generators; bit 2k is dz^{k+1} and bit 2k+1 is dzbar^{k+1}, and a
// monomial's generators are wedged in increasing bit order. Dense storage is
// fine for the small n this library targets (4^n coefficients).

#include <bit>
#include <cstdint>
#include <vector>

#include "gcy/linalg.hpp"

namespace gcy {

class Form {
 public:
  explicit Form(int n) : n_(n), c_(std::size_t{1} << (2 * n), cplx(0.0, 0.0)) {}

  static Form scalar(int n, cplx v) {
    Form f(n);
    f.c_[0] = v;
    return f;
  }
  static Form dz(int n, int k) {
    Form f(n);
    f.c_[std::size_t{1} << (2 * k)] = 1.0;
    return f;
  }
  static Form dzbar(int n, int k) {
    Form f(n);
    f.c_[std::size_t{1} << (2 * k + 1)] = 1.0;
    return f;
  }
  /// sqrt(-1) sum_{ij} b(i,j) dz^i ^ dzbar^j.
  static Form one_one(const CMat& b) {
    const int n = static_cast<int>(b.rows());
    Form f(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const std::uint32_t a = 1u << (2 * i), c = 1u << (2 * j + 1);
        f.c_[a | c] += cplx(0.0, 1.0) * b(i, j) * static_cast<double>(sign(a, c));
      }
    return f;
  }
  /// sum_p c_p dz^p.
  static Form one_zero(const CVec& c) {
    Form f(static_cast<int>(c.size()));
    for (int p = 0; p < c.size(); ++p) f.c_[std::size_t{1} << (2 * p)] = c(p);
    return f;
  }
  /// sum_p c_p dzbar^p.
  static Form zero_one(const CVec& c) {
    Form f(static_cast<int>(c.size()));
    for (int p = 0; p < c.size(); ++p) f.c_[std::size_t{1} << (2 * p + 1)] = c(p);
    return f;
  }

  int n() const noexcept { return n_; }
  std::size_t dim() const noexcept { return c_.size(); }
  cplx operator[](std::size_t mask) const { return c_[mask]; }
  cplx& operator[](std::size_t mask) { return c_[mask]; }

  /// Sign of moving the generators of `right` past those of `left` into
  /// increasing order (left ^ right with disjoint masks).
  static int sign(std::uint32_t left, std::uint32_t right) {
    int swaps = 0;
    while (right != 0) {
      const int b = std::countr_zero(right);
      right &= right - 1;
      swaps += std::popcount(left >> (b + 1));
    }
    return (swaps & 1) ? -1 : 1;
  }

  Form wedge(const Form& o) const {
    Form out(n_);
    for (std::uint32_t a = 0; a < c_.size(); ++a) {
      if (c_[a] == cplx(0.0, 0.0)) continue;
      for (std::uint32_t b = 0; b < o.c_.size(); ++b) {
        if ((a & b) != 0 || o.c_[b] == cplx(0.0, 0.0)) continue;
        out.c_[a | b] += c_[a] * o.c_[b] * static_cast<double>(sign(a, b));
      }
    }
    return out;
  }

  Form power(int k) const {
    Form out = scalar(n_, 1.0);
    for (int i = 0; i < k; ++i) out = out.wedge(*this);
    return out;
  }

  /// Complex conjugate: conjugates coefficients and swaps dz <-> dzbar.
  Form conj() const {
    Form out(n_);
    for (std::uint32_t m = 0; m < c_.size(); ++m) {
      if (c_[m] == cplx(0.0, 0.0)) continue;
      // Generators of m in order, each swapped with its partner.
      int seq[2 * kMaxDim];
      int len = 0;
      for (std::uint32_t r = m; r != 0; r &= r - 1) seq[len++] = std::countr_zero(r) ^ 1;
      int inversions = 0;
      for (int i = 0; i < len; ++i)
        for (int j = i + 1; j < len; ++j)
          if (seq[i] > seq[j]) ++inversions;
      std::uint32_t mm = 0;
      for (int i = 0; i < len; ++i) mm |= 1u << seq[i];
      out.c_[mm] += std::conj(c_[m]) * ((inversions & 1) ? -1.0 : 1.0);
    }
    return out;
  }

  Form real_part() const { return (*this + conj()) * 0.5; }

  Form operator+(const Form& o) const {
    Form out(*this);
    for (std::size_t i = 0; i < c_.size(); ++i) out.c_[i] += o.c_[i];
    return out;
  }
  Form operator-(const Form& o) const { return *this + o * (-1.0); }
  Form operator*(cplx s) const {
    Form out(*this);
    for (auto& v : out.c_) v *= s;
    return out;
  }

  /// Coefficient of the flat volume form prod_k (sqrt(-1) dz^k ^ dzbar^k).
  cplx top_coefficient() const {
    const std::uint32_t full = static_cast<std::uint32_t>(c_.size() - 1);
    cplx in = 1.0;
    for (int k = 0; k < n_; ++k) in *= cplx(0.0, 1.0);
    return c_[full] / in;
  }

  /// Matrix C with C(a,b) = top coefficient of (sqrt(-1) dz^a ^ dzbar^b) ^ this,
  /// for an (n-1, n-1)-form.
  CMat pairing_matrix() const {
    CMat c(n_, n_);
    const std::uint32_t full = static_cast<std::uint32_t>(c_.size() - 1);
    cplx in = 1.0;
    for (int k = 0; k < n_; ++k) in *= cplx(0.0, 1.0);
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b) {
        const std::uint32_t left = (1u << (2 * a)) | (1u << (2 * b + 1));
        const std::uint32_t rest = full ^ left;
        const double s = sign(1u << (2 * a), 1u << (2 * b + 1)) * sign(left, rest);
        c(a, b) = cplx(0.0, 1.0) * s * c_[rest] / in;
      }
    return c;
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& v : c_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  int n_;
  std::vector<cplx> c_;
};

/// Hodge star of a real (n-1, n-1)-form with respect to alpha, returned as the
/// Hermitian matrix of the (1,1)-form. Computed in the alpha-orthonormal
/// coframe theta = L^T dz (alpha = L L^dagger), where the star sends the
/// coefficient of the monomial missing dz^i and dzbar^j to the (j, i) slot.
inline CMat hodge_star_nn(const Form& theta, const CMat& alpha) {
  Eigen::LLT<CMat> llt(alpha);
  if (llt.info() != Eigen::Success) throw InvalidArgument("hodge star: alpha not positive definite");
  const CMat l = llt.matrixL();
  const double det_a = real_det(alpha);
  const CMat c = theta.pairing_matrix();
  // Pairing against the orthonormal (1,1) basis, then back to dz components.
  const CMat frame_pairing = (l.transpose() * c * l.conjugate()) / det_a;
  const CMat frame_star = frame_pairing.transpose();
  return l * frame_star * l.adjoint();
}

inline double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

}  // namespace gcy
