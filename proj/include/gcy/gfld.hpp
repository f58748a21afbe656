#pragma once

// GFLD1 field dumps.
//
// Layout: one ASCII header line
//     GFLD1 n=<n> N=<points_per_axis> kind=<scalar|tensor>\n
// followed by little-endian IEEE-754 64-bit (re, im) pairs. Scalar dumps hold
// one pair per grid point; tensor dumps hold n*n pairs per point (row-major
// matrix, entry (i, j) = h_{i jbar}). Points are ordered row-major over the
// real axes (x_1, y_1, ..., x_n, y_n) with x_1 slowest.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>

#include "gcy/grid_field.hpp"

namespace gcy::gfld {

namespace detail {

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  char buf[8];
  std::memcpy(buf, &bits, 8);
  os.write(buf, 8);
}

inline double get_f64(std::istream& is) {
  char buf[8];
  if (!is.read(buf, 8)) throw InvalidArgument("GFLD1: truncated payload");
  std::uint64_t bits;
  std::memcpy(&bits, buf, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

inline void write_header(std::ostream& os, const GridSpec& g, const char* kind) {
  os << "GFLD1 n=" << g.n() << " N=" << g.points_per_axis() << " kind=" << kind << "\n";
}

}  // namespace detail

inline void write(std::ostream& os, const ScalarField& f) {
  detail::write_header(os, f.grid(), "scalar");
  for (const auto& v : f.values()) {
    detail::put_f64(os, v.real());
    detail::put_f64(os, v.imag());
  }
}

inline void write(std::ostream& os, const HermitianTensorField& h) {
  detail::write_header(os, h.grid(), "tensor");
  const int n = h.n();
  for (std::size_t p = 0; p < h.grid().size(); ++p)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const cplx v = h.entry(p, i, j);
        detail::put_f64(os, v.real());
        detail::put_f64(os, v.imag());
      }
}

template <class Field>
void write_file(const std::string& path, const Field& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  write(os, f);
}

using AnyField = std::variant<ScalarField, HermitianTensorField>;

inline AnyField read(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw InvalidArgument("GFLD1: missing header");
  std::istringstream hs(header);
  std::string magic, n_tok, N_tok, kind_tok;
  hs >> magic >> n_tok >> N_tok >> kind_tok;
  if (magic != "GFLD1" || n_tok.rfind("n=", 0) != 0 || N_tok.rfind("N=", 0) != 0 || kind_tok.rfind("kind=", 0) != 0)
    throw InvalidArgument("GFLD1: malformed header '" + header + "'");
  const GridSpec grid(std::stoi(n_tok.substr(2)), std::stoi(N_tok.substr(2)));
  const std::string kind = kind_tok.substr(5);
  std::size_t count = grid.size();
  if (kind == "tensor")
    count *= static_cast<std::size_t>(grid.n() * grid.n());
  else if (kind != "scalar")
    throw InvalidArgument("GFLD1: unknown kind '" + kind + "'");
  CBuffer v(count);
  for (auto& z : v) {
    const double re = detail::get_f64(is);
    const double im = detail::get_f64(is);
    z = cplx(re, im);
  }
  if (kind == "scalar") return ScalarField(grid, std::move(v));
  return HermitianTensorField(grid, std::move(v));
}

inline AnyField read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return read(is);
}

}  // namespace gcy::gfld
