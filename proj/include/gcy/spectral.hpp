#pragma once

// FFT plumbing for the periodic grid on C^n / (Z^n + i Z^n).
//
// Storage order is row-major over the real axes (x_1, y_1, ..., x_n, y_n) with
// x_1 varying slowest, which is exactly FFTW's multi-dimensional layout.

#include <fftw3.h>

#include <array>
#include <cstddef>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <new>
#include <utility>
#include <vector>

#include "gcy/errors.hpp"
#include "gcy/linalg.hpp"

namespace gcy {

template <class T, std::size_t Align = 64>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U, Align>&) noexcept {}
  template <class U>
  struct rebind {
    using other = AlignedAllocator<U, Align>;
  };

  T* allocate(std::size_t count) {
    const std::size_t bytes = ((count * sizeof(T) + Align - 1) / Align) * Align;
    void* p = std::aligned_alloc(Align, bytes == 0 ? Align : bytes);
    if (p == nullptr) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { std::free(p); }

  friend bool operator==(const AlignedAllocator&, const AlignedAllocator&) { return true; }
  friend bool operator!=(const AlignedAllocator&, const AlignedAllocator&) { return false; }
};

using CBuffer = std::vector<cplx, AlignedAllocator<cplx>>;

/// Shape of the periodic grid: complex dimension n, N points on each of the
/// 2n unit-period real axes.
class GridSpec {
 public:
  static constexpr int kMaxComplexDim = 4;

  GridSpec(int n, int points_per_axis) : n_(n), N_(points_per_axis) {
    if (n < 2 || n > kMaxComplexDim)
      throw InvalidArgument("complex dimension must be in [2, " + std::to_string(kMaxComplexDim) + "]");
    if (points_per_axis < 8 || (points_per_axis & (points_per_axis - 1)) != 0)
      throw InvalidArgument("points_per_axis must be a power of two >= 8");
    size_ = 1;
    for (int a = 0; a < 2 * n; ++a) size_ *= static_cast<std::size_t>(points_per_axis);
  }

  int n() const noexcept { return n_; }
  int points_per_axis() const noexcept { return N_; }
  int real_axes() const noexcept { return 2 * n_; }
  std::size_t size() const noexcept { return size_; }

  /// Integer coordinates of a point, one entry per real axis.
  std::array<int, 2 * kMaxComplexDim> multi_index(std::size_t point) const {
    std::array<int, 2 * kMaxComplexDim> idx{};
    for (int a = real_axes() - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(point % N_);
      point /= N_;
    }
    return idx;
  }

  std::size_t point_index(const std::array<int, 2 * kMaxComplexDim>& idx) const {
    std::size_t p = 0;
    for (int a = 0; a < real_axes(); ++a) p = p * N_ + static_cast<std::size_t>(((idx[a] % N_) + N_) % N_);
    return p;
  }

  /// Real coordinates in [0,1): axis 2j is x_{j+1}, axis 2j+1 is y_{j+1}.
  std::array<double, 2 * kMaxComplexDim> coordinates(std::size_t point) const {
    auto idx = multi_index(point);
    std::array<double, 2 * kMaxComplexDim> x{};
    for (int a = 0; a < real_axes(); ++a) x[a] = static_cast<double>(idx[a]) / N_;
    return x;
  }

  friend bool operator==(const GridSpec& a, const GridSpec& b) { return a.n_ == b.n_ && a.N_ == b.N_; }
  friend bool operator!=(const GridSpec& a, const GridSpec& b) { return !(a == b); }

 private:
  int n_;
  int N_;
  std::size_t size_;
};

/// Cached forward/backward FFTW plans for one grid shape. Plans are created
/// once under a lock and executed through the thread-safe new-array interface.
class Spectral {
 public:
  static std::shared_ptr<const Spectral> get(const GridSpec& grid) {
    static std::mutex mutex;
    static std::map<std::pair<int, int>, std::shared_ptr<const Spectral>> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto key = std::make_pair(grid.n(), grid.points_per_axis());
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto s = std::shared_ptr<const Spectral>(new Spectral(grid));
    cache.emplace(key, s);
    return s;
  }

  ~Spectral() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }
  Spectral(const Spectral&) = delete;
  Spectral& operator=(const Spectral&) = delete;

  const GridSpec& grid() const noexcept { return grid_; }

  void forward(CBuffer& data) const {
    check(data);
    auto* p = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(forward_, p, p);
  }

  /// Inverse transform including the 1/size normalization.
  void backward(CBuffer& data) const {
    check(data);
    auto* p = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(backward_, p, p);
    const double scale = 1.0 / static_cast<double>(grid_.size());
    for (auto& v : data) v *= scale;
  }

  /// Visit every Fourier mode in storage order. `k` holds the signed
  /// wavenumber per real axis. Modes with a Nyquist index on any axis are
  /// passed k = 0, so they carry no derivative in any direction.
  template <class Fn>
  void for_each_mode(Fn&& fn) const {
    const int axes = grid_.real_axes();
    const int N = grid_.points_per_axis();
    std::array<int, 2 * GridSpec::kMaxComplexDim> idx{};
    std::array<int, 2 * GridSpec::kMaxComplexDim> k{};
    const std::array<int, 2 * GridSpec::kMaxComplexDim> zero{};
    int nyquist = 0;
    const std::size_t total = grid_.size();
    for (std::size_t p = 0; p < total; ++p) {
      fn(p, nyquist > 0 ? zero : static_cast<const std::array<int, 2 * GridSpec::kMaxComplexDim>&>(k));
      for (int a = axes - 1; a >= 0; --a) {
        if (idx[a] == N / 2) --nyquist;
        if (++idx[a] < N) {
          if (idx[a] == N / 2) ++nyquist;
          k[a] = wavenumber(idx[a], N);
          break;
        }
        idx[a] = 0;
        k[a] = 0;
      }
    }
  }

  /// Zeroes every mode of a spectrum with a Nyquist index on some axis.
  void drop_nyquist(CBuffer& spec) const {
    check(spec);
    const int axes = grid_.real_axes();
    const int N = grid_.points_per_axis();
    std::array<int, 2 * GridSpec::kMaxComplexDim> idx{};
    int nyquist = 0;
    for (std::size_t p = 0; p < spec.size(); ++p) {
      if (nyquist > 0) spec[p] = 0.0;
      for (int a = axes - 1; a >= 0; --a) {
        if (idx[a] == N / 2) --nyquist;
        if (++idx[a] < N) {
          if (idx[a] == N / 2) ++nyquist;
          break;
        }
        idx[a] = 0;
      }
    }
  }

  static int wavenumber(int i, int N) {
    if (i < N / 2) return i;
    if (i == N / 2) return 0;
    return i - N;
  }

  /// Fourier symbol of d/dz^j with d/dz = (d/dx - i d/dy)/2.
  static cplx dz_symbol(const std::array<int, 2 * GridSpec::kMaxComplexDim>& k, int j) {
    return {kPi * k[2 * j + 1], kPi * k[2 * j]};
  }
  /// Fourier symbol of d/dzbar^j with d/dzbar = (d/dx + i d/dy)/2.
  static cplx dzbar_symbol(const std::array<int, 2 * GridSpec::kMaxComplexDim>& k, int j) {
    return {-kPi * k[2 * j + 1], kPi * k[2 * j]};
  }

 private:
  explicit Spectral(const GridSpec& grid) : grid_(grid) {
    std::vector<int> dims(grid.real_axes(), grid.points_per_axis());
    CBuffer scratch(grid.size());
    auto* p = reinterpret_cast<fftw_complex*>(scratch.data());
    forward_ = fftw_plan_dft(grid.real_axes(), dims.data(), p, p, FFTW_FORWARD, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft(grid.real_axes(), dims.data(), p, p, FFTW_BACKWARD, FFTW_ESTIMATE);
    if (forward_ == nullptr || backward_ == nullptr) throw Error("FFTW planning failed");
  }

  void check(const CBuffer& data) const {
    if (data.size() != grid_.size()) throw InvalidArgument("buffer size does not match grid");
  }

  GridSpec grid_;
  fftw_plan forward_{};
  fftw_plan backward_{};
};

}  // namespace gcy
