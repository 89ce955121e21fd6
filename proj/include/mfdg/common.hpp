#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mfdg {

/// Spatial dimension. The grid, basis and kernels are built for hexahedra.
inline constexpr int kDim = 3;

using Point = std::array<double, 3>;
using Vec3 = std::array<double, 3>;

/// Row-major 3x3 tensor.
struct Tensor3 {
  std::array<double, 9> a{};

  double operator()(int i, int j) const { return a[3 * i + j]; }
  double& operator()(int i, int j) { return a[3 * i + j]; }

  static Tensor3 identity() { return diagonal(1.0, 1.0, 1.0); }
  static Tensor3 diagonal(double x, double y, double z) {
    Tensor3 t;
    t(0, 0) = x;
    t(1, 1) = y;
    t(2, 2) = z;
    return t;
  }
  static Tensor3 scaled(double s) { return diagonal(s, s, s); }
};

using CellIndex = std::size_t;

/// Raised when coefficients make the discrete problem ill-posed
/// (e.g. vanishing normal diffusivity on a Dirichlet face).
class IllPosedCoefficientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a method is called before the object is set up.
class InvalidStateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void check_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw std::invalid_argument(std::string(what) + ": size mismatch (got " +
                                std::to_string(got) + ", expected " +
                                std::to_string(want) + ")");
  }
}

/// Runs fn(begin, end) over contiguous chunks of [0, n). Chunks write
/// disjoint data, so the result does not depend on the thread count.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n < 2) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::size_t t = std::min<std::size_t>(threads, n);
  std::vector<std::jthread> pool;
  pool.reserve(t);
  for (std::size_t k = 0; k < t; ++k) {
    const std::size_t b = n * k / t;
    const std::size_t e = n * (k + 1) / t;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
}

}  // namespace mfdg
