#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "mfdg/linalg.hpp"

namespace mfdg {

/// Counts scalar multiply-add operations performed by the kernels.
struct FlopCounter {
  std::uint64_t multiply_adds = 0;
};

// Tensor data is stored with the x index fastest: entry (j1, j2, j3) of an
// n1 x n2 x n3 tensor lives at j1 + n1 * (j2 + n2 * j3).

/// out = (Mz (x) My (x) Mx) in, applied one direction at a time. Each M_k
/// is m_k x n_k; `in` has n1*n2*n3 entries and `out` m1*m2*m3.
inline void sumfact_evaluate(std::span<const double> in, const DenseMatrix& mx, const DenseMatrix& my,
                             const DenseMatrix& mz, std::span<double> out, FlopCounter* flops = nullptr) {
  const std::size_t n1 = mx.cols(), n2 = my.cols(), n3 = mz.cols();
  const std::size_t m1 = mx.rows(), m2 = my.rows(), m3 = mz.rows();
  if (in.size() != n1 * n2 * n3 || out.size() != m1 * m2 * m3) {
    throw std::invalid_argument("sumfact_evaluate: shape mismatch");
  }
  thread_local std::vector<double> t1, t2;
  t1.assign(m1 * n2 * n3, 0.0);
  t2.assign(m1 * m2 * n3, 0.0);

  for (std::size_t j = 0; j < n2 * n3; ++j) {
    const double* src = in.data() + j * n1;
    double* dst = t1.data() + j * m1;
    for (std::size_t i1 = 0; i1 < m1; ++i1) {
      const double* a = mx.row(i1).data();
      double s = 0.0;
      for (std::size_t j1 = 0; j1 < n1; ++j1) s += a[j1] * src[j1];
      dst[i1] = s;
    }
  }
  for (std::size_t j3 = 0; j3 < n3; ++j3)
    for (std::size_t i2 = 0; i2 < m2; ++i2) {
      double* dst = t2.data() + (j3 * m2 + i2) * m1;
      for (std::size_t j2 = 0; j2 < n2; ++j2) {
        const double a = my(i2, j2);
        const double* src = t1.data() + (j3 * n2 + j2) * m1;
        for (std::size_t i1 = 0; i1 < m1; ++i1) dst[i1] += a * src[i1];
      }
    }
  for (std::size_t i3 = 0; i3 < m3; ++i3) {
    double* dst = out.data() + i3 * m2 * m1;
    for (std::size_t k = 0; k < m2 * m1; ++k) dst[k] = 0.0;
    for (std::size_t j3 = 0; j3 < n3; ++j3) {
      const double a = mz(i3, j3);
      const double* src = t2.data() + j3 * m2 * m1;
      for (std::size_t k = 0; k < m2 * m1; ++k) dst[k] += a * src[k];
    }
  }
  if (flops) flops->multiply_adds += m1 * n1 * n2 * n3 + m1 * m2 * n2 * n3 + m1 * m2 * m3 * n3;
}

/// out += (Mz (x) My (x) Mx)^T in: the adjoint of sumfact_evaluate.
inline void sumfact_accumulate(std::span<const double> in, const DenseMatrix& mx, const DenseMatrix& my,
                               const DenseMatrix& mz, std::span<double> out, FlopCounter* flops = nullptr) {
  const std::size_t n1 = mx.cols(), n2 = my.cols(), n3 = mz.cols();
  const std::size_t m1 = mx.rows(), m2 = my.rows(), m3 = mz.rows();
  if (in.size() != m1 * m2 * m3 || out.size() != n1 * n2 * n3) {
    throw std::invalid_argument("sumfact_accumulate: shape mismatch");
  }
  thread_local std::vector<double> s1, s2;
  s1.assign(n1 * m2 * m3, 0.0);
  s2.assign(n1 * n2 * m3, 0.0);

  for (std::size_t i = 0; i < m2 * m3; ++i) {
    const double* src = in.data() + i * m1;
    double* dst = s1.data() + i * n1;
    for (std::size_t i1 = 0; i1 < m1; ++i1) {
      const double v = src[i1];
      const double* a = mx.row(i1).data();
      for (std::size_t j1 = 0; j1 < n1; ++j1) dst[j1] += a[j1] * v;
    }
  }
  for (std::size_t i3 = 0; i3 < m3; ++i3)
    for (std::size_t j2 = 0; j2 < n2; ++j2) {
      double* dst = s2.data() + (i3 * n2 + j2) * n1;
      for (std::size_t i2 = 0; i2 < m2; ++i2) {
        const double a = my(i2, j2);
        const double* src = s1.data() + (i3 * m2 + i2) * n1;
        for (std::size_t j1 = 0; j1 < n1; ++j1) dst[j1] += a * src[j1];
      }
    }
  for (std::size_t j3 = 0; j3 < n3; ++j3) {
    double* dst = out.data() + j3 * n2 * n1;
    for (std::size_t i3 = 0; i3 < m3; ++i3) {
      const double a = mz(i3, j3);
      const double* src = s2.data() + i3 * n2 * n1;
      for (std::size_t k = 0; k < n2 * n1; ++k) dst[k] += a * src[k];
    }
  }
  if (flops) flops->multiply_adds += n1 * m1 * m2 * m3 + n1 * n2 * m2 * m3 + n1 * n2 * n3 * m3;
}

namespace detail {

template <bool Transpose, bool Accumulate, int Dir>
void contract_kernel(const double* in, std::size_t s0, std::size_t s1, std::size_t s2, const double* a,
                     std::size_t ld, std::size_t rows, std::size_t cols, double* out) {
  auto coef = [&](std::size_t i, std::size_t j) { return Transpose ? a[j * ld + i] : a[i * ld + j]; };
  if constexpr (Dir == 0) {
    for (std::size_t l = 0; l < s1 * s2; ++l) {
      const double* src = in + l * s0;
      double* dst = out + l * rows;
      for (std::size_t i = 0; i < rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += coef(i, j) * src[j];
        if constexpr (Accumulate) {
          dst[i] += s;
        } else {
          dst[i] = s;
        }
      }
    }
  } else {
    // Directions 1 and 2 both update contiguous lines of length `len`.
    const std::size_t len = Dir == 1 ? s0 : s0 * s1;
    const std::size_t outer = Dir == 1 ? s2 : 1;
    for (std::size_t k = 0; k < outer; ++k)
      for (std::size_t i = 0; i < rows; ++i) {
        double* dst = out + (k * rows + i) * len;
        if constexpr (!Accumulate)
          for (std::size_t x = 0; x < len; ++x) dst[x] = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          const double c = coef(i, j);
          const double* src = in + (k * cols + j) * len;
          for (std::size_t x = 0; x < len; ++x) dst[x] += c * src[x];
        }
      }
  }
}

template <bool Transpose, bool Accumulate>
void contract_dispatch(int dir, const double* in, std::size_t s0, std::size_t s1, std::size_t s2, const double* a,
                       std::size_t ld, std::size_t rows, std::size_t cols, double* out) {
  switch (dir) {
    case 0:
      contract_kernel<Transpose, Accumulate, 0>(in, s0, s1, s2, a, ld, rows, cols, out);
      break;
    case 1:
      contract_kernel<Transpose, Accumulate, 1>(in, s0, s1, s2, a, ld, rows, cols, out);
      break;
    default:
      contract_kernel<Transpose, Accumulate, 2>(in, s0, s1, s2, a, ld, rows, cols, out);
  }
}

}  // namespace detail

/// Applies M (or M^T) along one direction of a tensor of the given shape
/// (x fastest). The output has `shape[dir]` replaced by the number of rows
/// of M (columns when transposed). With `accumulate` the result is added to
/// `out`, otherwise it overwrites it. Returns the multiply-add count.
inline std::uint64_t contract_direction(const double* in, std::array<std::size_t, 3> shape, const DenseMatrix& m,
                                        int dir, double* out, bool transpose, bool accumulate) {
  const std::size_t rows = transpose ? m.cols() : m.rows();
  const std::size_t cols = transpose ? m.rows() : m.cols();
  if (dir < 0 || dir > 2 || shape[dir] != cols) throw std::invalid_argument("contract_direction: shape mismatch");
  const double* a = m.data().data();
  const std::size_t ld = m.cols();
  const std::size_t s0 = shape[0], s1 = shape[1], s2 = shape[2];
  if (transpose) {
    if (accumulate) {
      detail::contract_dispatch<true, true>(dir, in, s0, s1, s2, a, ld, rows, cols, out);
    } else {
      detail::contract_dispatch<true, false>(dir, in, s0, s1, s2, a, ld, rows, cols, out);
    }
  } else {
    if (accumulate) {
      detail::contract_dispatch<false, true>(dir, in, s0, s1, s2, a, ld, rows, cols, out);
    } else {
      detail::contract_dispatch<false, false>(dir, in, s0, s1, s2, a, ld, rows, cols, out);
    }
  }
  return static_cast<std::uint64_t>(rows) * cols * (s0 * s1 * s2 / shape[dir]);
}

/// Closed-form multiply-add count of sumfact_evaluate for uniform shapes:
/// sum over the d stages of m^s * n^(d-s+1).
inline std::uint64_t sumfact_evaluate_cost(std::uint64_t n, std::uint64_t m, int d = 3) {
  std::uint64_t total = 0;
  for (int s = 1; s <= d; ++s) {
    std::uint64_t t = 1;
    for (int k = 0; k < s; ++k) t *= m;
    for (int k = 0; k < d - s + 1; ++k) t *= n;
    total += t;
  }
  return total;
}

}  // namespace mfdg
