#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mfdg/linalg.hpp"

namespace mfdg {

inline constexpr int kMaxDegree = 12;
inline constexpr int kMaxQuadraturePoints = 16;

namespace detail {

/// Legendre polynomial P_n(x) and its predecessor P_{n-1}(x) on [-1, 1].
inline std::pair<double, double> legendre_pair(int n, double x) {
  double p0 = 1.0;
  double p1 = x;
  if (n == 0) return {1.0, 0.0};
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return {p1, p0};
}

}  // namespace detail

/// Gauss-Lobatto points for degree p, mapped to [0, 1] and sorted.
inline std::vector<double> lobatto_nodes(int p) {
  if (p < 1 || p > kMaxDegree) {
    throw std::invalid_argument("lobatto_nodes: unsupported degree " + std::to_string(p));
  }
  const int n = p + 1;
  std::vector<double> x(n);
  // Newton iteration on (1 - x^2) P_p'(x), started from Chebyshev-Lobatto points.
  for (int i = 0; i < n; ++i) {
    double xi = std::cos(std::numbers::pi * i / p);
    for (int it = 0; it < 100; ++it) {
      const auto [pp, pm] = detail::legendre_pair(p, xi);
      // x P_p - P_{p-1} = (x^2 - 1) P_p' / p vanishes at the Lobatto points.
      const double dx = (xi * pp - pm) / (n * pp);
      xi -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    x[i] = 0.5 * (1.0 - xi);
  }
  std::sort(x.begin(), x.end());
  x.front() = 0.0;
  x.back() = 1.0;
  for (int i = 0; i < n / 2; ++i) {
    const double s = 0.5 * (x[i] + 1.0 - x[n - 1 - i]);
    x[i] = s;
    x[n - 1 - i] = 1.0 - s;
  }
  if (n % 2 == 1) x[n / 2] = 0.5;
  return x;
}

struct QuadratureRule {
  std::vector<double> points;
  std::vector<double> weights;
};

/// m-point Gauss-Legendre rule on [0, 1].
inline QuadratureRule gauss_rule(int m) {
  if (m < 1 || m > kMaxQuadraturePoints) {
    throw std::invalid_argument("gauss_rule: unsupported number of points " + std::to_string(m));
  }
  QuadratureRule q;
  q.points.resize(m);
  q.weights.resize(m);
  for (int i = 0; i < m; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      const auto [pm, pm1] = detail::legendre_pair(m, x);
      dp = m * (x * pm - pm1) / (x * x - 1.0);
      const double dx = pm / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const auto [pm, pm1] = detail::legendre_pair(m, x);
    dp = m * (x * pm - pm1) / (x * x - 1.0);
    q.points[i] = 0.5 * (1.0 - x);
    q.weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
  // Points come out descending in x, i.e. ascending after the reflection.
  for (int i = 0; i < m / 2; ++i) {
    const double s = 0.5 * (q.points[i] + 1.0 - q.points[m - 1 - i]);
    const double w = 0.5 * (q.weights[i] + q.weights[m - 1 - i]);
    q.points[i] = s;
    q.points[m - 1 - i] = 1.0 - s;
    q.weights[i] = q.weights[m - 1 - i] = w;
  }
  if (m % 2 == 1) q.points[m / 2] = 0.5;
  return q;
}

/// Values (and derivatives) of the Lagrange polynomials on `nodes` at x.
inline void lagrange_eval(const std::vector<double>& nodes, double x, std::span<double> values,
                          std::span<double> derivatives = {}) {
  const std::size_t n = nodes.size();
  for (std::size_t j = 0; j < n; ++j) {
    double v = 1.0;
    for (std::size_t k = 0; k < n; ++k)
      if (k != j) v *= (x - nodes[k]) / (nodes[j] - nodes[k]);
    values[j] = v;
    if (!derivatives.empty()) {
      double d = 0.0;
      for (std::size_t l = 0; l < n; ++l) {
        if (l == j) continue;
        double t = 1.0 / (nodes[j] - nodes[l]);
        for (std::size_t k = 0; k < n; ++k)
          if (k != j && k != l) t *= (x - nodes[k]) / (nodes[j] - nodes[k]);
        d += t;
      }
      derivatives[j] = d;
    }
  }
}

struct BasisValues {
  std::vector<double> values;
  std::vector<double> derivatives;
};

/// The n = p + 1 nodal basis functions (and derivatives) at x in [0, 1].
inline BasisValues eval_basis_at(int p, double x) {
  if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("eval_basis_at: x outside [0, 1]");
  const auto nodes = lobatto_nodes(p);
  BasisValues b{std::vector<double>(nodes.size()), std::vector<double>(nodes.size())};
  lagrange_eval(nodes, x, b.values, b.derivatives);
  return b;
}

/// Value matrix A (m x n, A[i][j] = theta_j(xi_i)) and derivative matrix G.
inline std::pair<DenseMatrix, DenseMatrix> eval_matrices(int p, int m) {
  const auto nodes = lobatto_nodes(p);
  const auto rule = gauss_rule(m);
  const std::size_t n = nodes.size();
  DenseMatrix a(m, n), g(m, n);
  for (int i = 0; i < m; ++i) lagrange_eval(nodes, rule.points[i], a.row(i), g.row(i));
  return {std::move(a), std::move(g)};
}

/// One-dimensional ingredients of the tensor-product nodal basis.
struct TensorBasis {
  int degree = 1;
  std::size_t n = 2;  ///< basis functions per direction
  std::size_t m = 2;  ///< quadrature points per direction
  std::vector<double> nodes;
  QuadratureRule rule;
  DenseMatrix values;       ///< m x n
  DenseMatrix derivatives;  ///< m x n
  /// 1 x n rows with theta_j and theta_j' at reference coordinate 0 and 1.
  std::array<DenseMatrix, 2> face_values;
  std::array<DenseMatrix, 2> face_derivatives;

  std::size_t dofs_per_cell() const { return n * n * n; }
  std::size_t points_per_cell() const { return m * m * m; }
};

inline TensorBasis make_tensor_basis(int p, int m = 0) {
  if (m == 0) m = p + 1;
  TensorBasis b;
  b.degree = p;
  b.nodes = lobatto_nodes(p);
  b.rule = gauss_rule(m);
  b.n = b.nodes.size();
  b.m = static_cast<std::size_t>(m);
  std::tie(b.values, b.derivatives) = eval_matrices(p, m);
  for (int side = 0; side < 2; ++side) {
    b.face_values[side] = DenseMatrix(1, b.n);
    b.face_derivatives[side] = DenseMatrix(1, b.n);
    lagrange_eval(b.nodes, static_cast<double>(side), b.face_values[side].row(0),
                  b.face_derivatives[side].row(0));
  }
  return b;
}

}  // namespace mfdg
