#include <cmath>

#include <gtest/gtest.h>

#include "mfdg/basis.hpp"

using namespace mfdg;

TEST(Lobatto, EndpointsAndSymmetry) {
  for (int p = 1; p <= kMaxDegree; ++p) {
    const auto x = lobatto_nodes(p);
    ASSERT_EQ(x.size(), static_cast<std::size_t>(p + 1));
    EXPECT_DOUBLE_EQ(x.front(), 0.0);
    EXPECT_DOUBLE_EQ(x.back(), 1.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_NEAR(x[i] + x[x.size() - 1 - i], 1.0, 1e-14);
      if (i > 0) EXPECT_GT(x[i], x[i - 1]);
    }
  }
}

TEST(Lobatto, InteriorNodesAreLegendreDerivativeRoots) {
  // p = 2: midpoint; p = 3: 1/2 -+ sqrt(5)/10.
  EXPECT_NEAR(lobatto_nodes(2)[1], 0.5, 1e-15);
  EXPECT_NEAR(lobatto_nodes(3)[1], 0.5 - std::sqrt(5.0) / 10.0, 1e-15);
}

TEST(Lobatto, RejectsBadDegree) {
  EXPECT_THROW(lobatto_nodes(0), std::invalid_argument);
  EXPECT_THROW(lobatto_nodes(kMaxDegree + 1), std::invalid_argument);
}

TEST(Gauss, IntegratesPolynomialsExactly) {
  for (int m = 1; m <= kMaxQuadraturePoints; ++m) {
    const auto r = gauss_rule(m);
    for (int k = 0; k <= 2 * m - 1; ++k) {
      double s = 0.0;
      for (int i = 0; i < m; ++i) s += r.weights[i] * std::pow(r.points[i], k);
      EXPECT_NEAR(s, 1.0 / (k + 1), 1e-14) << "m=" << m << " k=" << k;
    }
  }
}

TEST(Gauss, TwoPointRule) {
  const auto r = gauss_rule(2);
  EXPECT_NEAR(r.points[0], 0.5 - 0.5 / std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(r.weights[0], 0.5, 1e-15);
}

TEST(Lagrange, KroneckerAndPartitionOfUnity) {
  for (int p = 1; p <= 8; ++p) {
    const auto x = lobatto_nodes(p);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto b = eval_basis_at(p, x[i]);
      for (std::size_t j = 0; j < x.size(); ++j) EXPECT_NEAR(b.values[j], i == j ? 1.0 : 0.0, 1e-13);
    }
    const auto b = eval_basis_at(p, 0.37);
    double s = 0.0, ds = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      s += b.values[j];
      ds += b.derivatives[j];
    }
    EXPECT_NEAR(s, 1.0, 1e-13);
    EXPECT_NEAR(ds, 0.0, 1e-11);
  }
}

TEST(Lagrange, DerivativeReproducesLinearFunction) {
  const int p = 4;
  const auto x = lobatto_nodes(p);
  const auto b = eval_basis_at(p, 0.81);
  double d = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) d += b.derivatives[j] * (3.0 * x[j] * x[j]);
  EXPECT_NEAR(d, 6.0 * 0.81, 1e-12);
}

TEST(TensorBasis, MatricesAndFaceRows) {
  const auto tb = make_tensor_basis(3);
  EXPECT_EQ(tb.n, 4u);
  EXPECT_EQ(tb.m, 4u);
  EXPECT_EQ(tb.dofs_per_cell(), 64u);
  EXPECT_EQ(tb.values.rows(), 4u);
  EXPECT_EQ(tb.values.cols(), 4u);
  for (std::size_t j = 0; j < tb.n; ++j) {
    EXPECT_NEAR(tb.face_values[0](0, j), j == 0 ? 1.0 : 0.0, 1e-14);
    EXPECT_NEAR(tb.face_values[1](0, j), j == tb.n - 1 ? 1.0 : 0.0, 1e-14);
  }
  const auto [a, g] = eval_matrices(3, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_DOUBLE_EQ(a(i, j), tb.values(i, j));
      EXPECT_DOUBLE_EQ(g(i, j), tb.derivatives(i, j));
    }
}

TEST(TensorBasis, RejectsPointOutsideInterval) { EXPECT_THROW(eval_basis_at(2, 1.5), std::invalid_argument); }
