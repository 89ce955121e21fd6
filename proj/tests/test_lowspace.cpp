#include <random>

#include <gtest/gtest.h>

#include "mfdg/dg_operator.hpp"
#include "mfdg/lowspace.hpp"
#include "mfdg/oracle.hpp"

using namespace mfdg;

namespace {

std::vector<double> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST(Transfer, Sizes) {
  const auto g = build_grid({2, 3, 4}, {1.0, 1.0, 2.0});
  const auto b = make_tensor_basis(2);
  Transfer q1(g, b, LowSpaceKind::q1), p0(g, b, LowSpaceKind::p0);
  EXPECT_EQ(q1.num_coarse(), 3u * 4 * 5);
  EXPECT_EQ(p0.num_coarse(), 24u);
  EXPECT_EQ(q1.num_fine(), 24u * 27);
}

TEST(Transfer, ProlongatesConstantsAndLinears) {
  const auto g = build_grid({2, 2, 2}, {1.0, 1.0, 1.0});
  const auto b = make_tensor_basis(3);
  Transfer q1(g, b, LowSpaceKind::q1);
  const auto d = q1.dims();
  std::vector<double> uhat(q1.num_coarse());
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) uhat[i + d[0] * (j + d[1] * k)] = 2.0 + i * g.spacing()[0];
  std::vector<double> u(q1.num_fine());
  q1.prolongate(uhat, u);
  const std::size_t n = b.n;
  for (CellIndex c = 0; c < g.num_cells(); ++c)
    for (std::size_t idx = 0; idx < b.dofs_per_cell(); ++idx) {
      const double x = g.cell_origin(c)[0] + b.nodes[idx % n] * g.spacing()[0];
      EXPECT_NEAR(u[c * b.dofs_per_cell() + idx], 2.0 + x, 1e-14);
    }
}

TEST(Transfer, RestrictIsAdjoint) {
  const auto g = build_grid({3, 2, 2}, {1.0, 1.0, 1.0});
  const auto b = make_tensor_basis(2);
  for (auto kind : {LowSpaceKind::q1, LowSpaceKind::p0}) {
    Transfer t(g, b, kind);
    const auto uhat = random_vector(t.num_coarse(), 1), r = random_vector(t.num_fine(), 2);
    std::vector<double> u(t.num_fine()), rhat(t.num_coarse());
    t.prolongate(uhat, u);
    t.restrict(r, rhat);
    EXPECT_NEAR(dot(r, u), dot(rhat, uhat), 1e-12);
  }
}

TEST(LowMatrix, MatchesGalerkinProduct) {
  auto bc = all_dirichlet();
  bc[static_cast<int>(DomainFace::y_low)] = BoundaryType::neumann;
  const auto g = build_grid({2, 3, 2}, {1.0, 1.0, 2.0}, bc);
  Coefficients c;
  c.diffusion = [](const Point&, CellIndex t) { return Tensor3::diagonal(1.0 + t, 2.0, 0.5 + 0.1 * t); };
  c.reaction = [](const Point&, CellIndex t) { return 0.1 * t; };
  const auto cc = with_mode(c, EvaluationMode::cell_centered);
  for (int p = 1; p <= 3; ++p) {
    const auto b = make_tensor_basis(p);
    const auto a = assemble_by_quadrature(g, cc, p);
    for (auto kind : {LowSpaceKind::q1, LowSpaceKind::p0}) {
      Transfer t(g, b, kind);
      const auto ref = galerkin_product(t, a).to_dense();
      const auto low = assemble_low(g, cc, p, 1.25, kind).to_dense();
      double e = 0.0;
      for (std::size_t i = 0; i < ref.rows(); ++i)
        for (std::size_t j = 0; j < ref.cols(); ++j) e = std::max(e, std::abs(ref(i, j) - low(i, j)));
      EXPECT_LT(e, 1e-12 * ref.max_abs()) << "p=" << p;
    }
  }
}

TEST(CoarseSolver, ReducesResidualAndIsLinear) {
  const auto g = build_grid({12, 12, 12}, {1.0, 1.0, 1.0});
  const auto a = assemble_low(g, Coefficients{}, 2, 1.25, LowSpaceKind::q1);
  GeometricCoarseSolver s(a, {13, 13, 13}, LowSpaceKind::q1);
  EXPECT_GT(s.num_levels(), 1u);
  const auto b = random_vector(a.rows(), 3);
  const auto x = s.solve(b);
  std::vector<double> r(b.size());
  a.multiply(x, r);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  EXPECT_LT(norm2(r), 0.5 * norm2(b));
  std::vector<double> b2(b);
  for (auto& v : b2) v *= 3.0;
  const auto x2 = s.solve(b2);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x2[i], 3.0 * x[i], 1e-11);
}

TEST(CoarseSolver, SmallSystemIsSolvedDirectly) {
  const auto g = build_grid({2, 2, 2}, {1.0, 1.0, 1.0});
  const auto a = assemble_low(g, Coefficients{}, 1, 1.25, LowSpaceKind::p0);
  GeometricCoarseSolver s(a, {2, 2, 2}, LowSpaceKind::p0);
  EXPECT_EQ(s.num_levels(), 1u);
  const auto b = random_vector(8, 4);
  const auto x = s.solve(b);
  std::vector<double> r(8);
  a.multiply(x, r);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(r[i], b[i], 1e-12);
}
