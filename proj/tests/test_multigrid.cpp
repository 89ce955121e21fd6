#include <random>

#include <gtest/gtest.h>

#include "mfdg/block_smoother.hpp"
#include "mfdg/krylov.hpp"
#include "mfdg/multigrid.hpp"
#include "mfdg/oracle.hpp"

using namespace mfdg;

namespace {

struct TwoLevel {
  StructuredGrid grid;
  TensorBasis basis;
  DGOperator op;
  FactorizedBlocks blocks;
  Transfer transfer;
  GeometricCoarseSolver coarse;
  HybridMG mg;

  TwoLevel(std::array<int, 3> cells, int p, LowSpaceKind kind, double omega)
      : grid(build_grid(cells, {1.0, 1.0, 2.0})),
        basis(make_tensor_basis(p)),
        op(grid, basis, Coefficients{}),
        blocks(op),
        transfer(grid, basis, kind),
        coarse(assemble_low(grid, Coefficients{}, p, 1.25, kind), transfer.dims(), kind) {
    SmootherConfig sc;
    sc.omega = omega;
    mg = HybridMG([this](std::span<const double> u, std::span<double> v) { op.apply(u, v); },
                  [this, sc](std::span<const double> f, std::span<double> u, int n) {
                    smooth(op, blocks, sc, f, u, n);
                  },
                  transfer, coarse);
  }
};

std::vector<double> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST(HybridMG, UnsetupThrows) {
  HybridMG mg;
  std::vector<double> f(4), u(4);
  EXPECT_THROW(mg.mg_apply(f, u), InvalidStateError);
}

TEST(HybridMG, VCycleContracts) {
  TwoLevel t({4, 4, 8}, 2, LowSpaceKind::q1, 0.8);
  const auto f = random_vector(t.op.size(), 1);
  std::vector<double> u(f.size(), 0.0), r(f.size());
  for (int it = 0; it < 5; ++it) t.mg.mg_apply(f, u);
  t.op.apply(u, r);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = f[i] - r[i];
  EXPECT_LT(norm2(r), 0.05 * norm2(f));
}

TEST(HybridMG, PreconditionerIsSymmetric) {
  TwoLevel t({2, 2, 4}, 2, LowSpaceKind::q1, 0.8);
  const auto a = random_vector(t.op.size(), 2), b = random_vector(t.op.size(), 3);
  std::vector<double> za(a.size()), zb(b.size());
  t.mg.precondition(a, za);
  t.mg.precondition(b, zb);
  EXPECT_NEAR(dot(b, za), dot(a, zb), 1e-10 * norm2(za) * norm2(b));
}

TEST(HybridMG, PreconditionedCgBeatsPlainCg) {
  for (auto kind : {LowSpaceKind::q1, LowSpaceKind::p0}) {
    TwoLevel t({4, 4, 8}, 2, kind, 0.8);
    const auto f = random_vector(t.op.size(), 4);
    LinearMap apply = [&](std::span<const double> u, std::span<double> v) { t.op.apply(u, v); };
    std::vector<double> x1(f.size(), 0.0), x2(f.size(), 0.0);
    const auto plain = cg(apply, {}, f, x1);
    const auto pre = cg(apply, t.mg.as_preconditioner(), f, x2);
    EXPECT_TRUE(plain.converged);
    EXPECT_TRUE(pre.converged);
    EXPECT_LT(pre.iterations * 4, plain.iterations);
  }
}

TEST(HybridMG, NegativeSweepsRejected) {
  TwoLevel t({2, 2, 2}, 1, LowSpaceKind::p0, 1.0);
  MultigridConfig c;
  c.n_pre = -1;
  EXPECT_THROW(HybridMG([](std::span<const double>, std::span<double>) {},
                        [](std::span<const double>, std::span<double>, int) {}, t.transfer, t.coarse, c),
               std::invalid_argument);
}
