// Minimal use of the library without the benchmark driver: Poisson on the
// unit cube, matrix-free operator, two-level preconditioner, CG.
#include <cmath>
#include <cstdio>

#include "mfdg/block_smoother.hpp"
#include "mfdg/dg_operator.hpp"
#include "mfdg/krylov.hpp"
#include "mfdg/multigrid.hpp"

using namespace mfdg;

int main() {
  const int p = 3;
  const auto grid = build_grid({6, 6, 6}, {1.0, 1.0, 1.0});
  const auto basis = make_tensor_basis(p);

  Coefficients c;
  c.source = [](const Point& x) { return 3.0 * M_PI * M_PI * std::sin(M_PI * x[0]) * std::sin(M_PI * x[1]) * std::sin(M_PI * x[2]); };
  const DGOperator op(grid, basis, c);
  const DGOperator op_pc(grid, basis, with_mode(c, EvaluationMode::cell_centered));

  BlockSolveConfig bc;
  bc.tolerance = 1e-2;
  IterativeBlockInverse inv(op_pc, bc);
  SmootherConfig sc;
  sc.omega = 0.8;

  Transfer transfer(grid, basis, LowSpaceKind::q1);
  GeometricCoarseSolver coarse(assemble_low(grid, with_mode(c, EvaluationMode::cell_centered), p, 1.25, LowSpaceKind::q1),
                               transfer.dims(), LowSpaceKind::q1);
  HybridMG mg([&](std::span<const double> u, std::span<double> v) { op_pc.apply(u, v); },
              [&](std::span<const double> f, std::span<double> u, int n) { smooth(op_pc, inv, sc, f, u, n); },
              transfer, coarse);

  const auto rhs = op.assemble_rhs();
  std::vector<double> u(op.size(), 0.0);
  const auto rep = cg([&](std::span<const double> x, std::span<double> y) { op.apply(x, y); }, mg.as_preconditioner(),
                      rhs, u);
  std::printf("%zu unknowns, %d CG iterations, relative residual %.3g\n", op.size(), rep.iterations,
              rep.relative_residual);

  // nodal error against sin(pi x) sin(pi y) sin(pi z)
  double err = 0.0;
  const std::size_t n = basis.n;
  for (CellIndex t = 0; t < grid.num_cells(); ++t) {
    const auto o = grid.cell_origin(t);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
          const double x = o[0] + basis.nodes[i] * grid.spacing()[0];
          const double y = o[1] + basis.nodes[j] * grid.spacing()[1];
          const double z = o[2] + basis.nodes[k] * grid.spacing()[2];
          const double exact = std::sin(M_PI * x) * std::sin(M_PI * y) * std::sin(M_PI * z);
          err = std::max(err, std::abs(u[t * op.block_size() + i + n * (j + n * k)] - exact));
        }
  }
  std::printf("max nodal error %.3g\n", err);
  return rep.converged ? 0 : 1;
}
