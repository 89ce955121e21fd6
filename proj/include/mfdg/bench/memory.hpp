#pragma once

#include <cstdint>
#include <stdexcept>

namespace mfdg::bench {

enum class Variant { mx, pmf, mf };
enum class MemoryProblem { diffusion, convection };

struct MemoryScenario {
  MemoryProblem problem = MemoryProblem::diffusion;
  Variant variant = Variant::mf;
  int degree = 1;
  int dim = 3;
  std::uint64_t n_cells = 1;
  int n_restart_outer = 100;
  int n_restart_block = 100;
};

/// Storage of the solver in bytes (8-byte reals).
inline double estimate_memory(const MemoryScenario& s) {
  if (s.degree < 0 || s.dim < 1) throw std::invalid_argument("estimate_memory: invalid scenario");
  double nd = 1.0;
  for (int k = 0; k < s.dim; ++k) nd *= s.degree + 1;
  const double n2 = nd * nd;
  const double nc = static_cast<double>(s.n_cells);
  double reals = 0.0;
  if (s.problem == MemoryProblem::diffusion) {
    switch (s.variant) {
      case Variant::mx: reals = (7.0 * n2 + 6.0 * nd + 30.0) * nc; break;
      case Variant::pmf: reals = (n2 + 7.0 * nd + 30.0) * nc; break;
      case Variant::mf: reals = (8.0 * nd + 30.0) * nc; break;
    }
  } else {
    const double vecs = 2.0 * s.n_restart_outer + 4.0;
    switch (s.variant) {
      case Variant::mx: reals = (7.0 * n2 + vecs * nd) * nc; break;
      case Variant::pmf: reals = (n2 + vecs * nd) * nc; break;
      case Variant::mf: reals = (2.0 * s.n_restart_outer + 7.0) * nd * nc + (s.n_restart_block + 1.0) * nd; break;
    }
  }
  return 8.0 * reals;
}

}  // namespace mfdg::bench
