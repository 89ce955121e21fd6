#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <mutex>
#include <span>
#include <stdexcept>
#include <vector>

#include "mfdg/common.hpp"
#include "mfdg/krylov.hpp"
#include "mfdg/linalg.hpp"

namespace mfdg {

enum class BlockMethod { automatic, cg, gmres };
enum class BlockPreconditioner { none, diagonal, tridiagonal };

struct BlockSolveConfig {
  double tolerance = 1e-2;
  BlockMethod method = BlockMethod::automatic;  ///< CG if the operator is symmetric
  int restart = 100;
  int max_iterations = 200;
  BlockPreconditioner preconditioner = BlockPreconditioner::diagonal;

  void validate() const {
    if (!(tolerance > 0.0 && tolerance < 1.0)) throw std::invalid_argument("block tolerance must lie in (0, 1)");
    if (restart < 1) throw std::invalid_argument("block restart must be >= 1");
    if (max_iterations < 1) throw std::invalid_argument("block max_iterations must be >= 1");
  }
};

enum class SmootherKind { block_jacobi, block_sor_forward, block_sor_backward, block_ssor };

struct SmootherConfig {
  SmootherKind kind = SmootherKind::block_jacobi;
  double omega = 1.0;
  int sweeps = 1;

  void validate() const {
    if (!(omega > 0.0 && omega < 2.0)) throw std::invalid_argument("omega must lie in (0, 2)");
    if (sweeps < 0) throw std::invalid_argument("sweeps must be >= 0");
  }
};

/// Running statistics of block-solver iteration counts. Thread safe.
class BlockStats {
 public:
  void record(int iterations, bool converged) {
    std::lock_guard lock(mutex_);
    ++count_;
    sum_ += iterations;
    sum_sq_ += static_cast<double>(iterations) * iterations;
    max_ = std::max(max_, iterations);
    if (!converged) ++failures_;
  }

  void reset() {
    std::lock_guard lock(mutex_);
    count_ = failures_ = 0;
    max_ = 0;
    sum_ = sum_sq_ = 0.0;
  }

  std::size_t count() const { return count_; }
  std::size_t failures() const { return failures_; }
  int max() const { return max_; }
  double mean() const { return count_ ? sum_ / count_ : 0.0; }
  double stddev() const {
    if (count_ == 0) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, sum_sq_ / count_ - m * m));
  }

 private:
  mutable std::mutex mutex_;
  std::size_t count_ = 0;
  std::size_t failures_ = 0;
  int max_ = 0;
  double sum_ = 0.0;
  double sum_sq_ = 0.0;
};

struct TridiagonalBands {
  std::vector<double> lower;  ///< n-1 entries, a(i+1, i)
  std::vector<double> main;   ///< n entries
  std::vector<double> upper;  ///< n-1 entries, a(i, i+1)
};

inline TridiagonalBands extract_tridiagonal(const DenseMatrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("extract_tridiagonal: matrix must be square");
  const std::size_t n = a.rows();
  TridiagonalBands b;
  b.main.resize(n);
  b.lower.resize(n ? n - 1 : 0);
  b.upper.resize(n ? n - 1 : 0);
  for (std::size_t i = 0; i < n; ++i) {
    b.main[i] = a(i, i);
    if (i + 1 < n) {
      b.lower[i] = a(i + 1, i);
      b.upper[i] = a(i, i + 1);
    }
  }
  return b;
}

/// Solves the tridiagonal system by forward elimination and back
/// substitution without pivoting.
inline void thomas_solve(const TridiagonalBands& b, std::span<const double> rhs, std::span<double> x) {
  const std::size_t n = b.main.size();
  check_size(rhs.size(), n, "thomas_solve");
  check_size(x.size(), n, "thomas_solve");
  if (n == 0) return;
  thread_local std::vector<double> c;
  c.resize(n);
  double piv = b.main[0];
  if (std::abs(piv) < 1e-300) throw SingularMatrixError("thomas_solve: singular band (zero pivot at row 0)");
  c[0] = n > 1 ? b.upper[0] / piv : 0.0;
  x[0] = rhs[0] / piv;
  for (std::size_t i = 1; i < n; ++i) {
    piv = b.main[i] - b.lower[i - 1] * c[i - 1];
    if (std::abs(piv) < 1e-300) {
      throw SingularMatrixError("thomas_solve: singular band (zero pivot at row " + std::to_string(i) + ")");
    }
    c[i] = i + 1 < n ? b.upper[i] / piv : 0.0;
    x[i] = (rhs[i] - b.lower[i - 1] * x[i - 1]) / piv;
  }
  for (std::size_t i = n - 1; i-- > 0;) x[i] -= c[i] * x[i + 1];
}

inline std::vector<double> thomas_solve(const TridiagonalBands& b, std::span<const double> rhs) {
  std::vector<double> x(rhs.size());
  thomas_solve(b, rhs, x);
  return x;
}

/// Operators the smoothers act on: block-structured with a per-cell
/// diagonal block and face-neighbour couplings.
template <class Op>
concept BlockOperator = requires(const Op& op, CellIndex c, std::span<const double> u, std::span<double> v) {
  { op.num_cells() } -> std::convertible_to<std::size_t>;
  { op.block_size() } -> std::convertible_to<std::size_t>;
  op.apply(u, v);
  op.apply_offdiagonal_row(c, u, v);
  op.apply_block_diagonal(c, u, v);
};

/// Anything that (approximately) solves D_T x = d and returns an
/// iteration count (0 for direct solvers).
template <class Inv>
concept BlockInverse = requires(const Inv& inv, CellIndex c, std::span<const double> d, std::span<double> x) {
  { inv.solve(c, d, x) } -> std::convertible_to<int>;
};

/// Inexact inversion of D_T by a preconditioned Krylov method applied
/// matrix-free; only the preconditioner sees assembled data.
template <class Op>
class IterativeBlockInverse {
 public:
  IterativeBlockInverse(const Op& op, BlockSolveConfig config, BlockStats* stats = nullptr)
      : op_(op), config_(config), stats_(stats) {
    config_.validate();
    if (config_.method == BlockMethod::automatic) {
      config_.method = op.symmetric() ? BlockMethod::cg : BlockMethod::gmres;
    }
    if (config_.preconditioner == BlockPreconditioner::diagonal) diagonal_ = op.block_diagonal_entries();
  }

  const BlockSolveConfig& config() const { return config_; }

  int solve(CellIndex cell, std::span<const double> d, std::span<double> x) const {
    const std::size_t n = op_.block_size();
    check_size(d.size(), n, "block_solve");
    check_size(x.size(), n, "block_solve");
    std::fill(x.begin(), x.end(), 0.0);
    if (norm2(d) == 0.0) {
      if (stats_) stats_->record(0, true);
      return 0;
    }
    LinearMap apply = [&](std::span<const double> in, std::span<double> out) {
      op_.apply_block_diagonal(cell, in, out);
    };
    LinearMap precond;
    TridiagonalBands bands;
    if (config_.preconditioner == BlockPreconditioner::diagonal) {
      const double* diag = diagonal_.data() + cell * n;
      precond = [diag](std::span<const double> in, std::span<double> out) {
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] / diag[i];
      };
    } else if (config_.preconditioner == BlockPreconditioner::tridiagonal) {
      bands = extract_tridiagonal(op_.assemble_block(cell));
      precond = [&bands](std::span<const double> in, std::span<double> out) { thomas_solve(bands, in, out); };
    }
    KrylovConfig kc;
    kc.tolerance = config_.tolerance;
    kc.max_iterations = config_.max_iterations;
    kc.restart = config_.restart;
    kc.record_history = false;
    SolveReport rep;
    if (config_.method == BlockMethod::cg) {
      rep = cg(apply, precond, d, x, kc);
    } else {
      rep = gmres(apply, precond, d, x, kc);
    }
    if (stats_) stats_->record(rep.iterations, rep.converged);
    return rep.iterations;
  }

 private:
  const Op& op_;
  BlockSolveConfig config_;
  BlockStats* stats_;
  std::vector<double> diagonal_;
};

/// Solves D_T x = d for one cell with the given configuration; convenience
/// wrapper around IterativeBlockInverse.
template <class Op>
int block_solve(const Op& op, CellIndex cell, std::span<const double> d, std::span<double> x,
                const BlockSolveConfig& config, BlockStats* stats = nullptr) {
  return IterativeBlockInverse<Op>(op, config, stats).solve(cell, d, x);
}

/// One block-Jacobi step: u += omega D^{-1} (f - A u).
template <BlockOperator Op, BlockInverse Inv>
void jacobi_sweep(const Op& op, const Inv& inv, std::span<const double> f, std::span<double> u, double omega,
                  int threads = 1) {
  const std::size_t n = op.block_size();
  std::vector<double> d(u.size());
  op.apply(std::span<const double>(u), std::span<double>(d));
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = f[i] - d[i];
  parallel_for(op.num_cells(), threads, [&](std::size_t b, std::size_t e) {
    std::vector<double> du(n);
    for (CellIndex c = b; c < e; ++c) {
      inv.solve(c, std::span<const double>(d).subspan(c * n, n), du);
      axpy(omega, du, u.subspan(c * n, n));
    }
  });
}

/// One block-SOR sweep in lexicographic (forward) or reverse order, in
/// place: neighbours already visited contribute their new values.
template <BlockOperator Op, BlockInverse Inv>
void sor_sweep(const Op& op, const Inv& inv, std::span<const double> f, std::span<double> u, double omega,
               bool forward) {
  const std::size_t n = op.block_size();
  const std::size_t nc = op.num_cells();
  std::vector<double> d(n), du(n);
  for (std::size_t s = 0; s < nc; ++s) {
    const CellIndex c = forward ? s : nc - 1 - s;
    op.apply_offdiagonal_row(c, std::span<const double>(u), std::span<double>(d));
    for (std::size_t i = 0; i < n; ++i) d[i] = f[c * n + i] - d[i];
    inv.solve(c, d, du);
    for (std::size_t i = 0; i < n; ++i) u[c * n + i] = (1.0 - omega) * u[c * n + i] + omega * du[i];
  }
}

/// Symmetric block-SOR: a forward followed by a backward sweep.
template <BlockOperator Op, BlockInverse Inv>
void ssor_apply(const Op& op, const Inv& inv, std::span<const double> f, std::span<double> u, double omega) {
  sor_sweep(op, inv, f, u, omega, true);
  sor_sweep(op, inv, f, u, omega, false);
}

/// `sweeps` smoothing steps of the configured kind.
template <BlockOperator Op, BlockInverse Inv>
void smooth(const Op& op, const Inv& inv, const SmootherConfig& config, std::span<const double> f,
            std::span<double> u, int sweeps, int threads = 1) {
  for (int s = 0; s < sweeps; ++s) {
    switch (config.kind) {
      case SmootherKind::block_jacobi:
        jacobi_sweep(op, inv, f, u, config.omega, threads);
        break;
      case SmootherKind::block_sor_forward:
        sor_sweep(op, inv, f, u, config.omega, true);
        break;
      case SmootherKind::block_sor_backward:
        sor_sweep(op, inv, f, u, config.omega, false);
        break;
      case SmootherKind::block_ssor:
        ssor_apply(op, inv, f, u, config.omega);
        break;
    }
  }
}

}  // namespace mfdg
