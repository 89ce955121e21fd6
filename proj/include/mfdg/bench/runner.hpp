#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfdg/basis.hpp"
#include "mfdg/bench/memory.hpp"
#include "mfdg/bench/problems.hpp"
#include "mfdg/block_smoother.hpp"
#include "mfdg/dg_operator.hpp"
#include "mfdg/krylov.hpp"
#include "mfdg/lowspace.hpp"
#include "mfdg/multigrid.hpp"
#include "mfdg/oracle.hpp"

namespace mfdg::bench {

enum class PreconditionerKind { automatic, multigrid, smoother, none };

struct RunConfig {
  std::string problem = "poisson";
  int degree = 2;
  std::array<int, 3> cells{8, 8, 8};
  Variant variant = Variant::mf;
  std::optional<SmootherKind> smoother;
  double block_tol = 1e-2;
  std::optional<BlockPreconditioner> block_precond;
  std::optional<double> outer_tol;
  std::optional<std::string> outer_solver;
  int restart = 100;
  int block_restart = 100;
  int block_max_iterations = 200;
  std::optional<LowSpaceKind> coarse_space;
  int npre = 2;
  int npost = 2;
  std::optional<double> omega;  ///< registry default when empty
  int smoother_sweeps = 2;  ///< when the smoother alone preconditions
  PreconditionerKind preconditioner = PreconditionerKind::automatic;
  int max_outer_iterations = 1000;
  std::optional<StoppingNorm> stopping;  ///< CG only; registry default when empty
  int error_bandwidth = 4;
  Vec3 advection{1.0, 0.0, 0.0};
  double peclet = 2000.0;
  std::shared_ptr<const Spe10Field> spe10;
  int threads = 1;
  double alpha = 1.25;
  /// Reports every outer CG iterate (used for error studies).
  std::function<void(int, std::span<const double>)> on_iterate;
};

struct Timings {
  double prolongation = 0.0;
  double matrix = 0.0;
  double blockfactor = 0.0;
  double coarse = 0.0;
  double coarsesolver = 0.0;
  double solve = 0.0;
};

struct RunResult {
  RunConfig config;
  ProblemSpec problem;
  std::string smoother_name;
  double outer_tol = 0.0;
  SolveReport report;
  double block_iters_mean = 0.0;
  int block_iters_max = 0;
  std::size_t block_failures = 0;
  Timings timings;
  std::size_t dofs = 0;
  double est_memory_bytes = 0.0;
  std::vector<double> solution;
  bool converged() const { return report.converged; }
};

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::mx: return "mx";
    case Variant::pmf: return "pmf";
    case Variant::mf: return "mf";
  }
  return "?";
}

inline const char* smoother_name(SmootherKind k) {
  switch (k) {
    case SmootherKind::block_jacobi: return "jacobi";
    case SmootherKind::block_sor_forward: return "sor";
    case SmootherKind::block_sor_backward: return "sor_backward";
    case SmootherKind::block_ssor: return "ssor";
  }
  return "?";
}

namespace detail {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// Owns everything the preconditioner needs for one operator type.
struct PreconditionerParts {
  std::shared_ptr<void> keep_alive;
  SmoothFn smooth;
  LinearMap apply_pc;  ///< preconditioner-mode operator
};

template <class Op, class Inv>
PreconditionerParts make_parts(std::shared_ptr<Op> op, std::shared_ptr<Inv> inv, SmootherConfig sc, int threads) {
  PreconditionerParts parts;
  auto holder = std::make_shared<std::pair<std::shared_ptr<Op>, std::shared_ptr<Inv>>>(op, inv);
  parts.keep_alive = holder;
  const Op* o = op.get();
  const Inv* i = inv.get();
  parts.smooth = [o, i, sc, threads](std::span<const double> f, std::span<double> u, int sweeps) {
    smooth(*o, *i, sc, f, u, sweeps, threads);
  };
  parts.apply_pc = [o](std::span<const double> x, std::span<double> y) { o->apply(x, y); };
  return parts;
}

}  // namespace detail

/// Sets up and solves one benchmark problem.
inline RunResult run_benchmark(const RunConfig& cfg) {
  ProblemOptions po;
  po.cells = cfg.cells;
  po.advection = cfg.advection;
  po.peclet = cfg.peclet;
  po.spe10 = cfg.spe10;
  RunResult res;
  res.config = cfg;
  res.problem = make_problem(cfg.problem, po);
  const ProblemSpec& prob = res.problem;

  const SmootherKind sk = cfg.smoother.value_or(prob.smoother);
  const BlockPreconditioner bp = cfg.block_precond.value_or(prob.block_preconditioner);
  const LowSpaceKind coarse_kind = cfg.coarse_space.value_or(prob.coarse_space);
  const std::string outer = cfg.outer_solver.value_or(prob.outer_solver);
  res.outer_tol = cfg.outer_tol.value_or(prob.outer_tolerance);
  res.smoother_name = smoother_name(sk);
  bool use_mg = prob.multigrid;
  if (cfg.preconditioner == PreconditionerKind::multigrid) use_mg = true;
  if (cfg.preconditioner == PreconditionerKind::smoother) use_mg = false;
  const bool no_pc = cfg.preconditioner == PreconditionerKind::none;
  if (outer != "cg" && outer != "gmres" && outer != "fgmres") {
    throw std::invalid_argument("unknown outer solver '" + outer + "'");
  }

  auto grid = std::make_shared<StructuredGrid>(cfg.cells, prob.lengths, prob.boundary);
  auto basis = std::make_shared<TensorBasis>(make_tensor_basis(cfg.degree));
  OperatorOptions oo;
  oo.alpha = cfg.alpha;
  oo.threads = cfg.threads;
  auto op_full = std::make_shared<DGOperator>(*grid, *basis, with_mode(prob.coefficients, EvaluationMode::full), oo);
  auto op_pc =
      std::make_shared<DGOperator>(*grid, *basis, with_mode(prob.coefficients, EvaluationMode::cell_centered), oo);
  res.dofs = op_full->size();

  BlockSolveConfig bc;
  bc.tolerance = cfg.block_tol;
  bc.restart = cfg.block_restart;
  bc.max_iterations = cfg.block_max_iterations;
  bc.preconditioner = bp;
  SmootherConfig sc;
  sc.kind = sk;
  sc.omega = cfg.omega.value_or(sk == SmootherKind::block_jacobi ? prob.jacobi_omega : 1.0);
  sc.validate();
  auto stats = std::make_shared<BlockStats>();

  LinearMap apply_outer;
  std::shared_ptr<BlockSparseMatrix> a_full, a_pc;
  detail::PreconditionerParts parts;
  if (cfg.variant == Variant::mx) {
    detail::Stopwatch sw;
    a_full = std::make_shared<BlockSparseMatrix>(assemble_full(*op_full));
    a_pc = std::make_shared<BlockSparseMatrix>(assemble_full(*op_pc));
    res.timings.matrix = sw.seconds();
    apply_outer = [m = a_full](std::span<const double> x, std::span<double> y) { m->apply(x, y); };
    detail::Stopwatch sf;
    auto inv = std::make_shared<FactorizedBlocks>(*a_pc);
    res.timings.blockfactor = sf.seconds();
    parts = detail::make_parts(a_pc, inv, sc, cfg.threads);
  } else {
    apply_outer = [op = op_full](std::span<const double> x, std::span<double> y) { op->apply(x, y); };
    detail::Stopwatch sf;
    if (cfg.variant == Variant::pmf) {
      auto inv = std::make_shared<FactorizedBlocks>(*op_pc);
      res.timings.blockfactor = sf.seconds();
      parts = detail::make_parts(op_pc, inv, sc, cfg.threads);
    } else {
      auto inv = std::make_shared<IterativeBlockInverse<DGOperator>>(*op_pc, bc, stats.get());
      res.timings.blockfactor = sf.seconds();
      parts = detail::make_parts(op_pc, inv, sc, cfg.threads);
    }
  }

  std::shared_ptr<Transfer> transfer;
  std::shared_ptr<GeometricCoarseSolver> coarse;
  std::shared_ptr<HybridMG> mg;
  LinearMap precond;
  if (!no_pc && use_mg) {
    detail::Stopwatch sp;
    transfer = std::make_shared<Transfer>(*grid, *basis, coarse_kind);
    res.timings.prolongation = sp.seconds();
    detail::Stopwatch sa;
    CsrMatrix ahat = cfg.variant == Variant::mx
                         ? galerkin_product(*transfer, *a_pc)
                         : assemble_low(*grid, prob.coefficients, cfg.degree, cfg.alpha, coarse_kind);
    res.timings.coarse = sa.seconds();
    detail::Stopwatch ss;
    coarse = std::make_shared<GeometricCoarseSolver>(std::move(ahat), transfer->dims(), coarse_kind);
    res.timings.coarsesolver = ss.seconds();
    MultigridConfig mc;
    mc.n_pre = cfg.npre;
    mc.n_post = cfg.npost;
    mg = std::make_shared<HybridMG>(parts.apply_pc, parts.smooth, *transfer, *coarse, mc);
    precond = mg->as_preconditioner();
  } else if (!no_pc) {
    const int sweeps = cfg.smoother_sweeps;
    precond = [smooth = parts.smooth, sweeps](std::span<const double> r, std::span<double> z) {
      std::fill(z.begin(), z.end(), 0.0);
      smooth(r, z, sweeps);
    };
  }

  const std::vector<double> rhs = op_full->assemble_rhs();
  res.solution.assign(rhs.size(), 0.0);
  KrylovConfig kc;
  kc.tolerance = res.outer_tol;
  kc.max_iterations = cfg.max_outer_iterations;
  kc.restart = cfg.restart;
  kc.stopping_norm = outer == "cg" ? cfg.stopping.value_or(prob.stopping) : StoppingNorm::residual_two_norm;
  kc.error_bandwidth = cfg.error_bandwidth;
  kc.on_iterate = cfg.on_iterate;
  stats->reset();
  detail::Stopwatch sw;
  if (outer == "cg") {
    res.report = cg(apply_outer, precond, rhs, res.solution, kc);
  } else if (outer == "gmres") {
    res.report = gmres(apply_outer, precond, rhs, res.solution, kc);
  } else {
    res.report = fgmres(apply_outer, precond, rhs, res.solution, kc);
  }
  res.timings.solve = sw.seconds();
  res.block_iters_mean = stats->mean();
  res.block_iters_max = stats->max();
  res.block_failures = stats->failures();

  MemoryScenario ms;
  ms.problem = prob.coefficients.has_advection ? MemoryProblem::convection : MemoryProblem::diffusion;
  ms.variant = cfg.variant;
  ms.degree = cfg.degree;
  ms.n_cells = grid->num_cells();
  ms.n_restart_outer = cfg.restart;
  ms.n_restart_block = cfg.block_restart;
  res.est_memory_bytes = estimate_memory(ms);
  return res;
}

inline const char* kCsvHeader =
    "problem,degree,nx,ny,nz,variant,smoother,block_tol,outer_tol,outer_iters,block_iters_mean,block_iters_max,"
    "setup_prolongation_s,setup_matrix_s,setup_blockfactor_s,setup_coarse_s,setup_coarsesolver_s,solve_s,"
    "time_per_dof_us,est_memory_bytes";

inline std::string format_g6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string csv_row(const RunResult& r) {
  std::ostringstream os;
  const auto& c = r.config;
  os << r.problem.name << ',' << c.degree << ',' << c.cells[0] << ',' << c.cells[1] << ',' << c.cells[2] << ','
     << variant_name(c.variant) << ',' << r.smoother_name << ',' << format_g6(c.block_tol) << ','
     << format_g6(r.outer_tol) << ',' << (r.converged() ? r.report.iterations : -1) << ','
     << format_g6(r.block_iters_mean) << ',' << r.block_iters_max << ',' << format_g6(r.timings.prolongation) << ','
     << format_g6(r.timings.matrix) << ',' << format_g6(r.timings.blockfactor) << ',' << format_g6(r.timings.coarse)
     << ',' << format_g6(r.timings.coarsesolver) << ',' << format_g6(r.timings.solve) << ','
     << format_g6(r.dofs ? r.timings.solve / r.dofs * 1e6 : 0.0) << ',' << format_g6(r.est_memory_bytes);
  return os.str();
}

/// Appends a row; writes the header first when the file is new or empty.
inline void append_csv(const std::string& path, const RunResult& r) {
  namespace fs = std::filesystem;
  std::error_code ec;
  const bool fresh = !fs::exists(path, ec) || fs::file_size(path, ec) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  if (fresh) out << kCsvHeader << '\n';
  out << csv_row(r) << '\n';
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace mfdg::bench
