#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mfdg/bench/acceptance.hpp"
#include "mfdg/bench/memory.hpp"
#include "mfdg/bench/runner.hpp"
#include "mfdg/bench/spe10.hpp"

namespace {

using namespace mfdg;
using namespace mfdg::bench;

enum Exit { kOk = 0, kNotConverged = 1, kUsage = 2, kIo = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::array<int, 3> parse_cells(const std::string& s) {
  if (s.empty()) throw UsageError("--cells: empty grid configuration");
  std::array<int, 3> c{};
  std::stringstream ss(s);
  std::string tok;
  int k = 0;
  while (std::getline(ss, tok, ',')) {
    if (k == 3) throw UsageError("--cells: expected NX,NY,NZ");
    std::size_t pos = 0;
    try {
      c[k] = std::stoi(tok, &pos);
    } catch (const std::exception&) {
      throw UsageError("--cells: '" + tok + "' is not an integer");
    }
    if (pos != tok.size() || c[k] < 1) throw UsageError("--cells: entries must be positive integers");
    ++k;
  }
  if (k != 3) throw UsageError("--cells: expected NX,NY,NZ");
  return c;
}

std::vector<int> parse_ids(const std::string& s) {
  std::vector<int> ids;
  if (s.empty()) return ids;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      ids.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw UsageError("--criteria: '" + tok + "' is not an integer");
    }
  }
  return ids;
}

struct RunArgs {
  std::string problem = "poisson";
  int degree = 2;
  std::optional<std::string> cells;
  std::string variant = "mf";
  std::string smoother;
  double block_tol = 1e-2;
  std::string block_precond;
  double outer_tol = 0.0;
  std::string outer_solver;
  int restart = 100;
  int block_restart = 100;
  int block_max_iterations = 200;
  std::string coarse_space;
  int npre = 2;
  int npost = 2;
  double omega = 0.0;
  std::string preconditioner = "auto";
  std::string advection;
  double pe = 2000.0;
  std::string spe10_file;
  bool synthetic_spe10 = false;
  std::string output;
  int threads = 1;
  int max_iterations = 1000;
};

int do_run(const RunArgs& a) {
  RunConfig cfg;
  cfg.problem = a.problem;
  const auto& names = problem_names();
  if (std::find(names.begin(), names.end(), a.problem) == names.end()) {
    throw UsageError("unknown problem '" + a.problem + "'");
  }
  if (a.degree < 1 || a.degree > kMaxDegree) throw UsageError("--degree must lie in [1, 12]");
  cfg.degree = a.degree;
  if (a.problem == "spe10") {
    if (!a.spe10_file.empty()) {
      try {
        cfg.spe10 = std::make_shared<Spe10Field>(load_spe10(a.spe10_file));
      } catch (const UsageError&) {
        throw;
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
      }
      cfg.cells = cfg.spe10->dims;
      if (a.cells && parse_cells(*a.cells) != cfg.cells) {
        throw UsageError("--cells must match the dataset dimensions 60,220,85");
      }
    } else if (a.synthetic_spe10) {
      cfg.cells = a.cells ? parse_cells(*a.cells) : std::array<int, 3>{8, 8, 8};
      cfg.spe10 = std::make_shared<Spe10Field>(synthetic_spe10(cfg.cells));
    } else {
      throw UsageError("spe10 needs --spe10-file PATH (or --synthetic-spe10)");
    }
  } else {
    cfg.cells = a.cells ? parse_cells(*a.cells) : std::array<int, 3>{8, 8, 8};
  }
  cfg.variant = a.variant == "mx" ? Variant::mx : a.variant == "pmf" ? Variant::pmf : Variant::mf;
  if (a.smoother == "jacobi") cfg.smoother = SmootherKind::block_jacobi;
  if (a.smoother == "sor") cfg.smoother = SmootherKind::block_sor_forward;
  if (a.smoother == "ssor") cfg.smoother = SmootherKind::block_ssor;
  if (!(a.block_tol > 0.0 && a.block_tol < 1.0)) throw UsageError("--block-tol must lie in (0, 1)");
  cfg.block_tol = a.block_tol;
  if (a.block_precond == "diag") cfg.block_precond = BlockPreconditioner::diagonal;
  if (a.block_precond == "tridiag") cfg.block_precond = BlockPreconditioner::tridiagonal;
  if (a.block_precond == "none") cfg.block_precond = BlockPreconditioner::none;
  if (a.outer_tol > 0.0) cfg.outer_tol = a.outer_tol;
  if (!a.outer_solver.empty()) cfg.outer_solver = a.outer_solver;
  cfg.restart = a.restart;
  cfg.block_restart = a.block_restart;
  cfg.block_max_iterations = a.block_max_iterations;
  if (a.coarse_space == "q1") cfg.coarse_space = LowSpaceKind::q1;
  if (a.coarse_space == "p0") cfg.coarse_space = LowSpaceKind::p0;
  cfg.npre = a.npre;
  cfg.npost = a.npost;
  if (a.omega > 0.0) cfg.omega = a.omega;
  static const std::map<std::string, PreconditionerKind> pcs{{"auto", PreconditionerKind::automatic},
                                                             {"mg", PreconditionerKind::multigrid},
                                                             {"smoother", PreconditionerKind::smoother},
                                                             {"none", PreconditionerKind::none}};
  cfg.preconditioner = pcs.at(a.preconditioner);
  if (!a.advection.empty()) {
    std::stringstream ss(a.advection);
    std::string tok;
    int k = 0;
    while (std::getline(ss, tok, ',') && k < 3) cfg.advection[k++] = std::stod(tok);
    if (k != 3) throw UsageError("--advection: expected BX,BY,BZ");
  }
  if (!(a.pe > 0.0)) throw UsageError("--pe must be positive");
  cfg.peclet = a.pe;
  cfg.threads = a.threads;
  cfg.max_outer_iterations = a.max_iterations;

  RunResult res;
  try {
    res = run_benchmark(cfg);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::cout << kCsvHeader << '\n' << csv_row(res) << std::endl;
  if (!a.output.empty()) {
    try {
      append_csv(a.output, res);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kIo;
    }
  }
  if (res.block_failures > 0) {
    std::cerr << "warning: " << res.block_failures << " block solves did not reach the block tolerance\n";
  }
  if (!res.converged()) {
    std::cerr << "not converged after " << res.report.iterations << " iterations (relative residual "
              << res.report.relative_residual << ")\n";
    return kNotConverged;
  }
  return kOk;
}

struct MemoryArgs {
  std::string problem = "diffusion";
  std::string variant;
  int degree = 2;
  std::string cells;
  int restart = 100;
  int block_restart = 100;
};

int do_memory(const MemoryArgs& a) {
  const auto c = parse_cells(a.cells);
  MemoryScenario s;
  s.problem = a.problem == "convection" ? MemoryProblem::convection : MemoryProblem::diffusion;
  s.degree = a.degree;
  s.n_cells = static_cast<std::uint64_t>(c[0]) * c[1] * c[2];
  s.n_restart_outer = a.restart;
  s.n_restart_block = a.block_restart;
  std::vector<Variant> vs{Variant::mx, Variant::pmf, Variant::mf};
  if (!a.variant.empty()) vs = {a.variant == "mx" ? Variant::mx : a.variant == "pmf" ? Variant::pmf : Variant::mf};
  std::cout << "variant,bytes,GB,GiB\n";
  for (Variant v : vs) {
    s.variant = v;
    const double b = estimate_memory(s);
    std::cout << variant_name(v) << ',' << format_g6(b) << ',' << format_g6(b / 1e9) << ','
              << format_g6(b / 1073741824.0) << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Matrix-free DG solver benchmarks"};
  app.require_subcommand(1);

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Set up and solve one benchmark problem, print a CSV row");
  run->add_option("--problem", ra.problem, "poisson | vardiff | convection | spe10")->capture_default_str();
  run->add_option("--degree", ra.degree, "Polynomial degree p")->capture_default_str();
  run->add_option("--cells", ra.cells, "Grid NX,NY,NZ (default 8,8,8)");
  run->add_option("--variant", ra.variant, "mf | pmf | mx")
      ->check(CLI::IsMember({"mf", "pmf", "mx"}))
      ->capture_default_str();
  run->add_option("--smoother", ra.smoother, "jacobi | sor | ssor (problem default)")
      ->check(CLI::IsMember({"jacobi", "sor", "ssor"}));
  run->add_option("--block-tol", ra.block_tol, "Relative tolerance of the block solves")->capture_default_str();
  run->add_option("--block-precond", ra.block_precond, "diag | tridiag | none (problem default)")
      ->check(CLI::IsMember({"diag", "tridiag", "none"}));
  run->add_option("--outer-tol", ra.outer_tol, "Outer tolerance (problem default)");
  run->add_option("--outer-solver", ra.outer_solver, "cg | gmres | fgmres (problem default)")
      ->check(CLI::IsMember({"cg", "gmres", "fgmres"}));
  run->add_option("--restart", ra.restart, "Outer GMRES restart")->capture_default_str()->check(CLI::PositiveNumber);
  run->add_option("--block-restart", ra.block_restart, "Block GMRES restart")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  run->add_option("--block-max-iterations", ra.block_max_iterations, "Iteration cap of the block solves")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  run->add_option("--coarse-space", ra.coarse_space, "q1 | p0 (problem default)")
      ->check(CLI::IsMember({"q1", "p0"}));
  run->add_option("--npre", ra.npre, "Pre-smoothing steps")->capture_default_str()->check(CLI::NonNegativeNumber);
  run->add_option("--npost", ra.npost, "Post-smoothing steps")->capture_default_str()->check(CLI::NonNegativeNumber);
  run->add_option("--omega", ra.omega, "Smoother relaxation in (0, 2) (problem default)")->check(CLI::Range(0.0, 2.0));
  run->add_option("--preconditioner", ra.preconditioner, "auto | mg | smoother | none")
      ->check(CLI::IsMember({"auto", "mg", "smoother", "none"}))
      ->capture_default_str();
  run->add_option("--advection", ra.advection, "Convection velocity BX,BY,BZ (default 1,0,0)");
  run->add_option("--pe", ra.pe, "Grid Peclet number of the convection problem")->capture_default_str();
  run->add_option("--spe10-file", ra.spe10_file, "Permeability dataset for the spe10 problem");
  run->add_flag("--synthetic-spe10", ra.synthetic_spe10, "Use a generated layered field instead of the dataset");
  run->add_option("--output", ra.output, "Append the CSV row to this file");
  run->add_option("--threads", ra.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  run->add_option("--max-iterations", ra.max_iterations, "Outer iteration cap")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  MemoryArgs ma;
  auto* mem = app.add_subcommand("estimate-memory", "Storage estimate of the solver variants");
  mem->add_option("--problem", ma.problem, "diffusion | convection")
      ->check(CLI::IsMember({"diffusion", "convection"}))
      ->capture_default_str();
  mem->add_option("--variant", ma.variant, "mf | pmf | mx (all when omitted)")->check(CLI::IsMember({"mf", "pmf", "mx"}));
  mem->add_option("--degree", ma.degree, "Polynomial degree p")->capture_default_str()->check(CLI::NonNegativeNumber);
  mem->add_option("--cells", ma.cells, "Grid NX,NY,NZ")->required();
  mem->add_option("--restart", ma.restart, "Outer GMRES restart")->capture_default_str();
  mem->add_option("--block-restart", ma.block_restart, "Block GMRES restart")->capture_default_str();

  std::string criteria;
  double perturb = 1.0;
  std::string verify_spe10;
  auto* ver = app.add_subcommand("verify", "Run the acceptance checks; nonzero exit on any failure");
  ver->add_option("--criteria", criteria, "Comma-separated criterion numbers (all when omitted)");
  ver->add_option("--perturb-penalty", perturb, "Scale the matrix-free penalty (mutation test)")->capture_default_str();
  ver->add_option("--spe10-file", verify_spe10, "Dataset for the optional spe10 check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run) return do_run(ra);
    if (*mem) return do_memory(ma);
    if (*ver) {
      VerifyOptions o;
      o.penalty_perturbation = perturb;
      o.spe10_file = verify_spe10;
      if (o.spe10_file.empty()) {
        if (const char* env = std::getenv("MFDG_SPE10_FILE")) o.spe10_file = env;
      }
      o.log = &std::cerr;
      const auto ids = parse_ids(criteria);
      const int failures = run_acceptance(ids, o, std::cout);
      std::cout << (failures == 0 ? "all checks passed" : std::to_string(failures) + " check(s) failed") << std::endl;
      return failures == 0 ? kOk : kNotConverged;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const Spe10FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
  return kOk;
}
