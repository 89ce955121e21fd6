#include <cstring>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "mfdg/bench/acceptance.hpp"
#include "mfdg/bench/memory.hpp"
#include "mfdg/bench/problems.hpp"
#include "mfdg/bench/runner.hpp"
#include "mfdg/bench/spe10.hpp"

using namespace mfdg;
using namespace mfdg::bench;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("mfdg_test_" + name)).string();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST(Memory, DiffusionFormulas) {
  MemoryScenario s;
  s.degree = 1;
  s.n_cells = 1;
  s.variant = Variant::mf;
  EXPECT_DOUBLE_EQ(estimate_memory(s), 8.0 * (8 * 8 + 30));
  s.variant = Variant::pmf;
  EXPECT_DOUBLE_EQ(estimate_memory(s), 8.0 * (64 + 7 * 8 + 30));
  s.variant = Variant::mx;
  EXPECT_DOUBLE_EQ(estimate_memory(s), 8.0 * (7 * 64 + 6 * 8 + 30));
}

TEST(Memory, ConvectionMatrixFreeKeepsOneBlockBasis) {
  MemoryScenario s;
  s.problem = MemoryProblem::convection;
  s.degree = 2;
  s.n_cells = 10;
  s.n_restart_outer = 15;
  s.n_restart_block = 12;
  s.variant = Variant::mf;
  EXPECT_DOUBLE_EQ(estimate_memory(s), 8.0 * ((2 * 15 + 7) * 27 * 10 + 13 * 27));
  s.degree = -1;
  EXPECT_THROW(estimate_memory(s), std::invalid_argument);
}

TEST(Memory, ReferenceRowsWithinFivePercent) {
  const auto r = check_memory_model(VerifyOptions{});
  EXPECT_TRUE(r.passed) << format_check(r);
  EXPECT_EQ(memory_reference().size(), 30u);
}

TEST(Problems, RegistryNames) {
  for (const auto& n : problem_names()) {
    ProblemOptions o;
    o.cells = {2, 2, 4};
    EXPECT_NO_THROW(make_problem(n, o)) << n;
  }
  EXPECT_THROW(make_problem("heat"), std::invalid_argument);
}

TEST(Problems, VardiffTensorIsSymmetricPositive) {
  const auto k = vardiff_tensor({0.3, 0.7, 1.1});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(k(i, j), k(j, i), 1e-15);
  // at the origin every P_k = 1, so K = I
  const auto k0 = vardiff_tensor({0.0, 0.0, 0.0});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(k0(i, j), i == j ? 1.0 : 0.0, 1e-15);
}

TEST(Problems, ConvectionKappaFromPeclet) {
  EXPECT_DOUBLE_EQ(convection_kappa({1.0, 0.0, 0.0}, {0.25, 0.25, 0.5}, 2000.0), 0.5 / 2000.0);
  EXPECT_THROW(convection_kappa({0.0, 0.0, 0.0}, {0.25, 0.25, 0.25}, 10.0), std::invalid_argument);
  EXPECT_THROW(convection_kappa({1.0, 0.0, 0.0}, {0.25, 0.25, 0.25}, 0.0), std::invalid_argument);
}

TEST(Problems, ManufacturedSourceVanishesForPureDiffusionAtCorner) {
  const std::array<double, 3> l{1.0, 1.0, 2.0};
  EXPECT_DOUBLE_EQ(convection_exact({0.0, 0.3, 0.4}, l), 0.0);
  // b = 0, kappa = 1: f = -laplace u; at the centre u = q^3 with q = 1/4
  const double f = manufacture_convection_source({0.5, 0.5, 1.0}, {0.0, 0.0, 0.0}, 1.0, l);
  EXPECT_NEAR(f, 2.0 * 0.0625 * (1.0 + 1.0 + 0.25), 1e-14);
}

TEST(Problems, Spe10GridMustMatchField) {
  ProblemOptions o;
  o.cells = {2, 2, 2};
  o.spe10 = std::make_shared<const Spe10Field>(synthetic_spe10({3, 2, 2}));
  EXPECT_THROW(make_problem("spe10", o), std::invalid_argument);
}

TEST(Spe10, LoadsSmallFile) {
  const auto path = temp_path("spe10_ok.dat");
  std::string text;
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < 8; ++i) text += std::to_string(1.0 + b + 0.1 * i) + (i % 3 == 2 ? "\n" : " ");
  write_file(path, text);
  const auto f = load_spe10(path, {2, 2, 2});
  EXPECT_EQ(f.kx.size(), 8u);
  EXPECT_DOUBLE_EQ(f.kx[1], 1.1);
  EXPECT_DOUBLE_EQ(f.kz[7], 3.7);
  std::filesystem::remove(path);
}

TEST(Spe10, ReportsFormatErrors) {
  const auto path = temp_path("spe10_bad.dat");
  write_file(path, "1 2 3 4 5 6 7 8\n1 2 3 x 5 6 7 8\n");
  try {
    load_spe10(path, {2, 2, 2});
    FAIL() << "expected a format error";
  } catch (const Spe10FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset 22"), std::string::npos) << e.what();
  }
  write_file(path, "1 2 3\n");
  EXPECT_THROW(load_spe10(path, {2, 2, 2}), Spe10FormatError);
  write_file(path, "1 2 3 4 5 6 7 8 1 2 3 4 5 6 7 8 1 2 3 4 5 6 7 -8\n");
  EXPECT_THROW(load_spe10(path, {2, 2, 2}), Spe10FormatError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_spe10(path, {2, 2, 2}), std::runtime_error);
}

TEST(Runner, PoissonConvergesAndWritesCsv) {
  RunConfig c;
  c.problem = "poisson";
  c.degree = 2;
  c.cells = {2, 2, 4};
  const auto r = run_benchmark(c);
  EXPECT_TRUE(r.converged());
  EXPECT_GT(r.report.iterations, 0);
  EXPECT_EQ(r.dofs, 16u * 27);
  const auto row = csv_row(r);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(kCsvHeader, kCsvHeader + std::strlen(kCsvHeader), ','));
  EXPECT_EQ(row.rfind("poisson,2,2,2,4,mf,", 0), 0u);

  const auto path = temp_path("rows.csv");
  std::filesystem::remove(path);
  append_csv(path, r);
  append_csv(path, r);
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 3);
  std::filesystem::remove(path);
}

TEST(Runner, NonConvergenceIsReportedInCsv) {
  RunConfig c;
  c.problem = "poisson";
  c.degree = 1;
  c.cells = {2, 2, 4};
  c.max_outer_iterations = 1;
  c.outer_tol = 1e-14;
  const auto r = run_benchmark(c);
  EXPECT_FALSE(r.converged());
  EXPECT_NE(csv_row(r).find(",-1,"), std::string::npos);
}

TEST(Runner, VariantsAgree) {
  std::vector<double> ref;
  for (auto v : {Variant::mx, Variant::pmf, Variant::mf}) {
    RunConfig c;
    c.problem = "vardiff";
    c.degree = 2;
    c.cells = {2, 2, 4};
    c.variant = v;
    c.block_tol = 1e-13;
    c.outer_tol = 1e-12;
    const auto r = run_benchmark(c);
    ASSERT_TRUE(r.converged());
    if (ref.empty()) {
      ref = r.solution;
    } else {
      double e = 0.0;
      for (std::size_t i = 0; i < ref.size(); ++i) e = std::max(e, std::abs(ref[i] - r.solution[i]));
      EXPECT_LT(e, 1e-9 * max_abs(ref));
    }
  }
}

TEST(Runner, ConvectionRecoversPolynomial) {
  RunConfig c;
  c.problem = "convection";
  c.degree = 2;
  c.cells = {2, 2, 4};
  c.outer_tol = 1e-12;
  const auto r = run_benchmark(c);
  ASSERT_TRUE(r.converged());
  EXPECT_EQ(r.smoother_name, "ssor");
}

TEST(Runner, RejectsUnknownProblem) {
  RunConfig c;
  c.problem = "heat";
  EXPECT_THROW(run_benchmark(c), std::invalid_argument);
}

TEST(Acceptance, CheckLineFormat) {
  CheckResult r = make_check(3, "symmetry", 1e-12);
  r.measured = 1e-15;
  r.passed = true;
  const auto line = format_check(r);
  EXPECT_EQ(line.rfind("PASS", 0), 0u);
  EXPECT_NE(line.find(" 3 symmetry "), std::string::npos);
  EXPECT_NE(line.find("bound=1e-12"), std::string::npos);
  EXPECT_EQ(acceptance_checks().size(), 15u);
}

TEST(Acceptance, PerturbedPenaltyIsDetected) {
  VerifyOptions o;
  o.penalty_perturbation = 1.01;
  EXPECT_FALSE(check_operator_oracle(o).passed);
}
