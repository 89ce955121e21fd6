#include <random>

#include <gtest/gtest.h>

#include "mfdg/krylov.hpp"
#include "mfdg/linalg.hpp"

using namespace mfdg;

namespace {

// 1D Laplacian plus a skew part of size `skew`.
DenseMatrix model_matrix(std::size_t n, double skew) {
  DenseMatrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    a(i, i) = 2.0 + 0.01 * i;
    if (i + 1 < n) {
      a(i, i + 1) = -1.0 + skew;
      a(i + 1, i) = -1.0 - skew;
    }
  }
  return a;
}

LinearMap as_map(const DenseMatrix& a) {
  return [&a](std::span<const double> x, std::span<double> y) { a.multiply(x, y); };
}

std::vector<double> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

double residual(const DenseMatrix& a, std::span<const double> x, std::span<const double> b) {
  std::vector<double> r(b.size());
  a.multiply(x, r);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  return norm2(r) / norm2(b);
}

}  // namespace

TEST(Cg, SolvesSpdSystem) {
  const auto a = model_matrix(60, 0.0);
  const auto b = random_vector(60, 1);
  std::vector<double> x(60, 0.0);
  KrylovConfig c;
  c.tolerance = 1e-10;
  const auto rep = cg(as_map(a), {}, b, x, c);
  EXPECT_TRUE(rep.converged);
  EXPECT_LT(residual(a, x, b), 1e-10);
  EXPECT_EQ(rep.residual_history.size(), static_cast<std::size_t>(rep.iterations + 1));
}

TEST(Cg, JacobiPreconditionerKeepsConvergence) {
  const auto a = model_matrix(40, 0.0);
  const auto b = random_vector(40, 2);
  std::vector<double> x(40, 0.0);
  LinearMap jac = [&a](std::span<const double> r, std::span<double> z) {
    for (std::size_t i = 0; i < r.size(); ++i) z[i] = r[i] / a(i, i);
  };
  const auto rep = cg(as_map(a), jac, b, x);
  EXPECT_TRUE(rep.converged);
  EXPECT_LT(residual(a, x, b), 1e-8);
}

TEST(Cg, IndefiniteOperatorIsReported) {
  DenseMatrix a(2, 2);
  a(0, 0) = 1.0;
  a(1, 1) = -1.0;
  std::vector<double> b{0.0, 1.0}, x(2, 0.0);
  EXPECT_THROW(cg(as_map(a), {}, b, x), IndefiniteOperatorError);
}

TEST(Cg, ZeroRhsGivesZeroSolution) {
  const auto a = model_matrix(10, 0.0);
  std::vector<double> b(10, 0.0), x(10, 1.0);
  const auto rep = cg(as_map(a), {}, b, x);
  EXPECT_TRUE(rep.converged);
  EXPECT_LT(max_abs(x), 1e-12);
}

TEST(Cg, EnergyStoppingTracksTrueError) {
  const std::size_t n = 80;
  const auto a = model_matrix(n, 0.0);
  const auto b = random_vector(n, 3);
  std::vector<double> xs(n, 0.0);
  KrylovConfig tight;
  tight.tolerance = 1e-14;
  cg(as_map(a), {}, b, xs, tight);

  std::vector<double> errors;
  KrylovConfig c;
  c.tolerance = 1e-6;
  c.stopping_norm = StoppingNorm::energy_estimate;
  c.on_iterate = [&](int, std::span<const double> x) {
    std::vector<double> e(n), ae(n);
    for (std::size_t i = 0; i < n; ++i) e[i] = xs[i] - x[i];
    a.multiply(e, ae);
    errors.push_back(std::sqrt(dot(e, ae)));
  };
  std::vector<double> x(n, 0.0);
  const auto rep = cg(as_map(a), {}, b, x, c);
  EXPECT_TRUE(rep.converged);
  std::vector<double> e(n), ae(n);
  for (std::size_t i = 0; i < n; ++i) e[i] = xs[i] - x[i];
  a.multiply(e, ae);
  const double e0 = std::sqrt(dot(xs, [&] {
    std::vector<double> t(n);
    a.multiply(xs, t);
    return t;
  }()));
  EXPECT_LT(std::sqrt(dot(e, ae)), 1e-5 * e0);
  ASSERT_FALSE(rep.energy_history.empty());
}

TEST(EnergyEstimate, SumsTheWindow) {
  const std::vector<double> alpha{1.0, 2.0, 3.0}, rz{4.0, 1.0, 0.5};
  EXPECT_DOUBLE_EQ(energy_error_estimate(alpha, rz, 0, 2), std::sqrt(4.0 + 2.0));
  EXPECT_THROW(energy_error_estimate(alpha, rz, 2, 2), std::out_of_range);
  EXPECT_THROW(energy_error_estimate(alpha, rz, 0, 0), std::invalid_argument);
}

TEST(Gmres, SolvesNonsymmetricSystem) {
  const auto a = model_matrix(50, 0.6);
  const auto b = random_vector(50, 4);
  for (int restart : {5, 50}) {
    std::vector<double> x(50, 0.0);
    KrylovConfig c;
    c.restart = restart;
    c.tolerance = 1e-10;
    const auto rep = gmres(as_map(a), {}, b, x, c);
    EXPECT_TRUE(rep.converged) << "restart " << restart;
    EXPECT_LT(residual(a, x, b), 1e-10);
  }
}

TEST(Gmres, FullGmresTerminatesWithinDimension) {
  const auto a = model_matrix(12, 0.4);
  const auto b = random_vector(12, 5);
  std::vector<double> x(12, 0.0);
  KrylovConfig c;
  c.tolerance = 1e-12;
  const auto rep = gmres(as_map(a), {}, b, x, c);
  EXPECT_TRUE(rep.converged);
  EXPECT_LE(rep.iterations, 12);
}

TEST(Fgmres, AcceptsVariablePreconditioner) {
  const auto a = model_matrix(50, 0.3);
  const auto b = random_vector(50, 6);
  int calls = 0;
  LinearMap pc = [&](std::span<const double> r, std::span<double> z) {
    const double s = (calls++ % 2) ? 0.5 : 0.25;
    for (std::size_t i = 0; i < r.size(); ++i) z[i] = s * r[i];
  };
  std::vector<double> x(50, 0.0);
  KrylovConfig c;
  c.tolerance = 1e-10;
  const auto rep = fgmres(as_map(a), pc, b, x, c);
  EXPECT_TRUE(rep.converged);
  EXPECT_LT(residual(a, x, b), 1e-10);
}

TEST(Gmres, ReportsNonConvergence) {
  const auto a = model_matrix(100, 0.0);
  const auto b = random_vector(100, 7);
  std::vector<double> x(100, 0.0);
  KrylovConfig c;
  c.max_iterations = 3;
  c.restart = 3;
  const auto rep = gmres(as_map(a), {}, b, x, c);
  EXPECT_FALSE(rep.converged);
  EXPECT_EQ(rep.iterations, 3);
}
