#include <random>

#include <gtest/gtest.h>

#include "mfdg/basis.hpp"
#include "mfdg/sumfact.hpp"

using namespace mfdg;

namespace {

std::vector<double> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

DenseMatrix random_matrix(std::size_t r, std::size_t c, unsigned seed) {
  DenseMatrix m(r, c);
  const auto v = random_vector(r * c, seed);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = v[i * c + j];
  return m;
}

// out(i1,i2,i3) = sum_j Mx(i1,j1) My(i2,j2) Mz(i3,j3) in(j1,j2,j3)
std::vector<double> naive(const std::vector<double>& in, const DenseMatrix& mx, const DenseMatrix& my,
                          const DenseMatrix& mz) {
  const std::size_t n1 = mx.cols(), n2 = my.cols(), n3 = mz.cols();
  const std::size_t m1 = mx.rows(), m2 = my.rows(), m3 = mz.rows();
  std::vector<double> out(m1 * m2 * m3, 0.0);
  for (std::size_t i3 = 0; i3 < m3; ++i3)
    for (std::size_t i2 = 0; i2 < m2; ++i2)
      for (std::size_t i1 = 0; i1 < m1; ++i1) {
        double s = 0.0;
        for (std::size_t j3 = 0; j3 < n3; ++j3)
          for (std::size_t j2 = 0; j2 < n2; ++j2)
            for (std::size_t j1 = 0; j1 < n1; ++j1)
              s += mx(i1, j1) * my(i2, j2) * mz(i3, j3) * in[j1 + n1 * (j2 + n2 * j3)];
        out[i1 + m1 * (i2 + m2 * i3)] = s;
      }
  return out;
}

}  // namespace

TEST(SumFactorization, EvaluateMatchesTripleSum) {
  for (int p = 1; p <= 6; ++p) {
    const auto [a, g] = eval_matrices(p, p + 1);
    const auto u = random_vector(a.cols() * a.cols() * a.cols(), p);
    std::vector<double> out(a.rows() * a.rows() * a.rows());
    sumfact_evaluate(u, g, a, a, out);
    const auto ref = naive(u, g, a, a);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-13);
  }
}

TEST(SumFactorization, RectangularShapes) {
  const auto mx = random_matrix(3, 2, 1), my = random_matrix(4, 5, 2), mz = random_matrix(2, 3, 3);
  const auto u = random_vector(2 * 5 * 3, 4);
  std::vector<double> out(3 * 4 * 2);
  sumfact_evaluate(u, mx, my, mz, out);
  const auto ref = naive(u, mx, my, mz);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-13);
}

TEST(SumFactorization, AccumulateIsTranspose) {
  const auto [a, g] = eval_matrices(3, 4);
  const auto u = random_vector(64, 7), w = random_vector(64, 8);
  std::vector<double> au(64), atw(64, 0.0);
  sumfact_evaluate(u, a, g, a, au);
  sumfact_accumulate(w, a, g, a, atw);
  double l = 0.0, r = 0.0;
  for (std::size_t i = 0; i < 64; ++i) {
    l += w[i] * au[i];
    r += atw[i] * u[i];
  }
  EXPECT_NEAR(l, r, 1e-12);
}

TEST(SumFactorization, ShapeMismatchThrows) {
  const auto [a, g] = eval_matrices(2, 3);
  std::vector<double> u(8), out(27);
  EXPECT_THROW(sumfact_evaluate(u, a, a, a, out), std::invalid_argument);
}

TEST(ContractDirection, EachAxisAgainstNaive) {
  const DenseMatrix m = random_matrix(4, 3, 11);
  const DenseMatrix id3 = DenseMatrix::identity(3);
  const auto u = random_vector(27, 12);
  for (int dir = 0; dir < 3; ++dir) {
    std::array<std::size_t, 3> shape{3, 3, 3};
    std::array<std::size_t, 3> oshape = shape;
    oshape[dir] = 4;
    std::vector<double> out(oshape[0] * oshape[1] * oshape[2], 1.0);
    const auto madds = contract_direction(u.data(), shape, m, dir, out.data(), false, false);
    EXPECT_EQ(madds, 4u * 3 * 9);
    const auto ref = naive(u, dir == 0 ? m : id3, dir == 1 ? m : id3, dir == 2 ? m : id3);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-14);
    // transposed and accumulating back onto a copy
    std::vector<double> back(27, 2.0);
    contract_direction(out.data(), oshape, m, dir, back.data(), true, true);
    const DenseMatrix mt = m.transposed();
    const auto ref2 = naive(ref, dir == 0 ? mt : DenseMatrix::identity(oshape[0]),
                            dir == 1 ? mt : DenseMatrix::identity(oshape[1]),
                            dir == 2 ? mt : DenseMatrix::identity(oshape[2]));
    for (std::size_t i = 0; i < 27; ++i) EXPECT_NEAR(back[i], 2.0 + ref2[i], 1e-13);
  }
}

TEST(ContractDirection, RejectsWrongShape) {
  const DenseMatrix m(4, 3);
  std::vector<double> u(16), out(64);
  EXPECT_THROW(contract_direction(u.data(), {4, 4, 1}, m, 0, out.data(), false, false), std::invalid_argument);
}

TEST(SumFactorization, FlopCountMatchesClosedForm) {
  for (int p = 1; p <= 10; ++p) {
    const auto [a, g] = eval_matrices(p, p + 1);
    const std::size_t n = a.cols(), m = a.rows();
    std::vector<double> u(n * n * n, 1.0), out(m * m * m);
    FlopCounter f;
    sumfact_evaluate(u, a, a, a, out, &f);
    EXPECT_EQ(f.multiply_adds, sumfact_evaluate_cost(n, m));
  }
  EXPECT_EQ(sumfact_evaluate_cost(2, 2), 3u * 16);
  EXPECT_EQ(sumfact_evaluate_cost(3, 4, 2), 4u * 9 + 16u * 3);
}
