#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mfdg/common.hpp"

namespace mfdg {

/// Small dense row-major matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double value = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  DenseMatrix transposed() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  /// y = M x
  void multiply(std::span<const double> x, std::span<double> y) const {
    check_size(x.size(), cols_, "DenseMatrix::multiply");
    check_size(y.size(), rows_, "DenseMatrix::multiply");
    for (std::size_t i = 0; i < rows_; ++i) {
      const double* r = data_.data() + i * cols_;
      double s = 0.0;
      for (std::size_t j = 0; j < cols_; ++j) s += r[j] * x[j];
      y[i] = s;
    }
  }

  /// y += M x
  void multiply_add(std::span<const double> x, std::span<double> y) const {
    for (std::size_t i = 0; i < rows_; ++i) {
      const double* r = data_.data() + i * cols_;
      double s = 0.0;
      for (std::size_t j = 0; j < cols_; ++j) s += r[j] * x[j];
      y[i] += s;
    }
  }

  DenseMatrix operator*(const DenseMatrix& b) const {
    if (cols_ != b.rows_) throw std::invalid_argument("DenseMatrix product: shape mismatch");
    DenseMatrix c(rows_, b.cols_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t k = 0; k < cols_; ++k) {
        const double a = (*this)(i, k);
        if (a == 0.0) continue;
        for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += a * b(k, j);
      }
    return c;
  }

  double max_abs() const { return mfdg::max_abs(data_); }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// LU factorization with partial pivoting, PA = LU.
class LUFactorization {
 public:
  LUFactorization() = default;

  /// Throws SingularMatrixError when a pivot is exactly zero or below
  /// `pivot_tol` times the largest entry.
  explicit LUFactorization(DenseMatrix a, double pivot_tol = 0.0) : lu_(std::move(a)) {
    if (lu_.rows() != lu_.cols()) throw std::invalid_argument("LU: matrix must be square");
    const std::size_t n = lu_.rows();
    const double scale = lu_.max_abs();
    perm_.resize(n);
    for (std::size_t i = 0; i < n; ++i) perm_[i] = i;
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t piv = k;
      double best = std::abs(lu_(k, k));
      for (std::size_t i = k + 1; i < n; ++i) {
        if (std::abs(lu_(i, k)) > best) {
          best = std::abs(lu_(i, k));
          piv = i;
        }
      }
      if (best == 0.0 || best <= pivot_tol * scale) {
        throw SingularMatrixError("LU: singular matrix (zero pivot at column " +
                                  std::to_string(k) + ")");
      }
      if (piv != k) {
        for (std::size_t j = 0; j < n; ++j) std::swap(lu_(k, j), lu_(piv, j));
        std::swap(perm_[k], perm_[piv]);
      }
      const double inv = 1.0 / lu_(k, k);
      for (std::size_t i = k + 1; i < n; ++i) {
        const double l = lu_(i, k) * inv;
        lu_(i, k) = l;
        if (l == 0.0) continue;
        for (std::size_t j = k + 1; j < n; ++j) lu_(i, j) -= l * lu_(k, j);
      }
    }
  }

  std::size_t size() const { return lu_.rows(); }

  void solve(std::span<const double> rhs, std::span<double> x) const {
    const std::size_t n = lu_.rows();
    check_size(rhs.size(), n, "LU::solve");
    check_size(x.size(), n, "LU::solve");
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = rhs[perm_[i]];
      for (std::size_t j = 0; j < i; ++j) s -= lu_(i, j) * y[j];
      y[i] = s;
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = y[i];
      for (std::size_t j = i + 1; j < n; ++j) s -= lu_(i, j) * x[j];
      x[i] = s / lu_(i, i);
    }
  }

  std::vector<double> solve(std::span<const double> rhs) const {
    std::vector<double> x(rhs.size());
    solve(rhs, x);
    return x;
  }

 private:
  DenseMatrix lu_;
  std::vector<std::size_t> perm_;
};

/// Compressed sparse row matrix.
class CsrMatrix {
 public:
  CsrMatrix() = default;
  CsrMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

  struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
  };

  /// Duplicate (row, col) pairs are summed. Every listed pair is stored,
  /// including ones that sum to zero, so the pattern is that of the input.
  static CsrMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> t) {
    std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    CsrMatrix m(rows, cols);
    for (std::size_t k = 0; k < t.size();) {
      if (t[k].row >= rows || t[k].col >= cols) throw std::out_of_range("CsrMatrix: triplet out of range");
      std::size_t e = k;
      double v = 0.0;
      while (e < t.size() && t[e].row == t[k].row && t[e].col == t[k].col) v += t[e++].value;
      m.col_idx_.push_back(t[k].col);
      m.values_.push_back(v);
      ++m.row_ptr_[t[k].row + 1];
      k = e;
    }
    for (std::size_t i = 0; i < rows; ++i) m.row_ptr_[i + 1] += m.row_ptr_[i];
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nonzeros() const { return values_.size(); }
  const std::vector<std::size_t>& row_ptr() const { return row_ptr_; }
  const std::vector<std::size_t>& col_idx() const { return col_idx_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  /// Entry lookup; zero when (i, j) is not stored.
  double operator()(std::size_t i, std::size_t j) const {
    const auto b = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
    const auto e = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
    const auto it = std::lower_bound(b, e, j);
    if (it == e || *it != j) return 0.0;
    return values_[static_cast<std::size_t>(it - col_idx_.begin())];
  }

  void multiply(std::span<const double> x, std::span<double> y) const {
    check_size(x.size(), cols_, "CsrMatrix::multiply");
    check_size(y.size(), rows_, "CsrMatrix::multiply");
    for (std::size_t i = 0; i < rows_; ++i) {
      double s = 0.0;
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s += values_[k] * x[col_idx_[k]];
      y[i] = s;
    }
  }

  /// y = M^T x
  void multiply_transposed(std::span<const double> x, std::span<double> y) const {
    check_size(x.size(), rows_, "CsrMatrix::multiply_transposed");
    check_size(y.size(), cols_, "CsrMatrix::multiply_transposed");
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) y[col_idx_[k]] += values_[k] * x[i];
  }

  CsrMatrix transposed() const {
    std::vector<Triplet> t;
    t.reserve(nonzeros());
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) t.push_back({col_idx_[k], i, values_[k]});
    return from_triplets(cols_, rows_, std::move(t));
  }

  /// Sparse product; entries are accumulated per row in a map, so the
  /// pattern is the structural product pattern.
  CsrMatrix operator*(const CsrMatrix& b) const {
    if (cols_ != b.rows_) throw std::invalid_argument("CsrMatrix product: shape mismatch");
    std::vector<Triplet> t;
    std::map<std::size_t, double> acc;
    for (std::size_t i = 0; i < rows_; ++i) {
      acc.clear();
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
        const std::size_t r = col_idx_[k];
        for (std::size_t l = b.row_ptr_[r]; l < b.row_ptr_[r + 1]; ++l) acc[b.col_idx_[l]] += values_[k] * b.values_[l];
      }
      for (const auto& [j, v] : acc) t.push_back({i, j, v});
    }
    return from_triplets(rows_, b.cols_, std::move(t));
  }

  DenseMatrix to_dense() const {
    DenseMatrix d(rows_, cols_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) d(i, col_idx_[k]) += values_[k];
    return d;
  }

  double max_abs() const { return mfdg::max_abs(values_); }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_idx_;
  std::vector<double> values_;
};

}  // namespace mfdg
