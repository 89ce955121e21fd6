#pragma once

#include <array>
#include <cstdio>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "mfdg/basis.hpp"
#include "mfdg/coefficients.hpp"
#include "mfdg/linalg.hpp"
#include "mfdg/mesh.hpp"

namespace mfdg {

enum class LowSpaceKind { p0, q1 };

/// Injection from a low-order conforming (Q1) or piecewise constant (P0)
/// space into the DG space, and its transpose.
class Transfer {
 public:
  Transfer(const StructuredGrid& grid, const TensorBasis& basis, LowSpaceKind kind)
      : grid_(grid), kind_(kind), n_(basis.dofs_per_cell()) {
    const auto& c = grid.cells_per_dim();
    if (kind == LowSpaceKind::p0) {
      dims_ = c;
      local_ = DenseMatrix(n_, 1, 1.0);
    } else {
      dims_ = {c[0] + 1, c[1] + 1, c[2] + 1};
      local_ = DenseMatrix(n_, 8);
      const auto& z = basis.nodes;
      const std::size_t np = z.size();
      for (std::size_t k = 0; k < np; ++k)
        for (std::size_t j = 0; j < np; ++j)
          for (std::size_t i = 0; i < np; ++i) {
            const std::size_t row = i + np * (j + np * k);
            for (int lv = 0; lv < 8; ++lv) {
              const double fx = (lv & 1) ? z[i] : 1.0 - z[i];
              const double fy = (lv & 2) ? z[j] : 1.0 - z[j];
              const double fz = (lv & 4) ? z[k] : 1.0 - z[k];
              local_(row, lv) = fx * fy * fz;
            }
          }
    }
  }

  LowSpaceKind kind() const { return kind_; }
  /// Structured dimensions of the low-order unknowns (cells for P0,
  /// vertices for Q1).
  const std::array<int, 3>& dims() const { return dims_; }
  std::size_t num_coarse() const { return static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2]; }
  std::size_t num_fine() const { return grid_.num_cells() * n_; }
  std::size_t local_size() const { return local_.cols(); }

  /// (P|_T)_{ij}: the low-order basis function j evaluated at DG node i.
  /// Identical for every cell of the structured grid.
  const DenseMatrix& local_prolongation() const { return local_; }

  /// Global low-order indices of the local columns of cell c.
  std::array<std::size_t, 8> cell_dofs(CellIndex c) const {
    std::array<std::size_t, 8> d{};
    if (kind_ == LowSpaceKind::p0) {
      d[0] = c;
      return d;
    }
    const auto ijk = grid_.cell_coords(c);
    for (int lv = 0; lv < 8; ++lv) {
      const std::size_t i = ijk[0] + (lv & 1);
      const std::size_t j = ijk[1] + ((lv >> 1) & 1);
      const std::size_t k = ijk[2] + ((lv >> 2) & 1);
      d[lv] = i + dims_[0] * (j + dims_[1] * k);
    }
    return d;
  }

  /// u += P uhat
  void prolongate_add(std::span<const double> uhat, std::span<double> u) const {
    check_size(uhat.size(), num_coarse(), "Transfer::prolongate");
    check_size(u.size(), num_fine(), "Transfer::prolongate");
    const std::size_t nl = local_size();
    double loc[8];
    for (CellIndex c = 0; c < grid_.num_cells(); ++c) {
      const auto d = cell_dofs(c);
      for (std::size_t l = 0; l < nl; ++l) loc[l] = uhat[d[l]];
      double* out = u.data() + c * n_;
      for (std::size_t i = 0; i < n_; ++i) {
        const double* row = local_.row(i).data();
        double s = 0.0;
        for (std::size_t l = 0; l < nl; ++l) s += row[l] * loc[l];
        out[i] += s;
      }
    }
  }

  void prolongate(std::span<const double> uhat, std::span<double> u) const {
    std::fill(u.begin(), u.end(), 0.0);
    prolongate_add(uhat, u);
  }

  /// rhat = P^T r
  void restrict(std::span<const double> r, std::span<double> rhat) const {
    check_size(r.size(), num_fine(), "Transfer::restrict");
    check_size(rhat.size(), num_coarse(), "Transfer::restrict");
    std::fill(rhat.begin(), rhat.end(), 0.0);
    const std::size_t nl = local_size();
    for (CellIndex c = 0; c < grid_.num_cells(); ++c) {
      const auto d = cell_dofs(c);
      const double* in = r.data() + c * n_;
      double loc[8] = {};
      for (std::size_t i = 0; i < n_; ++i) {
        const double* row = local_.row(i).data();
        for (std::size_t l = 0; l < nl; ++l) loc[l] += row[l] * in[i];
      }
      for (std::size_t l = 0; l < nl; ++l) rhat[d[l]] += loc[l];
    }
  }

 private:
  const StructuredGrid& grid_;
  LowSpaceKind kind_;
  std::size_t n_;
  std::array<int, 3> dims_{};
  DenseMatrix local_;
};

namespace detail {

inline double penalty_factor(int degree, double alpha) { return alpha * degree * (degree + kDim - 1); }

inline Vec3 face_advection(const StructuredGrid& grid, const Face& face, const CoefficientField& field) {
  const Point xm = grid.cell_geometry(face.inside).center;
  Vec3 b = field.advection(xm, face.inside);
  if (!face.boundary) {
    const Vec3 bp = field.advection(grid.cell_geometry(face.outside).center, face.outside);
    for (int k = 0; k < 3; ++k) b[k] = 0.5 * (b[k] + bp[k]);
  }
  return b;
}

}  // namespace detail

/// Cell-centered finite volume matrix whose diffusive fluxes are scaled to
/// coincide with the Galerkin projection of the DG operator onto P0.
/// Coefficients are taken at cell midpoints regardless of their mode.
inline CsrMatrix assemble_p0(const StructuredGrid& grid, const Coefficients& coeffs, int degree, double alpha) {
  const CoefficientField field(grid, with_mode(coeffs, EvaluationMode::cell_centered));
  const double s = detail::penalty_factor(degree, alpha);
  const double vol = grid.cell_volume();
  std::vector<CsrMatrix::Triplet> t;
  for (CellIndex c = 0; c < grid.num_cells(); ++c) {
    const Point x = grid.cell_geometry(c).center;
    t.push_back({c, c, field.reaction(x, c) * vol});
  }
  for (const Face& face : grid.faces()) {
    const double area = grid.face_area(face.axis);
    const double bnu = face.normal_sign * detail::face_advection(grid, face, field)[face.axis];
    const Point xm = grid.cell_geometry(face.inside).center;
    const double dm = normal_diffusivity(field.diffusion(xm, face.inside), face.axis);
    const CellIndex a = face.inside;
    if (face.boundary) {
      if (grid.boundary_type(face.domain_face()) == BoundaryType::neumann) continue;
      // Distance from the cell center to the face is h/2 = |T| / (2 |F|).
      const double trans = dm * area / (vol / (2.0 * area));
      t.push_back({a, a, 0.5 * s * trans + (bnu >= 0.0 ? bnu * area : 0.0)});
      continue;
    }
    const CellIndex b = face.outside;
    const double dp = normal_diffusivity(field.diffusion(grid.cell_geometry(b).center, b), face.axis);
    const double trans = s * harmonic_average(dm, dp) * area / (vol / area);
    t.push_back({a, a, trans});
    t.push_back({b, b, trans});
    t.push_back({a, b, -trans});
    t.push_back({b, a, -trans});
    if (bnu >= 0.0) {
      t.push_back({a, a, bnu * area});
      t.push_back({b, a, -bnu * area});
    } else {
      t.push_back({a, b, bnu * area});
      t.push_back({b, b, -bnu * area});
    }
  }
  return CsrMatrix::from_triplets(grid.num_cells(), grid.num_cells(), std::move(t));
}

/// Conforming trilinear finite element matrix plus the weak Dirichlet terms
/// of the DG form, with the penalty of the degree-p DG space.
inline CsrMatrix assemble_q1(const StructuredGrid& grid, const Coefficients& coeffs, int degree, double alpha) {
  const CoefficientField field(grid, with_mode(coeffs, EvaluationMode::cell_centered));
  const Transfer numbering(grid, make_tensor_basis(1), LowSpaceKind::q1);
  const auto& h = grid.spacing();
  const double vol = grid.cell_volume();
  const QuadratureRule rule = gauss_rule(2);
  // Trilinear shape functions on the unit cube; lv = a + 2b + 4c.
  auto shape = [](int lv, const Point& xh, double& val, Vec3& grad) {
    double f[3], d[3];
    for (int k = 0; k < 3; ++k) {
      const bool hi = (lv >> k) & 1;
      f[k] = hi ? xh[k] : 1.0 - xh[k];
      d[k] = hi ? 1.0 : -1.0;
    }
    val = f[0] * f[1] * f[2];
    grad = {d[0] * f[1] * f[2], f[0] * d[1] * f[2], f[0] * f[1] * d[2]};
  };
  std::vector<CsrMatrix::Triplet> t;
  double loc[8][8];
  double v[8];
  Vec3 g[8];
  for (CellIndex c = 0; c < grid.num_cells(); ++c) {
    const Point xc = grid.cell_geometry(c).center;
    const Tensor3 kk = field.diffusion(xc, c);
    const Vec3 b = field.advection(xc, c);
    const double cr = field.reaction(xc, c);
    for (auto& r : loc)
      for (double& x : r) x = 0.0;
    for (int qk = 0; qk < 2; ++qk)
      for (int qj = 0; qj < 2; ++qj)
        for (int qi = 0; qi < 2; ++qi) {
          const Point xh{rule.points[qi], rule.points[qj], rule.points[qk]};
          const double w = rule.weights[qi] * rule.weights[qj] * rule.weights[qk] * vol;
          for (int l = 0; l < 8; ++l) {
            shape(l, xh, v[l], g[l]);
            for (int k = 0; k < 3; ++k) g[l][k] /= h[k];
          }
          for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) {
              double a = cr * v[j] * v[i];
              for (int k = 0; k < 3; ++k) {
                double kg = -b[k] * v[j];
                for (int l = 0; l < 3; ++l) kg += kk(k, l) * g[j][l];
                a += kg * g[i][k];
              }
              loc[i][j] += w * a;
            }
        }
    for (int lf = 0; lf < 6; ++lf) {
      const std::size_t fid = grid.cell_faces(c)[lf];
      const Face& face = grid.faces()[fid];
      if (!face.boundary || grid.boundary_type(face.domain_face()) == BoundaryType::neumann) continue;
      const int ax = face.axis;
      const FaceCoupling fc = face_coupling(grid, face, field, degree, alpha);
      const double bnu = face.normal_sign * b[ax];
      Vec3 knu{};
      for (int k = 0; k < 3; ++k) knu[k] = face.normal_sign * kk(k, ax);
      const int t1 = ax == 0 ? 1 : 0;
      const int t2 = ax == 2 ? 1 : 2;
      for (int q2 = 0; q2 < 2; ++q2)
        for (int q1 = 0; q1 < 2; ++q1) {
          Point xh{};
          xh[ax] = face.inside_ref();
          xh[t1] = rule.points[q1];
          xh[t2] = rule.points[q2];
          const double w = rule.weights[q1] * rule.weights[q2] * grid.face_area(ax);
          for (int l = 0; l < 8; ++l) {
            shape(l, xh, v[l], g[l]);
            for (int k = 0; k < 3; ++k) g[l][k] /= h[k];
          }
          for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) {
              double a = ((bnu >= 0.0 ? bnu : 0.0) + fc.penalty) * v[j] * v[i];
              double fj = 0.0, fi = 0.0;
              for (int k = 0; k < 3; ++k) {
                fj += knu[k] * g[j][k];
                fi += knu[k] * g[i][k];
              }
              a -= fc.omega_minus * (fj * v[i] + fi * v[j]);
              loc[i][j] += w * a;
            }
        }
    }
    const auto d = numbering.cell_dofs(c);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) t.push_back({d[i], d[j], loc[i][j]});
  }
  const std::size_t n = numbering.num_coarse();
  return CsrMatrix::from_triplets(n, n, std::move(t));
}

/// Low-order matrix for the given space.
inline CsrMatrix assemble_low(const StructuredGrid& grid, const Coefficients& coeffs, int degree, double alpha,
                              LowSpaceKind kind) {
  return kind == LowSpaceKind::p0 ? assemble_p0(grid, coeffs, degree, alpha)
                                  : assemble_q1(grid, coeffs, degree, alpha);
}

struct CoarseSolverConfig {
  int pre_sweeps = 2;
  int post_sweeps = 2;
  std::size_t direct_limit = 1000;
};

/// Geometric multigrid V-cycle on the structured low-order unknowns:
/// 2:1 coarsening per axis (linear interpolation between vertices for Q1,
/// aggregation of cell pairs for P0), Galerkin coarse operators, forward
/// Gauss-Seidel before and backward Gauss-Seidel after the coarse
/// correction, dense LU at the bottom. One call is one V-cycle from a zero
/// guess, hence a fixed linear map.
class GeometricCoarseSolver {
 public:
  GeometricCoarseSolver(CsrMatrix a, std::array<int, 3> dims, LowSpaceKind kind, CoarseSolverConfig config = {})
      : config_(config) {
    Level lvl;
    lvl.a = std::move(a);
    lvl.dims = dims;
    check_size(lvl.a.rows(), static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], "GeometricCoarseSolver");
    levels_.push_back(std::move(lvl));
    while (levels_.back().a.rows() > config_.direct_limit) {
      Level& fine = levels_.back();
      std::array<int, 3> cdims{};
      std::array<CsrMatrix, 3> p1d;
      bool coarsened = false;
      for (int k = 0; k < 3; ++k) {
        p1d[k] = kind == LowSpaceKind::q1 ? vertex_prolongation(fine.dims[k], cdims[k])
                                          : aggregation_prolongation(fine.dims[k], cdims[k]);
        coarsened = coarsened || cdims[k] < fine.dims[k];
      }
      if (!coarsened) break;
      fine.p = kron3(p1d[0], p1d[1], p1d[2]);
      fine.r = fine.p.transposed();
      Level next;
      next.dims = cdims;
      next.a = fine.r * (fine.a * fine.p);
      levels_.push_back(std::move(next));
    }
    for (auto& l : levels_) l.diag = diagonal_of(l.a);
    factor_bottom();
  }

  std::size_t num_levels() const { return levels_.size(); }
  std::size_t size() const { return levels_.front().a.rows(); }
  const CsrMatrix& matrix(std::size_t level = 0) const { return levels_.at(level).a; }

  /// x = V(b), starting from zero.
  void solve(std::span<const double> b, std::span<double> x) const {
    check_size(b.size(), size(), "GeometricCoarseSolver::solve");
    check_size(x.size(), size(), "GeometricCoarseSolver::solve");
    cycle(0, b, x);
  }

  std::vector<double> solve(std::span<const double> b) const {
    std::vector<double> x(b.size());
    solve(b, x);
    return x;
  }

 private:
  struct Level {
    CsrMatrix a;
    CsrMatrix p;  ///< to this level from the next coarser one
    CsrMatrix r;
    std::array<int, 3> dims{};
    std::vector<double> diag;
  };

  static std::vector<double> diagonal_of(const CsrMatrix& a) {
    std::vector<double> d(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) d[i] = a(i, i);
    return d;
  }

  /// Vertices 0..n-1; even ones (and the last) survive.
  static CsrMatrix vertex_prolongation(int n, int& nc) {
    if (n <= 2) {
      nc = n;
      return identity_csr(n);
    }
    std::vector<int> coarse_of(n, -1);
    nc = 0;
    for (int i = 0; i < n; i += 2) coarse_of[i] = nc++;
    if (coarse_of[n - 1] < 0) coarse_of[n - 1] = nc++;
    std::vector<CsrMatrix::Triplet> t;
    for (int i = 0; i < n; ++i) {
      if (coarse_of[i] >= 0) {
        t.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(coarse_of[i]), 1.0});
      } else {
        t.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(coarse_of[i - 1]), 0.5});
        t.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(coarse_of[i + 1]), 0.5});
      }
    }
    return CsrMatrix::from_triplets(n, nc, std::move(t));
  }

  static CsrMatrix aggregation_prolongation(int n, int& nc) {
    if (n <= 1) {
      nc = n;
      return identity_csr(n);
    }
    nc = (n + 1) / 2;
    std::vector<CsrMatrix::Triplet> t;
    for (int i = 0; i < n; ++i) t.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(i / 2), 1.0});
    return CsrMatrix::from_triplets(n, nc, std::move(t));
  }

  static CsrMatrix identity_csr(int n) {
    std::vector<CsrMatrix::Triplet> t;
    for (int i = 0; i < n; ++i) t.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(i), 1.0});
    return CsrMatrix::from_triplets(n, n, std::move(t));
  }

  /// Pz (x) Py (x) Px with x fastest.
  static CsrMatrix kron3(const CsrMatrix& px, const CsrMatrix& py, const CsrMatrix& pz) {
    std::vector<CsrMatrix::Triplet> t;
    const std::size_t fx = px.rows(), fy = py.rows();
    const std::size_t cx = px.cols(), cy = py.cols();
    for (std::size_t k = 0; k < pz.rows(); ++k)
      for (std::size_t kk = pz.row_ptr()[k]; kk < pz.row_ptr()[k + 1]; ++kk)
        for (std::size_t j = 0; j < fy; ++j)
          for (std::size_t jj = py.row_ptr()[j]; jj < py.row_ptr()[j + 1]; ++jj)
            for (std::size_t i = 0; i < fx; ++i)
              for (std::size_t ii = px.row_ptr()[i]; ii < px.row_ptr()[i + 1]; ++ii) {
                const std::size_t row = i + fx * (j + fy * k);
                const std::size_t col = px.col_idx()[ii] + cx * (py.col_idx()[jj] + cy * pz.col_idx()[kk]);
                t.push_back({row, col, px.values()[ii] * py.values()[jj] * pz.values()[kk]});
              }
    return CsrMatrix::from_triplets(fx * fy * pz.rows(), cx * cy * pz.cols(), std::move(t));
  }

  void factor_bottom() {
    const DenseMatrix dense = levels_.back().a.to_dense();
    try {
      bottom_ = std::make_unique<LUFactorization>(dense, 1e-14 * std::max(dense.max_abs(), 1e-300));
    } catch (const SingularMatrixError&) {
      std::fprintf(stderr, "warning: singular coarsest system, using a regularized factorization\n");
      DenseMatrix reg = dense;
      const double shift = 1e-10 * std::max(dense.max_abs(), 1.0);
      for (std::size_t i = 0; i < reg.rows(); ++i) reg(i, i) += shift;
      bottom_ = std::make_unique<LUFactorization>(reg);
    }
  }

  void gauss_seidel(const Level& l, std::span<const double> b, std::span<double> x, bool forward) const {
    const auto& rp = l.a.row_ptr();
    const auto& ci = l.a.col_idx();
    const auto& va = l.a.values();
    const std::size_t n = l.a.rows();
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t i = forward ? s : n - 1 - s;
      double r = b[i];
      for (std::size_t k = rp[i]; k < rp[i + 1]; ++k)
        if (ci[k] != i) r -= va[k] * x[ci[k]];
      x[i] = r / l.diag[i];
    }
  }

  void cycle(std::size_t k, std::span<const double> b, std::span<double> x) const {
    const Level& l = levels_[k];
    if (k + 1 == levels_.size()) {
      bottom_->solve(b, x);
      return;
    }
    std::fill(x.begin(), x.end(), 0.0);
    for (int s = 0; s < config_.pre_sweeps; ++s) gauss_seidel(l, b, x, true);
    std::vector<double> r(b.begin(), b.end());
    std::vector<double> ax(r.size());
    l.a.multiply(x, ax);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= ax[i];
    std::vector<double> rc(l.p.cols()), xc(l.p.cols());
    l.r.multiply(r, rc);
    cycle(k + 1, rc, xc);
    l.p.multiply(xc, ax);
    for (std::size_t i = 0; i < r.size(); ++i) x[i] += ax[i];
    for (int s = 0; s < config_.post_sweeps; ++s) gauss_seidel(l, b, x, false);
  }

  CoarseSolverConfig config_;
  std::vector<Level> levels_;
  std::unique_ptr<LUFactorization> bottom_;
};

}  // namespace mfdg
