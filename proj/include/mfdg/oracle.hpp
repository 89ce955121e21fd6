#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfdg/basis.hpp"
#include "mfdg/coefficients.hpp"
#include "mfdg/dg_operator.hpp"
#include "mfdg/linalg.hpp"
#include "mfdg/lowspace.hpp"
#include "mfdg/mesh.hpp"

namespace mfdg {

class SizeLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Assembled DG matrix stored as one dense diagonal block per cell plus
/// one dense block per face neighbour (indexed by local face 2*axis+high).
class BlockSparseMatrix {
 public:
  BlockSparseMatrix(const StructuredGrid& grid, std::size_t block_size, bool symmetric = false)
      : grid_(grid), n_(block_size), symmetric_(symmetric) {
    diag_.assign(grid.num_cells(), DenseMatrix(n_, n_));
    off_.resize(grid.num_cells());
    neighbor_.resize(grid.num_cells());
    for (CellIndex c = 0; c < grid.num_cells(); ++c) {
      for (int lf = 0; lf < 6; ++lf) {
        const Face& f = grid.faces()[grid.cell_faces(c)[lf]];
        if (f.boundary) continue;
        neighbor_[c][lf] = f.inside == c ? f.outside : f.inside;
        off_[c][lf] = DenseMatrix(n_, n_);
      }
    }
  }

  const StructuredGrid& grid() const { return grid_; }
  std::size_t num_cells() const { return grid_.num_cells(); }
  std::size_t block_size() const { return n_; }
  std::size_t size() const { return num_cells() * n_; }
  bool symmetric() const { return symmetric_; }

  DenseMatrix& diagonal(CellIndex c) { return diag_.at(c); }
  const DenseMatrix& diagonal(CellIndex c) const { return diag_.at(c); }
  bool has_neighbor(CellIndex c, int local_face) const { return neighbor_.at(c)[local_face].has_value(); }
  CellIndex neighbor_cell(CellIndex c, int local_face) const { return neighbor_.at(c)[local_face].value(); }
  DenseMatrix& neighbor(CellIndex c, int local_face) {
    if (!has_neighbor(c, local_face)) throw std::out_of_range("no neighbour across this face");
    return off_[c][local_face];
  }
  const DenseMatrix& neighbor(CellIndex c, int local_face) const {
    if (!has_neighbor(c, local_face)) throw std::out_of_range("no neighbour across this face");
    return off_[c][local_face];
  }

  /// Block A_{T,T'} or nullptr when T' is outside the stencil of T.
  const DenseMatrix* block(CellIndex row, CellIndex col) const {
    if (row == col) return &diag_.at(row);
    for (int lf = 0; lf < 6; ++lf)
      if (neighbor_.at(row)[lf] == col) return &off_[row][lf];
    return nullptr;
  }

  std::size_t stored_reals() const {
    std::size_t blocks = 0;
    for (CellIndex c = 0; c < num_cells(); ++c) {
      ++blocks;
      for (int lf = 0; lf < 6; ++lf) blocks += has_neighbor(c, lf);
    }
    return blocks * n_ * n_;
  }

  /// v = A u
  void apply(std::span<const double> u, std::span<double> v) const {
    check_size(u.size(), size(), "spmv");
    check_size(v.size(), size(), "spmv");
    for (CellIndex c = 0; c < num_cells(); ++c) {
      auto vt = v.subspan(c * n_, n_);
      diag_[c].multiply(u.subspan(c * n_, n_), vt);
      for (int lf = 0; lf < 6; ++lf)
        if (neighbor_[c][lf]) off_[c][lf].multiply_add(u.subspan(*neighbor_[c][lf] * n_, n_), vt);
    }
  }

  std::vector<double> apply(std::span<const double> u) const {
    std::vector<double> v(size());
    apply(u, v);
    return v;
  }

  void apply_block_diagonal(CellIndex c, std::span<const double> ut, std::span<double> vt) const {
    diag_.at(c).multiply(ut, vt);
  }

  void apply_offdiagonal_row(CellIndex c, std::span<const double> u, std::span<double> vt) const {
    std::fill(vt.begin(), vt.end(), 0.0);
    for (int lf = 0; lf < 6; ++lf)
      if (neighbor_[c][lf]) off_[c][lf].multiply_add(u.subspan(*neighbor_[c][lf] * n_, n_), vt);
  }

  DenseMatrix assemble_block(CellIndex c) const { return diag_.at(c); }

  std::vector<double> block_diagonal_entries() const {
    std::vector<double> d(size());
    for (CellIndex c = 0; c < num_cells(); ++c)
      for (std::size_t i = 0; i < n_; ++i) d[c * n_ + i] = diag_[c](i, i);
    return d;
  }

  double max_abs() const {
    double m = 0.0;
    for (CellIndex c = 0; c < num_cells(); ++c) {
      m = std::max(m, diag_[c].max_abs());
      for (int lf = 0; lf < 6; ++lf)
        if (neighbor_[c][lf]) m = std::max(m, off_[c][lf].max_abs());
    }
    return m;
  }

  DenseMatrix to_dense() const {
    DenseMatrix a(size(), size());
    for (CellIndex c = 0; c < num_cells(); ++c) {
      auto put = [&](const DenseMatrix& b, CellIndex col) {
        for (std::size_t i = 0; i < n_; ++i)
          for (std::size_t j = 0; j < n_; ++j) a(c * n_ + i, col * n_ + j) = b(i, j);
      };
      put(diag_[c], c);
      for (int lf = 0; lf < 6; ++lf)
        if (neighbor_[c][lf]) put(off_[c][lf], *neighbor_[c][lf]);
    }
    return a;
  }

  /// Coordinate triplets "row col value", one per line, 17 significant
  /// digits; explicit zeros inside stored blocks are skipped.
  void dump(std::ostream& os) const {
    char buf[96];
    for (CellIndex c = 0; c < num_cells(); ++c) {
      auto emit = [&](const DenseMatrix& b, CellIndex col) {
        for (std::size_t i = 0; i < n_; ++i)
          for (std::size_t j = 0; j < n_; ++j) {
            if (b(i, j) == 0.0) continue;
            std::snprintf(buf, sizeof buf, "%zu %zu %.17g\n", c * n_ + i, col * n_ + j, b(i, j));
            os << buf;
          }
      };
      emit(diag_[c], c);
      for (int lf = 0; lf < 6; ++lf)
        if (neighbor_[c][lf]) emit(off_[c][lf], *neighbor_[c][lf]);
    }
  }

 private:
  const StructuredGrid& grid_;
  std::size_t n_;
  bool symmetric_;
  std::vector<DenseMatrix> diag_;
  std::vector<std::array<DenseMatrix, 6>> off_;
  std::vector<std::array<std::optional<CellIndex>, 6>> neighbor_;
};

inline constexpr double kDefaultAssemblyLimit = 4e8;

inline void check_assembly_limit(const StructuredGrid& grid, std::size_t block_size, double limit) {
  const double reals = 7.0 * grid.num_cells() * static_cast<double>(block_size) * block_size;
  if (reals > limit) {
    throw SizeLimitError("assembly would store " + std::to_string(reals) + " reals, above the limit of " +
                         std::to_string(limit));
  }
}

/// Assembles A by applying the matrix-free kernels to unit vectors, so
/// the result is consistent with the operator to rounding.
inline BlockSparseMatrix assemble_full(const DGOperator& op, double limit = kDefaultAssemblyLimit) {
  const StructuredGrid& grid = op.grid();
  const std::size_t n = op.block_size();
  check_assembly_limit(grid, n, limit);
  BlockSparseMatrix a(grid, n, op.symmetric());
  for (CellIndex c = 0; c < grid.num_cells(); ++c) a.diagonal(c) = op.assemble_block(c);
  std::vector<double> e(n, 0.0), col(n);
  for (std::size_t f = 0; f < grid.num_interior_faces(); ++f) {
    const Face& face = grid.faces()[f];
    DenseMatrix& mp = a.neighbor(face.inside, 2 * face.axis + 1);  // A_{-,+}
    DenseMatrix& pm = a.neighbor(face.outside, 2 * face.axis);     // A_{+,-}
    for (std::size_t j = 0; j < n; ++j) {
      e[j] = 1.0;
      std::fill(col.begin(), col.end(), 0.0);
      op.apply_face(f, Side::plus, Side::minus, e, col);
      for (std::size_t i = 0; i < n; ++i) mp(i, j) = col[i];
      std::fill(col.begin(), col.end(), 0.0);
      op.apply_face(f, Side::minus, Side::plus, e, col);
      for (std::size_t i = 0; i < n; ++i) pm(i, j) = col[i];
      e[j] = 0.0;
    }
  }
  return a;
}

inline BlockSparseMatrix assemble_full(const StructuredGrid& grid, const Coefficients& coeffs,
                                       const TensorBasis& basis, EvaluationMode mode, double alpha = 1.25,
                                       double limit = kDefaultAssemblyLimit) {
  const DGOperator op(grid, basis, with_mode(coeffs, mode), OperatorOptions{alpha});
  return assemble_full(op, limit);
}

/// Second, independent assembly: every entry a_h(psi_j, psi_i) by plain
/// quadrature over physical basis values and gradients, with weights and
/// penalties computed locally. Shares nothing with the matrix-free kernels
/// beyond the 1D nodes and rule.
inline BlockSparseMatrix assemble_by_quadrature(const StructuredGrid& grid, const Coefficients& coeffs,
                                                int degree, double alpha = 1.25,
                                                double limit = kDefaultAssemblyLimit) {
  const auto nodes = lobatto_nodes(degree);
  const auto rule = gauss_rule(degree + 1);
  const std::size_t np = nodes.size();
  const std::size_t nq = rule.points.size();
  const std::size_t n = np * np * np;
  check_assembly_limit(grid, n, limit);
  const auto& h = grid.spacing();
  const bool cc = coeffs.mode == EvaluationMode::cell_centered;
  const double pen = alpha * degree * (degree + 2.0);

  // Physical value and gradient of all cell basis functions at reference x.
  auto shape = [&](const Point& xh, std::vector<double>& val, std::vector<Vec3>& grad) {
    std::array<std::vector<double>, 3> v, d;
    for (int k = 0; k < 3; ++k) {
      v[k].resize(np);
      d[k].resize(np);
      for (std::size_t j = 0; j < np; ++j) {
        double p = 1.0;
        double s = 0.0;
        for (std::size_t l = 0; l < np; ++l) {
          if (l == j) continue;
          p *= (xh[k] - nodes[l]) / (nodes[j] - nodes[l]);
          double t = 1.0 / (nodes[j] - nodes[l]);
          for (std::size_t r = 0; r < np; ++r)
            if (r != j && r != l) t *= (xh[k] - nodes[r]) / (nodes[j] - nodes[r]);
          s += t;
        }
        v[k][j] = p;
        d[k][j] = s;
      }
    }
    val.resize(n);
    grad.resize(n);
    for (std::size_t c = 0; c < np; ++c)
      for (std::size_t b = 0; b < np; ++b)
        for (std::size_t a = 0; a < np; ++a) {
          const std::size_t i = a + np * (b + np * c);
          val[i] = v[0][a] * v[1][b] * v[2][c];
          grad[i] = {d[0][a] * v[1][b] * v[2][c] / h[0], v[0][a] * d[1][b] * v[2][c] / h[1],
                     v[0][a] * v[1][b] * d[2][c] / h[2]};
        }
  };
  auto center = [&](CellIndex c) { return grid.cell_geometry(c).center; };
  auto kof = [&](const Point& x, CellIndex c) { return coeffs.diffusion(cc ? center(c) : x, c); };
  auto bof = [&](const Point& x, CellIndex c) {
    return coeffs.has_advection ? coeffs.advection(cc ? center(c) : x, c) : Vec3{};
  };
  auto cof = [&](const Point& x, CellIndex c) { return coeffs.reaction(cc ? center(c) : x, c); };

  BlockSparseMatrix a(grid, n, !coeffs.has_advection);
  std::vector<double> val, valp;
  std::vector<Vec3> grad, gradp;
  const double vol = h[0] * h[1] * h[2];
  for (CellIndex c = 0; c < grid.num_cells(); ++c) {
    const Point o = grid.cell_origin(c);
    DenseMatrix& d = a.diagonal(c);
    for (std::size_t k = 0; k < nq; ++k)
      for (std::size_t j = 0; j < nq; ++j)
        for (std::size_t i = 0; i < nq; ++i) {
          const Point xh{rule.points[i], rule.points[j], rule.points[k]};
          const Point x{o[0] + xh[0] * h[0], o[1] + xh[1] * h[1], o[2] + xh[2] * h[2]};
          const double w = rule.weights[i] * rule.weights[j] * rule.weights[k] * vol;
          shape(xh, val, grad);
          const Tensor3 kk = kof(x, c);
          const Vec3 b = bof(x, c);
          const double cr = cof(x, c);
          for (std::size_t tj = 0; tj < n; ++tj) {
            Vec3 flux{};
            for (int r = 0; r < 3; ++r) {
              flux[r] = -b[r] * val[tj];
              for (int s = 0; s < 3; ++s) flux[r] += kk(r, s) * grad[tj][s];
            }
            for (std::size_t ti = 0; ti < n; ++ti) {
              d(ti, tj) += w * (flux[0] * grad[ti][0] + flux[1] * grad[ti][1] + flux[2] * grad[ti][2] +
                                cr * val[tj] * val[ti]);
            }
          }
        }
  }

  for (const Face& face : grid.faces()) {
    const int ax = face.axis;
    const int t1 = ax == 0 ? 1 : 0;
    const int t2 = ax == 2 ? 1 : 2;
    const double area = vol / h[ax];
    const double sg = face.normal_sign;
    const CellIndex cm = face.inside;
    const Point om = grid.cell_origin(cm);
    Point xf_mid = center(cm);
    xf_mid[ax] += 0.5 * sg * h[ax];
    const double dm = coeffs.diffusion(cc ? center(cm) : xf_mid, cm)(ax, ax);
    if (face.boundary) {
      if (grid.boundary_type(face.domain_face()) == BoundaryType::neumann) continue;
      const double gamma = pen * dm * area / vol;
      DenseMatrix& d = a.diagonal(cm);
      for (std::size_t q2 = 0; q2 < nq; ++q2)
        for (std::size_t q1 = 0; q1 < nq; ++q1) {
          Point xh{};
          xh[ax] = sg > 0 ? 1.0 : 0.0;
          xh[t1] = rule.points[q1];
          xh[t2] = rule.points[q2];
          Point x{};
          for (int k = 0; k < 3; ++k) x[k] = om[k] + xh[k] * h[k];
          const double w = rule.weights[q1] * rule.weights[q2] * area;
          shape(xh, val, grad);
          const Tensor3 kk = kof(x, cm);
          const double bn = sg * bof(x, cm)[ax];
          std::vector<double> kn(n);
          for (std::size_t t = 0; t < n; ++t) {
            double s = 0.0;
            for (int r = 0; r < 3; ++r) s += sg * kk(ax, r) * grad[t][r];
            kn[t] = s;
          }
          for (std::size_t tj = 0; tj < n; ++tj)
            for (std::size_t ti = 0; ti < n; ++ti) {
              const double phi = bn >= 0.0 ? bn * val[tj] : 0.0;
              d(ti, tj) += w * (phi * val[ti] - kn[tj] * val[ti] - kn[ti] * val[tj] + gamma * val[tj] * val[ti]);
            }
        }
      continue;
    }
    const CellIndex cp = face.outside;
    const double dp = coeffs.diffusion(cc ? center(cp) : xf_mid, cp)(ax, ax);
    const double wm = dm + dp > 0.0 ? dp / (dm + dp) : 0.5;
    const double wp = dm + dp > 0.0 ? dm / (dm + dp) : 0.5;
    const double hm = dm + dp > 0.0 ? 2.0 * dm * dp / (dm + dp) : 0.0;
    const double gamma = pen * hm * area / vol;
    std::array<DenseMatrix*, 4> blk{&a.diagonal(cm), &a.neighbor(cm, 2 * ax + 1), &a.neighbor(cp, 2 * ax),
                                    &a.diagonal(cp)};
    for (std::size_t q2 = 0; q2 < nq; ++q2)
      for (std::size_t q1 = 0; q1 < nq; ++q1) {
        Point xm{}, xp{};
        xm[ax] = 1.0;
        xp[ax] = 0.0;
        xm[t1] = xp[t1] = rule.points[q1];
        xm[t2] = xp[t2] = rule.points[q2];
        Point x{};
        for (int k = 0; k < 3; ++k) x[k] = om[k] + xm[k] * h[k];
        const double w = rule.weights[q1] * rule.weights[q2] * area;
        shape(xm, val, grad);
        shape(xp, valp, gradp);
        const Tensor3 km = kof(x, cm), kp = kof(x, cp);
        double bn;
        if (cc) {
          bn = 0.5 * (bof(x, cm)[ax] + bof(x, cp)[ax]);
        } else {
          bn = bof(x, cm)[ax];
        }
        // Traces: side 0 = minus, side 1 = plus. Jump [v] = v- - v+.
        std::array<const std::vector<double>*, 2> vv{&val, &valp};
        std::array<std::vector<double>, 2> kn;
        for (int s = 0; s < 2; ++s) {
          const Tensor3& kk = s == 0 ? km : kp;
          const auto& gg = s == 0 ? grad : gradp;
          kn[s].resize(n);
          for (std::size_t t = 0; t < n; ++t) {
            double z = 0.0;
            for (int r = 0; r < 3; ++r) z += kk(ax, r) * gg[t][r];
            kn[s][t] = z;
          }
        }
        const double om_s[2] = {wm, wp};
        const double sign[2] = {1.0, -1.0};
        for (int tr = 0; tr < 2; ++tr)       // test side
          for (int sr = 0; sr < 2; ++sr) {   // trial side
            DenseMatrix& b = *blk[2 * tr + sr];
            const bool upwind = sr == 0 ? bn >= 0.0 : bn < 0.0;
            for (std::size_t tj = 0; tj < n; ++tj) {
              const double uj = (*vv[sr])[tj];
              const double flux = upwind ? bn * uj : 0.0;
              for (std::size_t ti = 0; ti < n; ++ti) {
                const double vi = (*vv[tr])[ti];
                const double jump_v = sign[tr] * vi;
                const double jump_u = sign[sr] * uj;
                b(ti, tj) += w * (flux * jump_v - om_s[sr] * kn[sr][tj] * jump_v - om_s[tr] * kn[tr][ti] * jump_u +
                                  gamma * jump_u * jump_v);
              }
            }
          }
      }
  }
  return a;
}

/// LU factors of every diagonal block.
class FactorizedBlocks {
 public:
  FactorizedBlocks() = default;

  template <class BlockSource>
  explicit FactorizedBlocks(const BlockSource& src) : n_(src.block_size()) {
    lu_.reserve(src.num_cells());
    for (CellIndex c = 0; c < src.num_cells(); ++c) {
      try {
        lu_.emplace_back(src.assemble_block(c));
      } catch (const SingularMatrixError& e) {
        throw SingularMatrixError("singular diagonal block in cell " + std::to_string(c) + ": " + e.what());
      }
    }
  }

  std::size_t num_cells() const { return lu_.size(); }
  std::size_t block_size() const { return n_; }
  std::size_t stored_reals() const { return lu_.size() * n_ * n_; }

  /// Back substitution for one cell; always returns 0 iterations.
  int solve(CellIndex c, std::span<const double> rhs, std::span<double> x) const {
    lu_.at(c).solve(rhs, x);
    return 0;
  }

 private:
  std::size_t n_ = 0;
  std::vector<LUFactorization> lu_;
};

inline FactorizedBlocks factorize_blocks(const BlockSparseMatrix& a) { return FactorizedBlocks(a); }

inline std::vector<double> block_back_substitute(const FactorizedBlocks& f, CellIndex c, std::span<const double> rhs) {
  std::vector<double> x(rhs.size());
  f.solve(c, rhs, x);
  return x;
}

/// P^T A P restricted to the structured low-order stencil (7 points for
/// P0, 27 for Q1). Entries outside it must vanish to 1e-10 relative.
inline CsrMatrix galerkin_product(const Transfer& p, const BlockSparseMatrix& a) {
  const StructuredGrid& grid = a.grid();
  const DenseMatrix& loc = p.local_prolongation();
  const DenseMatrix loct = loc.transposed();
  const std::size_t nl = p.local_size();
  std::vector<CsrMatrix::Triplet> t;
  auto add = [&](CellIndex row, CellIndex col, const DenseMatrix& b) {
    const DenseMatrix c = loct * (b * loc);
    const auto dr = p.cell_dofs(row);
    const auto dc = p.cell_dofs(col);
    for (std::size_t i = 0; i < nl; ++i)
      for (std::size_t j = 0; j < nl; ++j) t.push_back({dr[i], dc[j], c(i, j)});
  };
  for (CellIndex c = 0; c < grid.num_cells(); ++c) {
    add(c, c, a.diagonal(c));
    for (int lf = 0; lf < 6; ++lf)
      if (a.has_neighbor(c, lf)) add(c, a.neighbor_cell(c, lf), a.neighbor(c, lf));
  }
  const std::size_t nc = p.num_coarse();
  const CsrMatrix full = CsrMatrix::from_triplets(nc, nc, std::move(t));
  const auto& dims = p.dims();
  auto coords = [&](std::size_t i) {
    return std::array<long, 3>{static_cast<long>(i % dims[0]), static_cast<long>((i / dims[0]) % dims[1]),
                               static_cast<long>(i / (static_cast<std::size_t>(dims[0]) * dims[1]))};
  };
  const double scale = full.max_abs();
  std::vector<CsrMatrix::Triplet> kept;
  for (std::size_t i = 0; i < nc; ++i) {
    const auto ci = coords(i);
    for (std::size_t k = full.row_ptr()[i]; k < full.row_ptr()[i + 1]; ++k) {
      const std::size_t j = full.col_idx()[k];
      const auto cj = coords(j);
      long manhattan = 0, chebyshev = 0;
      for (int d = 0; d < 3; ++d) {
        manhattan += std::abs(ci[d] - cj[d]);
        chebyshev = std::max(chebyshev, std::abs(ci[d] - cj[d]));
      }
      const bool in_stencil = p.kind() == LowSpaceKind::p0 ? manhattan <= 1 : chebyshev <= 1;
      const double v = full.values()[k];
      if (in_stencil) {
        kept.push_back({i, j, v});
      } else if (std::abs(v) > 1e-10 * scale) {
        throw ConsistencyError("galerkin_product: entry (" + std::to_string(i) + ", " + std::to_string(j) +
                               ") outside the low-order stencil");
      }
    }
  }
  return CsrMatrix::from_triplets(nc, nc, std::move(kept));
}

}  // namespace mfdg
