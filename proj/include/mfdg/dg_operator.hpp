#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <vector>

#include "mfdg/basis.hpp"
#include "mfdg/coefficients.hpp"
#include "mfdg/mesh.hpp"
#include "mfdg/sumfact.hpp"

namespace mfdg {

/// Which side of an interior face: minus is the inside (lower index) cell.
enum class Side { minus = 0, plus = 1 };

struct OperatorOptions {
  double alpha = 1.25;
  int threads = 1;
  /// Multiplies every penalty in the matrix-free kernels. Only for
  /// mutation tests of the verification suite; leave at 1.
  double penalty_perturbation = 1.0;
};

/// Pointwise bilinear coupling between the quantities (u, du/dx^_1,
/// du/dx^_2, du/dx^_3) of a trial function (column) and those of a test
/// function (row), derivatives taken in reference coordinates and the
/// quadrature weight included.
struct PointCoupling {
  std::array<std::array<double, 4>, 4> c{};
};

/// Matrix-free weighted symmetric interior penalty operator with upwinded
/// advection on a structured grid.
///
/// Every term follows the same three stages: evaluate the four trial
/// quantities at quadrature points by sum factorization, combine them
/// pointwise through a PointCoupling, and accumulate against the four
/// test quantities with the transposed kernels. The grid is referenced and
/// must outlive the operator; the basis is copied.
class DGOperator {
 public:
  DGOperator(const StructuredGrid& grid, const TensorBasis& basis, const Coefficients& coeffs,
             OperatorOptions options = {})
      : grid_(grid), basis_(basis), field_(grid, coeffs), options_(options) {
    build_matrices();
    couplings_.reserve(grid.faces().size());
    for (const auto& f : grid.faces()) couplings_.push_back(face_coupling(grid, f, field_, basis.degree, options.alpha));
    if (field_.cell_centered()) build_face_constants();
  }

  const StructuredGrid& grid() const { return grid_; }
  const TensorBasis& basis() const { return basis_; }
  const CoefficientField& field() const { return field_; }
  const OperatorOptions& options() const { return options_; }
  std::size_t num_cells() const { return grid_.num_cells(); }
  std::size_t block_size() const { return basis_.dofs_per_cell(); }
  std::size_t size() const { return num_cells() * block_size(); }
  bool symmetric() const { return !field_.has_advection(); }

  const FaceCoupling& coupling(std::size_t face_id) const { return couplings_[face_id]; }

  std::span<const double> block(std::span<const double> u, CellIndex c) const {
    return u.subspan(c * block_size(), block_size());
  }
  std::span<double> block(std::span<double> u, CellIndex c) const { return u.subspan(c * block_size(), block_size()); }

  /// v = A u.
  void apply(std::span<const double> u, std::span<double> v) const {
    check_size(u.size(), size(), "DGOperator::apply");
    check_size(v.size(), size(), "DGOperator::apply");
    std::fill(v.begin(), v.end(), 0.0);
    parallel_for(num_cells(), options_.threads, [&](std::size_t b, std::size_t e) {
      for (CellIndex c = b; c < e; ++c) apply_volume(c, block(u, c), block(v, c));
    });
    const auto& faces = grid_.faces();
    for (std::size_t f = 0; f < grid_.num_interior_faces(); ++f) {
      const Face& face = faces[f];
      interior_face_kernel(f, block(u, face.inside), block(u, face.outside), block(v, face.inside),
                           block(v, face.outside));
    }
    for (std::size_t f = grid_.num_interior_faces(); f < faces.size(); ++f) {
      apply_boundary(f, block(u, faces[f].inside), block(v, faces[f].inside));
    }
  }

  std::vector<double> apply(std::span<const double> u) const {
    std::vector<double> v(size());
    apply(u, v);
    return v;
  }

  /// v_T += A^v_{T,T} u_T.
  void apply_volume(CellIndex cell, std::span<const double> u_t, std::span<double> v_t,
                    FlopCounter* flops = nullptr) const {
    const std::size_t nq = basis_.points_per_cell();
    thread_local std::vector<PointCoupling> coupling;
    thread_local std::array<std::vector<double>, 4> trial, test;
    const PointCoupling* base = nullptr;
    if (!cell_base_.empty()) {
      base = &cell_base_[cell];
    } else {
      coupling.resize(nq);
      volume_couplings(cell, coupling);
    }
    const auto active = face_activity(base, coupling);
    for (int b = 0; b < 4; ++b) {
      trial[b].resize(nq);
      test[b].resize(nq);
    }
    evaluate_volume(u_t, active.trial, trial, flops);
    if (base) {
      constant_pointwise(*base, cell_weights_, trial, test, active, false);
      if (flops) flops->multiply_adds += 16 * nq;
    } else {
      pointwise(coupling, trial, test, active, false, flops);
    }
    accumulate_volume(test, active.test, v_t, flops);
  }

  /// v_target += A^if_{F; target, source} u_source on an interior face.
  void apply_face(std::size_t face_id, Side source, Side target, std::span<const double> u_source,
                  std::span<double> v_target) const {
    const Face& face = face_at(face_id);
    if (face.boundary) throw std::invalid_argument("apply_face: boundary face passed");
    const std::size_t nq = face_points(face);
    thread_local std::vector<PointCoupling> pcs;
    thread_local std::array<std::vector<double>, 4> trial, test;
    const int s = static_cast<int>(source);
    const int t = static_cast<int>(target);
    const PointCoupling* base = face_term(face_id, t, s, pcs);
    const auto act = face_activity(base, pcs);
    for (int b = 0; b < 4; ++b) {
      trial[b].resize(nq);
      test[b].resize(nq);
    }
    evaluate_trace(face, s, u_source, act.trial, trial);
    face_pointwise(base, pcs, trial, test, act, false);
    accumulate_trace(face, t, test, act.test, v_target);
  }

  /// v_T += A^b_{F;T} u_T on a boundary face (nothing on Neumann faces).
  void apply_boundary(std::size_t face_id, std::span<const double> u_t, std::span<double> v_t) const {
    const Face& face = face_at(face_id);
    if (!face.boundary) throw std::invalid_argument("apply_boundary: interior face passed");
    if (grid_.boundary_type(face.domain_face()) == BoundaryType::neumann) return;
    const std::size_t nq = face_points(face);
    thread_local std::vector<PointCoupling> pcs;
    thread_local std::array<std::vector<double>, 4> trial, test;
    const PointCoupling* base = face_term(face_id, 0, 0, pcs);
    const auto act = face_activity(base, pcs);
    for (int b = 0; b < 4; ++b) {
      trial[b].resize(nq);
      test[b].resize(nq);
    }
    evaluate_trace(face, 0, u_t, act.trial, trial);
    face_pointwise(base, pcs, trial, test, act, false);
    accumulate_trace(face, 0, test, act.test, v_t);
  }

  /// v_T = D_T u_T, the diagonal block of A.
  void apply_block_diagonal(CellIndex cell, std::span<const double> u_t, std::span<double> v_t) const {
    std::fill(v_t.begin(), v_t.end(), 0.0);
    apply_volume(cell, u_t, v_t);
    for (int lf = 0; lf < 6; ++lf) {
      const std::size_t f = grid_.cell_faces(cell)[lf];
      const Face& face = face_at(f);
      if (face.boundary) {
        apply_boundary(f, u_t, v_t);
      } else {
        const Side side = face.inside == cell ? Side::minus : Side::plus;
        apply_face(f, side, side, u_t, v_t);
      }
    }
  }

  /// v_T = sum over face neighbours T' of A_{T,T'} u_{T'} (u is global).
  void apply_offdiagonal_row(CellIndex cell, std::span<const double> u, std::span<double> v_t) const {
    std::fill(v_t.begin(), v_t.end(), 0.0);
    for (int lf = 0; lf < 6; ++lf) {
      const std::size_t f = grid_.cell_faces(cell)[lf];
      const Face& face = face_at(f);
      if (face.boundary) continue;
      const bool inside = face.inside == cell;
      const CellIndex other = inside ? face.outside : face.inside;
      apply_face(f, inside ? Side::plus : Side::minus, inside ? Side::minus : Side::plus, block(u, other), v_t);
    }
  }

  /// Dense D_T; column j is D_T e_j.
  DenseMatrix assemble_block(CellIndex cell) const {
    const std::size_t n = block_size();
    DenseMatrix d(n, n);
    std::vector<double> e(n, 0.0), col(n);
    for (std::size_t j = 0; j < n; ++j) {
      e[j] = 1.0;
      apply_block_diagonal(cell, e, col);
      for (std::size_t i = 0; i < n; ++i) d(i, j) = col[i];
      e[j] = 0.0;
    }
    return d;
  }

  /// Main diagonals of all blocks D_T, computed without assembling the
  /// blocks: the diagonal of a sum-factorized bilinear form is the same
  /// contraction with elementwise products of trial and test matrices.
  std::vector<double> block_diagonal_entries() const {
    std::vector<double> diag(size(), 0.0);
    parallel_for(num_cells(), options_.threads, [&](std::size_t b, std::size_t e) {
      for (CellIndex c = b; c < e; ++c) cell_diagonal(c, block(std::span<double>(diag), c));
    });
    return diag;
  }

  /// f_i = l_h(psi_i).
  std::vector<double> assemble_rhs() const {
    const auto& coeffs = field_.coefficients();
    std::vector<double> rhs(size(), 0.0);
    const std::size_t nq = basis_.points_per_cell();
    std::vector<double> vals(nq);
    for (CellIndex c = 0; c < num_cells(); ++c) {
      const Point o = grid_.cell_origin(c);
      const double vol = grid_.cell_volume();
      std::size_t q = 0;
      for (std::size_t k = 0; k < basis_.m; ++k)
        for (std::size_t j = 0; j < basis_.m; ++j)
          for (std::size_t i = 0; i < basis_.m; ++i, ++q) {
            const Point x = volume_point(o, i, j, k);
            vals[q] = coeffs.source(x) * basis_.rule.weights[i] * basis_.rule.weights[j] * basis_.rule.weights[k] * vol;
          }
      sumfact_accumulate(vals, basis_.values, basis_.values, basis_.values, block(std::span<double>(rhs), c));
    }
    const auto& faces = grid_.faces();
    for (std::size_t f = grid_.num_interior_faces(); f < faces.size(); ++f) {
      const Face& face = faces[f];
      const std::size_t npts = face_points(face);
      std::vector<FacePoint> pts;
      face_points(f, pts);
      std::array<std::vector<double>, 4> test;
      for (auto& t : test) t.assign(npts, 0.0);
      const bool dirichlet = grid_.boundary_type(face.domain_face()) == BoundaryType::dirichlet;
      const double gamma = couplings_[f].penalty;
      const auto& h = grid_.spacing();
      for (std::size_t q = 0; q < npts; ++q) {
        const auto& p = pts[q];
        if (!dirichlet) {
          test[0][q] = -p.weight * coeffs.neumann(p.x);
          continue;
        }
        const double g = coeffs.dirichlet(p.x);
        test[0][q] = -p.weight * ((p.b_nu < 0.0 ? p.b_nu : 0.0) * g - gamma * g);
        for (int k = 0; k < 3; ++k) test[1 + k][q] = -p.weight * g * p.k_nu[0][k] / h[k];
      }
      accumulate_trace(face, 0, test, {true, true, true, true}, block(std::span<double>(rhs), face.inside));
    }
    return rhs;
  }

 private:
  struct FacePoint {
    Point x{};
    double weight = 0.0;
    double b_nu = 0.0;
    std::array<Vec3, 2> k_nu{};  ///< K nu on the minus and plus side
  };

  struct Activity {
    std::array<bool, 4> trial{};
    std::array<bool, 4> test{};
  };

  const Face& face_at(std::size_t f) const {
    if (f >= grid_.faces().size()) throw std::out_of_range("face id out of range");
    return grid_.faces()[f];
  }

  void build_matrices() {
    const DenseMatrix* a = &basis_.values;
    const DenseMatrix* g = &basis_.derivatives;
    for (int q = 0; q < 4; ++q)
      for (int k = 0; k < 3; ++k) vol_mats_[q][k] = (q == k + 1) ? g : a;
    for (int axis = 0; axis < 3; ++axis)
      for (int r = 0; r < 2; ++r)
        for (int q = 0; q < 4; ++q)
          for (int k = 0; k < 3; ++k) {
            if (k == axis) {
              face_mats_[axis][r][q][k] = (q == k + 1) ? &basis_.face_derivatives[r] : &basis_.face_values[r];
            } else {
              face_mats_[axis][r][q][k] = (q == k + 1) ? g : a;
            }
          }
    auto hadamard = [](const DenseMatrix& x, const DenseMatrix& y) {
      DenseMatrix h(x.rows(), x.cols());
      for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) h(i, j) = x(i, j) * y(i, j);
      return h;
    };
    for (int ta = 0; ta < 4; ++ta)
      for (int tb = 0; tb < 4; ++tb)
        for (int k = 0; k < 3; ++k) vol_had_[ta][tb][k] = hadamard(*vol_mats_[ta][k], *vol_mats_[tb][k]);
    for (int axis = 0; axis < 3; ++axis)
      for (int r = 0; r < 2; ++r)
        for (int ta = 0; ta < 4; ++ta)
          for (int tb = 0; tb < 4; ++tb)
            for (int k = 0; k < 3; ++k)
              face_had_[axis][r][ta][tb][k] = hadamard(*face_mats_[axis][r][ta][k], *face_mats_[axis][r][tb][k]);
  }

  Point volume_point(const Point& origin, std::size_t i, std::size_t j, std::size_t k) const {
    const auto& h = grid_.spacing();
    const auto& xi = basis_.rule.points;
    return {origin[0] + xi[i] * h[0], origin[1] + xi[j] * h[1], origin[2] + xi[k] * h[2]};
  }

  /// C[test][trial] at each volume point: (K grad u - b u) . grad v + c u v.
  void volume_couplings(CellIndex cell, std::vector<PointCoupling>& out) const {
    const auto& h = grid_.spacing();
    const auto& w = basis_.rule.weights;
    const double vol = grid_.cell_volume();
    const Point o = grid_.cell_origin(cell);
    const std::size_t m = basis_.m;
    auto fill = [&](PointCoupling& pc, const Tensor3& kk, const Vec3& b, double c, double wt) {
      pc.c[0][0] = wt * c;
      for (int k = 0; k < 3; ++k) {
        pc.c[1 + k][0] = -wt * b[k] / h[k];
        pc.c[0][1 + k] = 0.0;
        for (int l = 0; l < 3; ++l) pc.c[1 + k][1 + l] = wt * kk(k, l) / (h[k] * h[l]);
      }
    };
    std::size_t q = 0;
    if (field_.cell_centered()) {
      const Point xc = grid_.cell_geometry(cell).center;
      const Tensor3 kk = field_.diffusion(xc, cell);
      const Vec3 b = field_.advection(xc, cell);
      const double c = field_.reaction(xc, cell);
      for (std::size_t k = 0; k < m; ++k)
        for (std::size_t j = 0; j < m; ++j)
          for (std::size_t i = 0; i < m; ++i, ++q) fill(out[q], kk, b, c, w[i] * w[j] * w[k] * vol);
      return;
    }
    for (std::size_t k = 0; k < m; ++k)
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < m; ++i, ++q) {
          const Point x = volume_point(o, i, j, k);
          fill(out[q], field_.diffusion(x, cell), field_.advection(x, cell), field_.reaction(x, cell),
               w[i] * w[j] * w[k] * vol);
        }
  }

  static Activity active_quantities(const std::vector<PointCoupling>& cs) {
    Activity act;
    for (const auto& pc : cs)
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          if (pc.c[a][b] != 0.0) {
            act.test[a] = true;
            act.trial[b] = true;
          }
    return act;
  }

  static void pointwise(const std::vector<PointCoupling>& cs, const std::array<std::vector<double>, 4>& trial,
                        std::array<std::vector<double>, 4>& test, const Activity& act, bool accumulate,
                        FlopCounter* flops) {
    int ta[4], tb[4], na = 0, nb = 0;
    for (int a = 0; a < 4; ++a)
      if (act.test[a]) ta[na++] = a;
    for (int b = 0; b < 4; ++b)
      if (act.trial[b]) tb[nb++] = b;
    for (std::size_t q = 0; q < cs.size(); ++q)
      for (int ia = 0; ia < na; ++ia) {
        const int a = ta[ia];
        double s = 0.0;
        for (int ib = 0; ib < nb; ++ib) s += cs[q].c[a][tb[ib]] * trial[tb[ib]][q];
        test[a][q] = accumulate ? test[a][q] + s : s;
      }
    if (flops) flops->multiply_adds += static_cast<std::uint64_t>(na) * nb * cs.size();
  }

  /// Sum-factorized evaluation of value and reference gradient; partial
  /// contractions are shared between the four quantities.
  void evaluate_volume(std::span<const double> u, const std::array<bool, 4>& act,
                       std::array<std::vector<double>, 4>& out, FlopCounter* flops) const {
    const std::size_t n = basis_.n, m = basis_.m;
    const DenseMatrix& A = basis_.values;
    const DenseMatrix& G = basis_.derivatives;
    thread_local std::vector<double> xa, xg, aa, ga, ag;
    std::uint64_t ops = 0;
    const bool need_xa = act[0] || act[2] || act[3];
    xa.resize(m * n * n);
    xg.resize(m * n * n);
    aa.resize(m * m * n);
    ga.resize(m * m * n);
    ag.resize(m * m * n);
    if (need_xa) ops += contract_direction(u.data(), {n, n, n}, A, 0, xa.data(), false, false);
    if (act[1]) ops += contract_direction(u.data(), {n, n, n}, G, 0, xg.data(), false, false);
    if (act[0] || act[3]) ops += contract_direction(xa.data(), {m, n, n}, A, 1, aa.data(), false, false);
    if (act[2]) ops += contract_direction(xa.data(), {m, n, n}, G, 1, ga.data(), false, false);
    if (act[1]) ops += contract_direction(xg.data(), {m, n, n}, A, 1, ag.data(), false, false);
    if (act[0]) ops += contract_direction(aa.data(), {m, m, n}, A, 2, out[0].data(), false, false);
    if (act[1]) ops += contract_direction(ag.data(), {m, m, n}, A, 2, out[1].data(), false, false);
    if (act[2]) ops += contract_direction(ga.data(), {m, m, n}, A, 2, out[2].data(), false, false);
    if (act[3]) ops += contract_direction(aa.data(), {m, m, n}, G, 2, out[3].data(), false, false);
    if (flops) flops->multiply_adds += ops;
  }

  /// Transpose of evaluate_volume, added into v.
  void accumulate_volume(const std::array<std::vector<double>, 4>& in, const std::array<bool, 4>& act,
                         std::span<double> v, FlopCounter* flops) const {
    const std::size_t n = basis_.n, m = basis_.m;
    const DenseMatrix& A = basis_.values;
    const DenseMatrix& G = basis_.derivatives;
    thread_local std::vector<double> aa, ga, ag, xa, xg;
    std::uint64_t ops = 0;
    aa.resize(m * m * n);
    ga.resize(m * m * n);
    ag.resize(m * m * n);
    xa.resize(m * n * n);
    xg.resize(m * n * n);
    const bool has_aa = act[0] || act[3];
    if (act[0]) ops += contract_direction(in[0].data(), {m, m, m}, A, 2, aa.data(), true, false);
    if (act[3]) ops += contract_direction(in[3].data(), {m, m, m}, G, 2, aa.data(), true, act[0]);
    if (act[2]) ops += contract_direction(in[2].data(), {m, m, m}, A, 2, ga.data(), true, false);
    if (act[1]) ops += contract_direction(in[1].data(), {m, m, m}, A, 2, ag.data(), true, false);
    const bool has_xa = has_aa || act[2];
    if (has_aa) ops += contract_direction(aa.data(), {m, m, n}, A, 1, xa.data(), true, false);
    if (act[2]) ops += contract_direction(ga.data(), {m, m, n}, G, 1, xa.data(), true, has_aa);
    if (act[1]) ops += contract_direction(ag.data(), {m, m, n}, A, 1, xg.data(), true, false);
    if (has_xa) ops += contract_direction(xa.data(), {m, n, n}, A, 0, v.data(), true, true);
    if (act[1]) ops += contract_direction(xg.data(), {m, n, n}, G, 0, v.data(), true, true);
    if (flops) flops->multiply_adds += ops;
  }

  /// Couplings of a face for (target t, source s); boundary faces use
  /// t = s = 0. Returns the per-unit-weight constant coupling when the
  /// coefficients are cell-centred, otherwise fills `buf` point by point.
  const PointCoupling* face_term(std::size_t face_id, int t, int s, std::vector<PointCoupling>& buf) const {
    if (!face_base_.empty()) return &face_base_[face_id][2 * t + s];
    const Face& face = face_at(face_id);
    const std::size_t nq = basis_.m * basis_.m;
    thread_local std::vector<FacePoint> pts;
    face_points(face_id, pts);
    buf.resize(nq);
    for (std::size_t q = 0; q < nq; ++q)
      buf[q] = face.boundary ? boundary_coupling(face_id, pts[q]) : interior_coupling(face_id, pts[q], t, s);
    return nullptr;
  }

  Activity face_activity(const PointCoupling* base, const std::vector<PointCoupling>& buf) const {
    if (!base) return active_quantities(buf);
    Activity act;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        if (base->c[a][b] != 0.0) act.test[a] = act.trial[b] = true;
    return act;
  }

  void face_pointwise(const PointCoupling* base, const std::vector<PointCoupling>& buf,
                      const std::array<std::vector<double>, 4>& trial, std::array<std::vector<double>, 4>& test,
                      const Activity& act, bool accumulate) const {
    if (!base) {
      pointwise(buf, trial, test, act, accumulate, nullptr);
      return;
    }
    constant_pointwise(*base, face_weights_, trial, test, act, accumulate);
  }

  /// Pointwise step for a coupling that is constant up to the quadrature
  /// weight.
  static void constant_pointwise(const PointCoupling& base, const std::vector<double>& weights,
                                 const std::array<std::vector<double>, 4>& trial,
                                 std::array<std::vector<double>, 4>& test, const Activity& act, bool accumulate) {
    int ta[4], tb[4], na = 0, nb = 0;
    for (int a = 0; a < 4; ++a)
      if (act.test[a]) ta[na++] = a;
    for (int b = 0; b < 4; ++b)
      if (act.trial[b]) tb[nb++] = b;
    const std::size_t nq = weights.size();
    for (int ia = 0; ia < na; ++ia) {
      const int a = ta[ia];
      double* out = test[a].data();
      for (std::size_t q = 0; q < nq; ++q) {
        double s = 0.0;
        for (int ib = 0; ib < nb; ++ib) s += base.c[a][tb[ib]] * trial[tb[ib]][q];
        s *= weights[q];
        out[q] = accumulate ? out[q] + s : s;
      }
    }
  }

  /// With cell-centred coefficients the couplings are constant over a face
  /// up to the tensor quadrature weight.
  void build_face_constants() {
    const auto& faces = grid_.faces();
    const std::size_t m = basis_.m;
    face_weights_.resize(m * m);
    for (std::size_t j2 = 0; j2 < m; ++j2)
      for (std::size_t j1 = 0; j1 < m; ++j1)
        face_weights_[j1 + m * j2] = basis_.rule.weights[j1] * basis_.rule.weights[j2];
    face_base_.resize(faces.size());
    cell_weights_.resize(m * m * m);
    for (std::size_t k = 0, q = 0; k < m; ++k)
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < m; ++i, ++q)
          cell_weights_[q] = basis_.rule.weights[i] * basis_.rule.weights[j] * basis_.rule.weights[k];
    cell_base_.resize(num_cells());
    {
      std::vector<PointCoupling> cs(m * m * m);
      for (CellIndex c = 0; c < num_cells(); ++c) {
        volume_couplings(c, cs);
        // The first point carries weight w0^3; undo it to get the unit form.
        const double w0 = cell_weights_[0];
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) cell_base_[c].c[a][b] = cs[0].c[a][b] / w0;
      }
    }
    std::vector<FacePoint> pts;
    for (std::size_t f = 0; f < faces.size(); ++f) {
      face_points(f, pts);
      FacePoint p = pts[0];
      p.weight = grid_.face_area(faces[f].axis);
      for (int t = 0; t < 2; ++t)
        for (int s = 0; s < 2; ++s) {
          if (faces[f].boundary) {
            face_base_[f][2 * t + s] = boundary_coupling(f, p);
          } else {
            face_base_[f][2 * t + s] = interior_coupling(f, p, t, s);
          }
        }
    }
  }

  std::size_t face_points(const Face&) const { return basis_.m * basis_.m; }

  /// Reference coordinate of the face within the cell on side s.
  static int side_ref(const Face& face, int s) { return s == 0 ? face.inside_ref() : face.outside_ref(); }

  void face_points(std::size_t face_id, std::vector<FacePoint>& pts) const {
    const Face& face = face_at(face_id);
    const auto& h = grid_.spacing();
    const auto& xi = basis_.rule.points;
    const auto& w = basis_.rule.weights;
    const std::size_t m = basis_.m;
    const int a = face.axis;
    const int t1 = a == 0 ? 1 : 0;
    const int t2 = a == 2 ? 1 : 2;
    const Point o = grid_.cell_origin(face.inside);
    const double area = grid_.face_area(a);
    const double sgn = face.normal_sign;
    pts.resize(m * m);

    Tensor3 kc[2];
    Vec3 bc{};
    const bool cc = field_.cell_centered();
    if (cc) {
      const Point xm = grid_.cell_geometry(face.inside).center;
      kc[0] = field_.diffusion(xm, face.inside);
      bc = field_.advection(xm, face.inside);
      if (!face.boundary) {
        const Point xp = grid_.cell_geometry(face.outside).center;
        kc[1] = field_.diffusion(xp, face.outside);
        const Vec3 bp = field_.advection(xp, face.outside);
        for (int k = 0; k < 3; ++k) bc[k] = 0.5 * (bc[k] + bp[k]);
      }
    }
    for (std::size_t j2 = 0; j2 < m; ++j2)
      for (std::size_t j1 = 0; j1 < m; ++j1) {
        FacePoint& p = pts[j1 + m * j2];
        p.x = o;
        p.x[a] += face.inside_ref() * h[a];
        p.x[t1] += xi[j1] * h[t1];
        p.x[t2] += xi[j2] * h[t2];
        p.weight = w[j1] * w[j2] * area;
        Tensor3 k0 = cc ? kc[0] : field_.diffusion(p.x, face.inside);
        const Vec3 b = cc ? bc : field_.advection(p.x, face.inside);
        p.b_nu = sgn * b[a];
        for (int k = 0; k < 3; ++k) p.k_nu[0][k] = sgn * k0(k, a);
        if (!face.boundary) {
          const Tensor3 k1 = cc ? kc[1] : field_.diffusion(p.x, face.outside);
          for (int k = 0; k < 3; ++k) p.k_nu[1][k] = sgn * k1(k, a);
        }
      }
  }

  PointCoupling interior_coupling(std::size_t face_id, const FacePoint& p, int t, int s) const {
    const FaceCoupling& fc = couplings_[face_id];
    const auto& h = grid_.spacing();
    const double gamma = fc.penalty * options_.penalty_perturbation;
    const double sign_t = t == 0 ? 1.0 : -1.0;
    const double sign_s = s == 0 ? 1.0 : -1.0;
    const double omega_s = s == 0 ? fc.omega_minus : fc.omega_plus;
    const double omega_t = t == 0 ? fc.omega_minus : fc.omega_plus;
    const bool upwind = s == 0 ? p.b_nu >= 0.0 : p.b_nu < 0.0;
    PointCoupling pc;
    pc.c[0][0] = sign_t * p.weight * ((upwind ? p.b_nu : 0.0) + gamma * sign_s);
    for (int k = 0; k < 3; ++k) {
      pc.c[0][1 + k] = -sign_t * p.weight * omega_s * p.k_nu[s][k] / h[k];
      pc.c[1 + k][0] = -p.weight * omega_t * sign_s * p.k_nu[t][k] / h[k];
    }
    return pc;
  }

  PointCoupling boundary_coupling(std::size_t face_id, const FacePoint& p) const {
    const auto& h = grid_.spacing();
    const double gamma = couplings_[face_id].penalty * options_.penalty_perturbation;
    PointCoupling pc;
    pc.c[0][0] = p.weight * ((p.b_nu >= 0.0 ? p.b_nu : 0.0) + gamma);
    for (int k = 0; k < 3; ++k) {
      pc.c[0][1 + k] = -p.weight * p.k_nu[0][k] / h[k];
      pc.c[1 + k][0] = -p.weight * p.k_nu[0][k] / h[k];
    }
    return pc;
  }

  /// Trace of the four quantities on a face: the normal direction is
  /// contracted first, then the two tangential ones.
  void evaluate_trace(const Face& face, int s, std::span<const double> u, const std::array<bool, 4>& act,
                      std::array<std::vector<double>, 4>& out) const {
    const std::size_t n = basis_.n, m = basis_.m;
    const int a = face.axis;
    const int t1 = a == 0 ? 1 : 0;
    const int t2 = a == 2 ? 1 : 2;
    const int r = side_ref(face, s);
    const DenseMatrix& A = basis_.values;
    const DenseMatrix& G = basis_.derivatives;
    thread_local std::vector<double> sv, sd, xa, xg;
    sv.resize(n * n);
    sd.resize(n * n);
    xa.resize(m * n);
    xg.resize(m * n);
    const std::array<std::size_t, 3> cube{n, n, n};
    const std::array<std::size_t, 3> plane{n, n, 1};
    const std::array<std::size_t, 3> half{m, n, 1};
    const bool need_sv = act[0] || act[1 + t1] || act[1 + t2];
    if (need_sv) contract_direction(u.data(), cube, basis_.face_values[r], a, sv.data(), false, false);
    if (act[1 + a]) {
      contract_direction(u.data(), cube, basis_.face_derivatives[r], a, sd.data(), false, false);
      contract_direction(sd.data(), plane, A, 0, xg.data(), false, false);
      contract_direction(xg.data(), half, A, 1, out[1 + a].data(), false, false);
    }
    if (act[0] || act[1 + t2]) {
      contract_direction(sv.data(), plane, A, 0, xa.data(), false, false);
      if (act[0]) contract_direction(xa.data(), half, A, 1, out[0].data(), false, false);
      if (act[1 + t2]) contract_direction(xa.data(), half, G, 1, out[1 + t2].data(), false, false);
    }
    if (act[1 + t1]) {
      contract_direction(sv.data(), plane, G, 0, xg.data(), false, false);
      contract_direction(xg.data(), half, A, 1, out[1 + t1].data(), false, false);
    }
  }

  /// Transpose of evaluate_trace, added into v.
  void accumulate_trace(const Face& face, int t, const std::array<std::vector<double>, 4>& in,
                        const std::array<bool, 4>& act, std::span<double> v) const {
    const std::size_t n = basis_.n, m = basis_.m;
    const int a = face.axis;
    const int t1 = a == 0 ? 1 : 0;
    const int t2 = a == 2 ? 1 : 2;
    const int r = side_ref(face, t);
    const DenseMatrix& A = basis_.values;
    const DenseMatrix& G = basis_.derivatives;
    thread_local std::vector<double> sv, sd, xa, xg;
    sv.resize(n * n);
    sd.resize(n * n);
    xa.resize(m * n);
    xg.resize(m * n);
    const std::array<std::size_t, 3> pts{m, m, 1};
    const std::array<std::size_t, 3> half{m, n, 1};
    if (act[1 + a]) {
      contract_direction(in[1 + a].data(), pts, A, 1, xg.data(), true, false);
      contract_direction(xg.data(), half, A, 0, sd.data(), true, false);
      contract_direction(sd.data(), normal_shape(a), basis_.face_derivatives[r], a, v.data(), true, true);
    }
    const bool has_xa = act[0] || act[1 + t2];
    if (act[0]) contract_direction(in[0].data(), pts, A, 1, xa.data(), true, false);
    if (act[1 + t2]) contract_direction(in[1 + t2].data(), pts, G, 1, xa.data(), true, act[0]);
    if (has_xa) contract_direction(xa.data(), half, A, 0, sv.data(), true, false);
    if (act[1 + t1]) {
      contract_direction(in[1 + t1].data(), pts, A, 1, xg.data(), true, false);
      contract_direction(xg.data(), half, G, 0, sv.data(), true, has_xa);
    }
    if (has_xa || act[1 + t1]) {
      contract_direction(sv.data(), normal_shape(a), basis_.face_values[r], a, v.data(), true, true);
    }
  }

  /// Shape of a face slice seen as a cell tensor with one layer along axis.
  std::array<std::size_t, 3> normal_shape(int axis) const {
    std::array<std::size_t, 3> sh{basis_.n, basis_.n, basis_.n};
    sh[axis] = 1;
    return sh;
  }

  /// Both sides of an interior face at once: all four (target, source)
  /// combinations.
  void interior_face_kernel(std::size_t face_id, std::span<const double> um, std::span<const double> up,
                            std::span<double> vm, std::span<double> vp) const {
    const Face& face = face_at(face_id);
    const std::size_t nq = face_points(face);
    thread_local std::array<std::vector<PointCoupling>, 4> pcs;
    thread_local std::array<std::array<std::vector<double>, 4>, 2> trial, test;
    std::array<Activity, 4> act;
    std::array<const PointCoupling*, 4> base;
    std::array<std::array<bool, 4>, 2> trial_act{}, test_act{};
    for (int t = 0; t < 2; ++t)
      for (int s = 0; s < 2; ++s) {
        base[2 * t + s] = face_term(face_id, t, s, pcs[2 * t + s]);
        act[2 * t + s] = face_activity(base[2 * t + s], pcs[2 * t + s]);
        for (int q = 0; q < 4; ++q) {
          trial_act[s][q] = trial_act[s][q] || act[2 * t + s].trial[q];
          test_act[t][q] = test_act[t][q] || act[2 * t + s].test[q];
        }
      }
    for (int side = 0; side < 2; ++side)
      for (int q = 0; q < 4; ++q) {
        trial[side][q].resize(nq);
        test[side][q].assign(nq, 0.0);
      }
    evaluate_trace(face, 0, um, trial_act[0], trial[0]);
    evaluate_trace(face, 1, up, trial_act[1], trial[1]);
    for (int t = 0; t < 2; ++t)
      for (int s = 0; s < 2; ++s) face_pointwise(base[2 * t + s], pcs[2 * t + s], trial[s], test[t], act[2 * t + s], true);
    accumulate_trace(face, 0, test[0], test_act[0], vm);
    accumulate_trace(face, 1, test[1], test_act[1], vp);
  }

  void cell_diagonal(CellIndex cell, std::span<double> diag) const {
    const std::size_t nq = basis_.points_per_cell();
    std::vector<PointCoupling> cs(nq);
    volume_couplings(cell, cs);
    std::vector<double> vals(nq);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        bool any = false;
        for (std::size_t q = 0; q < nq; ++q) {
          vals[q] = cs[q].c[a][b];
          any = any || vals[q] != 0.0;
        }
        if (any) sumfact_accumulate(vals, vol_had_[a][b][0], vol_had_[a][b][1], vol_had_[a][b][2], diag);
      }
    std::vector<FacePoint> pts;
    for (int lf = 0; lf < 6; ++lf) {
      const std::size_t f = grid_.cell_faces(cell)[lf];
      const Face& face = face_at(f);
      if (face.boundary && grid_.boundary_type(face.domain_face()) == BoundaryType::neumann) continue;
      const int s = face.boundary || face.inside == cell ? 0 : 1;
      const std::size_t npts = face_points(face);
      face_points(f, pts);
      std::vector<PointCoupling> fcs(npts);
      for (std::size_t q = 0; q < npts; ++q)
        fcs[q] = face.boundary ? boundary_coupling(f, pts[q]) : interior_coupling(f, pts[q], s, s);
      const auto& had = face_had_[face.axis][side_ref(face, s)];
      std::vector<double> fv(npts);
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          bool any = false;
          for (std::size_t q = 0; q < npts; ++q) {
            fv[q] = fcs[q].c[a][b];
            any = any || fv[q] != 0.0;
          }
          if (any) sumfact_accumulate(fv, had[a][b][0], had[a][b][1], had[a][b][2], diag);
        }
    }
  }

  const StructuredGrid& grid_;
  TensorBasis basis_;
  CoefficientField field_;
  OperatorOptions options_;
  std::vector<FaceCoupling> couplings_;
  std::vector<std::array<PointCoupling, 4>> face_base_;
  std::vector<double> face_weights_;
  std::vector<PointCoupling> cell_base_;
  std::vector<double> cell_weights_;
  std::array<std::array<const DenseMatrix*, 3>, 4> vol_mats_{};
  std::array<std::array<std::array<std::array<const DenseMatrix*, 3>, 4>, 2>, 3> face_mats_{};
  std::array<std::array<std::array<DenseMatrix, 3>, 4>, 4> vol_had_;
  std::array<std::array<std::array<std::array<std::array<DenseMatrix, 3>, 4>, 4>, 2>, 3> face_had_;
};

}  // namespace mfdg
