#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "mfdg/mesh.hpp"

namespace mfdg {

enum class EvaluationMode {
  full,          ///< coefficients evaluated at every quadrature point
  cell_centered  ///< K, b, c frozen at the midpoint of each cell
};

/// Fields of  div(b u - K grad u) + c u = f  with u = g on Dirichlet faces
/// and (b u - K grad u) . nu = j on Neumann faces.
///
/// K, b and c receive the cell a point belongs to, so piecewise fields
/// (one value per cell) are expressed without ambiguity at faces.
struct Coefficients {
  std::function<Tensor3(const Point&, CellIndex)> diffusion = [](const Point&, CellIndex) {
    return Tensor3::identity();
  };
  std::function<Vec3(const Point&, CellIndex)> advection = [](const Point&, CellIndex) { return Vec3{}; };
  std::function<double(const Point&, CellIndex)> reaction = [](const Point&, CellIndex) { return 0.0; };
  std::function<double(const Point&)> source = [](const Point&) { return 0.0; };
  std::function<double(const Point&)> dirichlet = [](const Point&) { return 0.0; };
  std::function<double(const Point&)> neumann = [](const Point&) { return 0.0; };
  /// Must be set whenever b is nonzero somewhere; b == 0 selects symmetric
  /// block solvers.
  bool has_advection = false;
  EvaluationMode mode = EvaluationMode::full;
};

inline Coefficients with_mode(Coefficients c, EvaluationMode mode) {
  c.mode = mode;
  return c;
}

/// Coefficient lookup honoring the evaluation mode. In cell-centered mode
/// the values at the cell midpoints are cached once.
class CoefficientField {
 public:
  CoefficientField(const StructuredGrid& grid, const Coefficients& coeffs) : coeffs_(coeffs) {
    if (coeffs.mode == EvaluationMode::cell_centered) {
      const std::size_t n = grid.num_cells();
      k_.resize(n);
      b_.resize(n);
      c_.resize(n);
      for (CellIndex t = 0; t < n; ++t) {
        const Point x = grid.cell_geometry(t).center;
        k_[t] = coeffs.diffusion(x, t);
        b_[t] = coeffs.has_advection ? coeffs.advection(x, t) : Vec3{};
        c_[t] = coeffs.reaction(x, t);
      }
    }
  }

  bool cell_centered() const { return coeffs_.mode == EvaluationMode::cell_centered; }
  bool has_advection() const { return coeffs_.has_advection; }

  Tensor3 diffusion(const Point& x, CellIndex t) const { return cell_centered() ? k_[t] : coeffs_.diffusion(x, t); }
  Vec3 advection(const Point& x, CellIndex t) const {
    if (!coeffs_.has_advection) return Vec3{};
    return cell_centered() ? b_[t] : coeffs_.advection(x, t);
  }
  double reaction(const Point& x, CellIndex t) const { return cell_centered() ? c_[t] : coeffs_.reaction(x, t); }

  const Coefficients& coefficients() const { return coeffs_; }

 private:
  Coefficients coeffs_;
  std::vector<Tensor3> k_;
  std::vector<Vec3> b_;
  std::vector<double> c_;
};

/// 2ab / (a + b), and 0 when a + b == 0.
inline double harmonic_average(double a, double b) {
  if (a < 0.0 || b < 0.0) throw std::invalid_argument("harmonic_average: negative input");
  const double s = a + b;
  return s == 0.0 ? 0.0 : 2.0 * a * b / s;
}

/// Upwind flux: the trace is taken from the inflow side.
inline double upwind_flux(double u_minus, double u_plus, double b_nu) {
  return b_nu >= 0.0 ? b_nu * u_minus : b_nu * u_plus;
}

/// nu^T K nu for nu = +-e_axis.
inline double normal_diffusivity(const Tensor3& k, int axis) { return k(axis, axis); }

/// Weights and penalty of one face.
struct FaceCoupling {
  Vec3 normal{};
  double delta_minus = 0.0;
  double delta_plus = 0.0;
  double omega_minus = 1.0;
  double omega_plus = 0.0;
  double penalty = 0.0;
};

/// Face weights and penalty from the normal diffusivities at the face
/// midpoint. Interior: gamma = alpha p (p+d-1) <d-,d+> |F| / min(|T-|,|T+|);
/// Dirichlet: gamma = alpha p (p+d-1) d- |F| / |T-|. Neumann faces carry
/// no penalty.
inline FaceCoupling face_coupling(const StructuredGrid& grid, const Face& face, const CoefficientField& field,
                                  int degree, double alpha) {
  FaceCoupling fc;
  fc.normal[face.axis] = face.normal_sign;
  const auto gi = grid.cell_geometry(face.inside);
  Point xf = gi.center;
  xf[face.axis] += 0.5 * face.normal_sign * grid.spacing()[face.axis];
  const double area = gi.face_area[face.axis];
  const double factor = alpha * degree * (degree + kDim - 1);

  fc.delta_minus = normal_diffusivity(field.diffusion(xf, face.inside), face.axis);
  if (face.boundary) {
    fc.omega_minus = 1.0;
    fc.omega_plus = 0.0;
    if (grid.boundary_type(face.domain_face()) == BoundaryType::dirichlet) {
      if (!(fc.delta_minus > 0.0)) {
        throw IllPosedCoefficientError("non-positive normal diffusivity on a Dirichlet face of cell " +
                                       std::to_string(face.inside));
      }
      fc.penalty = factor * fc.delta_minus * area / gi.volume;
    }
    return fc;
  }
  const auto go = grid.cell_geometry(face.outside);
  fc.delta_plus = normal_diffusivity(field.diffusion(xf, face.outside), face.axis);
  const double sum = fc.delta_minus + fc.delta_plus;
  if (sum > 0.0) {
    fc.omega_minus = fc.delta_plus / sum;
    fc.omega_plus = fc.delta_minus / sum;
  } else {
    fc.omega_minus = fc.omega_plus = 0.5;
  }
  fc.penalty = factor * harmonic_average(fc.delta_minus, fc.delta_plus) * area / std::min(gi.volume, go.volume);
  return fc;
}

}  // namespace mfdg
