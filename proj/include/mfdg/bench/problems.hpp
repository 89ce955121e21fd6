#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfdg/block_smoother.hpp"
#include "mfdg/coefficients.hpp"
#include "mfdg/krylov.hpp"
#include "mfdg/lowspace.hpp"
#include "mfdg/mesh.hpp"

namespace mfdg::bench {

/// Diagonal permeability per cell, x fastest, then y, then z.
struct Spe10Field {
  std::array<int, 3> dims{60, 220, 85};
  std::vector<double> kx, ky, kz;

  std::size_t size() const { return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]; }
};

/// Lognormal permeability with a strong layering in z, for runs without
/// the real dataset. Deterministic for a given seed.
inline Spe10Field synthetic_spe10(std::array<int, 3> dims, unsigned seed = 10) {
  Spe10Field f;
  f.dims = dims;
  const std::size_t n = f.size();
  f.kx.resize(n);
  f.ky.resize(n);
  f.kz.resize(n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> layer(0.0, 2.0), cell(0.0, 1.0);
  std::vector<double> layer_mean(dims[2]);
  for (auto& m : layer_mean) m = layer(rng);
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t k = c / (static_cast<std::size_t>(dims[0]) * dims[1]);
    const double lk = layer_mean[k] + cell(rng);
    f.kx[c] = f.ky[c] = std::exp(lk);
    f.kz[c] = std::exp(lk - 2.0 + 0.5 * cell(rng));
  }
  return f;
}

struct ProblemOptions {
  std::array<int, 3> cells{4, 4, 8};
  Vec3 advection{1.0, 0.0, 0.0};  ///< convection problem only
  double peclet = 2000.0;         ///< convection problem only
  std::shared_ptr<const Spe10Field> spe10;  ///< spe10 only; synthetic when empty
};

struct ProblemSpec {
  std::string name;
  std::array<double, 3> lengths{1.0, 1.0, 2.0};
  BoundarySpec boundary = all_dirichlet();
  Coefficients coefficients;
  std::function<double(const Point&)> exact;  ///< empty when unknown
  // Recommended solver setup.
  std::string outer_solver = "cg";
  bool multigrid = true;
  SmootherKind smoother = SmootherKind::block_jacobi;
  BlockPreconditioner block_preconditioner = BlockPreconditioner::diagonal;
  LowSpaceKind coarse_space = LowSpaceKind::q1;
  double jacobi_omega = 0.8;  ///< undamped block Jacobi smooths poorly
  StoppingNorm stopping = StoppingNorm::residual_two_norm;
  double outer_tolerance = 1e-8;
};

inline const std::vector<std::string>& problem_names() {
  static const std::vector<std::string> names{"poisson", "vardiff", "convection", "spe10"};
  return names;
}

inline double gaussian(const Point& x, const Point& x0, double sigma) {
  double r2 = 0.0;
  for (int k = 0; k < 3; ++k) r2 += (x[k] - x0[k]) * (x[k] - x0[k]);
  return std::exp(-r2 / (2.0 * sigma * sigma));
}

/// Columns of Rx(a) Ry(a) Rz(a).
inline std::array<Vec3, 3> rotated_frame(double a) {
  const double c = std::cos(a), s = std::sin(a);
  const double rx[3][3] = {{1, 0, 0}, {0, c, -s}, {0, s, c}};
  const double ry[3][3] = {{c, 0, s}, {0, 1, 0}, {-s, 0, c}};
  const double rz[3][3] = {{c, -s, 0}, {s, c, 0}, {0, 0, 1}};
  double t[3][3] = {}, r[3][3] = {};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) t[i][j] += rx[i][k] * ry[k][j];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += t[i][k] * rz[k][j];
  std::array<Vec3, 3> n;
  for (int k = 0; k < 3; ++k) n[k] = {r[0][k], r[1][k], r[2][k]};
  return n;
}

/// K(x) = sum_k P_k(x_k) n_k n_k^T with P_k(z) = 1 + (k/2) z^2, k = 1..3.
inline Tensor3 vardiff_tensor(const Point& x) {
  static const auto n = rotated_frame(0.3);
  Tensor3 t;
  for (int k = 0; k < 3; ++k) {
    const double pk = 1.0 + 0.5 * (k + 1) * x[k] * x[k];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) t(i, j) += pk * n[k][i] * n[k][j];
  }
  return t;
}

/// u = prod_k (x_k/L_k)(1 - x_k/L_k).
inline double convection_exact(const Point& x, const std::array<double, 3>& l) {
  double u = 1.0;
  for (int k = 0; k < 3; ++k) u *= x[k] / l[k] * (1.0 - x[k] / l[k]);
  return u;
}

/// f = b . grad u - kappa laplace u for the polynomial above.
inline double manufacture_convection_source(const Point& x, const Vec3& b, double kappa,
                                            const std::array<double, 3>& l) {
  double q[3], dq[3], d2q[3];
  for (int k = 0; k < 3; ++k) {
    const double s = x[k] / l[k];
    q[k] = s * (1.0 - s);
    dq[k] = (1.0 - 2.0 * s) / l[k];
    d2q[k] = -2.0 / (l[k] * l[k]);
  }
  const double gx = dq[0] * q[1] * q[2], gy = q[0] * dq[1] * q[2], gz = q[0] * q[1] * dq[2];
  const double lap = d2q[0] * q[1] * q[2] + q[0] * d2q[1] * q[2] + q[0] * q[1] * d2q[2];
  return b[0] * gx + b[1] * gy + b[2] * gz - kappa * lap;
}

/// kappa such that the grid Peclet number max_i b_i h / kappa equals pe;
/// h is the largest cell extent.
inline double convection_kappa(const Vec3& b, const std::array<double, 3>& spacing, double pe) {
  if (!(pe > 0.0)) throw std::invalid_argument("Peclet number must be positive");
  const double bmax = std::max({b[0], b[1], b[2]});
  if (!(bmax > 0.0)) throw std::invalid_argument("advection needs a positive component");
  const double h = std::max({spacing[0], spacing[1], spacing[2]});
  return bmax * h / pe;
}

inline ProblemSpec make_problem(const std::string& name, const ProblemOptions& opt = {}) {
  ProblemSpec p;
  p.name = name;
  Coefficients& c = p.coefficients;
  if (name == "poisson") {
    c.source = [](const Point& x) { return gaussian(x, {0.75, 0.5, 0.3}, 0.1); };
  } else if (name == "vardiff") {
    p.boundary = all_dirichlet();
    p.boundary[static_cast<int>(DomainFace::x_high)] = BoundaryType::neumann;
    c.diffusion = [](const Point& x, CellIndex) { return vardiff_tensor(x); };
    c.reaction = [](const Point& x, CellIndex) { return 1e-8 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]); };
    c.source = [](const Point& x) { return gaussian(x, {0.75, 0.5, 0.3}, 0.1); };
    c.neumann = [](const Point& x) { return gaussian(x, {1.0, 0.5, 0.5}, 0.1); };
    c.dirichlet = [](const Point& x) { return gaussian(x, {0.0, 0.5, 0.5}, 0.1); };
  } else if (name == "convection") {
    const auto l = p.lengths;
    std::array<double, 3> h{};
    for (int k = 0; k < 3; ++k) h[k] = l[k] / opt.cells[k];
    const Vec3 b = opt.advection;
    const double kappa = convection_kappa(b, h, opt.peclet);
    c.diffusion = [kappa](const Point&, CellIndex) { return Tensor3::scaled(kappa); };
    c.advection = [b](const Point&, CellIndex) { return b; };
    c.has_advection = true;
    c.source = [b, kappa, l](const Point& x) { return manufacture_convection_source(x, b, kappa, l); };
    p.exact = [l](const Point& x) { return convection_exact(x, l); };
    p.outer_solver = "fgmres";
    p.multigrid = false;
    p.smoother = SmootherKind::block_ssor;
    p.block_preconditioner = BlockPreconditioner::tridiagonal;
  } else if (name == "spe10") {
    p.lengths = {1200.0, 2200.0, 170.0};
    p.boundary = all_dirichlet();
    p.boundary[static_cast<int>(DomainFace::z_low)] = BoundaryType::neumann;
    p.boundary[static_cast<int>(DomainFace::z_high)] = BoundaryType::neumann;
    auto field = opt.spe10 ? opt.spe10 : std::make_shared<const Spe10Field>(synthetic_spe10(opt.cells));
    if (field->dims != opt.cells) {
      throw std::invalid_argument("spe10: grid must match the permeability field dimensions");
    }
    c.diffusion = [field](const Point&, CellIndex t) {
      return Tensor3::diagonal(field->kx[t], field->ky[t], field->kz[t]);
    };
    c.dirichlet = [](const Point& x) { return -x[1]; };
    p.coarse_space = LowSpaceKind::p0;
    p.stopping = StoppingNorm::energy_estimate;
    p.outer_tolerance = 1e-6;
  } else {
    throw std::invalid_argument("unknown problem '" + name + "'");
  }
  return p;
}

}  // namespace mfdg::bench
