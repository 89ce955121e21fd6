#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "mfdg/common.hpp"

namespace mfdg {

/// y = Op(x). Both spans have the system size.
using LinearMap = std::function<void(std::span<const double>, std::span<double>)>;

enum class StoppingNorm { residual_two_norm, energy_estimate };

struct KrylovConfig {
  double tolerance = 1e-8;
  int max_iterations = 1000;
  int restart = 100;
  StoppingNorm stopping_norm = StoppingNorm::residual_two_norm;
  int error_bandwidth = 4;
  /// A second Gram-Schmidt pass runs when orthogonalization shrinks the
  /// new vector below this fraction of its norm.
  double reorthogonalization_threshold = 0.7;
  bool record_history = true;
  /// Called with (iteration, current iterate) after every CG step.
  std::function<void(int, std::span<const double>)> on_iterate;
};

struct SolveReport {
  int iterations = 0;
  bool converged = false;
  bool stagnated = false;
  double relative_residual = 0.0;
  std::vector<double> residual_history;  ///< relative residual norms
  std::vector<double> step_sizes;        ///< CG alpha_j
  std::vector<double> rz_history;        ///< CG r_j^T z_j
  std::vector<double> energy_history;    ///< relative energy error estimates
  int run_ahead = 0;                     ///< extra uncounted CG iterations
};

class IndefiniteOperatorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Delayed lower bound for the A-norm error of CG iterate k:
/// ||e_k||_A^2 ~ sum_{j=k}^{k+d-1} alpha_j r_j^T z_j.
inline double energy_error_estimate(std::span<const double> step_sizes, std::span<const double> rz, int k,
                                    int bandwidth) {
  if (bandwidth < 1) throw std::invalid_argument("energy_error_estimate: bandwidth must be >= 1");
  if (k < 0 || static_cast<std::size_t>(k + bandwidth) > step_sizes.size() || step_sizes.size() != rz.size()) {
    throw std::out_of_range("energy_error_estimate: insufficient CG history");
  }
  double s = 0.0;
  for (int j = k; j < k + bandwidth; ++j) s += step_sizes[j] * rz[j];
  return std::sqrt(std::max(s, 0.0));
}

namespace detail {

inline void copy_or_identity(const LinearMap& m, std::span<const double> x, std::span<double> y) {
  if (m) {
    m(x, y);
  } else {
    std::copy(x.begin(), x.end(), y.begin());
  }
}

}  // namespace detail

/// Preconditioned conjugate gradients. `x` holds the initial guess on entry.
/// An empty `precondition` means no preconditioning.
inline SolveReport cg(const LinearMap& apply, const LinearMap& precondition, std::span<const double> rhs,
                      std::span<double> x, const KrylovConfig& config = {}) {
  const std::size_t n = rhs.size();
  check_size(x.size(), n, "cg");
  SolveReport rep;
  std::vector<double> r(n), z(n), p(n), q(n);
  apply(x, q);
  for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - q[i];
  const double bnorm = norm2(rhs);
  const double scale = bnorm > 0.0 ? bnorm : 1.0;
  double res = norm2(r) / scale;
  if (config.record_history) rep.residual_history.push_back(res);
  rep.relative_residual = res;
  const bool energy = config.stopping_norm == StoppingNorm::energy_estimate;
  const int d = config.error_bandwidth;
  if (res == 0.0) {
    rep.converged = true;
    return rep;
  }
  detail::copy_or_identity(precondition, r, z);
  p = z;
  double rz = dot(r, z);
  double est0 = 0.0;
  for (int it = 1; it <= config.max_iterations + (energy ? d : 0); ++it) {
    apply(p, q);
    const double pq = dot(p, q);
    if (!(pq > 0.0)) throw IndefiniteOperatorError("cg: p^T A p <= 0, operator not positive definite");
    const double alpha = rz / pq;
    axpy(alpha, p, x);
    axpy(-alpha, q, r);
    rep.step_sizes.push_back(alpha);
    rep.rz_history.push_back(rz);
    res = norm2(r) / scale;
    rep.relative_residual = res;
    if (config.record_history) rep.residual_history.push_back(res);
    if (config.on_iterate) config.on_iterate(it, x);
    if (energy) {
      const int k = it - d;
      if (k >= 0) {
        const double est = energy_error_estimate(rep.step_sizes, rep.rz_history, k, d);
        if (k == 0) est0 = est;
        const double rel = est0 > 0.0 ? est / est0 : 0.0;
        rep.energy_history.push_back(rel);
        rep.iterations = k;
        if (rel <= config.tolerance) {
          rep.converged = true;
          rep.run_ahead = d;
          return rep;
        }
        if (k >= config.max_iterations) break;
      }
      if (res == 0.0) {
        rep.iterations = std::max(0, it - d);
        rep.converged = true;
        rep.run_ahead = it - rep.iterations;
        return rep;
      }
    } else {
      rep.iterations = it;
      if (res <= config.tolerance) {
        rep.converged = true;
        return rep;
      }
    }
    detail::copy_or_identity(precondition, r, z);
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  return rep;
}

namespace detail {

/// Restarted right-preconditioned GMRES; flexible when `flexible` is set
/// (the preconditioned directions are stored instead of recomputed).
inline SolveReport gmres_impl(const LinearMap& apply, const LinearMap& precondition, std::span<const double> rhs,
                              std::span<double> x, const KrylovConfig& config, bool flexible) {
  const std::size_t n = rhs.size();
  check_size(x.size(), n, "gmres");
  if (config.restart < 1) throw std::invalid_argument("gmres: restart must be >= 1");
  SolveReport rep;
  const std::size_t m = static_cast<std::size_t>(config.restart);
  const double bnorm = norm2(rhs);
  const double scale = bnorm > 0.0 ? bnorm : 1.0;

  std::vector<double> r(n), w(n), t(n);
  std::vector<std::vector<double>> v, zs;
  std::vector<double> h((m + 1) * m), cs(m), sn(m), g(m + 1), y(m);
  auto hh = [&](std::size_t i, std::size_t j) -> double& { return h[i * m + j]; };

  apply(x, t);
  for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - t[i];
  double beta = norm2(r);
  double res = beta / scale;
  rep.relative_residual = res;
  if (config.record_history) rep.residual_history.push_back(res);
  if (res <= config.tolerance || beta == 0.0) {
    rep.converged = true;
    return rep;
  }
  int total = 0;
  while (total < config.max_iterations) {
    const double cycle_start = res;
    if (v.empty()) v.emplace_back(n);
    for (std::size_t i = 0; i < n; ++i) v[0][i] = r[i] / beta;
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = beta;
    std::size_t j = 0;
    bool done = false;
    for (; j < m && total < config.max_iterations; ++j) {
      if (flexible) {
        if (zs.size() <= j) zs.emplace_back(n);
        copy_or_identity(precondition, v[j], zs[j]);
        apply(zs[j], w);
      } else {
        copy_or_identity(precondition, v[j], t);
        apply(t, w);
      }
      // Modified Gram-Schmidt, repeated once if the vector lost too much.
      const double before = norm2(w);
      for (std::size_t i = 0; i <= j; ++i) {
        const double hij = dot(w, v[i]);
        hh(i, j) = hij;
        axpy(-hij, v[i], w);
      }
      double after = norm2(w);
      if (after < config.reorthogonalization_threshold * before) {
        for (std::size_t i = 0; i <= j; ++i) {
          const double c = dot(w, v[i]);
          hh(i, j) += c;
          axpy(-c, v[i], w);
        }
        after = norm2(w);
      }
      const double hnext = after;
      for (std::size_t i = 0; i < j; ++i) {
        const double a = hh(i, j), b = hh(i + 1, j);
        hh(i, j) = cs[i] * a + sn[i] * b;
        hh(i + 1, j) = -sn[i] * a + cs[i] * b;
      }
      const double a = hh(j, j);
      const double denom = std::hypot(a, hnext);
      cs[j] = denom > 0.0 ? a / denom : 1.0;
      sn[j] = denom > 0.0 ? hnext / denom : 0.0;
      hh(j, j) = denom;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      ++total;
      res = std::abs(g[j + 1]) / scale;
      rep.relative_residual = res;
      if (config.record_history) rep.residual_history.push_back(res);
      const bool breakdown = hnext <= 1e-14 * before;
      if (res <= config.tolerance || breakdown) {
        ++j;
        done = true;
        break;
      }
      if (v.size() <= j + 1) v.emplace_back(n);
      for (std::size_t i = 0; i < n; ++i) v[j + 1][i] = w[i] / hnext;
    }
    // Back substitution for the least-squares coefficients.
    const std::size_t k = j;
    for (std::size_t i = k; i-- > 0;) {
      double s = g[i];
      for (std::size_t l = i + 1; l < k; ++l) s -= hh(i, l) * y[l];
      y[i] = hh(i, i) != 0.0 ? s / hh(i, i) : 0.0;
    }
    if (flexible) {
      for (std::size_t i = 0; i < k; ++i) axpy(y[i], zs[i], x);
    } else {
      std::fill(w.begin(), w.end(), 0.0);
      for (std::size_t i = 0; i < k; ++i) axpy(y[i], v[i], w);
      copy_or_identity(precondition, w, t);
      axpy(1.0, t, x);
    }
    rep.iterations = total;
    if (done) {
      rep.converged = res <= config.tolerance || std::abs(g[k]) <= config.tolerance * scale;
      if (!rep.converged) {
        // Breakdown: the Krylov space is invariant, so the iterate is exact
        // up to rounding; confirm with the true residual.
        apply(x, t);
        for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - t[i];
        res = norm2(r) / scale;
        rep.relative_residual = res;
        rep.converged = res <= config.tolerance;
        if (!rep.converged) rep.stagnated = true;
      }
      return rep;
    }
    if (total >= config.max_iterations) break;
    apply(x, t);
    for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - t[i];
    beta = norm2(r);
    res = beta / scale;
    rep.relative_residual = res;
    if (res <= config.tolerance) {
      rep.converged = true;
      return rep;
    }
    if (res >= cycle_start * (1.0 - 1e-12)) {
      rep.stagnated = true;
      break;
    }
  }
  return rep;
}

}  // namespace detail

/// Restarted GMRES with right preconditioning, so the monitored residual
/// is the residual of the original system.
inline SolveReport gmres(const LinearMap& apply, const LinearMap& precondition, std::span<const double> rhs,
                         std::span<double> x, const KrylovConfig& config = {}) {
  return detail::gmres_impl(apply, precondition, rhs, x, config, false);
}

/// Flexible GMRES: the preconditioner may change from step to step.
inline SolveReport fgmres(const LinearMap& apply, const LinearMap& precondition, std::span<const double> rhs,
                          std::span<double> x, const KrylovConfig& config = {}) {
  return detail::gmres_impl(apply, precondition, rhs, x, config, true);
}

}  // namespace mfdg
